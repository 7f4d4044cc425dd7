use std::thread;

use hdqkd_core::protocol::{run_protocol, ChannelModel, ProtocolConfig};
use hdqkd_core::wire::{
    decode_frame, encode_frame, loopback, read_frame, run_over_stream, AbortReason, Message, PartyConfig, Role,
    SessionError, WireError, HEADER_LEN,
};
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![0.0..=1.0f64, -10.0..10.0f64, Just(0.0), Just(f64::MAX)]
}

fn bits(max: usize) -> impl Strategy<Value = Vec<bool>> {
    prop::collection::vec(any::<bool>(), 0..max)
}

fn message() -> impl Strategy<Value = Message> {
    prop_oneof![
        (any::<u16>(), any::<u64>(), any::<u16>()).prop_map(|(d, n_rounds, protocol_version)| Message::Hello {
            d,
            n_rounds,
            protocol_version
        }),
        (any::<u64>(), prop::collection::vec((any::<bool>(), any::<bool>()), 0..200)).prop_map(|(start, v)| {
            let (bases, detected) = v.into_iter().unzip();
            Message::BasisAnnounce { start, bases, detected }
        }),
        (any::<u64>(), bits(200)).prop_map(|(start, kept)| Message::SiftMask { start, kept }),
        prop::collection::btree_set(any::<u64>(), 0..50)
            .prop_map(|s| Message::DiscloseRequest { rounds: s.into_iter().collect() }),
        prop::collection::vec(any::<u8>(), 0..100).prop_map(|symbols| Message::DiscloseReply { symbols }),
        (finite(), finite(), any::<[u64; 2]>(), any::<[u64; 2]>()).prop_map(|(e_b1, e_b2, disclosed, mismatches)| {
            Message::QberResult { e_b1, e_b2, disclosed, mismatches }
        }),
        (finite(), any::<u64>()).prop_map(|(key_rate, secret_bits)| Message::KeyReport { key_rate, secret_bits }),
        prop::sample::select(AbortReason::ALL.to_vec()).prop_map(|reason| Message::Abort { reason }),
    ]
}

proptest! {
    #[test]
    fn frames_round_trip(msg in message()) {
        let frame = encode_frame(&msg).unwrap();
        prop_assert_eq!(decode_frame(&frame).unwrap(), msg.clone());
        prop_assert_eq!(read_frame(&mut &frame[..]).unwrap(), msg);
    }

    #[test]
    fn any_payload_bit_flip_is_caught(msg in message(), pos in any::<prop::sample::Index>(), bit in 0u8..8) {
        let mut frame = encode_frame(&msg).unwrap();
        let i = HEADER_LEN + pos.index(frame.len() - HEADER_LEN);
        frame[i] ^= 1 << bit;
        let caught = matches!(decode_frame(&frame), Err(WireError::BadCrc { .. }));
        prop_assert!(caught);
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..64)) {
        let _ = decode_frame(&bytes);
        let _ = read_frame(&mut &bytes[..]);
    }
}

fn party(n: u64, channel: ChannelModel, seed: u64) -> PartyConfig {
    PartyConfig { protocol: ProtocolConfig::new(3, n).unwrap(), channel, seed }
}

#[test]
fn loopback_session_matches_the_in_process_run() {
    let cfg = party(50_000, ChannelModel::ideal(3, 0.9, 0.02).unwrap(), 17);
    let (a_end, b_end) = loopback();
    let bob_cfg = cfg.clone();
    let bob = thread::spawn(move || run_over_stream(Role::Bob, &bob_cfg, b_end));
    let alice = run_over_stream(Role::Alice, &cfg, a_end).unwrap();
    let bob = bob.join().unwrap().unwrap();

    let run = run_protocol(&cfg.protocol, &cfg.channel, cfg.seed).unwrap();
    assert_eq!(alice.report, run.report);
    assert_eq!(bob.report, run.report);
    assert_eq!(alice.key, run.key.alice_symbols());
    assert_eq!(bob.key, run.key.bob_symbols());
}

#[test]
fn peer_disconnect_leaves_no_key() {
    let cfg = party(10_000, ChannelModel::ideal(3, 1.0, 0.0).unwrap(), 3);
    let (a_end, mut b_end) = loopback();
    let peer = thread::spawn(move || {
        // Read Hello, then hang up.
        read_frame(&mut b_end).unwrap();
    });
    let err = run_over_stream(Role::Alice, &cfg, a_end).unwrap_err();
    peer.join().unwrap();
    assert!(matches!(err, SessionError::Transport(WireError::Disconnected)), "{err:?}");
    assert_eq!(err.reason(), AbortReason::Transport);
}

#[test]
fn version_mismatch_is_reported_to_the_sender() {
    let cfg = party(1_000, ChannelModel::ideal(3, 1.0, 0.0).unwrap(), 3);
    let (mut a_end, b_end) = loopback();
    let bob = thread::spawn(move || run_over_stream(Role::Bob, &cfg, b_end));
    hdqkd_core::wire::write_frame(&mut a_end, &Message::Hello { d: 3, n_rounds: 1_000, protocol_version: 2 }).unwrap();
    assert_eq!(read_frame(&mut a_end).unwrap(), Message::Abort { reason: AbortReason::Version });
    let err = bob.join().unwrap().unwrap_err();
    assert_eq!(err, SessionError::Aborted { reason: AbortReason::Version, by_peer: false });
}
