use std::io::{self, Read, Write};

use super::{AbortReason, Message, WireError};

pub const MAGIC: [u8; 4] = *b"HQKD";
pub const FRAME_VERSION: u8 = 1;
/// Largest accepted payload, 16 MiB.
pub const MAX_PAYLOAD: u32 = 16 * 1024 * 1024;
/// Magic, version, type and length.
pub const HEADER_LEN: usize = 10;
pub const CRC_LEN: usize = 4;

fn put_bits(out: &mut Vec<u8>, bits: &[bool]) {
    for chunk in bits.chunks(8) {
        let mut byte = 0u8;
        for (i, &b) in chunk.iter().enumerate() {
            byte |= (b as u8) << i;
        }
        out.push(byte);
    }
}

fn encode_payload(msg: &Message) -> Result<Vec<u8>, WireError> {
    let mut p = Vec::new();
    let count = |n: usize| -> Result<u32, WireError> {
        u32::try_from(n).map_err(|_| WireError::Malformed(format!("{n} items do not fit a u32 count")))
    };
    match msg {
        Message::Hello { d, n_rounds, protocol_version } => {
            p.extend_from_slice(&d.to_be_bytes());
            p.extend_from_slice(&n_rounds.to_be_bytes());
            p.extend_from_slice(&protocol_version.to_be_bytes());
        }
        Message::BasisAnnounce { start, bases, detected } => {
            if bases.len() != detected.len() {
                return Err(WireError::Malformed("basis and detection bitmaps differ in length".into()));
            }
            p.extend_from_slice(&start.to_be_bytes());
            p.extend_from_slice(&count(bases.len())?.to_be_bytes());
            put_bits(&mut p, bases);
            put_bits(&mut p, detected);
        }
        Message::SiftMask { start, kept } => {
            p.extend_from_slice(&start.to_be_bytes());
            p.extend_from_slice(&count(kept.len())?.to_be_bytes());
            put_bits(&mut p, kept);
        }
        Message::DiscloseRequest { rounds } => {
            if rounds.windows(2).any(|w| w[0] >= w[1]) {
                return Err(WireError::Malformed("disclosed rounds must be strictly increasing".into()));
            }
            p.extend_from_slice(&count(rounds.len())?.to_be_bytes());
            for r in rounds {
                p.extend_from_slice(&r.to_be_bytes());
            }
        }
        Message::DiscloseReply { symbols } => {
            p.extend_from_slice(&count(symbols.len())?.to_be_bytes());
            p.extend_from_slice(symbols);
        }
        Message::QberResult { e_b1, e_b2, disclosed, mismatches } => {
            for v in [e_b1.to_bits(), e_b2.to_bits(), disclosed[0], disclosed[1], mismatches[0], mismatches[1]] {
                p.extend_from_slice(&v.to_be_bytes());
            }
        }
        Message::KeyReport { key_rate, secret_bits } => {
            p.extend_from_slice(&key_rate.to_bits().to_be_bytes());
            p.extend_from_slice(&secret_bits.to_be_bytes());
        }
        Message::Abort { reason } => p.push(reason.code()),
    }
    if p.len() > MAX_PAYLOAD as usize {
        return Err(WireError::LengthExceeded(p.len() as u64));
    }
    Ok(p)
}

/// Big-endian cursor over a payload.
struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.buf.len() - self.pos < n {
            return Err(WireError::Malformed(format!("payload ends {} bytes early", n - (self.buf.len() - self.pos))));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().expect("two bytes")))
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().expect("four bytes")))
    }

    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().expect("eight bytes")))
    }

    fn f64(&mut self) -> Result<f64, WireError> {
        Ok(f64::from_bits(self.u64()?))
    }

    /// `n` bits packed least-significant first; padding bits must be zero.
    fn bits(&mut self, n: usize) -> Result<Vec<bool>, WireError> {
        let bytes = self.take(n.div_ceil(8))?;
        if !n.is_multiple_of(8) && bytes[bytes.len() - 1] >> (n % 8) != 0 {
            return Err(WireError::Malformed("nonzero bitmap padding".into()));
        }
        Ok((0..n).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect())
    }

    fn finish(self) -> Result<(), WireError> {
        if self.pos != self.buf.len() {
            return Err(WireError::Malformed(format!("{} trailing payload bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

fn decode_payload(msg_type: u8, payload: &[u8]) -> Result<Message, WireError> {
    let mut c = Cursor { buf: payload, pos: 0 };
    let msg = match msg_type {
        0x01 => Message::Hello { d: c.u16()?, n_rounds: c.u64()?, protocol_version: c.u16()? },
        0x02 => {
            let start = c.u64()?;
            let n = c.u32()? as usize;
            let bases = c.bits(n)?;
            let detected = c.bits(n)?;
            Message::BasisAnnounce { start, bases, detected }
        }
        0x03 => {
            let start = c.u64()?;
            let n = c.u32()? as usize;
            Message::SiftMask { start, kept: c.bits(n)? }
        }
        0x04 => {
            let n = c.u32()? as usize;
            if n > payload.len() / 8 {
                return Err(WireError::Malformed(format!("{n} rounds cannot fit the payload")));
            }
            let rounds = (0..n).map(|_| c.u64()).collect::<Result<Vec<_>, _>>()?;
            if rounds.windows(2).any(|w| w[0] >= w[1]) {
                return Err(WireError::Malformed("disclosed rounds must be strictly increasing".into()));
            }
            Message::DiscloseRequest { rounds }
        }
        0x05 => {
            let n = c.u32()? as usize;
            Message::DiscloseReply { symbols: c.take(n)?.to_vec() }
        }
        0x06 => Message::QberResult {
            e_b1: c.f64()?,
            e_b2: c.f64()?,
            disclosed: [c.u64()?, c.u64()?],
            mismatches: [c.u64()?, c.u64()?],
        },
        0x07 => Message::KeyReport { key_rate: c.f64()?, secret_bits: c.u64()? },
        0x08 => {
            let code = c.u8()?;
            let reason = AbortReason::from_code(code)
                .ok_or_else(|| WireError::Malformed(format!("unknown abort reason {code}")))?;
            Message::Abort { reason }
        }
        other => return Err(WireError::UnknownType(other)),
    };
    c.finish()?;
    Ok(msg)
}

fn crc(msg_type: u8, len: [u8; 4], payload: &[u8]) -> u32 {
    let mut h = crc32fast::Hasher::new();
    h.update(&[msg_type]);
    h.update(&len);
    h.update(payload);
    h.finalize()
}

/// `magic | version | type | len (u32 BE) | payload | crc32 (BE)`, the CRC
/// covering type, length and payload.
pub fn encode_frame(msg: &Message) -> Result<Vec<u8>, WireError> {
    let payload = encode_payload(msg)?;
    let len = (payload.len() as u32).to_be_bytes();
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + CRC_LEN);
    out.extend_from_slice(&MAGIC);
    out.push(FRAME_VERSION);
    out.push(msg.type_code());
    out.extend_from_slice(&len);
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc(msg.type_code(), len, &payload).to_be_bytes());
    Ok(out)
}

/// Checks magic, version and length bound; returns `(type, payload_len)`.
fn parse_header(h: &[u8; HEADER_LEN]) -> Result<(u8, u32), WireError> {
    if h[..4] != MAGIC {
        return Err(WireError::BadMagic([h[0], h[1], h[2], h[3]]));
    }
    if h[4] != FRAME_VERSION {
        return Err(WireError::UnsupportedVersion(h[4]));
    }
    let len = u32::from_be_bytes([h[6], h[7], h[8], h[9]]);
    if len > MAX_PAYLOAD {
        return Err(WireError::LengthExceeded(len as u64));
    }
    Ok((h[5], len))
}

fn finish_frame(msg_type: u8, payload: &[u8], crc_bytes: [u8; 4]) -> Result<Message, WireError> {
    let expected = u32::from_be_bytes(crc_bytes);
    let actual = crc(msg_type, (payload.len() as u32).to_be_bytes(), payload);
    if expected != actual {
        return Err(WireError::BadCrc { expected, actual });
    }
    decode_payload(msg_type, payload)
}

/// Decodes exactly one frame occupying all of `bytes`.
pub fn decode_frame(bytes: &[u8]) -> Result<Message, WireError> {
    if bytes.len() < HEADER_LEN {
        return Err(WireError::Truncated { expected: HEADER_LEN, actual: bytes.len() });
    }
    let (msg_type, len) = parse_header(bytes[..HEADER_LEN].try_into().expect("header length"))?;
    let total = HEADER_LEN + len as usize + CRC_LEN;
    if bytes.len() < total {
        return Err(WireError::Truncated { expected: total, actual: bytes.len() });
    }
    if bytes.len() > total {
        return Err(WireError::Malformed(format!("{} bytes after the frame", bytes.len() - total)));
    }
    let payload = &bytes[HEADER_LEN..HEADER_LEN + len as usize];
    finish_frame(msg_type, payload, bytes[total - CRC_LEN..].try_into().expect("crc length"))
}

/// Fills `buf`, returning how many bytes arrived before end of stream.
fn read_full(r: &mut impl Read, buf: &mut [u8]) -> io::Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(got)
}

/// Reads one frame. A clean end of stream before any header byte is
/// [`WireError::Disconnected`]; one inside a frame is [`WireError::Truncated`].
pub fn read_frame(r: &mut impl Read) -> Result<Message, WireError> {
    let mut header = [0u8; HEADER_LEN];
    match read_full(r, &mut header)? {
        0 => return Err(WireError::Disconnected),
        n if n < HEADER_LEN => return Err(WireError::Truncated { expected: HEADER_LEN, actual: n }),
        _ => {}
    }
    let (msg_type, len) = parse_header(&header)?;
    let mut rest = vec![0u8; len as usize + CRC_LEN];
    let got = read_full(r, &mut rest)?;
    if got < rest.len() {
        return Err(WireError::Truncated { expected: HEADER_LEN + rest.len(), actual: HEADER_LEN + got });
    }
    let (payload, crc_bytes) = rest.split_at(len as usize);
    finish_frame(msg_type, payload, crc_bytes.try_into().expect("crc length"))
}

pub fn write_frame(w: &mut impl Write, msg: &Message) -> Result<(), WireError> {
    w.write_all(&encode_frame(msg)?)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hello() -> Message {
        Message::Hello { d: 3, n_rounds: 1_000_000, protocol_version: 1 }
    }

    #[test]
    fn hello_layout_is_fixed() {
        let f = encode_frame(&hello()).unwrap();
        assert_eq!(&f[..10], b"HQKD\x01\x01\x00\x00\x00\x0c");
        assert_eq!(&f[10..22], &[0, 3, 0, 0, 0, 0, 0, 0x0f, 0x42, 0x40, 0, 1]);
        assert_eq!(f.len(), 26);
        assert_eq!(decode_frame(&f).unwrap(), hello());
    }

    #[test]
    fn crc_matches_the_reference_polynomial() {
        // CRC-32/ISO-HDLC check value.
        assert_eq!(crc32fast::hash(b"123456789"), 0xCBF4_3926);
    }

    #[test]
    fn payload_corruption_is_a_crc_error() {
        let mut f = encode_frame(&hello()).unwrap();
        f[12] ^= 0x01;
        assert!(matches!(decode_frame(&f), Err(WireError::BadCrc { .. })));
    }

    #[test]
    fn header_errors_are_distinct() {
        let f = encode_frame(&hello()).unwrap();
        let mut bad = f.clone();
        bad[0] = b'X';
        assert!(matches!(decode_frame(&bad), Err(WireError::BadMagic(_))));
        let mut bad = f.clone();
        bad[4] = 2;
        assert!(matches!(decode_frame(&bad), Err(WireError::UnsupportedVersion(2))));
        assert!(matches!(decode_frame(&f[..f.len() - 1]), Err(WireError::Truncated { .. })));
        assert!(matches!(decode_frame(&f[..4]), Err(WireError::Truncated { .. })));
    }

    #[test]
    fn unknown_type_with_valid_crc_is_rejected() {
        let len = 0u32.to_be_bytes();
        let mut f = Vec::from(MAGIC);
        f.extend_from_slice(&[FRAME_VERSION, 0x7f]);
        f.extend_from_slice(&len);
        f.extend_from_slice(&crc(0x7f, len, &[]).to_be_bytes());
        assert_eq!(decode_frame(&f), Err(WireError::UnknownType(0x7f)));
    }

    #[test]
    fn oversized_length_is_rejected_before_reading_the_payload() {
        let mut f = Vec::from(MAGIC);
        f.extend_from_slice(&[FRAME_VERSION, 0x01, 0xff, 0xff, 0xff, 0xff]);
        assert_eq!(decode_frame(&f), Err(WireError::LengthExceeded(u32::MAX as u64)));
        assert_eq!(read_frame(&mut &f[..]), Err(WireError::LengthExceeded(u32::MAX as u64)));
    }

    #[test]
    fn bitmaps_pack_least_significant_bit_first() {
        let m = Message::SiftMask { start: 0, kept: vec![true, false, false, true, false, false, false, false, true] };
        let f = encode_frame(&m).unwrap();
        assert_eq!(&f[HEADER_LEN + 12..HEADER_LEN + 14], &[0b0000_1001, 0b0000_0001]);
        assert_eq!(decode_frame(&f).unwrap(), m);
    }

    #[test]
    fn non_increasing_rounds_are_rejected() {
        let m = Message::DiscloseRequest { rounds: vec![3, 3] };
        assert!(matches!(encode_frame(&m), Err(WireError::Malformed(_))));
    }

    #[test]
    fn stream_reader_distinguishes_clean_and_broken_ends() {
        let f = encode_frame(&hello()).unwrap();
        assert_eq!(read_frame(&mut &f[..0]), Err(WireError::Disconnected));
        assert!(matches!(read_frame(&mut &f[..15]), Err(WireError::Truncated { .. })));
        let mut two = f.clone();
        two.extend_from_slice(&f);
        let mut r = &two[..];
        assert_eq!(read_frame(&mut r).unwrap(), hello());
        assert_eq!(read_frame(&mut r).unwrap(), hello());
    }
}
