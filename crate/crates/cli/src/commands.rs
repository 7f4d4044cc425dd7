use std::net::{TcpListener, TcpStream};
use std::thread;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use hdqkd_core::modes::{decoded_far_field, intensity_image, write_pgm16, IntensityImage, MubBasis};
use hdqkd_core::protocol::{DarkClickTargets, ProtocolConfig};
use hdqkd_core::seed::{derive_seed, stream};
use hdqkd_core::source::{
    apply_gate, calibrate_biexciton_yield, fit_biexponential, g2_zero, hbt_coincidences_with, lifetime_histogram,
    simulate_emission, BiexpFit, CalibrationSettings, HbtSettings,
};
use hdqkd_core::wire::{loopback, run_over_stream, PartyConfig, SessionOutcome};
use hdqkd_core::{
    crosstalk_matrix, max_tolerated_error, secure_key_rate, ChannelModel, CrosstalkMatrix, G2Estimate, KeyRateReport,
    ModeLabel, Role, SessionError, SourceError,
};
use serde::Serialize;

use crate::config::{ChannelKind, DarkClicks, RunConfig, Yield};
use crate::output::OutDir;

/// The run completed but the error rate exceeded the abort threshold.
#[derive(Debug)]
pub struct QberAbort(pub KeyRateReport);

impl std::fmt::Display for QberAbort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "error rates e_b1 = {:.4}, e_b2 = {:.4} exceed the abort threshold; no key", self.0.e_b1, self.0.e_b2)
    }
}

impl std::error::Error for QberAbort {}

/// ASCII name of a mode label, for file names.
fn file_label(label: ModeLabel) -> &'static str {
    ["a", "b", "c", "alpha", "beta", "gamma"][label.position()]
}

#[derive(Serialize)]
struct CrosstalkDoc<'a> {
    labels: [&'static str; 6],
    matrix: &'a CrosstalkMatrix,
    normalization_error: f64,
}

#[derive(Serialize)]
struct ImageEntry {
    alice: &'static str,
    bob: &'static str,
    file: String,
    total: f64,
    peak: f64,
    on_axis_fraction: f64,
    central_3x3_fraction: f64,
}

#[derive(Serialize)]
struct ImageIndex {
    half_width: f64,
    pixels: usize,
    /// Intensity mapped to 65535 in every image.
    full_scale: f64,
    images: Vec<ImageEntry>,
}

pub fn crosstalk(cfg: &RunConfig, out: &OutDir) -> Result<()> {
    let m = crosstalk_matrix(cfg.grid, cfg.waists, cfg.encoding)?;
    out.write_csv("crosstalk.csv", &m.to_csv())?;
    out.write_json(
        "crosstalk.json",
        &CrosstalkDoc { labels: ModeLabel::NAMES, matrix: &m, normalization_error: m.normalization_error() },
    )?;

    let mut images: Vec<(ModeLabel, ModeLabel, IntensityImage)> = Vec::with_capacity(36);
    for alice in ModeLabel::all() {
        for bob in ModeLabel::all() {
            let window = Some((cfg.image_half_width, cfg.image_pixels));
            let field = decoded_far_field(cfg.grid, cfg.waists, cfg.encoding, alice, bob, window)?;
            images.push((alice, bob, intensity_image(&field)));
        }
    }
    let full_scale = images.iter().map(|(_, _, img)| img.max()).fold(0.0, f64::max);
    let mut index =
        ImageIndex { half_width: cfg.image_half_width, pixels: cfg.image_pixels, full_scale, images: vec![] };
    for (alice, bob, img) in &images {
        let file = format!("images/alice_{}_bob_{}.pgm", file_label(*alice), file_label(*bob));
        out.write_pgm(&file, &write_pgm16(img, full_scale))?;
        index.images.push(ImageEntry {
            alice: alice.name(),
            bob: bob.name(),
            file,
            total: img.total(),
            peak: img.max(),
            on_axis_fraction: img.on_axis_fraction(),
            central_3x3_fraction: img.central_fraction(),
        });
    }
    out.write_json("images.json", &index)?;
    eprintln!(
        "crosstalk: normalization error {:.2e}; 36 images in {}",
        m.normalization_error(),
        out.path("images").display()
    );
    Ok(())
}

#[derive(Serialize)]
struct YieldInfo {
    q_bx: f64,
    calibrated: bool,
    target_g2: f64,
    calibration_gate_ns: f64,
}

#[derive(Serialize)]
struct LifetimeDoc<'a> {
    source: &'a YieldInfo,
    n_pulses: u64,
    bin_ns: f64,
    converged: bool,
    /// Best parameters reached, even when the fit did not converge.
    fit: BiexpFit,
}

#[derive(Serialize)]
struct G2Doc<'a> {
    source: &'a YieldInfo,
    n_pulses: u64,
    bin_ns: f64,
    estimates: Vec<G2Estimate>,
}

fn biexciton_yield(cfg: &RunConfig) -> Result<YieldInfo> {
    let (q_bx, calibrated) = match cfg.q_bx {
        Yield::Fixed(q) => (q, false),
        Yield::Calibrate => {
            let settings = CalibrationSettings {
                n_pulses: cfg.g2.calibration_pulses,
                seed: derive_seed(cfg.seed, stream::CALIBRATION, 0),
                ..CalibrationSettings::default()
            };
            let q = calibrate_biexciton_yield(cfg.g2.target, cfg.g2.calibration_gate_ns, &cfg.source, &settings)?;
            (q, true)
        }
    };
    Ok(YieldInfo { q_bx, calibrated, target_g2: cfg.g2.target, calibration_gate_ns: cfg.g2.calibration_gate_ns })
}

pub fn g2(cfg: &RunConfig, out: &OutDir) -> Result<()> {
    let info = biexciton_yield(cfg)?;
    let params = cfg.source.with_q_bx(info.q_bx);
    let events = simulate_emission(&params, cfg.g2.n_pulses, cfg.seed)?;

    let curve = lifetime_histogram(&events, &params, cfg.g2.lifetime_bin_ns)?;
    out.write_csv("lifetime.csv", &curve.to_csv())?;
    // A failed fit is reported, not fatal: the g2 estimates do not need it.
    let (fit, converged) = match fit_biexponential(&curve) {
        Ok(fit) => (fit, true),
        Err(SourceError::FitFailed { best, .. }) => {
            eprintln!("g2: warning: lifetime fit did not converge");
            (*best, false)
        }
        Err(e) => return Err(e.into()),
    };
    out.write_json(
        "lifetime_fit.json",
        &LifetimeDoc { source: &info, n_pulses: cfg.g2.n_pulses, bin_ns: cfg.g2.lifetime_bin_ns, converged, fit },
    )?;

    let mut estimates = Vec::new();
    for &gate_ns in &cfg.g2.gates_ns {
        let gated = apply_gate(&events, gate_ns)?;
        let settings = HbtSettings { bin_width_ns: cfg.g2.bin_ns, gate_ns, ..HbtSettings::default() };
        let hist = hbt_coincidences_with(&gated, &params, cfg.seed, &settings);
        out.write_csv(&format!("hbt_gate_{gate_ns}ns.csv"), &hist.to_csv())?;
        let est = g2_zero(&hist)?;
        eprintln!("g2: gate {gate_ns} ns -> g2(0) = {:.4} ± {:.4}", est.g2_zero, est.stderr);
        estimates.push(est);
    }
    out.write_json("g2.json", &G2Doc { source: &info, n_pulses: cfg.g2.n_pulses, bin_ns: cfg.g2.bin_ns, estimates })?;
    eprintln!(
        "g2: q_bx = {:.4}{}; lifetimes {:.3} / {:.3} ns",
        info.q_bx,
        if info.calibrated { " (calibrated)" } else { "" },
        fit.tau1,
        fit.tau2
    );
    Ok(())
}

#[derive(Serialize)]
struct Thresholds {
    d2: f64,
    d3: f64,
}

#[derive(Serialize)]
struct SweepDoc {
    e_max: f64,
    points: usize,
    /// Error rate at which the key rate reaches zero.
    thresholds: Thresholds,
}

pub const SWEEP_MAX_ERROR: f64 = 0.2;

pub fn keyrate_sweep(cfg: &RunConfig, out: &OutDir) -> Result<()> {
    let mut csv = String::from("e,R_d2,R_d3\n");
    for k in 0..cfg.sweep_points {
        let e = SWEEP_MAX_ERROR * k as f64 / (cfg.sweep_points - 1) as f64;
        let r2 = secure_key_rate(e, e, 2)?;
        let r3 = secure_key_rate(e, e, 3)?;
        csv.push_str(&format!("{e:.8e},{r2:.8e},{r3:.8e}\n"));
    }
    out.write_csv("keyrate_sweep.csv", &csv)?;
    let thresholds = Thresholds { d2: max_tolerated_error(2)?, d3: max_tolerated_error(3)? };
    eprintln!("keyrate-sweep: R = 0 at e = {:.4} (d = 2), {:.4} (d = 3)", thresholds.d2, thresholds.d3);
    out.write_json(
        "keyrate_thresholds.json",
        &SweepDoc { e_max: SWEEP_MAX_ERROR, points: cfg.sweep_points, thresholds },
    )?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct ChannelInfo {
    model: &'static str,
    transmittance: f64,
    dark_click_prob: f64,
    dark_click_fitted: bool,
    expected_e_b1: f64,
    expected_e_b2: f64,
}

pub fn build_channel(cfg: &RunConfig) -> Result<(ChannelModel, ChannelInfo)> {
    let d = cfg.protocol.d;
    let t = cfg.transmittance;
    let (base, model) = match cfg.channel {
        ChannelKind::Crosstalk => {
            let m = crosstalk_matrix(cfg.grid, cfg.waists, cfg.encoding)?;
            (ChannelModel::from_crosstalk(&m, t, 0.0)?, "crosstalk")
        }
        ChannelKind::Ideal => (ChannelModel::ideal(d, t, 0.0)?, "ideal"),
        ChannelKind::Depolarizing => (ChannelModel::depolarizing(d, t, 0.0)?, "depolarizing"),
    };
    let (p, fitted) = match cfg.dark_clicks {
        DarkClicks::Fixed(p) => (p, false),
        DarkClicks::Fit => (base.fit_dark_click_prob(&DarkClickTargets::default())?, true),
    };
    let channel = base.with_dark_click_prob(p)?;
    let info = ChannelInfo {
        model,
        transmittance: t,
        dark_click_prob: p,
        dark_click_fitted: fitted,
        expected_e_b1: channel.expected_qber(MubBasis::Mub1),
        expected_e_b2: channel.expected_qber(MubBasis::Mub2),
    };
    Ok((channel, info))
}

#[derive(Serialize)]
struct ReportDoc<'a> {
    protocol: &'a ProtocolConfig,
    channel: &'a ChannelInfo,
    report: &'a KeyRateReport,
}

fn finish(cfg: &RunConfig, out: &OutDir, info: &ChannelInfo, report: &KeyRateReport) -> Result<()> {
    out.write_json("key_rate_report.json", &ReportDoc { protocol: &cfg.protocol, channel: info, report })?;
    eprintln!(
        "e_b1 = {:.4} e_b2 = {:.4} R = {:.4} secret_bits = {} (sifted {}, disclosed {})",
        report.e_b1, report.e_b2, report.key_rate, report.secret_bits, report.sifted_count, report.disclosed_count
    );
    if report.abort {
        return Err(QberAbort(*report).into());
    }
    Ok(())
}

fn party(cfg: &RunConfig) -> Result<(PartyConfig, ChannelInfo)> {
    let (channel, info) = build_channel(cfg)?;
    Ok((PartyConfig { protocol: cfg.protocol, channel, seed: cfg.seed }, info))
}

pub fn run(cfg: &RunConfig, out: &OutDir) -> Result<()> {
    let (party, info) = party(cfg)?;
    let (a_end, b_end) = loopback();
    let (alice, bob) = thread::scope(|s| {
        let bob = s.spawn(|| run_over_stream(Role::Bob, &party, b_end));
        let alice = run_over_stream(Role::Alice, &party, a_end);
        (alice, bob.join().expect("bob thread panicked"))
    });
    let (alice, bob): (SessionOutcome, SessionOutcome) = (alice?, bob?);
    if alice.report != bob.report {
        bail!("parties disagree on the key-rate report");
    }
    finish(cfg, out, &info, &alice.report)
}

pub fn alice(cfg: &RunConfig, out: &OutDir) -> Result<()> {
    let (party, info) = party(cfg)?;
    let listener = TcpListener::bind(&cfg.addr)
        .map_err(|e| SessionError::Transport(e.into()))
        .with_context(|| format!("binding {}", cfg.addr))?;
    eprintln!("alice: listening on {}", listener.local_addr().map(|a| a.to_string()).unwrap_or_default());
    let (stream, peer) = listener.accept().map_err(|e| SessionError::Transport(e.into()))?;
    stream.set_nodelay(true).map_err(|e| SessionError::Transport(e.into()))?;
    eprintln!("alice: connected to {peer}");
    let outcome = run_over_stream(Role::Alice, &party, stream)?;
    finish(cfg, out, &info, &outcome.report)
}

pub fn bob(cfg: &RunConfig, out: &OutDir) -> Result<()> {
    let (party, info) = party(cfg)?;
    let deadline = Instant::now() + Duration::from_secs_f64(cfg.connect_timeout_s);
    let stream = loop {
        match TcpStream::connect(&cfg.addr) {
            Ok(s) => break s,
            // Alice may not be listening yet.
            Err(_) if Instant::now() < deadline => thread::sleep(Duration::from_millis(50)),
            Err(e) => {
                return Err(anyhow::Error::new(SessionError::Transport(e.into())))
                    .with_context(|| format!("connecting to {}", cfg.addr))
            }
        }
    };
    stream.set_nodelay(true).map_err(|e| SessionError::Transport(e.into()))?;
    eprintln!("bob: connected to {}", cfg.addr);
    let outcome = run_over_stream(Role::Bob, &party, stream)?;
    finish(cfg, out, &info, &outcome.report)
}
