//! Monte Carlo source statistics against closed-form expectations.

use hdqkd_core::source::{
    apply_gate, calibrate_biexciton_yield, fit_biexponential, gated_g2, hbt_coincidences, lifetime_histogram,
    simulate_emission, CalibrationSettings, SourceParams,
};

/// Expected `g2(0)` of the gated cascade without dark counts.
///
/// Two photons from the same pulse reach opposite detectors with probability
/// `½·pq·η²·a_x·a_bx`, photons from different pulses with `¼·(η·(p·a_x +
/// q·a_bx))²`, where `a = exp(-gate/τ)` is the fraction surviving the gate.
fn analytic_g2(p: &SourceParams, gate: f64) -> f64 {
    let ax = (-gate / p.tau_x).exp();
    let ab = (-gate / p.tau_bx).exp();
    2.0 * p.p_x * p.q_bx * ax * ab / (p.p_x * ax + p.q_bx * ab).powi(2)
}

/// Yield that makes [`analytic_g2`] equal `target` at `gate`, by bisection.
fn analytic_yield(base: &SourceParams, target: f64, gate: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if analytic_g2(&base.with_q_bx(mid), gate) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn quiet() -> SourceParams {
    SourceParams { dark_rate: 0.0, ..SourceParams::default() }
}

#[test]
fn gated_g2_follows_the_cascade_formula() {
    for (q, gate) in [(0.3, 0.0), (0.6, 11.0), (1.0, 5.0)] {
        let p = quiet().with_q_bx(q);
        let est = gated_g2(&p, gate, 2_000_000, 21).unwrap();
        let expect = analytic_g2(&p, gate);
        assert!((est.g2_zero - expect).abs() < 3.0 * est.stderr, "q={q} gate={gate}: {est:?} vs {expect}");
    }
}

#[test]
fn gating_lowers_g2() {
    let p = SourceParams::default().with_q_bx(0.6);
    let ev = simulate_emission(&p, 2_000_000, 8).unwrap();
    let g: Vec<_> = [0.0, 5.0, 11.0]
        .iter()
        .map(|&gate| {
            let gated = apply_gate(&ev, gate).unwrap();
            hdqkd_core::source::g2_zero(&hbt_coincidences(&gated, &p, 8)).unwrap()
        })
        .collect();
    for w in g.windows(2) {
        let sigma = (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
        assert!(w[1].g2_zero <= w[0].g2_zero + 3.0 * sigma, "{g:?}");
    }
    assert!(g[0].g2_zero > g[2].g2_zero + 3.0 * (g[0].stderr.powi(2) + g[2].stderr.powi(2)).sqrt());
}

#[test]
fn calibrated_yield_is_near_the_analytic_root() {
    let q = calibrate_biexciton_yield(0.1, 11.0, &quiet(), &CalibrationSettings::default()).unwrap();
    let q_exact = analytic_yield(&quiet(), 0.1, 11.0);
    assert!((q - q_exact).abs() < 0.1, "{q} vs {q_exact}");
}

#[test]
fn side_peaks_scale_with_pulse_count() {
    let p = SourceParams::default().with_q_bx(0.5);
    let side = |n| {
        let ev = simulate_emission(&p, n, 4).unwrap();
        hbt_coincidences(&ev, &p, 4).side_peak_total() as f64
    };
    let (s1, s2) = (side(500_000), side(1_000_000));
    let sigma = (4.0 * s1 + s2).sqrt();
    assert!((s2 - 2.0 * s1).abs() < 3.0 * sigma, "{s1} {s2}");
}

#[test]
fn fit_recovers_cascade_lifetimes() {
    let p = quiet().with_q_bx(0.56);
    let ev = simulate_emission(&p, 2_000_000, 6).unwrap();
    let fit = fit_biexponential(&lifetime_histogram(&ev, &p, 0.5).unwrap()).unwrap();
    assert!((fit.tau1 - 4.0).abs() < 0.05 * 4.0, "{fit:?}");
    assert!((fit.tau2 - 25.0).abs() < 0.05 * 25.0, "{fit:?}");
    assert!(!fit.degenerate);
}
