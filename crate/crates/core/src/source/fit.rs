//! Bi-exponential decay fit by damped (Levenberg-Marquardt) least squares.
//!
//! Model `A1·exp(-t/τ1) + A2·exp(-t/τ2)` at bin centers, with Poisson weights
//! `1/max(y, 1)`. Lifetimes are fitted as `ln τ` to stay positive.
//!
//! Fit window: from the first bin up to the last bin holding at least
//! [`TAIL_MIN_COUNTS`], which keeps a flat dark-count floor out of the
//! tail. Initialization: a log-linear regression on the late half of the
//! window gives the slow component; a second regression on the early
//! residual gives the fast one.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use super::{DecayCurve, SourceError};

pub const TAIL_MIN_COUNTS: f64 = 5.0;
const MIN_BINS: usize = 20;
const MAX_ITERATIONS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiexpFit {
    pub a1: f64,
    pub tau1: f64,
    pub a2: f64,
    pub tau2: f64,
    /// Weighted residual norm at the solution.
    pub residual_norm: f64,
    pub iterations: usize,
    /// One component carries a negligible share of the counts, or the two
    /// lifetimes coincide.
    pub degenerate: bool,
}

impl BiexpFit {
    pub fn eval(&self, t: f64) -> f64 {
        self.a1 * (-t / self.tau1).exp() + self.a2 * (-t / self.tau2).exp()
    }
}

struct Problem {
    t: Vec<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
}

type Params = Vector4<f64>;

fn model(p: &Params, t: f64) -> (f64, [f64; 4]) {
    let (a1, t1, a2, t2) = (p[0], p[1].exp(), p[2], p[3].exp());
    let e1 = (-t / t1).exp();
    let e2 = (-t / t2).exp();
    (a1 * e1 + a2 * e2, [e1, a1 * e1 * t / t1, e2, a2 * e2 * t / t2])
}

impl Problem {
    fn cost(&self, p: &Params) -> f64 {
        self.t.iter().zip(&self.y).zip(&self.w).map(|((&t, &y), &w)| w * (y - model(p, t).0).powi(2)).sum()
    }

    /// Normal equations `JᵀWJ`, `JᵀWr`.
    fn normal(&self, p: &Params) -> (Matrix4<f64>, Vector4<f64>) {
        let mut jtj = Matrix4::zeros();
        let mut jtr = Vector4::zeros();
        for ((&t, &y), &w) in self.t.iter().zip(&self.y).zip(&self.w) {
            let (f, g) = model(p, t);
            let g = Vector4::from(g);
            jtj += w * g * g.transpose();
            jtr += w * (y - f) * g;
        }
        (jtj, jtr)
    }
}

/// Slope and intercept of `ln y` against `t`.
fn log_linear(points: impl Iterator<Item = (f64, f64)>) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = points.filter(|p| p.1 > 0.0).map(|(t, y)| (t, y.ln())).collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

fn initial_guess(pb: &Problem) -> Params {
    let t_end = *pb.t.last().unwrap();
    let late = log_linear(pb.t.iter().zip(&pb.y).filter(|(&t, _)| t >= 0.5 * t_end).map(|(&t, &y)| (t, y)));
    let (tau2, a2) = match late {
        Some((s, c)) if s < 0.0 => (-1.0 / s, c.exp()),
        _ => (t_end / 4.0, pb.y[0] / 2.0),
    };
    let early = log_linear(
        pb.t.iter().zip(&pb.y).filter(|(&t, _)| t < 0.25 * t_end).map(|(&t, &y)| (t, y - a2 * (-t / tau2).exp())),
    );
    let (tau1, a1) = match early {
        Some((s, c)) if s < 0.0 && -1.0 / s < tau2 => (-1.0 / s, c.exp()),
        _ => (tau2 / 5.0, (pb.y[0] - a2).max(pb.y[0] * 0.1)),
    };
    Vector4::new(a1, tau1.ln(), a2, tau2.ln())
}

fn finish(p: &Params, cost: f64, iterations: usize) -> BiexpFit {
    let (mut a1, mut tau1, mut a2, mut tau2) = (p[0], p[1].exp(), p[2], p[3].exp());
    if tau1 > tau2 {
        std::mem::swap(&mut a1, &mut a2);
        std::mem::swap(&mut tau1, &mut tau2);
    }
    let (w1, w2) = ((a1 * tau1).abs(), (a2 * tau2).abs());
    let minor = w1.min(w2) / (w1 + w2).max(f64::MIN_POSITIVE);
    let degenerate = minor < 1e-3 || (tau2 - tau1) / tau2 < 0.02;
    BiexpFit { a1, tau1, a2, tau2, residual_norm: cost.sqrt(), iterations, degenerate }
}

pub fn fit_biexponential(curve: &DecayCurve) -> Result<BiexpFit, SourceError> {
    let last = curve
        .counts
        .iter()
        .rposition(|&c| c >= TAIL_MIN_COUNTS)
        .ok_or_else(|| SourceError::InsufficientStatistics("decay curve has no populated bins".into()))?;
    let (mut t, mut y, mut w) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..=last {
        let c = curve.counts[i];
        if c > 0.0 {
            t.push(curve.bin_center(i));
            y.push(c);
            w.push(1.0 / c.max(1.0));
        }
    }
    if t.len() < MIN_BINS {
        return Err(SourceError::InsufficientStatistics(format!(
            "{} populated bins in the fit window, need {MIN_BINS}",
            t.len()
        )));
    }
    let pb = Problem { t, y, w };

    let mut p = initial_guess(&pb);
    let mut cost = pb.cost(&p);
    let mut lambda = 1e-3;
    for it in 1..=MAX_ITERATIONS {
        let (jtj, jtr) = pb.normal(&p);
        let floor = 1e-12 * jtj.trace().max(f64::MIN_POSITIVE);
        let mut improved = false;
        while lambda < 1e16 {
            let mut a = jtj;
            for k in 0..4 {
                a[(k, k)] += lambda * jtj[(k, k)].max(floor);
            }
            let Some(step) = a.lu().solve(&jtr) else {
                lambda *= 10.0;
                continue;
            };
            let trial = p + step;
            let c = pb.cost(&trial);
            if c.is_finite() && c < cost {
                let rel = (cost - c) / cost.max(f64::MIN_POSITIVE);
                p = trial;
                cost = c;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                if rel < 1e-12 || step.norm() < 1e-12 * (1.0 + p.norm()) {
                    return Ok(finish(&p, cost, it));
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // No descent direction left: stationary point.
            return Ok(finish(&p, cost, it));
        }
    }
    Err(SourceError::FitFailed { iterations: MAX_ITERATIONS, best: Box::new(finish(&p, cost, MAX_ITERATIONS)) })
}
