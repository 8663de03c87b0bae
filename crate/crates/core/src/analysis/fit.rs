//! Error-function fit of one transition of a detection curve.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use super::DetectionCurve;
use crate::error::FitError;
use crate::stats::Z95;

/// Gray zones above this are reported as capped.
pub const GRAY_ZONE_CAP: f64 = FRAC_PI_2;

const MIN_POINTS: usize = 5;
const MIN_WIDTH: f64 = 1e-4;
const MAX_WIDTH: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrayZoneFit {
    /// Transition width, rad, clipped to [`GRAY_ZONE_CAP`].
    pub delta_phi: f64,
    /// Transition midpoint, rad.
    pub phi_t: f64,
    /// `+1` for a rising transition, `-1` for a falling one.
    pub direction: f64,
    /// RMS of the unweighted residuals over the fitted window.
    pub residual_norm: f64,
    pub capped: bool,
    /// Width before clipping.
    pub raw_delta_phi: f64,
}

/// `P = (1 + erf(s sqrt(pi) (phi - phi_t) / width)) / 2`.
#[inline]
pub fn erf_model(phi: f64, phi_t: f64, width: f64, direction: f64) -> f64 {
    0.5 * (1.0 + libm::erf(direction * PI.sqrt() * (phi - phi_t) / width))
}

/// Fits the transition around the steepest step of `curve`.
///
/// The curve over a full period holds a rising and a falling edge while the
/// model is monotone, so only a half-period window centred on the steepest
/// step is used. Points are weighted by their binomial standard error taken
/// from the Wilson interval.
pub fn fit_gray_zone(curve: &DetectionCurve) -> Result<GrayZoneFit, FitError> {
    let pts: Vec<(f64, f64, f64)> = curve
        .valid_indices()
        .map(|i| {
            let se = ((curve.ci_high[i] - curve.ci_low[i]) / (2.0 * Z95)).max(1e-3);
            (curve.phases[i], curve.p_hat[i], 1.0 / se)
        })
        .collect();
    if pts.len() < MIN_POINTS {
        return Err(FitError::TooFewPoints {
            needed: MIN_POINTS,
            found: pts.len(),
        });
    }
    let mut best_slope = 0.0;
    let mut best = 0;
    for k in 0..pts.len() - 1 {
        let slope = (pts[k + 1].1 - pts[k].1) / (pts[k + 1].0 - pts[k].0);
        if slope.abs() > best_slope {
            best_slope = slope.abs();
            best = k;
        }
    }
    if best_slope == 0.0 {
        return Err(FitError::NoTransition);
    }
    let direction = (pts[best + 1].1 - pts[best].1).signum();
    let center = 0.5 * (pts[best].0 + pts[best + 1].0);
    let lo = center - FRAC_PI_2;
    let hi = center + FRAC_PI_2;
    let window: Vec<(f64, f64, f64)> = pts
        .iter()
        .copied()
        .filter(|p| p.0 >= lo - 1e-12 && p.0 <= hi + 1e-12)
        .collect();
    if window.len() < 3 {
        return Err(FitError::TooFewPoints {
            needed: 3,
            found: window.len(),
        });
    }
    let bounds = Bounds {
        lo: [lo, MIN_WIDTH.ln()],
        hi: [hi, MAX_WIDTH.ln()],
    };
    let spacing = (pts[best + 1].0 - pts[best].0).abs();
    let mut starts = Vec::new();
    for off in [0.0, -0.25, 0.25, -0.5, 0.5] {
        for w in [spacing.max(1e-3), 0.3, 1.0] {
            starts.push([center + off * spacing, w.ln()]);
        }
    }
    let mut best_fit: Option<([f64; 2], f64)> = None;
    for s in starts {
        if let Some((x, cost)) = levenberg_marquardt(&window, direction, s, &bounds) {
            if best_fit.is_none_or(|(_, c)| cost < c) {
                best_fit = Some((x, cost));
            }
        }
    }
    let (x, _) = best_fit.ok_or(FitError::NoConvergence)?;
    let width = x[1].exp();
    let rms = (window
        .iter()
        .map(|p| {
            let r = erf_model(p.0, x[0], width, direction) - p.1;
            r * r
        })
        .sum::<f64>()
        / window.len() as f64)
        .sqrt();
    let capped = width > GRAY_ZONE_CAP;
    Ok(GrayZoneFit {
        delta_phi: width.min(GRAY_ZONE_CAP),
        phi_t: x[0],
        direction,
        residual_norm: rms,
        capped,
        raw_delta_phi: width,
    })
}

struct Bounds {
    lo: [f64; 2],
    hi: [f64; 2],
}

impl Bounds {
    fn project(&self, x: [f64; 2]) -> [f64; 2] {
        [x[0].clamp(self.lo[0], self.hi[0]), x[1].clamp(self.lo[1], self.hi[1])]
    }
}

/// Weighted residuals and Jacobian in `(phi_t, ln width)`.
fn residuals(data: &[(f64, f64, f64)], dir: f64, x: [f64; 2]) -> (Vec<f64>, Vec<[f64; 2]>) {
    let width = x[1].exp();
    let sqrt_pi = PI.sqrt();
    let mut r = Vec::with_capacity(data.len());
    let mut j = Vec::with_capacity(data.len());
    for &(phi, p, w) in data {
        let z = dir * sqrt_pi * (phi - x[0]) / width;
        let g = (-z * z).exp();
        r.push(w * (0.5 * (1.0 + libm::erf(z)) - p));
        j.push([w * (-dir * g / width), w * (-z * g / sqrt_pi)]);
    }
    (r, j)
}

fn cost(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

/// Projected Levenberg-Marquardt on a two-parameter problem.
fn levenberg_marquardt(
    data: &[(f64, f64, f64)],
    dir: f64,
    start: [f64; 2],
    bounds: &Bounds,
) -> Option<([f64; 2], f64)> {
    let mut x = bounds.project(start);
    let (mut r, mut jac) = residuals(data, dir, x);
    let mut c = cost(&r);
    let mut lambda = 1e-3;
    for _ in 0..500 {
        let mut a = [[0.0; 2]; 2];
        let mut g = [0.0; 2];
        for (ri, ji) in r.iter().zip(&jac) {
            for u in 0..2 {
                g[u] += ji[u] * ri;
                for v in 0..2 {
                    a[u][v] += ji[u] * ji[v];
                }
            }
        }
        if g[0].abs().max(g[1].abs()) < 1e-30 {
            break;
        }
        let mut improved = false;
        for _ in 0..60 {
            let m = [
                [a[0][0] * (1.0 + lambda) + 1e-300, a[0][1]],
                [a[1][0], a[1][1] * (1.0 + lambda) + 1e-300],
            ];
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            if det == 0.0 || !det.is_finite() {
                lambda *= 10.0;
                continue;
            }
            let dx = [
                -(m[1][1] * g[0] - m[0][1] * g[1]) / det,
                -(-m[1][0] * g[0] + m[0][0] * g[1]) / det,
            ];
            let trial = bounds.project([x[0] + dx[0], x[1] + dx[1]]);
            let (rt, jt) = residuals(data, dir, trial);
            let ct = cost(&rt);
            if ct.is_finite() && ct <= c {
                let step = (trial[0] - x[0]).abs().max((trial[1] - x[1]).abs());
                let gain = c - ct;
                x = trial;
                r = rt;
                jac = jt;
                c = ct;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                if step < 1e-14 || gain <= 1e-16 * c.max(1e-300) && step < 1e-10 {
                    return Some((x, c));
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    c.is_finite().then_some((x, c))
}
