use std::f64::consts::PI;

use jdpd_core::analysis::{erf_model, fit_gray_zone, phase_sweep, DetectionCurve};
use jdpd_core::engine::{monte_carlo_with, Outcome, ShotModel};
use jdpd_core::stats::{linspace, wilson_interval, Z95};
use jdpd_core::EngineError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

fn case(rng: &mut ChaCha8Rng) -> (f64, f64, f64) {
    let width = rng.random_range(0.05..=1.0);
    let phi_t = rng.random_range(0.0..=2.0 * PI);
    let dir = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    (width, phi_t, dir)
}

#[test]
fn noiseless_recovery_of_random_transitions() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let phases = linspace(0.0, 2.0 * PI, 201);
    for _ in 0..100 {
        let (w, t, d) = case(&mut rng);
        let p = phases.iter().map(|&x| erf_model(x, t, w, d)).collect();
        let fit = fit_gray_zone(&DetectionCurve::from_probabilities(phases.clone(), p, 500)).unwrap();
        assert!((fit.delta_phi - w).abs() < 1e-6, "width {w}: {fit:?}");
        assert!((fit.phi_t - t).abs() < 1e-6, "phi_t {t}: {fit:?}");
        assert_eq!(fit.direction, d);
    }
}

#[test]
fn binomial_noise_median_error_within_ten_percent() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let phases = linspace(0.0, 2.0 * PI, 61);
    let n = 500;
    let mut width_err = Vec::new();
    let mut centre_err = Vec::new();
    for _ in 0..100 {
        let (w, t, d) = case(&mut rng);
        // Keep the transition inside the sampled period and a few points wide.
        let w = w.max(0.3);
        let t = t.clamp(1.5, 2.0 * PI - 1.5);
        let p: Vec<f64> = phases
            .iter()
            .map(|&x| {
                let q = erf_model(x, t, w, d);
                Binomial::new(n, q).unwrap().sample(&mut rng) as f64 / n as f64
            })
            .collect();
        let fit = fit_gray_zone(&DetectionCurve::from_probabilities(phases.clone(), p, n as usize)).unwrap();
        width_err.push((fit.delta_phi / w - 1.0).abs());
        centre_err.push((fit.phi_t - t).abs() / w);
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let mw = median(&mut width_err);
    let mc = median(&mut centre_err);
    assert!(mw < 0.10, "median width error {mw}");
    assert!(mc < 0.10, "median midpoint error {mc}");
}

/// Bernoulli shots with a fixed probability, drawn from the run seed.
struct Coin(f64);

impl ShotModel for Coin {
    fn shot(&self, _phase: f64, run_seed: u64) -> Result<Outcome, EngineError> {
        let mut r = ChaCha8Rng::seed_from_u64(run_seed);
        let one = r.random_bool(self.0);
        Ok(Outcome {
            state_bit: u8::from(one),
            final_phi: if one { 2.7 } else { -2.7 },
            escaped: false,
            run_seed,
        })
    }
}

#[test]
fn interval_width_scales_as_inverse_sqrt_n() {
    let width = |n: usize| {
        let e = monte_carlo_with(&Coin(0.3), 0.0, 8, n).unwrap();
        e.ci_high - e.ci_low
    };
    for (a, b) in [(100, 400), (400, 1600), (250, 1000)] {
        let ratio = width(a) / width(b);
        assert!((ratio / 2.0 - 1.0).abs() < 0.15, "{a} -> {b}: {ratio}");
    }
}

#[test]
fn wilson_examples() {
    let (lo, hi) = wilson_interval(50, 100, Z95);
    assert!((lo - 0.4038).abs() < 1e-4 && (hi - 0.5962).abs() < 1e-4, "{lo} {hi}");
    let (lo, hi) = wilson_interval(100, 100, Z95);
    assert!(hi == 1.0 && (lo - 0.9630).abs() < 1e-4, "{lo}");
}

#[test]
fn coin_sweep_estimates_probability() {
    let c = phase_sweep(&Coin(0.8), 4, 5, 2000).unwrap();
    for (p, (lo, hi)) in c.p_hat.iter().zip(c.ci_low.iter().zip(&c.ci_high)) {
        assert!((p - 0.8).abs() < 0.04, "{p}");
        assert!(lo <= p && p <= hi);
    }
}
