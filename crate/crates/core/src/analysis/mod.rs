//! Detection curves, gray-zone fits, separation fidelity and the parameter
//! sweeps built on them.

mod fit;

use std::f64::consts::{PI, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use fit::{erf_model, fit_gray_zone, GrayZoneFit, GRAY_ZONE_CAP};

use crate::engine::{DetectionEstimate, ShotModel, SimulationConfig, Simulator, Trajectory};
use crate::error::{EngineError, FitError};
use crate::fbd::{
    progress_profile, set_reset_cycle, staircase_profile, CycleTiming, FbdParams, LfbWaveform,
    StaircaseTiming,
};
use crate::seed::derive_seed;
use crate::stats::{linspace, logspace, wilson_interval, Z95};

/// Detection probability against stimulus phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionCurve {
    pub phases: Vec<f64>,
    /// NaN at points that failed.
    pub p_hat: Vec<f64>,
    pub n_valid: Vec<usize>,
    pub n_ambiguous: Vec<usize>,
    pub n_escaped: Vec<usize>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    /// Seed used for each point.
    pub seeds: Vec<u64>,
    /// Error message for each failed point.
    pub errors: Vec<Option<String>>,
}

impl DetectionCurve {
    /// Curve from exact probabilities, as if each point had `n` valid runs.
    /// Counts are rounded for the intervals.
    pub fn from_probabilities(phases: Vec<f64>, p: Vec<f64>, n: usize) -> Self {
        let m = phases.len();
        let (ci_low, ci_high) = p
            .iter()
            .map(|&q| wilson_interval((q * n as f64).round() as usize, n, Z95))
            .unzip();
        DetectionCurve {
            phases,
            p_hat: p,
            n_valid: vec![n; m],
            n_ambiguous: vec![0; m],
            n_escaped: vec![0; m],
            ci_low,
            ci_high,
            seeds: vec![0; m],
            errors: vec![None; m],
        }
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    /// Indices of points with at least one classified run.
    pub fn valid_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| self.n_valid[i] > 0 && self.p_hat[i].is_finite())
    }

    /// Mean Wilson interval width over valid points.
    pub fn mean_ci_width(&self) -> f64 {
        let w: Vec<f64> = self.valid_indices().map(|i| self.ci_high[i] - self.ci_low[i]).collect();
        w.iter().sum::<f64>() / w.len().max(1) as f64
    }

    pub fn max_p(&self) -> Option<f64> {
        self.valid_indices().map(|i| self.p_hat[i]).reduce(f64::max)
    }

    pub fn min_p(&self) -> Option<f64> {
        self.valid_indices().map(|i| self.p_hat[i]).reduce(f64::min)
    }

    /// Relabels every outcome, `p -> 1 - p`.
    pub fn complement(&self) -> Self {
        let mut c = self.clone();
        for i in 0..c.len() {
            c.p_hat[i] = 1.0 - self.p_hat[i];
            c.ci_low[i] = 1.0 - self.ci_high[i];
            c.ci_high[i] = 1.0 - self.ci_low[i];
        }
        c
    }

    /// `phase,p_hat,ci_low,ci_high,n_valid,n_ambiguous,n_escaped,seed` rows.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for i in 0..self.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{},{},{},{}",
                self.phases[i],
                self.p_hat[i],
                self.ci_low[i],
                self.ci_high[i],
                self.n_valid[i],
                self.n_ambiguous[i],
                self.n_escaped[i],
                self.seeds[i]
            )?;
        }
        Ok(())
    }

    pub const CSV_HEADER: &'static str = "phase_rad,p_hat,ci_low,ci_high,n_valid,n_ambiguous,n_escaped,seed";
}

/// `n` stimulus phases over `[0, 2 pi]`, both ends included.
pub fn phase_grid(n: usize) -> Vec<f64> {
    linspace(0.0, TAU, n)
}

/// Seed for point `index` of a sweep rooted at `seed`.
pub fn point_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, index as u64)
}

/// Monte Carlo estimate at each phase of a uniform `[0, 2 pi]` grid. Every
/// `(phase, repetition)` pair is an independent job; the results do not
/// depend on the number of worker threads.
pub fn phase_sweep<M: ShotModel + ?Sized>(
    model: &M,
    seed: u64,
    n_phases: usize,
    n_reps: usize,
) -> Result<DetectionCurve, EngineError> {
    if n_phases < 3 {
        return Err(EngineError::Config(format!("n_phases must be at least 3, got {n_phases}")));
    }
    if n_reps == 0 {
        return Err(EngineError::Config("n_reps must be at least 1".into()));
    }
    let phases = phase_grid(n_phases);
    let seeds: Vec<u64> = (0..n_phases).map(|i| point_seed(seed, i)).collect();
    let outcomes: Vec<_> = (0..n_phases * n_reps)
        .into_par_iter()
        .map(|job| {
            let (i, r) = (job / n_reps, job % n_reps);
            model.shot(phases[i], crate::engine::rep_seed(seeds[i], r))
        })
        .collect();
    let mut curve = DetectionCurve {
        p_hat: Vec::with_capacity(n_phases),
        n_valid: Vec::with_capacity(n_phases),
        n_ambiguous: Vec::with_capacity(n_phases),
        n_escaped: Vec::with_capacity(n_phases),
        ci_low: Vec::with_capacity(n_phases),
        ci_high: Vec::with_capacity(n_phases),
        errors: Vec::with_capacity(n_phases),
        phases,
        seeds,
    };
    for chunk in outcomes.chunks(n_reps) {
        match DetectionEstimate::from_outcomes(chunk) {
            Ok(e) => {
                curve.p_hat.push(e.p_hat);
                curve.n_valid.push(e.n_valid);
                curve.n_ambiguous.push(e.n_ambiguous);
                curve.n_escaped.push(e.n_escaped);
                curve.ci_low.push(e.ci_low);
                curve.ci_high.push(e.ci_high);
                curve.errors.push(None);
            }
            Err(err) => {
                let ambiguous = chunk
                    .iter()
                    .filter(|o| matches!(o, Err(EngineError::Ambiguous { .. })))
                    .count();
                curve.p_hat.push(f64::NAN);
                curve.n_valid.push(0);
                curve.n_ambiguous.push(ambiguous);
                curve.n_escaped.push(0);
                curve.ci_low.push(0.0);
                curve.ci_high.push(1.0);
                curve.errors.push(Some(err.to_string()));
            }
        }
    }
    Ok(curve)
}

/// `(max p + (1 - min p)) / 2` over the valid points.
pub fn separation_fidelity(curve: &DetectionCurve) -> Result<f64, FitError> {
    let n = curve.valid_indices().count();
    if n < 2 {
        return Err(FitError::TooFewPoints { needed: 2, found: n });
    }
    let max = curve.max_p().unwrap_or(0.5);
    let min = curve.min_p().unwrap_or(0.5);
    Ok(0.5 * (max + 1.0 - min))
}

/// Distance between two transition midpoints on the circle of
/// circumference `pi`. A full detection curve satisfies
/// `p(phi + pi) = 1 - p(phi)`, so rising and falling edges are equivalent
/// up to a shift of `pi`.
pub fn phase_distance_mod_pi(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}

/// One point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub control: f64,
    pub seed: u64,
    /// NaN when the point failed.
    pub fidelity: f64,
    /// Capped gray zone; `pi/2` when the fit failed.
    pub gray_zone: f64,
    pub capped: bool,
    pub fit: Option<GrayZoneFit>,
    pub curve: Option<DetectionCurve>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub control_name: String,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn control_values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.control).collect()
    }

    pub fn fidelity(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.fidelity).collect()
    }

    pub fn gray_zone(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.gray_zone).collect()
    }

    pub const CSV_HEADER: &'static str =
        "control,fidelity,gray_zone_rad,capped,phi_t_rad,max_p,min_p,n_failed_phases,seed";

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for p in &self.points {
            let phi_t = p.fit.map_or(f64::NAN, |f| f.phi_t);
            let (max, min, failed) = p.curve.as_ref().map_or((f64::NAN, f64::NAN, 0), |c| {
                (
                    c.max_p().unwrap_or(f64::NAN),
                    c.min_p().unwrap_or(f64::NAN),
                    c.errors.iter().filter(|e| e.is_some()).count(),
                )
            });
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{},{:.16e},{:.16e},{:.16e},{},{}",
                p.control,
                p.fidelity,
                p.gray_zone,
                p.capped,
                phi_t,
                max,
                min,
                failed,
                p.seed
            )?;
        }
        Ok(())
    }
}

/// Phase sweep plus fidelity and gray zone for one prepared configuration.
pub fn evaluate_point<M: ShotModel + ?Sized>(
    model: &M,
    control: f64,
    seed: u64,
    n_phases: usize,
    n_reps: usize,
) -> SweepPoint {
    match phase_sweep(model, seed, n_phases, n_reps) {
        Ok(curve) => {
            let fidelity = separation_fidelity(&curve).unwrap_or(f64::NAN);
            let fit = fit_gray_zone(&curve).ok();
            SweepPoint {
                control,
                seed,
                fidelity,
                gray_zone: fit.map_or(GRAY_ZONE_CAP, |f| f.delta_phi),
                capped: fit.is_none_or(|f| f.capped),
                fit,
                curve: Some(curve),
                error: None,
            }
        }
        Err(e) => failed_point(control, seed, e),
    }
}

fn failed_point(control: f64, seed: u64, e: EngineError) -> SweepPoint {
    SweepPoint {
        control,
        seed,
        fidelity: f64::NAN,
        gray_zone: GRAY_ZONE_CAP,
        capped: true,
        fit: None,
        curve: None,
        error: Some(e.to_string()),
    }
}

fn sweep_with<F>(
    name: &str,
    base: &SimulationConfig,
    controls: &[f64],
    n_phases: usize,
    n_reps: usize,
    configure: F,
) -> SweepResult
where
    F: Fn(&SimulationConfig, f64) -> Result<SimulationConfig, EngineError>,
{
    let points = controls
        .iter()
        .enumerate()
        .map(|(j, &x)| {
            let seed = point_seed(base.seed, j);
            match configure(base, x).and_then(|c| Simulator::new(&c)) {
                Ok(sim) => evaluate_point(&sim, x, seed, n_phases, n_reps),
                Err(e) => failed_point(x, seed, e),
            }
        })
        .collect();
    SweepResult {
        control_name: name.to_string(),
        points,
    }
}

/// Default flip-duration grid: 12 log-spaced points over 10 ps to 5 ns.
pub fn default_flip_durations() -> Vec<f64> {
    logspace(10e-12, 5e-9, 12)
}

/// Default flux-noise grid: 10 points over 0 to 0.57 rad.
pub fn default_flux_noise_sigmas() -> Vec<f64> {
    linspace(0.0, 0.57, 10)
}

pub fn default_step_counts() -> Vec<usize> {
    (1..=8).collect()
}

/// Flip-duration sweep; the stimulus window and switch alignment follow
/// each duration.
pub fn sweep_flip_duration(
    base: &SimulationConfig,
    durations: &[f64],
    n_phases: usize,
    n_reps: usize,
) -> SweepResult {
    sweep_with("flip_duration_s", base, durations, n_phases, n_reps, |b, d| {
        if d.is_nan() || d <= 0.0 {
            return Err(EngineError::Config(format!("flip duration must be positive, got {d}")));
        }
        Ok(b.clone().with_flip_duration(d))
    })
}

/// Flux-noise sweep at a 100 ps flip and 0.35 uA stimulus.
pub fn sweep_flux_noise(
    base: &SimulationConfig,
    sigmas: &[f64],
    n_phases: usize,
    n_reps: usize,
) -> SweepResult {
    let mut fixed = base.clone();
    fixed.stimulus.amplitude = 0.35e-6;
    let fixed = fixed.with_flip_duration(100e-12);
    sweep_with("flux_noise_sigma_rad", &fixed, sigmas, n_phases, n_reps, |b, s| {
        let mut c = b.clone();
        c.flux_switch.flux_noise_sigma = s;
        Ok(c)
    })
}

/// Configuration driven by an `n`-step staircase.
pub fn staircase_config(
    base: &SimulationConfig,
    fbd: &FbdParams,
    timing: &StaircaseTiming,
    n: usize,
) -> Result<SimulationConfig, EngineError> {
    let profile = staircase_profile(fbd, timing, n).map_err(|e| EngineError::Config(e.to_string()))?;
    let span = profile.span();
    let mut c = base.clone().with_flip_duration(span);
    c.flux_switch.profile = Some(profile);
    Ok(c)
}

/// Staircase sweep over step counts.
pub fn sweep_staircase_steps(
    base: &SimulationConfig,
    fbd: &FbdParams,
    timing: &StaircaseTiming,
    steps: &[usize],
    n_phases: usize,
    n_reps: usize,
) -> SweepResult {
    let controls: Vec<f64> = steps.iter().map(|&n| n as f64).collect();
    sweep_with("steps", base, &controls, n_phases, n_reps, |b, x| {
        staircase_config(b, fbd, timing, x as usize)
    })
}

/// Per-step-count distance of the fitted midpoint from the 1-step curve,
/// modulo `pi`. `None` where either fit is missing.
pub fn staircase_dephasing(result: &SweepResult) -> Vec<Option<f64>> {
    let reference = result
        .points
        .iter()
        .find(|p| p.control == 1.0)
        .and_then(|p| p.fit);
    result
        .points
        .iter()
        .map(|p| match (reference, p.fit) {
            (Some(r), Some(f)) => Some(phase_distance_mod_pi(f.phi_t, r.phi_t)),
            _ => None,
        })
        .collect()
}

/// Detector response to one flux bias driver set/reset cycle.
#[derive(Debug, Clone)]
pub struct FbdCycleRun {
    pub waveform: LfbWaveform,
    /// `(t, phi_+)` at the waveform breakpoints, from the mutual-inductance law.
    pub flux: Vec<(f64, f64)>,
    pub trajectory: Trajectory,
    /// Simulation time of the first set pulse, s.
    pub offset: f64,
    pub cycle_duration: f64,
    /// Mean detector phase over the last quarter of the plateau, rad.
    pub plateau_phi: f64,
    pub phi_star: Option<f64>,
}

/// Lead time before the first set pulse in [`fbd_cycle_response`].
pub const FBD_LEAD_TIME: f64 = 0.5e-9;

/// Drives the detector with a full set/reset cycle and no stimulus. The
/// driver current is mapped onto `phi_+` so that zero current gives the
/// start level and the plateau gives the end level.
pub fn fbd_cycle_response(
    base: &SimulationConfig,
    fbd: &FbdParams,
    timing: &CycleTiming,
    seed: u64,
) -> Result<FbdCycleRun, EngineError> {
    let fbd_err = |e: crate::error::FbdError| EngineError::Config(e.to_string());
    let (waveform, flux) = set_reset_cycle(fbd, timing).map_err(fbd_err)?;
    let profile = progress_profile(&waveform)?;
    let span = profile.span();
    let mut cfg = base.clone();
    cfg.stimulus.amplitude = 0.0;
    cfg.stimulus.duration = span + 2.0 * FBD_LEAD_TIME;
    cfg.stimulus.envelope_sigma = cfg.stimulus.duration / 6.0;
    cfg.flux_switch.flip_duration = span;
    cfg.flux_switch.profile = Some(profile);
    let sim = Simulator::new(&cfg)?;
    let offset = sim.config().flux_switch.switch_time;
    let rec = sim.integrate(0.0, seed, true)?;
    let trajectory = rec.trajectory.expect("trajectory was requested");
    let set_done = (fbd.n_steps - 1) as f64 * fbd.step_interval + fbd.rise_time;
    let lo = offset + set_done + 0.75 * timing.hold;
    let hi = offset + set_done + timing.hold;
    let window: Vec<f64> = trajectory
        .times
        .iter()
        .zip(&trajectory.phi)
        .filter(|(t, _)| **t >= lo && **t <= hi)
        .map(|(_, p)| *p)
        .collect();
    let plateau_phi = if window.is_empty() {
        f64::NAN
    } else {
        window.iter().sum::<f64>() / window.len() as f64
    };
    Ok(FbdCycleRun {
        cycle_duration: waveform.end() - waveform.start(),
        waveform,
        flux,
        trajectory,
        offset,
        plateau_phi,
        phi_star: sim.phi_star(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Outcome;

    struct StepStub;
    impl ShotModel for StepStub {
        fn shot(&self, phase: f64, run_seed: u64) -> Result<Outcome, EngineError> {
            Ok(Outcome {
                state_bit: u8::from(phase < PI),
                final_phi: if phase < PI { 2.7 } else { -2.7 },
                escaped: false,
                run_seed,
            })
        }
    }

    #[test]
    fn stub_sweep_is_a_step() {
        let c = phase_sweep(&StepStub, 3, 15, 10).unwrap();
        for (x, p) in c.phases.iter().zip(&c.p_hat) {
            assert_eq!(*p, if *x < PI { 1.0 } else { 0.0 });
        }
        assert_eq!(separation_fidelity(&c).unwrap(), 1.0);
    }

    #[test]
    fn fidelity_examples() {
        let ph = phase_grid(3);
        let c = DetectionCurve::from_probabilities(ph.clone(), vec![0.9, 0.3, 0.5], 100);
        assert!((separation_fidelity(&c).unwrap() - 0.8).abs() < 1e-15);
        let flat = DetectionCurve::from_probabilities(ph, vec![0.5; 3], 100);
        assert_eq!(separation_fidelity(&flat).unwrap(), 0.5);
    }

    #[test]
    fn mod_pi_distance() {
        assert!((phase_distance_mod_pi(0.1, PI + 0.1)).abs() < 1e-12);
        assert!((phase_distance_mod_pi(0.1, 3.0) - (PI - 2.9)).abs() < 1e-12);
    }
}
