//! Fixed-step stochastic integration of the detector, well classification
//! and seeded Monte Carlo repetition.

use std::io::Write;

use rayon::prelude::*;

use crate::circuit::{
    crossover_temperature, double_well_half_width, plasma_frequency, thermal_noise_sigma,
    Circuit, CircuitState, FluxBias, JdpdParams,
};
use crate::drive::{
    align_switch_to_stimulus, stimulus_at, FluxNoise, FluxSwitchSpec, NoiseChannel, StimulusSpec,
    StimulusWindow,
};
use crate::error::{EngineError, ParamError};
use crate::seed::{derive_seed, stream_rng, Stream};
use crate::stats::{wilson_interval, Z95};

/// Internal sub-steps per time step when `dt` is coarse relative to the
/// plasma period.
pub const SUB_STEPS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub params: JdpdParams,
    pub stimulus: StimulusSpec,
    /// Sizing rule applied by [`SimulationConfig::with_flip_duration`].
    pub window: StimulusWindow,
    /// The switch time is recomputed by [`align_switch_to_stimulus`] when the
    /// run is prepared.
    pub flux_switch: FluxSwitchSpec,
    /// Static differential flux `phi_-`, rad.
    pub phi_minus: f64,
    /// Time step, s.
    pub dt: f64,
    /// Noise temperature in K; `None` selects the crossover temperature.
    pub noise_temperature: Option<f64>,
    pub seed: u64,
    /// Sensing window after the stimulus ends, s.
    pub settle_time: f64,
    pub record_trajectory: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            params: JdpdParams::default(),
            stimulus: StimulusSpec::default(),
            window: StimulusWindow::default(),
            flux_switch: FluxSwitchSpec::default(),
            phi_minus: 0.0,
            dt: 1e-12,
            noise_temperature: None,
            seed: 0,
            settle_time: 2e-9,
            record_trajectory: false,
        }
    }
}

impl SimulationConfig {
    /// Sets the flip duration and resizes the stimulus window to match.
    pub fn with_flip_duration(mut self, flip: f64) -> Self {
        self.flux_switch.flip_duration = flip;
        let (duration, sigma) = self.window.resolve(flip);
        self.stimulus.duration = duration;
        self.stimulus.envelope_sigma = sigma;
        self
    }

    /// Plasma frequency of the faster junction, rad/s.
    pub fn plasma_frequency(&self) -> f64 {
        let c = self.params.constants();
        self.params
            .junctions()
            .iter()
            .map(|j| plasma_frequency(j, c))
            .fold(0.0, f64::max)
    }

    /// Resolved noise temperature in K.
    pub fn noise_temperature(&self) -> f64 {
        match self.noise_temperature {
            Some(t) => t,
            None => {
                let c = self.params.constants();
                crossover_temperature(plasma_frequency(self.params.junction(), c), c)
                    .expect("plasma frequency is positive for validated params")
            }
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        ParamError::positive("dt", self.dt)?;
        ParamError::positive("settle_time", self.settle_time)?;
        if let Some(t) = self.noise_temperature {
            ParamError::non_negative("noise_temperature", t)?;
        }
        if !self.phi_minus.is_finite() {
            return Err(ParamError::NotFinite {
                name: "phi_minus",
                value: self.phi_minus,
            }
            .into());
        }
        self.stimulus.validate()?;
        self.flux_switch.validate()?;
        Ok(())
    }

    /// Number of integrator sub-steps per `dt`.
    pub fn sub_steps(&self) -> usize {
        let f_p = self.plasma_frequency() / std::f64::consts::TAU;
        if self.dt > 1.0 / (10.0 * f_p) {
            SUB_STEPS
        } else {
            1
        }
    }
}

/// Recorded state history, one row per time step plus the initial state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub phi: Vec<f64>,
    pub i_l: Vec<f64>,
    pub delta_1: Vec<f64>,
    pub delta_2: Vec<f64>,
}

impl Trajectory {
    pub const CSV_HEADER: &'static str = "t_s,phi_rad,i_l_A,delta1_rad,delta2_rad";

    fn with_capacity(n: usize) -> Self {
        Trajectory {
            times: Vec::with_capacity(n),
            phi: Vec::with_capacity(n),
            i_l: Vec::with_capacity(n),
            delta_1: Vec::with_capacity(n),
            delta_2: Vec::with_capacity(n),
        }
    }

    fn push(&mut self, t: f64, phi: f64, i_l: f64, delta: [f64; 2]) {
        self.times.push(t);
        self.phi.push(phi);
        self.i_l.push(i_l);
        self.delta_1.push(delta[0]);
        self.delta_2.push(delta[1]);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Value of `phi` at the sample nearest to `t`.
    pub fn phi_at(&self, t: f64) -> Option<f64> {
        let i = self.times.partition_point(|&x| x < t);
        let cand = [i.checked_sub(1), Some(i)];
        cand.into_iter()
            .flatten()
            .filter(|&k| k < self.len())
            .min_by(|&a, &b| (self.times[a] - t).abs().total_cmp(&(self.times[b] - t).abs()))
            .map(|k| self.phi[k])
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for k in 0..self.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.times[k], self.phi[k], self.i_l[k], self.delta_1[k], self.delta_2[k]
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Outcome {
    pub state_bit: u8,
    /// Tail-averaged detector phase, rad.
    pub final_phi: f64,
    pub escaped: bool,
    pub run_seed: u64,
}

/// Classifies the sensing window of one run.
///
/// The tail average over the last quarter of `settle_phi` decides the well.
/// `escaped` is set when, after `|phi|` first exceeds `phi_star / 2`, the
/// sign of `phi` later flips.
pub fn classify_well(settle_phi: &[f64], phi_star: f64, run_seed: u64) -> Result<Outcome, EngineError> {
    if settle_phi.is_empty() {
        return Err(EngineError::Config("sensing window is empty".into()));
    }
    let n_tail = (settle_phi.len() / 4).max(1);
    let tail = &settle_phi[settle_phi.len() - n_tail..];
    let average = tail.iter().sum::<f64>() / n_tail as f64;
    let floor = 0.1 * phi_star;
    if average.abs() < floor || !average.is_finite() {
        return Err(EngineError::Ambiguous { average, floor });
    }
    let mut escaped = false;
    if let Some(first) = settle_phi.iter().position(|p| p.abs() > 0.5 * phi_star) {
        let sign = settle_phi[first].signum();
        escaped = settle_phi[first..].iter().any(|p| p * sign < 0.0);
    }
    Ok(Outcome {
        state_bit: u8::from(average > 0.0),
        final_phi: average,
        escaped,
        run_seed,
    })
}

/// Output of [`Simulator::integrate`].
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub trajectory: Option<Trajectory>,
    /// `phi` sampled at every step of the sensing window.
    pub settle_phi: Vec<f64>,
    pub final_state: CircuitState,
}

/// A prepared configuration: switch aligned, coefficients and the starting
/// equilibrium computed once and reused for every repetition.
#[derive(Debug, Clone)]
pub struct Simulator {
    cfg: SimulationConfig,
    circuit: Circuit,
    noise_sigma: [f64; 2],
    cutoff: [f64; 2],
    filter_gain: [f64; 2],
    sub_steps: usize,
    n_steps: usize,
    settle_start: usize,
    phi_star: Option<f64>,
    initial: [f64; 2],
}

impl Simulator {
    pub fn new(cfg: &SimulationConfig) -> Result<Self, EngineError> {
        cfg.validate()?;
        let mut cfg = cfg.clone();
        cfg.flux_switch = align_switch_to_stimulus(&cfg.stimulus, &cfg.flux_switch)?;
        let circuit = Circuit::new(&cfg.params);
        let c = *cfg.params.constants();
        let temperature = cfg.noise_temperature();
        let mut noise_sigma = [0.0; 2];
        let mut cutoff = [0.0; 2];
        let mut filter_gain = [0.0; 2];
        for (i, j) in cfg.params.junctions().iter().enumerate() {
            noise_sigma[i] = thermal_noise_sigma(j, &c, temperature, cfg.dt)?;
            cutoff[i] = plasma_frequency(j, &c);
            filter_gain[i] = 1.0 - (-cutoff[i] * cfg.dt).exp();
        }
        let total = cfg.stimulus.duration + cfg.settle_time;
        let n_steps = (total / cfg.dt).round() as usize;
        let settle_start = ((cfg.stimulus.duration / cfg.dt).round() as usize).min(n_steps);
        let end_bias = FluxBias::new(cfg.flux_switch.end_level, cfg.phi_minus);
        let phi_star = double_well_half_width(end_bias, &cfg.params);
        let start_bias = FluxBias::new(cfg.flux_switch.start_level, cfg.phi_minus);
        let initial = circuit.relax(Circuit::flux_free_guess(start_bias), start_bias, 1e-14, 200_000);
        Ok(Simulator {
            sub_steps: cfg.sub_steps(),
            cfg,
            circuit,
            noise_sigma,
            cutoff,
            filter_gain,
            n_steps,
            settle_start,
            phi_star,
            initial,
        })
    }

    /// The configuration with the aligned switch.
    pub fn config(&self) -> &SimulationConfig {
        &self.cfg
    }

    pub fn circuit(&self) -> &Circuit {
        &self.circuit
    }

    /// Reduced-model half width of the final double well, if there is one.
    pub fn phi_star(&self) -> Option<f64> {
        self.phi_star
    }

    pub fn sub_step_count(&self) -> usize {
        self.sub_steps
    }

    /// Resting state before the switch.
    pub fn initial_state(&self) -> CircuitState {
        CircuitState {
            delta: self.initial,
            ddelta: [0.0; 2],
            noise: [0.0; 2],
        }
    }

    #[inline]
    fn drives(&self, t: f64, phase_offset: f64, flux_noise: f64) -> (f64, FluxBias) {
        let mut stim = self.cfg.stimulus;
        stim.phase_offset = phase_offset;
        let i_in = stimulus_at(t, &stim);
        let plus = self.cfg.flux_switch.noisy_level_at(t, flux_noise);
        (i_in, FluxBias::new(plus, self.cfg.phi_minus))
    }

    /// Detector phase at time `t` for the given state.
    pub fn phi(&self, state: &CircuitState, t: f64, phase_offset: f64, flux_noise: f64) -> f64 {
        let (i_in, bias) = self.drives(t, phase_offset, flux_noise);
        self.circuit.node_phase(state.delta, bias, i_in)
    }

    /// Advances `state` from `t` to `t + dt` with classical RK4, holding the
    /// junction noise in `state.noise` and the flux noise sample fixed.
    pub fn step(
        &self,
        state: &mut CircuitState,
        t: f64,
        phase_offset: f64,
        flux_noise: f64,
    ) -> Result<(), EngineError> {
        let h = self.cfg.dt / self.sub_steps as f64;
        let noise = state.noise;
        let f = |d: [f64; 2], v: [f64; 2], drive: (f64, FluxBias)| {
            self.circuit.derivative(d, v, drive.1, drive.0, noise)
        };
        let mut d = state.delta;
        let mut v = state.ddelta;
        let mut drive_start = self.drives(t, phase_offset, flux_noise);
        for s in 0..self.sub_steps {
            let t0 = t + s as f64 * h;
            let drive_mid = self.drives(t0 + 0.5 * h, phase_offset, flux_noise);
            let drive_end = self.drives(t0 + h, phase_offset, flux_noise);
            let k1 = f(d, v, drive_start);
            let d2 = [d[0] + 0.5 * h * k1.ddelta[0], d[1] + 0.5 * h * k1.ddelta[1]];
            let v2 = [v[0] + 0.5 * h * k1.dddelta[0], v[1] + 0.5 * h * k1.dddelta[1]];
            let k2 = f(d2, v2, drive_mid);
            let d3 = [d[0] + 0.5 * h * k2.ddelta[0], d[1] + 0.5 * h * k2.ddelta[1]];
            let v3 = [v[0] + 0.5 * h * k2.dddelta[0], v[1] + 0.5 * h * k2.dddelta[1]];
            let k3 = f(d3, v3, drive_mid);
            let d4 = [d[0] + h * k3.ddelta[0], d[1] + h * k3.ddelta[1]];
            let v4 = [v[0] + h * k3.dddelta[0], v[1] + h * k3.dddelta[1]];
            let k4 = f(d4, v4, drive_end);
            for i in 0..2 {
                d[i] += h / 6.0 * (k1.ddelta[i] + 2.0 * k2.ddelta[i] + 2.0 * k3.ddelta[i] + k4.ddelta[i]);
                v[i] += h / 6.0
                    * (k1.dddelta[i] + 2.0 * k2.dddelta[i] + 2.0 * k3.dddelta[i] + k4.dddelta[i]);
            }
            drive_start = drive_end;
        }
        state.delta = d;
        state.ddelta = v;
        if let Some((variable, value)) = state.first_non_finite() {
            return Err(EngineError::Integration {
                time: t + self.cfg.dt,
                variable,
                value,
            });
        }
        Ok(())
    }

    /// Runs the full protocol from the resting state.
    pub fn integrate(&self, phase_offset: f64, run_seed: u64, record: bool) -> Result<RunRecord, EngineError> {
        self.integrate_from(self.initial_state(), phase_offset, run_seed, record)
    }

    /// Runs the full protocol from an arbitrary starting state.
    pub fn integrate_from(
        &self,
        start: CircuitState,
        phase_offset: f64,
        run_seed: u64,
        record: bool,
    ) -> Result<RunRecord, EngineError> {
        let dt = self.cfg.dt;
        let mut channels = [
            NoiseChannel::new(self.noise_sigma[0], self.cutoff[0], stream_rng(run_seed, Stream::Junction1)),
            NoiseChannel::new(self.noise_sigma[1], self.cutoff[1], stream_rng(run_seed, Stream::Junction2)),
        ];
        let mut flux = FluxNoise::new(
            self.cfg.flux_switch.flux_noise_sigma,
            self.cfg.flux_switch.flux_noise_correlation_time,
            dt,
            stream_rng(run_seed, Stream::FluxNoise),
        );
        let mut state = start;
        let mut traj = record.then(|| Trajectory::with_capacity(self.n_steps + 1));
        let mut settle_phi = Vec::with_capacity(self.n_steps - self.settle_start);
        let mut flux_noise = flux.current();
        if let Some(tr) = traj.as_mut() {
            let phi = self.phi(&state, 0.0, phase_offset, flux_noise);
            tr.push(0.0, phi, self.circuit.inductor_current(phi), state.delta);
        }
        for k in 0..self.n_steps {
            let t = k as f64 * dt;
            state.noise = [
                channels[0].sample_with_gain(self.filter_gain[0]),
                channels[1].sample_with_gain(self.filter_gain[1]),
            ];
            if k > 0 {
                flux_noise = flux.advance();
            }
            self.step(&mut state, t, phase_offset, flux_noise)?;
            let t1 = (k + 1) as f64 * dt;
            let needs_phi = traj.is_some() || k >= self.settle_start;
            if needs_phi {
                let phi = self.phi(&state, t1, phase_offset, flux_noise);
                if k >= self.settle_start {
                    settle_phi.push(phi);
                }
                if let Some(tr) = traj.as_mut() {
                    tr.push(t1, phi, self.circuit.inductor_current(phi), state.delta);
                }
            }
        }
        Ok(RunRecord {
            trajectory: traj,
            settle_phi,
            final_state: state,
        })
    }

    /// One repetition: integrate and classify.
    pub fn run(&self, phase_offset: f64, run_seed: u64) -> Result<(Outcome, Option<Trajectory>), EngineError> {
        let rec = self.integrate(phase_offset, run_seed, self.cfg.record_trajectory)?;
        let phi_star = self.phi_star.ok_or_else(|| {
            EngineError::Config(format!(
                "end level {} rad does not produce a double well",
                self.cfg.flux_switch.end_level
            ))
        })?;
        let outcome = classify_well(&rec.settle_phi, phi_star, run_seed)?;
        Ok((outcome, rec.trajectory))
    }
}

/// Single run of `cfg` with `cfg.seed`.
pub fn simulate(cfg: &SimulationConfig) -> Result<(Outcome, Option<Trajectory>), EngineError> {
    Simulator::new(cfg)?.run(cfg.stimulus.phase_offset, cfg.seed)
}

/// Anything that can produce one classified repetition for a stimulus phase.
pub trait ShotModel: Sync {
    fn shot(&self, phase_offset: f64, run_seed: u64) -> Result<Outcome, EngineError>;
}

impl ShotModel for Simulator {
    fn shot(&self, phase_offset: f64, run_seed: u64) -> Result<Outcome, EngineError> {
        let rec = self.integrate(phase_offset, run_seed, false)?;
        let phi_star = self.phi_star.ok_or_else(|| {
            EngineError::Config("end level does not produce a double well".into())
        })?;
        classify_well(&rec.settle_phi, phi_star, run_seed)
    }
}

/// Detection probability estimate from repeated runs.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DetectionEstimate {
    pub p_hat: f64,
    pub n_ones: usize,
    pub n_valid: usize,
    pub n_ambiguous: usize,
    pub n_escaped: usize,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl DetectionEstimate {
    /// Aggregates repetition results. Ambiguous outcomes are counted and
    /// excluded; any other error is returned.
    pub fn from_outcomes<'a, I>(outcomes: I) -> Result<Self, EngineError>
    where
        I: IntoIterator<Item = &'a Result<Outcome, EngineError>>,
    {
        let (mut ones, mut valid, mut ambiguous, mut escaped) = (0, 0, 0, 0);
        for o in outcomes {
            match o {
                Ok(o) => {
                    valid += 1;
                    ones += usize::from(o.state_bit);
                    escaped += usize::from(o.escaped);
                }
                Err(EngineError::Ambiguous { .. }) => ambiguous += 1,
                Err(e) => return Err(e.clone()),
            }
        }
        if valid == 0 {
            return Err(EngineError::AllAmbiguous { n_reps: ambiguous });
        }
        let (ci_low, ci_high) = wilson_interval(ones, valid, Z95);
        Ok(DetectionEstimate {
            p_hat: ones as f64 / valid as f64,
            n_ones: ones,
            n_valid: valid,
            n_ambiguous: ambiguous,
            n_escaped: escaped,
            ci_low,
            ci_high,
        })
    }
}

/// Seed of repetition `rep` under `seed`.
pub fn rep_seed(seed: u64, rep: usize) -> u64 {
    derive_seed(seed, rep as u64)
}

/// Runs `n_reps` repetitions of `model` at one phase, in parallel.
pub fn monte_carlo_with<M: ShotModel + ?Sized>(
    model: &M,
    phase_offset: f64,
    seed: u64,
    n_reps: usize,
) -> Result<DetectionEstimate, EngineError> {
    if n_reps == 0 {
        return Err(EngineError::Config("n_reps must be at least 1".into()));
    }
    let outcomes: Vec<_> = (0..n_reps)
        .into_par_iter()
        .map(|r| model.shot(phase_offset, rep_seed(seed, r)))
        .collect();
    DetectionEstimate::from_outcomes(&outcomes)
}

/// Repeats `cfg` `n_reps` times with seeds derived from `cfg.seed`.
pub fn monte_carlo(cfg: &SimulationConfig, n_reps: usize) -> Result<DetectionEstimate, EngineError> {
    let sim = Simulator::new(cfg)?;
    monte_carlo_with(&sim, cfg.stimulus.phase_offset, cfg.seed, n_reps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn quiet() -> SimulationConfig {
        SimulationConfig {
            noise_temperature: Some(0.0),
            ..Default::default()
        }
    }

    #[test]
    fn default_noise_temperature_is_crossover() {
        let t = SimulationConfig::default().noise_temperature();
        assert!((t - 0.9477).abs() < 1e-3);
    }

    #[test]
    fn sub_step_rule() {
        let mut c = SimulationConfig::default();
        assert_eq!(c.sub_steps(), SUB_STEPS);
        c.dt = 0.5e-12;
        assert_eq!(c.sub_steps(), 1);
    }

    #[test]
    fn negative_dt_is_rejected() {
        let c = SimulationConfig {
            dt: -1e-12,
            ..Default::default()
        };
        assert!(matches!(
            Simulator::new(&c),
            Err(EngineError::Param(ParamError::NotPositive { name: "dt", .. }))
        ));
    }

    #[test]
    fn classify_examples() {
        let up = vec![2.7; 100];
        let o = classify_well(&up, 2.75, 1).unwrap();
        assert_eq!(o.state_bit, 1);
        assert!(!o.escaped);
        let down = vec![-2.7; 100];
        assert_eq!(classify_well(&down, 2.75, 1).unwrap().state_bit, 0);
        let wobble: Vec<f64> = (0..100).map(|k| if k % 2 == 0 { 0.05 } else { -0.05 }).collect();
        assert!(matches!(
            classify_well(&wobble, 2.75, 1),
            Err(EngineError::Ambiguous { .. })
        ));
        let mut flip = vec![2.0; 50];
        flip.extend(vec![-2.7; 50]);
        let o = classify_well(&flip, 2.75, 1).unwrap();
        assert_eq!(o.state_bit, 0);
        assert!(o.escaped);
        assert!(classify_well(&[], 2.75, 1).is_err());
    }

    #[test]
    fn zero_drive_equilibrium_is_preserved() {
        let mut c = quiet();
        c.stimulus.amplitude = 0.0;
        let sim = Simulator::new(&c).unwrap();
        let mut e = sim.initial_state();
        let start = e;
        for k in 0..200 {
            sim.step(&mut e, k as f64 * 1e-12, 0.0, 0.0).unwrap();
        }
        for i in 0..2 {
            assert!((e.delta[i] - start.delta[i]).abs() < 1e-12);
            assert!(e.ddelta[i].abs() < 1e-6 * c.plasma_frequency());
        }
    }

    #[test]
    fn zero_state_is_exactly_preserved() {
        let mut c = quiet();
        c.stimulus.amplitude = 0.0;
        c.flux_switch.start_level = 0.0;
        c.flux_switch.end_level = 0.0;
        let sim = Simulator::new(&c).unwrap();
        let mut s = CircuitState::default();
        for k in 0..1000 {
            sim.step(&mut s, k as f64 * 1e-12, 0.0, 0.0).unwrap();
        }
        assert_eq!(s, CircuitState::default());
    }

    #[test]
    fn non_finite_state_reports_variable() {
        let sim = Simulator::new(&quiet()).unwrap();
        let mut s = sim.initial_state();
        s.ddelta[1] = f64::NAN;
        let err = sim.step(&mut s, 0.0, 0.0, 0.0).unwrap_err();
        assert!(matches!(err, EngineError::Integration { .. }), "{err}");
    }

    #[test]
    fn phase_flip_flips_outcome() {
        let mut c = quiet();
        c.phi_minus = 0.0;
        let sim = Simulator::new(&c).unwrap();
        let (a, _) = sim.run(0.3, 1).unwrap();
        let (b, _) = sim.run(0.3 + PI, 1).unwrap();
        assert_ne!(a.state_bit, b.state_bit);
    }
}
