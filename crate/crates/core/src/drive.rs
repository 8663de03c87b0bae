//! Time-domain drives: the Gaussian-enveloped stimulus tone, the flux
//! switch waveform and the noise channels.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{EngineError, ParamError};

/// Shortest stimulus window used when deriving it from the flip duration.
pub const MIN_STIMULUS_DURATION: f64 = 2e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StimulusSpec {
    /// Peak current, A.
    pub amplitude: f64,
    /// Tone frequency, Hz.
    pub frequency: f64,
    /// Tone phase, rad.
    pub phase_offset: f64,
    /// Window length, s. The envelope is centred on `duration / 2`.
    pub duration: f64,
    /// Envelope standard deviation, s.
    pub envelope_sigma: f64,
}

impl Default for StimulusSpec {
    fn default() -> Self {
        StimulusSpec::for_flip(0.35e-6, 7.5e9, 0.0, 100e-12)
    }
}

impl StimulusSpec {
    /// Window sized from the flip duration: `max(2 ns, 4 * flip)` long with
    /// an envelope sigma of one sixth of that.
    pub fn for_flip(amplitude: f64, frequency: f64, phase_offset: f64, flip_duration: f64) -> Self {
        let (duration, envelope_sigma) = StimulusWindow::default().resolve(flip_duration);
        StimulusSpec {
            amplitude,
            frequency,
            phase_offset,
            duration,
            envelope_sigma,
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        ParamError::non_negative("stimulus.amplitude", self.amplitude)?;
        ParamError::positive("stimulus.frequency", self.frequency)?;
        ParamError::positive("stimulus.duration", self.duration)?;
        ParamError::positive("stimulus.envelope_sigma", self.envelope_sigma)?;
        if !self.phase_offset.is_finite() {
            return Err(ParamError::NotFinite {
                name: "stimulus.phase_offset",
                value: self.phase_offset,
            });
        }
        Ok(())
    }

    pub fn center(&self) -> f64 {
        0.5 * self.duration
    }
}

/// Rule for sizing the stimulus window from the flip duration. Fixed values
/// override the automatic choice.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StimulusWindow {
    pub duration: Option<f64>,
    pub envelope_sigma: Option<f64>,
}

impl StimulusWindow {
    /// `(duration, envelope_sigma)` for a switch lasting `flip_duration`.
    pub fn resolve(&self, flip_duration: f64) -> (f64, f64) {
        let duration = self
            .duration
            .unwrap_or_else(|| MIN_STIMULUS_DURATION.max(4.0 * flip_duration));
        (duration, self.envelope_sigma.unwrap_or(duration / 6.0))
    }
}

/// `A exp(-(t - t_c)^2 / (2 sigma^2)) sin(2 pi f t + phi_x)` inside
/// `[0, duration]`, zero elsewhere.
#[inline]
pub fn stimulus_at(t: f64, spec: &StimulusSpec) -> f64 {
    if !(0.0..=spec.duration).contains(&t) || spec.amplitude == 0.0 {
        return 0.0;
    }
    let u = (t - spec.center()) / spec.envelope_sigma;
    spec.amplitude * (-0.5 * u * u).exp() * (TAU * spec.frequency * t + spec.phase_offset).sin()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RampShape {
    #[default]
    Linear,
    Smoothstep,
}

impl RampShape {
    /// Maps ramp progress `s` in `[0, 1]` to switch progress in `[0, 1]`.
    #[inline]
    pub fn apply(self, s: f64) -> f64 {
        match self {
            RampShape::Linear => s,
            RampShape::Smoothstep => s * s * (3.0 - 2.0 * s),
        }
    }
}

/// Piecewise-linear switch progress, with times measured from the switch
/// start. Used for staircase drives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressProfile {
    /// `(time since switch start, progress)` vertices, times nondecreasing.
    pub points: Vec<(f64, f64)>,
}

impl ProgressProfile {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, ParamError> {
        if points.is_empty() {
            return Err(ParamError::Invalid("progress profile has no points".into()));
        }
        for w in points.windows(2) {
            if w[1].0 < w[0].0 {
                return Err(ParamError::Invalid(
                    "progress profile times must be nondecreasing".into(),
                ));
            }
        }
        if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
            return Err(ParamError::Invalid("progress profile has non-finite entries".into()));
        }
        Ok(ProgressProfile { points })
    }

    pub fn span(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.0) - self.points.first().map_or(0.0, |p| p.0)
    }

    /// Right-continuous piecewise-linear interpolation, clamped at both ends.
    pub fn value_at(&self, t: f64) -> f64 {
        let pts = &self.points;
        if t < pts[0].0 {
            return pts[0].1;
        }
        // last vertex with time <= t
        let idx = pts.partition_point(|p| p.0 <= t);
        if idx >= pts.len() {
            return pts[pts.len() - 1].1;
        }
        let (t0, v0) = pts[idx - 1];
        let (t1, v1) = pts[idx];
        if t1 == t0 {
            v1
        } else {
            v0 + (v1 - v0) * (t - t0) / (t1 - t0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxSwitchSpec {
    /// `phi_+` before the switch, rad.
    pub start_level: f64,
    /// `phi_+` after the switch, rad. Equal levels give a static bias.
    pub end_level: f64,
    /// Start of the ramp, s.
    pub switch_time: f64,
    /// 0-100 % ramp duration, s.
    pub flip_duration: f64,
    pub ramp_shape: RampShape,
    /// Stationary standard deviation of the flux noise on `phi_+`, rad.
    pub flux_noise_sigma: f64,
    /// Correlation time of the flux noise, s. Zero means a fresh sample every
    /// integrator step.
    pub flux_noise_correlation_time: f64,
    /// Overrides `ramp_shape` when set; its span replaces `flip_duration`.
    pub profile: Option<ProgressProfile>,
}

impl Default for FluxSwitchSpec {
    fn default() -> Self {
        FluxSwitchSpec {
            start_level: PI / 2.0,
            end_level: PI,
            switch_time: 0.95e-9,
            flip_duration: 100e-12,
            ramp_shape: RampShape::Linear,
            flux_noise_sigma: 0.0,
            flux_noise_correlation_time: DEFAULT_FLUX_NOISE_CORRELATION_TIME,
            profile: None,
        }
    }
}

/// Default flux-noise correlation time (about 16 GHz bandwidth).
pub const DEFAULT_FLUX_NOISE_CORRELATION_TIME: f64 = 10e-12;

impl FluxSwitchSpec {
    pub fn validate(&self) -> Result<(), ParamError> {
        ParamError::positive("switch.flip_duration", self.flip_duration)?;
        ParamError::non_negative("switch.flux_noise_sigma", self.flux_noise_sigma)?;
        ParamError::non_negative(
            "switch.flux_noise_correlation_time",
            self.flux_noise_correlation_time,
        )?;
        for (name, v) in [
            ("switch.start_level", self.start_level),
            ("switch.end_level", self.end_level),
            ("switch.switch_time", self.switch_time),
        ] {
            if !v.is_finite() {
                return Err(ParamError::NotFinite { name, value: v });
            }
        }
        if self.start_level > self.end_level {
            return Err(ParamError::Invalid(format!(
                "switch.start_level ({}) must not exceed switch.end_level ({})",
                self.start_level, self.end_level
            )));
        }
        Ok(())
    }

    /// Time over which the switch progresses from 0 to 1.
    pub fn active_span(&self) -> f64 {
        match &self.profile {
            Some(p) => p.span(),
            None => self.flip_duration,
        }
    }

    /// Normalized switch progress in `[0, 1]` at time `t`.
    #[inline]
    pub fn progress_at(&self, t: f64) -> f64 {
        let rel = t - self.switch_time;
        match &self.profile {
            Some(p) => p.value_at(rel),
            None => {
                let s = (rel / self.flip_duration).clamp(0.0, 1.0);
                self.ramp_shape.apply(s)
            }
        }
    }

    /// Noise-free `phi_+` at `t`.
    #[inline]
    pub fn level_at(&self, t: f64) -> f64 {
        self.start_level + (self.end_level - self.start_level) * self.progress_at(t)
    }

    /// `phi_+` with a flux-noise sample applied. The noise rides on the switch
    /// pulse, so it is weighted by the switch progress.
    #[inline]
    pub fn noisy_level_at(&self, t: f64, noise: f64) -> f64 {
        let u = self.progress_at(t);
        self.start_level + (self.end_level - self.start_level) * u + u * noise
    }
}

/// Noise-free switch waveform.
pub fn flux_switch_at(t: f64, spec: &FluxSwitchSpec) -> f64 {
    spec.level_at(t)
}

/// Places the switch so that its midpoint coincides with the stimulus
/// envelope peak.
pub fn align_switch_to_stimulus(
    stim: &StimulusSpec,
    sw: &FluxSwitchSpec,
) -> Result<FluxSwitchSpec, EngineError> {
    let span = sw.active_span();
    if span > stim.duration {
        return Err(EngineError::Config(format!(
            "flux switch lasting {span:e} s does not fit in a {:e} s stimulus",
            stim.duration
        )));
    }
    let mut out = sw.clone();
    let first = sw.profile.as_ref().map_or(0.0, |p| p.points[0].0);
    out.switch_time = stim.center() - 0.5 * span - first;
    Ok(out)
}

/// One-pole low-pass filtered Gaussian current noise source.
#[derive(Debug, Clone)]
pub struct NoiseChannel {
    sigma: f64,
    cutoff: f64,
    filter_state: f64,
    rng: ChaCha8Rng,
}

impl NoiseChannel {
    pub fn new(sigma: f64, cutoff: f64, rng: ChaCha8Rng) -> Self {
        NoiseChannel {
            sigma,
            cutoff,
            filter_state: 0.0,
            rng,
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn filter_state(&self) -> f64 {
        self.filter_state
    }

    /// Unfiltered draw with standard deviation `sigma`.
    #[inline]
    pub fn raw_sample(&mut self) -> f64 {
        if self.sigma == 0.0 {
            return 0.0;
        }
        let z: f64 = self.rng.sample(StandardNormal);
        self.sigma * z
    }

    /// Draws a raw sample and advances the filter with the exact update
    /// `y += (1 - exp(-w dt)) (x - y)`.
    #[inline]
    pub fn sample(&mut self, dt: f64) -> f64 {
        let gain = 1.0 - (-self.cutoff * dt).exp();
        self.sample_with_gain(gain)
    }

    /// [`NoiseChannel::sample`] with a precomputed `1 - exp(-w dt)`.
    #[inline]
    pub fn sample_with_gain(&mut self, gain: f64) -> f64 {
        let x = self.raw_sample();
        self.filter_state += gain * (x - self.filter_state);
        self.filter_state
    }
}

/// Stationary Gaussian flux noise with exponential correlation
/// (an Ornstein-Uhlenbeck process sampled once per time step).
#[derive(Debug, Clone)]
pub struct FluxNoise {
    sigma: f64,
    decay: f64,
    value: f64,
    rng: ChaCha8Rng,
}

impl FluxNoise {
    pub fn new(sigma: f64, correlation_time: f64, dt: f64, mut rng: ChaCha8Rng) -> Self {
        let decay = if correlation_time > 0.0 {
            (-dt / correlation_time).exp()
        } else {
            0.0
        };
        let value = if sigma > 0.0 {
            sigma * rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        };
        FluxNoise {
            sigma,
            decay,
            value,
            rng,
        }
    }

    /// Current value; the first call after construction returns the
    /// stationary initial draw.
    pub fn current(&self) -> f64 {
        self.value
    }

    /// Advances one step and returns the new value.
    pub fn advance(&mut self) -> f64 {
        if self.sigma == 0.0 {
            return 0.0;
        }
        let z: f64 = self.rng.sample(StandardNormal);
        self.value = self.decay * self.value + (1.0 - self.decay * self.decay).sqrt() * self.sigma * z;
        self.value
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::{stream_rng, Stream};
    use rand::SeedableRng;

    fn stim(phase: f64) -> StimulusSpec {
        StimulusSpec::for_flip(0.35e-6, 7.5e9, phase, 100e-12)
    }

    #[test]
    fn stimulus_peak_equals_amplitude() {
        // at t_c = 1 ns, 2 pi f t_c = 15 pi, so phi_x = pi/2 gives sin(15.5 pi) = -1
        // and phi_x = -pi/2 gives +1.
        let s = stim(-PI / 2.0);
        let v = stimulus_at(s.center(), &s);
        assert!((v - 0.35e-6).abs() < 1e-18, "{v}");
    }

    #[test]
    fn zero_amplitude_is_silent() {
        let mut s = stim(0.3);
        s.amplitude = 0.0;
        for k in 0..200 {
            assert_eq!(stimulus_at(k as f64 * 1e-11, &s), 0.0);
        }
    }

    #[test]
    fn stimulus_outside_window_is_zero() {
        let s = stim(0.3);
        assert_eq!(stimulus_at(-1e-12, &s), 0.0);
        assert_eq!(stimulus_at(s.duration + 1e-12, &s), 0.0);
    }

    #[test]
    fn duration_rule() {
        let s = StimulusSpec::for_flip(1e-7, 7.5e9, 0.0, 1e-9);
        assert_eq!(s.duration, 4e-9);
        assert!((s.envelope_sigma - 4e-9 / 6.0).abs() < 1e-24);
        let s = StimulusSpec::for_flip(1e-7, 7.5e9, 0.0, 10e-12);
        assert_eq!(s.duration, 2e-9);
    }

    #[test]
    fn linear_ramp_midpoint() {
        let sw = FluxSwitchSpec {
            switch_time: 1e-9,
            flip_duration: 200e-12,
            ..Default::default()
        };
        let mid = flux_switch_at(1.1e-9, &sw);
        assert!((mid - 3.0 * PI / 4.0).abs() < 1e-12);
        assert_eq!(flux_switch_at(0.5e-9, &sw), PI / 2.0);
        assert_eq!(flux_switch_at(2e-9, &sw), PI);
    }

    #[test]
    fn smoothstep_is_symmetric_about_midpoint() {
        for s in [0.1, 0.25, 0.4] {
            let a = RampShape::Smoothstep.apply(s);
            let b = RampShape::Smoothstep.apply(1.0 - s);
            assert!((a + b - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn alignment_examples() {
        let mut st = stim(0.0);
        st.duration = 4e-9;
        let sw = FluxSwitchSpec {
            flip_duration: 1e-9,
            ..Default::default()
        };
        let a = align_switch_to_stimulus(&st, &sw).unwrap();
        assert!((a.switch_time - 1.5e-9).abs() < 1e-21);
        assert!((a.switch_time + a.flip_duration - 2.5e-9).abs() < 1e-21);

        st.duration = 2e-9;
        let sw = FluxSwitchSpec {
            flip_duration: 100e-12,
            ..Default::default()
        };
        let a = align_switch_to_stimulus(&st, &sw).unwrap();
        assert!((a.switch_time - 0.95e-9).abs() < 1e-21);

        let sw = FluxSwitchSpec {
            flip_duration: 10e-9,
            ..Default::default()
        };
        assert!(align_switch_to_stimulus(&st, &sw).is_err());
    }

    #[test]
    fn profile_interpolation() {
        let p = ProgressProfile::new(vec![(0.0, 0.0), (1.0, 0.5), (2.0, 0.5), (3.0, 1.0)]).unwrap();
        assert_eq!(p.value_at(-1.0), 0.0);
        assert_eq!(p.value_at(0.5), 0.25);
        assert_eq!(p.value_at(1.5), 0.5);
        assert_eq!(p.value_at(2.5), 0.75);
        assert_eq!(p.value_at(9.0), 1.0);
        assert_eq!(p.span(), 3.0);
        let step = ProgressProfile::new(vec![(0.0, 1.0), (1.0, 1.0), (1.0, 0.0)]).unwrap();
        assert_eq!(step.value_at(0.999), 1.0);
        assert_eq!(step.value_at(1.0), 0.0);
        assert!(ProgressProfile::new(vec![(1.0, 0.0), (0.0, 1.0)]).is_err());
    }

    #[test]
    fn zero_sigma_channel_is_silent() {
        let mut ch = NoiseChannel::new(0.0, 7.8e11, ChaCha8Rng::seed_from_u64(1));
        for _ in 0..1000 {
            assert_eq!(ch.sample(1e-12), 0.0);
        }
    }

    #[test]
    fn identical_seeds_reproduce_sequences() {
        let mut a = NoiseChannel::new(1.0, 7.8e11, stream_rng(9, Stream::Junction1));
        let mut b = NoiseChannel::new(1.0, 7.8e11, stream_rng(9, Stream::Junction1));
        let mut c = NoiseChannel::new(1.0, 7.8e11, stream_rng(9, Stream::Junction2));
        let xs: Vec<f64> = (0..100).map(|_| a.sample(1e-12)).collect();
        let ys: Vec<f64> = (0..100).map(|_| b.sample(1e-12)).collect();
        let zs: Vec<f64> = (0..100).map(|_| c.sample(1e-12)).collect();
        assert_eq!(xs, ys);
        assert_ne!(xs, zs);
    }

    #[test]
    fn flux_noise_std_and_mean() {
        // 1e5 independent stationary draws
        let sigma = 0.29;
        let n = 100_000;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for i in 0..n {
            let f = FluxNoise::new(sigma, 10e-12, 1e-12, stream_rng(i, Stream::FluxNoise));
            let v = f.current();
            sum += v;
            sum2 += v * v;
        }
        let mean = sum / n as f64;
        let sd = (sum2 / n as f64 - mean * mean).sqrt();
        assert!((sd - sigma).abs() < 0.02 * sigma, "sd = {sd}");
    }

    #[test]
    fn white_flux_noise_std() {
        let mut f = FluxNoise::new(0.29, 0.0, 1e-12, stream_rng(4, Stream::FluxNoise));
        let n = 100_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let v = f.advance();
            s += v;
            s2 += v * v;
        }
        let sd = (s2 / n as f64 - (s / n as f64).powi(2)).sqrt();
        assert!((sd - 0.29).abs() < 0.02 * 0.29, "sd = {sd}");
    }
}
