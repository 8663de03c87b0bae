//! Behavioral model of the SFQ flux bias driver: trigger pulses become
//! quantized current steps in the coupling inductor, which set `phi_+`
//! through a mutual inductance.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::circuit::PhysicalConstants;
use crate::drive::ProgressProfile;
use crate::error::{FbdError, ParamError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResetMode {
    /// One reset pulse removes the whole current over one rise time.
    #[default]
    Instant,
    /// One decrement per set step, spaced by the step interval.
    StaircaseDown,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FbdParams {
    /// Coupling inductance, H.
    pub mutual_inductance: f64,
    /// Flux reached when the staircase completes, rad.
    pub target_flux: f64,
    pub n_steps: usize,
    /// Spacing of the set pulses, s.
    pub step_interval: f64,
    /// Rise time of each current step, s.
    pub rise_time: f64,
    pub reset_mode: ResetMode,
    pub flux_quantum: f64,
}

impl Default for FbdParams {
    fn default() -> Self {
        FbdParams {
            mutual_inductance: 5.4e-12,
            target_flux: TAU,
            n_steps: 1,
            step_interval: 100e-12,
            rise_time: 50e-12,
            reset_mode: ResetMode::Instant,
            flux_quantum: PhysicalConstants::CODATA_2018.flux_quantum,
        }
    }
}

impl FbdParams {
    pub fn validate(&self) -> Result<(), FbdError> {
        ParamError::positive("fbd.mutual_inductance", self.mutual_inductance)?;
        ParamError::positive("fbd.target_flux", self.target_flux)?;
        ParamError::positive("fbd.step_interval", self.step_interval)?;
        ParamError::positive("fbd.rise_time", self.rise_time)?;
        ParamError::positive("fbd.flux_quantum", self.flux_quantum)?;
        if self.n_steps == 0 {
            return Err(ParamError::Invalid("fbd.n_steps must be at least 1".into()).into());
        }
        Ok(())
    }

    /// Inductor current that produces `target_flux`.
    pub fn target_current(&self) -> f64 {
        self.target_flux * self.flux_quantum / (TAU * self.mutual_inductance)
    }

    pub fn current_per_pulse(&self) -> f64 {
        self.target_current() / self.n_steps as f64
    }
}

/// Trigger pulse times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseTrain {
    pub set_times: Vec<f64>,
    pub reset_times: Vec<f64>,
}

impl PulseTrain {
    pub fn validate(&self) -> Result<(), FbdError> {
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[1] > w[0]);
        if !increasing(&self.set_times) || !increasing(&self.reset_times) {
            return Err(ParamError::Invalid("pulse times must be strictly increasing".into()).into());
        }
        if let (Some(r), first) = (self.reset_times.first(), self.set_times.first()) {
            if first.is_none_or(|s| r <= s) {
                return Err(ParamError::Invalid("a reset must follow a set pulse".into()).into());
            }
        }
        Ok(())
    }
}

/// `n_steps` set pulses at `t0 + k * step_interval`, with an optional reset.
pub fn build_pulse_train(
    n_steps: usize,
    step_interval: f64,
    t0: f64,
    reset_at: Option<f64>,
) -> Result<PulseTrain, FbdError> {
    if n_steps == 0 {
        return Err(ParamError::Invalid("n_steps must be at least 1".into()).into());
    }
    ParamError::positive("step_interval", step_interval)?;
    let train = PulseTrain {
        set_times: (0..n_steps).map(|k| t0 + k as f64 * step_interval).collect(),
        reset_times: reset_at.into_iter().collect(),
    };
    train.validate()?;
    Ok(train)
}

/// Piecewise-linear current through the coupling inductor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LfbWaveform {
    /// `(t, I_LFB)` vertices; linear in between, constant outside.
    pub breakpoints: Vec<(f64, f64)>,
    pub rise_time: f64,
    /// Current after every set pulse has completed, A.
    pub plateau: f64,
}

impl LfbWaveform {
    pub fn current_at(&self, t: f64) -> f64 {
        let b = &self.breakpoints;
        if b.is_empty() || t <= b[0].0 {
            return b.first().map_or(0.0, |p| p.1);
        }
        let idx = b.partition_point(|p| p.0 <= t);
        if idx >= b.len() {
            return b[b.len() - 1].1;
        }
        let (t0, i0) = b[idx - 1];
        let (t1, i1) = b[idx];
        i0 + (i1 - i0) * (t - t0) / (t1 - t0)
    }

    pub fn start(&self) -> f64 {
        self.breakpoints.first().map_or(0.0, |p| p.0)
    }

    pub fn end(&self) -> f64 {
        self.breakpoints.last().map_or(0.0, |p| p.0)
    }

    /// `t_s,i_lfb_A,phi_plus_rad` rows at the breakpoints.
    pub fn write_csv<W: std::io::Write>(&self, p: &FbdParams, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t_s,i_lfb_A,phi_plus_rad")?;
        for &(t, i) in &self.breakpoints {
            writeln!(w, "{:.16e},{:.16e},{:.16e}", t, i, flux_from_ilfb(i, p))?;
        }
        Ok(())
    }
}

#[inline]
fn ramp(t: f64, start: f64, rise: f64) -> f64 {
    if t >= start + rise {
        1.0
    } else {
        ((t - start) / rise).clamp(0.0, 1.0)
    }
}

/// Each set pulse adds `I_target / n_steps` over one rise time; a reset
/// brings the current back to zero. Resets must begin after the last step
/// has finished rising.
pub fn ilfb_from_pulses(train: &PulseTrain, p: &FbdParams) -> Result<LfbWaveform, FbdError> {
    p.validate()?;
    train.validate()?;
    let n = train.set_times.len();
    if n == 0 {
        return Err(ParamError::Invalid("pulse train has no set pulses".into()).into());
    }
    let rise = p.rise_time;
    let target = p.target_current();
    let n_f = n as f64;
    let set_done = train.set_times[n - 1] + rise;
    let mut resets: Vec<f64> = Vec::new();
    if let Some(&r) = train.reset_times.first() {
        if r < set_done {
            return Err(ParamError::Invalid(format!(
                "reset at {r:e} s starts before the staircase completes at {set_done:e} s"
            ))
            .into());
        }
        match p.reset_mode {
            ResetMode::Instant => resets.push(r),
            ResetMode::StaircaseDown => {
                resets.extend((0..n).map(|k| r + k as f64 * p.step_interval));
            }
        }
    }
    let set_level = |t: f64| {
        let s: f64 = train.set_times.iter().map(|&ts| ramp(t, ts, rise)).sum();
        target * (s / n_f)
    };
    let reset_factor = |t: f64| match p.reset_mode {
        _ if resets.is_empty() => 1.0,
        ResetMode::Instant => 1.0 - ramp(t, resets[0], rise),
        ResetMode::StaircaseDown => {
            let s: f64 = resets.iter().map(|&tr| ramp(t, tr, rise)).sum();
            1.0 - s / resets.len() as f64
        }
    };
    let mut times: Vec<f64> = train
        .set_times
        .iter()
        .chain(&resets)
        .flat_map(|&t| [t, t + rise])
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let breakpoints = times
        .into_iter()
        .map(|t| (t, set_level(t) * reset_factor(t)))
        .collect();
    Ok(LfbWaveform {
        breakpoints,
        rise_time: rise,
        plateau: target,
    })
}

/// `phi_+ = 2 pi M I / Phi0`.
#[inline]
pub fn flux_from_ilfb(i: f64, p: &FbdParams) -> f64 {
    TAU * p.mutual_inductance * i / p.flux_quantum
}

/// Timing of one set/reset cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CycleTiming {
    /// First set pulse, s.
    pub t0: f64,
    /// Time from the end of the staircase to the reset pulse, s.
    pub hold: f64,
    /// Longest allowed cycle, s.
    pub budget: f64,
}

impl Default for CycleTiming {
    fn default() -> Self {
        CycleTiming {
            t0: 0.0,
            hold: 2e-9,
            budget: 5e-9,
        }
    }
}

/// Full set/reset cycle and the resulting `phi_+` samples at the waveform
/// breakpoints.
pub fn set_reset_cycle(
    p: &FbdParams,
    timing: &CycleTiming,
) -> Result<(LfbWaveform, Vec<(f64, f64)>), FbdError> {
    p.validate()?;
    ParamError::non_negative("cycle.hold", timing.hold)?;
    ParamError::positive("cycle.budget", timing.budget)?;
    let set_done = timing.t0 + (p.n_steps - 1) as f64 * p.step_interval + p.rise_time;
    let train = build_pulse_train(p.n_steps, p.step_interval, timing.t0, Some(set_done + timing.hold))?;
    let wave = ilfb_from_pulses(&train, p)?;
    let duration = wave.end() - wave.start();
    if duration > timing.budget {
        return Err(FbdError::Timing {
            duration,
            budget: timing.budget,
        });
    }
    let flux = wave
        .breakpoints
        .iter()
        .map(|&(t, i)| (t, flux_from_ilfb(i, p)))
        .collect();
    Ok((wave, flux))
}

/// Normalized switch progress `I_LFB / I_plateau`, with times relative to
/// the first vertex. The last vertex is exactly 1 after the set part and
/// exactly 0 after a completed reset.
pub fn progress_profile(wave: &LfbWaveform) -> Result<ProgressProfile, ParamError> {
    let t0 = wave.start();
    let pts = wave
        .breakpoints
        .iter()
        .map(|&(t, i)| (t - t0, i / wave.plateau))
        .collect();
    ProgressProfile::new(pts)
}

/// How staircase timing scales with the number of steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StaircaseTiming {
    /// Steps share a fixed window: the interval is `span / n` and each step
    /// rises over `rise_fraction` of its interval.
    FixedSpan { span: f64, rise_fraction: f64 },
    /// Interval and rise time are the same for every step count.
    FixedInterval { interval: f64, rise_time: f64 },
}

impl Default for StaircaseTiming {
    fn default() -> Self {
        StaircaseTiming::FixedSpan {
            span: 100e-12,
            rise_fraction: 0.5,
        }
    }
}

impl StaircaseTiming {
    /// `(step_interval, rise_time)` for `n` steps.
    pub fn for_steps(&self, n: usize) -> Result<(f64, f64), ParamError> {
        if n == 0 {
            return Err(ParamError::Invalid("step count must be at least 1".into()));
        }
        match *self {
            StaircaseTiming::FixedSpan {
                span,
                rise_fraction,
            } => {
                ParamError::positive("staircase.span", span)?;
                ParamError::positive("staircase.rise_fraction", rise_fraction)?;
                if rise_fraction > 1.0 {
                    return Err(ParamError::Invalid(
                        "staircase.rise_fraction must not exceed 1".into(),
                    ));
                }
                let interval = span / n as f64;
                Ok((interval, rise_fraction * interval))
            }
            StaircaseTiming::FixedInterval {
                interval,
                rise_time,
            } => {
                ParamError::positive("staircase.interval", interval)?;
                ParamError::positive("staircase.rise_time", rise_time)?;
                Ok((interval, rise_time))
            }
        }
    }
}

/// Switch progress of an `n`-step staircase without reset.
pub fn staircase_profile(
    base: &FbdParams,
    timing: &StaircaseTiming,
    n: usize,
) -> Result<ProgressProfile, FbdError> {
    let (interval, rise) = timing.for_steps(n)?;
    let p = FbdParams {
        n_steps: n,
        step_interval: interval,
        rise_time: rise,
        ..*base
    };
    let train = build_pulse_train(n, interval, 0.0, None)?;
    let wave = ilfb_from_pulses(&train, &p)?;
    Ok(progress_profile(&wave)?)
}
