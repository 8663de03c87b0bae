//! Experiment configuration: JSON schema with defaults, dotted-path
//! overrides and validation.

use std::f64::consts::PI;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::analysis::{default_flip_durations, default_flux_noise_sigmas, default_step_counts};
use crate::circuit::{JdpdParams, JunctionParams, PhysicalConstants};
use crate::drive::{FluxSwitchSpec, RampShape, StimulusSpec, StimulusWindow, DEFAULT_FLUX_NOISE_CORRELATION_TIME};
use crate::engine::SimulationConfig;
use crate::error::{ConfigError, ParamError};
use crate::fbd::{CycleTiming, FbdParams, StaircaseTiming};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    SingleRun,
    #[default]
    PhaseSweep,
    FlipDurationSweep,
    FluxNoiseSweep,
    StaircaseSweep,
    FbdCycle,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::SingleRun,
        Experiment::PhaseSweep,
        Experiment::FlipDurationSweep,
        Experiment::FluxNoiseSweep,
        Experiment::StaircaseSweep,
        Experiment::FbdCycle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::SingleRun => "single-run",
            Experiment::PhaseSweep => "phase-sweep",
            Experiment::FlipDurationSweep => "flip-duration-sweep",
            Experiment::FluxNoiseSweep => "flux-noise-sweep",
            Experiment::StaircaseSweep => "staircase-sweep",
            Experiment::FbdCycle => "fbd-cycle",
        }
    }
}

impl std::str::FromStr for Experiment {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Experiment::ALL.iter().map(|e| e.name()).collect();
                format!("unknown experiment `{s}`, expected one of {}", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JunctionConfig {
    /// A.
    pub critical_current: f64,
    /// Ohm.
    pub shunt_resistance: f64,
    /// F/m^2.
    pub capacitance_per_area: f64,
    /// A/m^2.
    pub critical_current_density: f64,
}

impl Default for JunctionConfig {
    fn default() -> Self {
        let j = JunctionParams::default();
        JunctionConfig {
            critical_current: j.critical_current(),
            shunt_resistance: j.shunt_resistance(),
            capacitance_per_area: j.capacitance_per_area(),
            critical_current_density: j.critical_current_density(),
        }
    }
}

impl JunctionConfig {
    fn build(&self) -> Result<JunctionParams, ParamError> {
        JunctionParams::new(
            self.critical_current,
            self.shunt_resistance,
            self.capacitance_per_area,
            self.critical_current_density,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CircuitConfig {
    /// H.
    pub central_inductance: f64,
    /// H.
    pub loop_inductances: [f64; 2],
    pub junction: JunctionConfig,
    /// Second junction when it differs from the first.
    pub junction_2: Option<JunctionConfig>,
    pub constants: PhysicalConstants,
}

impl Default for CircuitConfig {
    fn default() -> Self {
        let p = JdpdParams::default();
        CircuitConfig {
            central_inductance: p.central_inductance(),
            loop_inductances: p.loop_inductances(),
            junction: JunctionConfig::default(),
            junction_2: None,
            constants: PhysicalConstants::default(),
        }
    }
}

impl CircuitConfig {
    pub fn build(&self) -> Result<JdpdParams, ParamError> {
        let j1 = self.junction.build()?;
        let j2 = match &self.junction_2 {
            Some(j) => j.build()?,
            None => j1,
        };
        JdpdParams::asymmetric(self.central_inductance, self.loop_inductances, [j1, j2], self.constants)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StimulusConfig {
    /// A.
    pub amplitude: f64,
    /// Hz.
    pub frequency: f64,
    /// rad; used by single runs only, sweeps scan it.
    pub phase_offset: f64,
    /// s; `null` sizes the window from the flip duration.
    pub duration: Option<f64>,
    /// s; `null` uses a sixth of the window.
    pub envelope_sigma: Option<f64>,
}

impl Default for StimulusConfig {
    fn default() -> Self {
        let s = StimulusSpec::default();
        StimulusConfig {
            amplitude: s.amplitude,
            frequency: s.frequency,
            phase_offset: 0.0,
            duration: None,
            envelope_sigma: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SwitchConfig {
    pub start_level: f64,
    pub end_level: f64,
    /// s.
    pub flip_duration: f64,
    pub ramp_shape: RampShape,
    /// rad.
    pub flux_noise_sigma: f64,
    /// s.
    pub flux_noise_correlation_time: f64,
}

impl Default for SwitchConfig {
    fn default() -> Self {
        SwitchConfig {
            start_level: PI / 2.0,
            end_level: PI,
            flip_duration: 100e-12,
            ramp_shape: RampShape::Linear,
            flux_noise_sigma: 0.0,
            flux_noise_correlation_time: DEFAULT_FLUX_NOISE_CORRELATION_TIME,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    /// s.
    pub dt: f64,
    /// K; `null` selects the crossover temperature.
    pub noise_temperature: Option<f64>,
    /// s.
    pub settle_time: f64,
    /// rad.
    pub phi_minus: f64,
    pub record_trajectory: bool,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            dt: 1e-12,
            noise_temperature: None,
            settle_time: 2e-9,
            phi_minus: 0.0,
            record_trajectory: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// s.
    pub flip_durations: Vec<f64>,
    /// rad.
    pub flux_noise_sigmas: Vec<f64>,
    pub steps: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            flip_durations: default_flip_durations(),
            flux_noise_sigmas: default_flux_noise_sigmas(),
            steps: default_step_counts(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    /// `null` draws a fresh seed, which is recorded in every output.
    pub seed: Option<u64>,
    pub n_reps: usize,
    pub n_phases: usize,
    pub output_dir: PathBuf,
    pub circuit: CircuitConfig,
    pub stimulus: StimulusConfig,
    pub flux_switch: SwitchConfig,
    pub simulation: SimulationSection,
    pub sweeps: SweepConfig,
    pub fbd: FbdParams,
    pub staircase: StaircaseTiming,
    pub cycle: CycleTiming,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: Experiment::default(),
            seed: None,
            n_reps: 500,
            n_phases: 15,
            output_dir: PathBuf::from("jdpd-out"),
            circuit: CircuitConfig::default(),
            stimulus: StimulusConfig::default(),
            flux_switch: SwitchConfig::default(),
            simulation: SimulationSection::default(),
            sweeps: SweepConfig::default(),
            fbd: FbdParams::default(),
            staircase: StaircaseTiming::default(),
            cycle: CycleTiming::default(),
        }
    }
}

/// Parses JSON text, reporting syntax errors with their position.
pub fn parse_json(text: &str) -> Result<Value, ConfigError> {
    serde_json::from_str(text).map_err(|e| ConfigError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Applies one `key.path=value` override. The value is read as JSON when it
/// parses, otherwise as a bare string. Numeric segments index into arrays.
/// Sections missing along the path are filled from the defaults first.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<(), ConfigError> {
    let defaults = serde_json::to_value(ExperimentConfig::default()).expect("defaults serialize");
    apply_override_with(root, &defaults, spec)
}

fn apply_override_with(root: &mut Value, defaults: &Value, spec: &str) -> Result<(), ConfigError> {
    let err = |message: String| ConfigError::Override {
        spec: spec.to_string(),
        message,
    };
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| err("expected KEY=VALUE".into()))?;
    let key = key.trim();
    let segments: Vec<&str> = key.split('.').collect();
    if key.is_empty() || segments.iter().any(|s| s.is_empty()) {
        return Err(err("empty key segment".into()));
    }
    let value = serde_json::from_str::<Value>(raw.trim()).unwrap_or_else(|_| Value::String(raw.to_string()));
    if !root.is_object() {
        return Err(err("configuration root is not an object".into()));
    }
    let mut cur = root;
    let mut def = Some(defaults);
    for (depth, seg) in segments.iter().enumerate() {
        def = def.and_then(|d| match d {
            Value::Object(m) => m.get(*seg),
            Value::Array(a) => seg.parse::<usize>().ok().and_then(|i| a.get(i)),
            _ => None,
        });
        let fallback = || match def {
            Some(d @ (Value::Object(_) | Value::Array(_))) => d.clone(),
            _ => Value::Object(Default::default()),
        };
        let last = depth + 1 == segments.len();
        let here = segments[..depth].join(".");
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(seg.to_string(), value);
                    return Ok(());
                }
                let slot = map.entry(seg.to_string()).or_insert_with(fallback);
                if slot.is_null() {
                    *slot = fallback();
                }
                slot
            }
            Value::Array(items) => {
                let idx: usize = seg
                    .parse()
                    .map_err(|_| err(format!("`{here}` is an array; `{seg}` is not an index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| err(format!("index {idx} out of range for `{here}` (length {len})")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(err(format!("`{here}` is not an object"))),
        };
    }
    unreachable!("loop returns on the last segment")
}

impl ExperimentConfig {
    /// Deserializes from a JSON value; schema violations name the offending
    /// path.
    pub fn from_value(v: Value) -> Result<Self, ConfigError> {
        serde_path_to_error::deserialize(v).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::Schema {
                path: if path == "." { "(root)".into() } else { path },
                message: e.into_inner().to_string(),
            }
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        Self::from_value(parse_json(text)?)
    }

    /// Loads `text` (or an empty object), applies the overrides in order and
    /// validates the result.
    pub fn load(text: Option<&str>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut v = match text {
            Some(t) => parse_json(t)?,
            None => Value::Object(Default::default()),
        };
        for o in overrides {
            apply_override(&mut v, o)?;
        }
        let cfg = Self::from_value(v)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks every numeric constraint, naming fields by their JSON path.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |path: &str, message: String| ConfigError::Invalid {
            path: path.to_string(),
            message,
        };
        let positive = |path: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(bad(path, format!("must be a finite positive number, got {v}")))
            }
        };
        let non_negative = |path: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(bad(path, format!("must be a finite non-negative number, got {v}")))
            }
        };
        let finite = |path: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(bad(path, format!("must be finite, got {v}")))
            }
        };
        if self.n_reps == 0 {
            return Err(bad("n_reps", "must be at least 1".into()));
        }
        if self.n_phases < 3 {
            return Err(bad("n_phases", format!("must be at least 3, got {}", self.n_phases)));
        }
        let c = &self.circuit;
        positive("circuit.central_inductance", c.central_inductance)?;
        positive("circuit.loop_inductances.0", c.loop_inductances[0])?;
        positive("circuit.loop_inductances.1", c.loop_inductances[1])?;
        for (name, j) in [("circuit.junction", Some(&c.junction)), ("circuit.junction_2", c.junction_2.as_ref())] {
            if let Some(j) = j {
                positive(&format!("{name}.critical_current"), j.critical_current)?;
                positive(&format!("{name}.shunt_resistance"), j.shunt_resistance)?;
                positive(&format!("{name}.capacitance_per_area"), j.capacitance_per_area)?;
                positive(&format!("{name}.critical_current_density"), j.critical_current_density)?;
            }
        }
        positive("circuit.constants.flux_quantum", c.constants.flux_quantum)?;
        positive("circuit.constants.boltzmann", c.constants.boltzmann)?;
        positive("circuit.constants.hbar", c.constants.hbar)?;
        c.build().map_err(|e| bad("circuit", e.to_string()))?;

        let s = &self.stimulus;
        non_negative("stimulus.amplitude", s.amplitude)?;
        positive("stimulus.frequency", s.frequency)?;
        finite("stimulus.phase_offset", s.phase_offset)?;
        if let Some(d) = s.duration {
            positive("stimulus.duration", d)?;
        }
        if let Some(d) = s.envelope_sigma {
            positive("stimulus.envelope_sigma", d)?;
        }

        let f = &self.flux_switch;
        finite("flux_switch.start_level", f.start_level)?;
        finite("flux_switch.end_level", f.end_level)?;
        if f.start_level > f.end_level {
            return Err(bad("flux_switch.start_level", "must not exceed flux_switch.end_level".into()));
        }
        positive("flux_switch.flip_duration", f.flip_duration)?;
        non_negative("flux_switch.flux_noise_sigma", f.flux_noise_sigma)?;
        non_negative("flux_switch.flux_noise_correlation_time", f.flux_noise_correlation_time)?;

        let m = &self.simulation;
        positive("simulation.dt", m.dt)?;
        positive("simulation.settle_time", m.settle_time)?;
        finite("simulation.phi_minus", m.phi_minus)?;
        if let Some(t) = m.noise_temperature {
            non_negative("simulation.noise_temperature", t)?;
        }

        for (i, &d) in self.sweeps.flip_durations.iter().enumerate() {
            positive(&format!("sweeps.flip_durations.{i}"), d)?;
        }
        for (i, &d) in self.sweeps.flux_noise_sigmas.iter().enumerate() {
            non_negative(&format!("sweeps.flux_noise_sigmas.{i}"), d)?;
        }
        for (i, &n) in self.sweeps.steps.iter().enumerate() {
            if n == 0 {
                return Err(bad(&format!("sweeps.steps.{i}"), "step counts must be at least 1".into()));
            }
        }
        self.fbd.validate().map_err(|e| bad("fbd", e.to_string()))?;
        self.staircase
            .for_steps(1)
            .map_err(|e| bad("staircase", e.to_string()))?;
        non_negative("cycle.hold", self.cycle.hold)?;
        positive("cycle.budget", self.cycle.budget)?;
        finite("cycle.t0", self.cycle.t0)?;
        Ok(())
    }

    /// Fills in a seed when none is set. Returns whether one was generated.
    pub fn ensure_seed(&mut self) -> bool {
        if self.seed.is_none() {
            self.seed = Some(rand::random());
            true
        } else {
            false
        }
    }

    /// Base simulation configuration for this experiment.
    pub fn simulation_config(&self) -> Result<SimulationConfig, ConfigError> {
        let params = self
            .circuit
            .build()
            .map_err(|e| ConfigError::Invalid {
                path: "circuit".into(),
                message: e.to_string(),
            })?;
        let window = StimulusWindow {
            duration: self.stimulus.duration,
            envelope_sigma: self.stimulus.envelope_sigma,
        };
        let f = &self.flux_switch;
        let base = SimulationConfig {
            params,
            stimulus: StimulusSpec {
                amplitude: self.stimulus.amplitude,
                frequency: self.stimulus.frequency,
                phase_offset: self.stimulus.phase_offset,
                duration: 1.0,
                envelope_sigma: 1.0,
            },
            window,
            flux_switch: FluxSwitchSpec {
                start_level: f.start_level,
                end_level: f.end_level,
                switch_time: FluxSwitchSpec::default().switch_time,
                flip_duration: f.flip_duration,
                ramp_shape: f.ramp_shape,
                flux_noise_sigma: f.flux_noise_sigma,
                flux_noise_correlation_time: f.flux_noise_correlation_time,
                profile: None,
            },
            phi_minus: self.simulation.phi_minus,
            dt: self.simulation.dt,
            noise_temperature: self.simulation.noise_temperature,
            seed: self.seed.unwrap_or(0),
            settle_time: self.simulation.settle_time,
            record_trajectory: self.simulation.record_trajectory,
        };
        Ok(base.with_flip_duration(f.flip_duration))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let c = ExperimentConfig::from_json_str("{}").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.sweeps.flip_durations.len(), 12);
        assert_eq!(c.n_reps, 500);
        assert_eq!(c.n_phases, 15);
    }

    #[test]
    fn unknown_key_is_rejected_with_path() {
        let e = ExperimentConfig::from_json_str(r#"{"circuit": {"junction": {"ic": 1}}}"#).unwrap_err();
        match e {
            ConfigError::Schema { path, message } => {
                assert_eq!(path, "circuit.junction.ic");
                assert!(message.contains("ic"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_type_names_field() {
        let e = ExperimentConfig::from_json_str(r#"{"simulation": {"dt": "fast"}}"#).unwrap_err();
        assert!(matches!(e, ConfigError::Schema { ref path, .. } if path == "simulation.dt"), "{e:?}");
    }

    #[test]
    fn negative_dt_names_field() {
        let e = ExperimentConfig::load(None, &["simulation.dt=-1e-12".into()]).unwrap_err();
        assert!(matches!(e, ConfigError::Invalid { ref path, .. } if path == "simulation.dt"), "{e:?}");
    }

    #[test]
    fn syntax_error_has_line() {
        let e = parse_json("{\n  \"n_reps\": ,\n}").unwrap_err();
        assert!(matches!(e, ConfigError::Syntax { line: 2, .. }), "{e:?}");
    }

    #[test]
    fn overrides() {
        let c = ExperimentConfig::load(
            Some(r#"{"n_reps": 10}"#),
            &[
                "n_reps=50".into(),
                "seed=7".into(),
                "experiment=flux-noise-sweep".into(),
                "circuit.loop_inductances.1=3e-11".into(),
                "staircase.span=2e-10".into(),
                "stimulus.duration=3e-9".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.n_reps, 50);
        assert_eq!(c.seed, Some(7));
        assert_eq!(c.experiment, Experiment::FluxNoiseSweep);
        assert_eq!(c.circuit.loop_inductances[1], 3e-11);
        assert_eq!(c.stimulus.duration, Some(3e-9));
        assert!(matches!(c.staircase, StaircaseTiming::FixedSpan { span, .. } if span == 2e-10));
        let mut v = serde_json::json!({"a": 1});
        assert!(apply_override(&mut v, "a.b=2").is_err());
        assert!(apply_override(&mut v, "novalue").is_err());
        assert!(apply_override(&mut v, "x..y=1").is_err());
    }

    #[test]
    fn resolved_echo_round_trips() {
        let mut c = ExperimentConfig::default();
        c.ensure_seed();
        let back = ExperimentConfig::from_json_str(&c.to_json_pretty()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn simulation_config_matches_engine_defaults() {
        let mut c = ExperimentConfig::default();
        c.seed = Some(3);
        let s = c.simulation_config().unwrap();
        let mut d = SimulationConfig::default();
        d.seed = 3;
        assert_eq!(s, d);
    }
}
