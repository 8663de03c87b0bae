//! Stochastic transient simulation of a two-junction Josephson digital phase
//! detector and the Monte Carlo experiments built on it.

pub mod analysis;
pub mod circuit;
pub mod config;
pub mod drive;
pub mod engine;
pub mod error;
pub mod fbd;
pub mod plot;
pub mod report;
pub mod seed;
pub mod stats;

pub use circuit::{Circuit, CircuitState, FluxBias, JdpdParams, JunctionParams, PhysicalConstants};
pub use drive::{FluxSwitchSpec, RampShape, StimulusSpec};
pub use engine::{simulate, monte_carlo, DetectionEstimate, Outcome, SimulationConfig, Simulator, Trajectory};
pub use error::{ConfigError, EngineError, FbdError, FitError, ParamError, PlotError, RunError};
