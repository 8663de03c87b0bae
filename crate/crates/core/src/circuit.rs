//! Circuit parameterization and the equations of motion of the two-junction
//! detector.
//!
//! Two RF-SQUID loops (junction `J_i` in series with loop inductor `L_i`)
//! share the central inductor `L` at the input node `A`. Flux through each
//! loop enters as a phase source between `L_i` and `J_i`. Node `A` carries no
//! capacitance, so its phase is fixed at every instant by current
//! conservation and the only dynamical coordinates are the two junction
//! phases.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::ParamError;

/// Winding signs of the two loop phase sources. `+1` for loop 1 and `-1` for
/// loop 2 make the common-mode flux `phi_plus` the barrier control and the
/// differential flux `phi_minus` a tilt.
pub const WINDING: [f64; 2] = [1.0, -1.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicalConstants {
    /// Magnetic flux quantum, Wb.
    pub flux_quantum: f64,
    /// Boltzmann constant, J/K.
    pub boltzmann: f64,
    /// Reduced Planck constant, J*s.
    pub hbar: f64,
}

impl PhysicalConstants {
    pub const CODATA_2018: PhysicalConstants = PhysicalConstants {
        flux_quantum: 2.067_833_848e-15,
        boltzmann: 1.380_649e-23,
        hbar: 1.054_571_817e-34,
    };

    /// `Phi0 / 2pi`, the conversion between phase and flux.
    #[inline]
    pub fn reduced_flux_quantum(&self) -> f64 {
        self.flux_quantum / TAU
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::CODATA_2018
    }
}

/// RCSJ junction parameters. Capacitance is derived from the junction area
/// `I_c / J_S`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawJunction", into = "RawJunction")]
pub struct JunctionParams {
    critical_current: f64,
    shunt_resistance: f64,
    capacitance_per_area: f64,
    critical_current_density: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawJunction {
    critical_current: f64,
    shunt_resistance: f64,
    capacitance_per_area: f64,
    critical_current_density: f64,
}

impl TryFrom<RawJunction> for JunctionParams {
    type Error = ParamError;
    fn try_from(r: RawJunction) -> Result<Self, Self::Error> {
        JunctionParams::new(
            r.critical_current,
            r.shunt_resistance,
            r.capacitance_per_area,
            r.critical_current_density,
        )
    }
}

impl From<JunctionParams> for RawJunction {
    fn from(j: JunctionParams) -> Self {
        RawJunction {
            critical_current: j.critical_current,
            shunt_resistance: j.shunt_resistance,
            capacitance_per_area: j.capacitance_per_area,
            critical_current_density: j.critical_current_density,
        }
    }
}

impl JunctionParams {
    /// All arguments in SI: A, Ohm, F/m^2, A/m^2.
    pub fn new(
        critical_current: f64,
        shunt_resistance: f64,
        capacitance_per_area: f64,
        critical_current_density: f64,
    ) -> Result<Self, ParamError> {
        Ok(JunctionParams {
            critical_current: ParamError::positive("critical_current", critical_current)?,
            shunt_resistance: ParamError::positive("shunt_resistance", shunt_resistance)?,
            capacitance_per_area: ParamError::positive(
                "capacitance_per_area",
                capacitance_per_area,
            )?,
            critical_current_density: ParamError::positive(
                "critical_current_density",
                critical_current_density,
            )?,
        })
    }

    /// 6 uA junction, 310 Ohm, 50 fF/um^2, 10 uA/um^2.
    pub fn fabrication_default() -> Self {
        JunctionParams {
            critical_current: 6e-6,
            shunt_resistance: 310.0,
            capacitance_per_area: 50e-15 / 1e-12,
            critical_current_density: 10e-6 / 1e-12,
        }
    }

    pub fn critical_current(&self) -> f64 {
        self.critical_current
    }
    pub fn shunt_resistance(&self) -> f64 {
        self.shunt_resistance
    }
    pub fn capacitance_per_area(&self) -> f64 {
        self.capacitance_per_area
    }
    pub fn critical_current_density(&self) -> f64 {
        self.critical_current_density
    }

    /// `C = C_S * I_c / J_S`.
    pub fn capacitance(&self) -> f64 {
        self.capacitance_per_area * (self.critical_current / self.critical_current_density)
    }

    /// `V_c = I_c * R`.
    pub fn characteristic_voltage(&self) -> f64 {
        self.critical_current * self.shunt_resistance
    }

    /// Josephson coupling energy `Phi0 I_c / 2pi`.
    pub fn josephson_energy(&self, c: &PhysicalConstants) -> f64 {
        c.reduced_flux_quantum() * self.critical_current
    }
}

impl Default for JunctionParams {
    fn default() -> Self {
        Self::fabrication_default()
    }
}

/// Full detector parameterization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JdpdParams {
    central_inductance: f64,
    loop_inductances: [f64; 2],
    junctions: [JunctionParams; 2],
    constants: PhysicalConstants,
}

impl JdpdParams {
    /// Symmetric detector with one junction type shared by both loops.
    pub fn new(
        central_inductance: f64,
        loop_inductances: [f64; 2],
        junction: JunctionParams,
        constants: PhysicalConstants,
    ) -> Result<Self, ParamError> {
        Self::asymmetric(central_inductance, loop_inductances, [junction; 2], constants)
    }

    pub fn asymmetric(
        central_inductance: f64,
        loop_inductances: [f64; 2],
        junctions: [JunctionParams; 2],
        constants: PhysicalConstants,
    ) -> Result<Self, ParamError> {
        ParamError::positive("central_inductance", central_inductance)?;
        ParamError::positive("loop_inductance_1", loop_inductances[0])?;
        ParamError::positive("loop_inductance_2", loop_inductances[1])?;
        for (name, v) in [
            ("flux_quantum", constants.flux_quantum),
            ("boltzmann", constants.boltzmann),
            ("hbar", constants.hbar),
        ] {
            ParamError::positive(name, v)?;
        }
        let p = JdpdParams {
            central_inductance,
            loop_inductances,
            junctions,
            constants,
        };
        let beta_l = p.screening_parameter();
        if beta_l <= 1.0 {
            return Err(ParamError::NoDoubleWell { beta_l });
        }
        Ok(p)
    }

    pub fn central_inductance(&self) -> f64 {
        self.central_inductance
    }
    pub fn loop_inductances(&self) -> [f64; 2] {
        self.loop_inductances
    }
    pub fn junctions(&self) -> &[JunctionParams; 2] {
        &self.junctions
    }
    /// Junction 1; the default detector is symmetric.
    pub fn junction(&self) -> &JunctionParams {
        &self.junctions[0]
    }
    pub fn constants(&self) -> &PhysicalConstants {
        &self.constants
    }

    /// `beta_L = 2 pi L (I_c1 + I_c2) / Phi0`.
    pub fn screening_parameter(&self) -> f64 {
        let ic = self.junctions[0].critical_current + self.junctions[1].critical_current;
        TAU * self.central_inductance * ic / self.constants.flux_quantum
    }

    /// Inductive energy scale `(Phi0/2pi)^2 / L`.
    pub fn inductive_energy(&self) -> f64 {
        let k = self.constants.reduced_flux_quantum();
        k * k / self.central_inductance
    }

    /// Mean Josephson energy of the two junctions.
    pub fn josephson_energy(&self) -> f64 {
        0.5 * (self.junctions[0].josephson_energy(&self.constants)
            + self.junctions[1].josephson_energy(&self.constants))
    }
}

impl Default for JdpdParams {
    /// L = 200 pH, L1 = L2 = 20 pH, I_c = 6 uA.
    fn default() -> Self {
        JdpdParams::new(
            200e-12,
            [20e-12, 20e-12],
            JunctionParams::default(),
            PhysicalConstants::default(),
        )
        .expect("default parameters are valid")
    }
}

/// Stewart-McCumber parameter `2 pi V_c^2 C_S / (Phi0 J_S)`.
pub fn stewart_mccumber(j: &JunctionParams, c: &PhysicalConstants) -> f64 {
    let vc = j.characteristic_voltage();
    TAU * vc * vc * j.capacitance_per_area / (c.flux_quantum * j.critical_current_density)
}

/// Junction plasma frequency `sqrt(2 pi J_S / (Phi0 C_S))` in rad/s.
pub fn plasma_frequency(j: &JunctionParams, c: &PhysicalConstants) -> f64 {
    (TAU * j.critical_current_density / (c.flux_quantum * j.capacitance_per_area)).sqrt()
}

/// Quantum/classical crossover temperature `hbar omega_p / (2 pi k_B)`.
pub fn crossover_temperature(omega_p: f64, c: &PhysicalConstants) -> Result<f64, ParamError> {
    ParamError::positive("omega_p", omega_p)?;
    Ok(c.hbar * omega_p / (TAU * c.boltzmann))
}

/// Per-step standard deviation of the junction current noise,
/// `sqrt(2 k_B T / (R dt))`.
pub fn thermal_noise_sigma(
    j: &JunctionParams,
    c: &PhysicalConstants,
    temperature: f64,
    dt: f64,
) -> Result<f64, ParamError> {
    ParamError::non_negative("temperature", temperature)?;
    ParamError::positive("dt", dt)?;
    Ok((2.0 * c.boltzmann * temperature / (j.shunt_resistance * dt)).sqrt())
}

/// Loop fluxes expressed as common and differential phases.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FluxBias {
    pub phi_plus: f64,
    pub phi_minus: f64,
}

impl FluxBias {
    pub fn new(phi_plus: f64, phi_minus: f64) -> Self {
        FluxBias {
            phi_plus,
            phi_minus,
        }
    }

    /// `(phi_1, phi_2) = (phi_+ + phi_-, phi_+ - phi_-)`.
    pub fn split(&self) -> (f64, f64) {
        split_flux(*self)
    }
}

pub fn split_flux(bias: FluxBias) -> (f64, f64) {
    (
        bias.phi_plus + bias.phi_minus,
        bias.phi_plus - bias.phi_minus,
    )
}

pub fn combine_flux(phi_1: f64, phi_2: f64) -> FluxBias {
    FluxBias {
        phi_plus: (phi_1 + phi_2) / 2.0,
        phi_minus: (phi_1 - phi_2) / 2.0,
    }
}

/// Dynamical state: junction phases (rad), phase velocities (rad/s) and the
/// filtered noise currents (A) currently applied to each junction.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CircuitState {
    pub delta: [f64; 2],
    pub ddelta: [f64; 2],
    pub noise: [f64; 2],
}

impl CircuitState {
    /// Name of the first non-finite entry, if any.
    pub fn first_non_finite(&self) -> Option<(&'static str, f64)> {
        let named = [
            ("delta_1", self.delta[0]),
            ("delta_2", self.delta[1]),
            ("ddelta_1", self.ddelta[0]),
            ("ddelta_2", self.ddelta[1]),
            ("noise_state_1", self.noise[0]),
            ("noise_state_2", self.noise[1]),
        ];
        named.into_iter().find(|(_, v)| !v.is_finite())
    }
}

/// Time derivative of the mechanical part of [`CircuitState`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StateDerivative {
    pub ddelta: [f64; 2],
    pub dddelta: [f64; 2],
}

/// Precomputed coefficients for fast evaluation of the equations of motion.
#[derive(Debug, Clone, Copy)]
pub struct Circuit {
    params: JdpdParams,
    k: f64,
    g_central: f64,
    g_loop: [f64; 2],
    g_total: f64,
    ic: [f64; 2],
    inv_r: [f64; 2],
    inv_ck: [f64; 2],
}

impl Circuit {
    pub fn new(params: &JdpdParams) -> Self {
        let k = params.constants.reduced_flux_quantum();
        let g_central = 1.0 / params.central_inductance;
        let g_loop = [
            1.0 / params.loop_inductances[0],
            1.0 / params.loop_inductances[1],
        ];
        let j = &params.junctions;
        Circuit {
            params: *params,
            k,
            g_central,
            g_loop,
            g_total: g_central + g_loop[0] + g_loop[1],
            ic: [j[0].critical_current, j[1].critical_current],
            inv_r: [1.0 / j[0].shunt_resistance, 1.0 / j[1].shunt_resistance],
            inv_ck: [
                1.0 / (j[0].capacitance() * k),
                1.0 / (j[1].capacitance() * k),
            ],
        }
    }

    pub fn params(&self) -> &JdpdParams {
        &self.params
    }

    /// Internal branch phases `theta_i = delta_i + s_i phi_i`.
    #[inline]
    fn branch_phases(delta: [f64; 2], bias: FluxBias) -> [f64; 2] {
        let (p1, p2) = bias.split();
        [delta[0] + WINDING[0] * p1, delta[1] + WINDING[1] * p2]
    }

    #[inline]
    fn node_phase_from_theta(&self, theta: [f64; 2], i_in: f64) -> f64 {
        (i_in / self.k + self.g_loop[0] * theta[0] + self.g_loop[1] * theta[1]) / self.g_total
    }

    /// Phase of the input node from current conservation.
    #[inline]
    pub fn node_phase(&self, delta: [f64; 2], bias: FluxBias, i_in: f64) -> f64 {
        self.node_phase_from_theta(Self::branch_phases(delta, bias), i_in)
    }

    /// Currents flowing from the input node through each loop to ground.
    pub fn branch_currents(&self, delta: [f64; 2], bias: FluxBias, i_in: f64) -> [f64; 2] {
        let theta = Self::branch_phases(delta, bias);
        let phi_a = self.node_phase_from_theta(theta, i_in);
        [
            self.k * self.g_loop[0] * (phi_a - theta[0]),
            self.k * self.g_loop[1] * (phi_a - theta[1]),
        ]
    }

    /// Current through the central inductor.
    pub fn inductor_current(&self, phi_a: f64) -> f64 {
        self.k * self.g_central * phi_a
    }

    /// RCSJ balance for each junction:
    /// `C (Phi0/2pi) delta'' + (Phi0/2pi) delta'/R + I_c sin(delta) + i_noise = I_branch`.
    #[inline]
    pub fn derivative(
        &self,
        delta: [f64; 2],
        ddelta: [f64; 2],
        bias: FluxBias,
        i_in: f64,
        i_noise: [f64; 2],
    ) -> StateDerivative {
        let theta = Self::branch_phases(delta, bias);
        let phi_a = self.node_phase_from_theta(theta, i_in);
        let mut acc = [0.0; 2];
        for i in 0..2 {
            let branch = self.k * self.g_loop[i] * (phi_a - theta[i]);
            let resistive = self.k * ddelta[i] * self.inv_r[i];
            acc[i] = (branch - resistive - self.ic[i] * delta[i].sin() - i_noise[i]) * self.inv_ck[i];
        }
        StateDerivative {
            ddelta,
            dddelta: acc,
        }
    }

    /// Stored plus kinetic energy with the input current off. Non-increasing
    /// along noiseless trajectories at fixed bias.
    pub fn energy(&self, state: &CircuitState, bias: FluxBias) -> f64 {
        let theta = Self::branch_phases(state.delta, bias);
        let phi_a = self.node_phase_from_theta(theta, 0.0);
        let k2 = self.k * self.k;
        let mut e = 0.5 * k2 * self.g_central * phi_a * phi_a;
        for i in 0..2 {
            let c = self.params.junctions[i].capacitance();
            e += 0.5 * c * k2 * state.ddelta[i] * state.ddelta[i];
            e += self.k * self.ic[i] * (1.0 - state.delta[i].cos());
            let d = phi_a - theta[i];
            e += 0.5 * k2 * self.g_loop[i] * d * d;
        }
        e
    }

    /// Overdamped gradient-flow relaxation of the junction phases to the
    /// nearest static equilibrium at fixed bias and zero input current.
    pub fn relax(&self, delta: [f64; 2], bias: FluxBias, tol: f64, max_iter: usize) -> [f64; 2] {
        let mut d = delta;
        let ic_min = self.ic[0].min(self.ic[1]);
        let stiff = (self.k * self.g_loop[0].max(self.g_loop[1])) / ic_min + 1.0;
        let eta = 0.5 / stiff;
        for _ in 0..max_iter {
            let ib = self.branch_currents(d, bias, 0.0);
            let mut worst: f64 = 0.0;
            for i in 0..2 {
                let residual = (ib[i] - self.ic[i] * d[i].sin()) / self.ic[i];
                d[i] += eta * residual;
                worst = worst.max(residual.abs());
            }
            if worst < tol {
                break;
            }
        }
        d
    }

    /// Symmetric starting guess `theta_i = 0` for [`Circuit::relax`].
    pub fn flux_free_guess(bias: FluxBias) -> [f64; 2] {
        let (p1, p2) = bias.split();
        [-WINDING[0] * p1, -WINDING[1] * p2]
    }
}

/// Free-function form of [`Circuit::node_phase`].
pub fn node_phase(state: &CircuitState, bias: FluxBias, i_in: f64, p: &JdpdParams) -> f64 {
    Circuit::new(p).node_phase(state.delta, bias, i_in)
}

/// Free-function form of [`Circuit::derivative`].
pub fn equations_of_motion(
    state: &CircuitState,
    bias: FluxBias,
    i_in: f64,
    i_noise: [f64; 2],
    p: &JdpdParams,
) -> StateDerivative {
    Circuit::new(p).derivative(state.delta, state.ddelta, bias, i_in, i_noise)
}

/// Zero-loop-inductance reduction of the detector potential,
/// `U = E_L phi^2/2 - 2 E_J cos(phi_+) cos(phi - phi_-)`.
pub fn reduced_potential(phi: f64, bias: FluxBias, p: &JdpdParams) -> f64 {
    let el = p.inductive_energy();
    let ej = p.josephson_energy();
    0.5 * el * phi * phi - 2.0 * ej * bias.phi_plus.cos() * (phi - bias.phi_minus).cos()
}

/// `dU/dphi` of [`reduced_potential`].
pub fn reduced_potential_gradient(phi: f64, bias: FluxBias, p: &JdpdParams) -> f64 {
    let el = p.inductive_energy();
    let ej = p.josephson_energy();
    el * phi + 2.0 * ej * bias.phi_plus.cos() * (phi - bias.phi_minus).sin()
}

fn reduced_potential_curvature(phi: f64, bias: FluxBias, p: &JdpdParams) -> f64 {
    p.inductive_energy()
        + 2.0 * p.josephson_energy() * bias.phi_plus.cos() * (phi - bias.phi_minus).cos()
}

/// All local minima of the reduced potential, sorted ascending.
///
/// Stationary points satisfy `|phi - phi_-| <= beta_L |cos phi_+|`, so a scan
/// of that interval brackets every one of them; each bracket is refined by
/// safeguarded Newton iteration.
pub fn reduced_minima(bias: FluxBias, p: &JdpdParams) -> Vec<f64> {
    let reach = p.screening_parameter() * bias.phi_plus.cos().abs() + 1.0;
    let lo = bias.phi_minus - reach;
    let hi = bias.phi_minus + reach;
    let n = 4096;
    let step = (hi - lo) / n as f64;
    let grad = |x: f64| reduced_potential_gradient(x, bias, p);
    let mut minima = Vec::new();
    let mut x0 = lo;
    let mut g0 = grad(x0);
    for k in 1..=n {
        let x1 = lo + k as f64 * step;
        let g1 = grad(x1);
        if g0 < 0.0 && g1 >= 0.0 {
            minima.push(refine_root(x0, x1, &grad, |x| {
                reduced_potential_curvature(x, bias, p)
            }));
        }
        x0 = x1;
        g0 = g1;
    }
    minima
}

fn refine_root(mut a: f64, mut b: f64, f: &dyn Fn(f64) -> f64, df: impl Fn(f64) -> f64) -> f64 {
    let mut x = 0.5 * (a + b);
    for _ in 0..200 {
        let fx = f(x);
        if fx == 0.0 {
            return x;
        }
        if fx < 0.0 {
            a = x;
        } else {
            b = x;
        }
        let d = df(x);
        let newton = x - fx / d;
        x = if d > 0.0 && newton > a && newton < b {
            newton
        } else {
            0.5 * (a + b)
        };
        if (b - a).abs() < 1e-15 * (1.0 + x.abs()) {
            break;
        }
    }
    x
}

/// Half the separation of the outermost reduced-model minima; `None` when
/// the bias does not produce a double well.
pub fn double_well_half_width(bias: FluxBias, p: &JdpdParams) -> Option<f64> {
    let m = reduced_minima(bias, p);
    match (m.first(), m.last()) {
        (Some(&l), Some(&r)) if m.len() >= 2 && l < 0.0 && r > 0.0 => Some(0.5 * (r - l)),
        _ => None,
    }
}

/// Checks that the winding convention gives a pure harmonic well at
/// `phi_+ = pi/2` and a barrier at `phi = 0` for `phi_+ = pi`.
pub fn verify_winding(p: &JdpdParams) -> bool {
    let harmonic = FluxBias::new(PI / 2.0, 0.0);
    let double = FluxBias::new(PI, 0.0);
    let el = p.inductive_energy();
    let flat = (reduced_potential_curvature(0.0, harmonic, p) - el).abs() <= 1e-9 * el;
    flat && reduced_potential_curvature(0.0, double, p) < 0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn beta_c_matches_fabrication_value() {
        let b = stewart_mccumber(&JunctionParams::default(), &PhysicalConstants::default());
        assert!((b - 53.0).abs() <= 1.0, "beta_C = {b}");
    }

    #[test]
    fn zero_resistance_is_rejected() {
        let err = JunctionParams::new(6e-6, 0.0, 0.05, 1e7).unwrap_err();
        assert!(matches!(err, ParamError::NotPositive { name: "shunt_resistance", .. }));
    }

    #[test]
    fn doubling_resistance_quadruples_beta_c() {
        let c = PhysicalConstants::default();
        let a = JunctionParams::new(6e-6, 310.0, 0.05, 1e7).unwrap();
        let b = JunctionParams::new(6e-6, 620.0, 0.05, 1e7).unwrap();
        let ratio = stewart_mccumber(&b, &c) / stewart_mccumber(&a, &c);
        assert!((ratio - 4.0).abs() < 1e-12);
    }

    #[test]
    fn capacitance_is_derived_from_area() {
        let j = JunctionParams::default();
        assert!((j.capacitance() - 30e-15).abs() < 1e-27);
        assert!((j.characteristic_voltage() - 1.86e-3).abs() < 1e-15);
    }

    #[test]
    fn plasma_frequency_value_and_scaling() {
        let c = PhysicalConstants::default();
        let j = JunctionParams::default();
        // 2pi * 1e7 / (2.067833848e-15 * 0.05) = 6.0771e23 -> 7.7956e11
        let wp = plasma_frequency(&j, &c);
        assert!((wp - 7.7956e11).abs() < 0.001e11, "{wp}");
        let j4 = JunctionParams::new(6e-6, 310.0, 0.05, 4e7).unwrap();
        assert!((plasma_frequency(&j4, &c) / wp - 2.0).abs() < 1e-12);
        let c4 = JunctionParams::new(6e-6, 310.0, 0.2, 1e7).unwrap();
        assert!((plasma_frequency(&c4, &c) / wp - 0.5).abs() < 1e-12);
    }

    #[test]
    fn crossover_temperature_value() {
        let c = PhysicalConstants::default();
        // 1.054571817e-34 * 7.7956e11 / (2pi * 1.380649e-23) = 0.9477 K
        let t = crossover_temperature(7.7956e11, &c).unwrap();
        assert!((t - 0.9477).abs() < 1e-3, "{t}");
        let t2 = crossover_temperature(2.0 * 7.7956e11, &c).unwrap();
        assert!((t2 / t - 2.0).abs() < 1e-12);
        assert!(crossover_temperature(0.0, &c).is_err());
    }

    #[test]
    fn thermal_sigma_value_and_scaling() {
        let c = PhysicalConstants::default();
        let j = JunctionParams::default();
        // sqrt(2 * 1.380649e-23 * 0.95 / (310 * 1e-12)) = 2.909e-7 A
        let s = thermal_noise_sigma(&j, &c, 0.95, 1e-12).unwrap();
        assert!((s - 2.909e-7).abs() < 0.002e-7, "{s}");
        assert_eq!(thermal_noise_sigma(&j, &c, 0.0, 1e-12).unwrap(), 0.0);
        let q = thermal_noise_sigma(&j, &c, 0.95, 0.25e-12).unwrap();
        assert!((q / s - 2.0).abs() < 1e-12);
        assert!(thermal_noise_sigma(&j, &c, 0.95, 0.0).is_err());
        assert!(thermal_noise_sigma(&j, &c, 0.95, -1e-12).is_err());
    }

    #[test]
    fn flux_split_examples() {
        let (a, b) = split_flux(FluxBias::new(PI, 0.0));
        assert_eq!((a, b), (PI, PI));
        let (a, b) = split_flux(FluxBias::new(PI / 2.0, PI / 4.0));
        assert!((a - 3.0 * PI / 4.0).abs() < 1e-15 && (b - PI / 4.0).abs() < 1e-15);
    }

    #[test]
    fn default_params_report_beta_l() {
        let p = JdpdParams::default();
        // 2pi * 200e-12 * 12e-6 / 2.067833848e-15 = 7.2926
        assert!((p.screening_parameter() - 7.2926).abs() < 1e-3);
        assert!(verify_winding(&p));
    }

    #[test]
    fn weak_screening_is_rejected() {
        let err = JdpdParams::new(
            10e-12,
            [20e-12; 2],
            JunctionParams::default(),
            PhysicalConstants::default(),
        )
        .unwrap_err();
        assert!(matches!(err, ParamError::NoDoubleWell { .. }));
    }

    #[test]
    fn node_phase_zero_state() {
        let p = JdpdParams::default();
        assert_eq!(node_phase(&CircuitState::default(), FluxBias::default(), 0.0, &p), 0.0);
    }

    #[test]
    fn node_phase_cancels_common_flux() {
        // theta_1 = x, theta_2 = -x with equal loop inductances: signed
        // branch terms cancel for every x.
        let p = JdpdParams::default();
        for x in [0.1, 1.0, PI, -2.5] {
            let phi = node_phase(
                &CircuitState::default(),
                combine_flux(x, x),
                0.0,
                &p,
            );
            assert!(phi.abs() < 1e-15, "x = {x}: {phi}");
        }
    }

    #[test]
    fn equilibrium_has_zero_derivative() {
        let p = JdpdParams::default();
        let d = equations_of_motion(&CircuitState::default(), FluxBias::default(), 0.0, [0.0; 2], &p);
        assert_eq!(d.dddelta, [0.0, 0.0]);
        assert_eq!(d.ddelta, [0.0, 0.0]);
    }

    #[test]
    fn reduced_potential_shapes() {
        let p = JdpdParams::default();
        let el = p.inductive_energy();
        for phi_minus in [0.0, 0.3, -1.0] {
            let b = FluxBias::new(PI / 2.0, phi_minus);
            for phi in [-2.0, 0.1, 1.7] {
                let u = reduced_potential(phi, b, &p);
                assert!((u - 0.5 * el * phi * phi).abs() <= 1e-15 * el);
            }
        }
        let b = FluxBias::new(PI, 0.0);
        for phi in [0.3, 1.2, 2.75, 3.9] {
            assert_eq!(reduced_potential(phi, b, &p), reduced_potential(-phi, b, &p));
        }
        assert!(reduced_potential(0.0, b, &p) > reduced_potential(0.05, b, &p));
    }

    #[test]
    fn double_well_minimum_location() {
        let p = JdpdParams::default();
        let m = reduced_minima(FluxBias::new(PI, 0.0), &p);
        assert_eq!(m.len(), 2);
        assert!((m[1] - 2.75).abs() < 0.02, "{m:?}");
        assert!((m[0] + m[1]).abs() < 1e-12);
        assert!(double_well_half_width(FluxBias::new(PI / 2.0, 0.0), &p).is_none());
    }

    #[test]
    fn relax_reaches_harmonic_equilibrium() {
        let p = JdpdParams::default();
        let c = Circuit::new(&p);
        let bias = FluxBias::new(PI / 2.0, 0.0);
        let d = c.relax(Circuit::flux_free_guess(bias), bias, 1e-14, 100_000);
        assert!(c.node_phase(d, bias, 0.0).abs() < 1e-12);
        let ib = c.branch_currents(d, bias, 0.0);
        for i in 0..2 {
            assert!((ib[i] - 6e-6 * d[i].sin()).abs() < 1e-18);
        }
    }

    proptest! {
        #[test]
        fn flux_round_trip(p in -10.0f64..10.0, m in -10.0f64..10.0) {
            let b = FluxBias::new(p, m);
            let (a, c) = split_flux(b);
            let back = combine_flux(a, c);
            prop_assert!((back.phi_plus - p).abs() <= 1e-14 * (1.0 + p.abs()));
            prop_assert!((back.phi_minus - m).abs() <= 1e-14 * (1.0 + m.abs()));
        }

        #[test]
        fn node_phase_conserves_current(
            d1 in -6.0f64..6.0, d2 in -6.0f64..6.0,
            pp in -4.0f64..4.0, pm in -2.0f64..2.0,
            i_in in -20e-6f64..20e-6,
        ) {
            let p = JdpdParams::default();
            let c = Circuit::new(&p);
            let bias = FluxBias::new(pp, pm);
            let phi_a = c.node_phase([d1, d2], bias, i_in);
            let ib = c.branch_currents([d1, d2], bias, i_in);
            let i_l = c.inductor_current(phi_a);
            let scale = i_in.abs() + ib[0].abs() + ib[1].abs() + i_l.abs();
            prop_assert!((i_l - (i_in - ib[0] - ib[1])).abs() <= 1e-12 * scale.max(1e-30));
        }

        #[test]
        fn reduced_gradient_matches_finite_difference(
            phi in -4.0f64..4.0, pp in 0.0f64..6.3, pm in -1.0f64..1.0,
        ) {
            let p = JdpdParams::default();
            let b = FluxBias::new(pp, pm);
            let h = 1e-5;
            let fd = (reduced_potential(phi + h, b, &p) - reduced_potential(phi - h, b, &p)) / (2.0 * h);
            let g = reduced_potential_gradient(phi, b, &p);
            let scale = p.inductive_energy() * (1.0 + phi.abs()) + p.josephson_energy();
            prop_assert!((fd - g).abs() <= 1e-6 * scale.max(g.abs()));
        }
    }
}
