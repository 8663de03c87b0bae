//! Small oscillations about the `phi_+ = pi/2` equilibrium, integrated by the
//! engine and timed by zero crossings.

use std::f64::consts::{FRAC_PI_2, TAU};

use jdpd_core::engine::Simulator;
use jdpd_core::{Circuit, FluxBias, JdpdParams, JunctionParams, PhysicalConstants, SimulationConfig};

fn params(loop_l: f64) -> JdpdParams {
    JdpdParams::new(200e-12, [loop_l; 2], JunctionParams::default(), PhysicalConstants::default()).unwrap()
}

fn ringdown_frequency(p: JdpdParams) -> f64 {
    let mut cfg = SimulationConfig::default();
    cfg.params = p;
    cfg.stimulus.amplitude = 0.0;
    cfg.noise_temperature = Some(0.0);
    cfg.flux_switch.start_level = FRAC_PI_2;
    cfg.flux_switch.end_level = FRAC_PI_2;
    cfg.dt = 0.02e-12;
    let sim = Simulator::new(&cfg).unwrap();
    let bias = FluxBias::new(FRAC_PI_2, 0.0);
    let c = sim.circuit();
    let mut s = sim.initial_state();
    let rest = c.node_phase(s.delta, bias, 0.0);
    s.delta[0] += 0.01;
    s.delta[1] += 0.01;
    let mut prev = c.node_phase(s.delta, bias, 0.0) - rest;
    let mut crossings = Vec::new();
    let mut t = 0.0;
    while crossings.len() < 6 && t < 1e-9 {
        sim.step(&mut s, t, 0.0, 0.0).unwrap();
        t += cfg.dt;
        let x = c.node_phase(s.delta, bias, 0.0) - rest;
        if prev < 0.0 && x >= 0.0 {
            crossings.push(t - cfg.dt * x / (x - prev));
        }
        prev = x;
    }
    let n = crossings.len();
    assert!(n >= 3, "ringdown decayed before {n} crossings");
    TAU * (n - 1) as f64 / (crossings[n - 1] - crossings[0])
}

/// Slowest undamped normal mode from the linearized junction equations.
fn linearized_slow_mode(p: &JdpdParams) -> f64 {
    let c = Circuit::new(p);
    let bias = FluxBias::new(FRAC_PI_2, 0.0);
    let eq = c.relax(Circuit::flux_free_guess(bias), bias, 1e-14, 500_000);
    let h = 1e-7;
    let mut a = [[0.0; 2]; 2];
    for j in 0..2 {
        let (mut up, mut down) = (eq, eq);
        up[j] += h;
        down[j] -= h;
        let fu = c.derivative(up, [0.0; 2], bias, 0.0, [0.0; 2]).dddelta;
        let fd = c.derivative(down, [0.0; 2], bias, 0.0, [0.0; 2]).dddelta;
        for i in 0..2 {
            a[i][j] = -(fu[i] - fd[i]) / (2.0 * h);
        }
    }
    let tr = a[0][0] + a[1][1];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    (0.5 * tr - (0.25 * tr * tr - det).sqrt()).sqrt()
}

/// `sqrt(E_L (2 pi / Phi0)^2 / (2 C)) = 1 / sqrt(2 L C)`.
fn reduced_frequency(p: &JdpdParams) -> f64 {
    1.0 / (2.0 * p.central_inductance() * p.junction().capacitance()).sqrt()
}

#[test]
fn default_detector_rings_at_full_model_mode() {
    let p = JdpdParams::default();
    let w = ringdown_frequency(p);
    let oracle = linearized_slow_mode(&p);
    assert!((w / oracle - 1.0).abs() < 0.05, "{w:e} vs {oracle:e}");
}

/// The reduced model neglects the loop inductances; its frequency is
/// recovered once they are small against the junction inductance.
#[test]
fn vanishing_loop_inductance_recovers_reduced_frequency() {
    let p = params(0.2e-12);
    let w = ringdown_frequency(p);
    let oracle = reduced_frequency(&p);
    assert!((w / oracle - 1.0).abs() < 0.05, "{w:e} vs {oracle:e}");
}

#[test]
fn loop_inductance_stiffens_the_mode() {
    let ratios: Vec<f64> = [0.2e-12, 5e-12, 20e-12]
        .iter()
        .map(|&l| {
            let p = params(l);
            ringdown_frequency(p) / reduced_frequency(&p)
        })
        .collect();
    assert!(ratios.windows(2).all(|w| w[1] > w[0]), "{ratios:?}");
}
