use std::f64::consts::{PI, TAU};

use jdpd_core::analysis::{phase_distance_mod_pi, separation_fidelity, DetectionCurve};
use jdpd_core::circuit::{reduced_potential, reduced_potential_gradient};
use jdpd_core::config::ExperimentConfig;
use jdpd_core::drive::{stimulus_at, FluxNoise};
use jdpd_core::engine::Simulator;
use jdpd_core::fbd::{build_pulse_train, flux_from_ilfb, ilfb_from_pulses, FbdParams, ResetMode};
use jdpd_core::seed::{derive_seed, stream_rng, Stream};
use jdpd_core::stats::{wilson_interval, Z95};
use jdpd_core::{Circuit, FluxBias, FluxSwitchSpec, JdpdParams, SimulationConfig, StimulusSpec};
use proptest::prelude::*;

proptest! {
    #[test]
    fn gradient_matches_finite_difference(phi in -4.0..4.0f64, pp in 0.0..TAU, pm in -1.0..1.0f64) {
        let p = JdpdParams::default();
        let b = FluxBias::new(pp, pm);
        let h = 1e-5;
        let fd = (reduced_potential(phi + h, b, &p) - reduced_potential(phi - h, b, &p)) / (2.0 * h);
        let g = reduced_potential_gradient(phi, b, &p);
        // Relative to the gradient scale so zero crossings do not blow up.
        let scale = g.abs().max(p.inductive_energy());
        prop_assert!((fd - g).abs() <= 1e-6 * scale, "{fd:e} vs {g:e}");
    }

    #[test]
    fn node_conserves_current(
        d1 in -10.0..10.0f64, d2 in -10.0..10.0f64,
        pp in 0.0..TAU, pm in -PI..PI, i_in in -2e-5..2e-5f64,
    ) {
        let c = Circuit::new(&JdpdParams::default());
        let b = FluxBias::new(pp, pm);
        let phi_a = c.node_phase([d1, d2], b, i_in);
        let br = c.branch_currents([d1, d2], b, i_in);
        let out = c.inductor_current(phi_a) + br[0] + br[1];
        let scale = i_in.abs().max(br[0].abs()).max(br[1].abs()).max(1e-9);
        prop_assert!((out - i_in).abs() <= 1e-12 * scale);
    }

    #[test]
    fn stimulus_is_two_pi_periodic_in_phase(t in 0.0..2e-9f64, phase in 0.0..TAU) {
        let a = StimulusSpec::for_flip(0.35e-6, 7.5e9, phase, 100e-12);
        let b = StimulusSpec { phase_offset: phase + TAU, ..a };
        prop_assert!((stimulus_at(t, &a) - stimulus_at(t, &b)).abs() <= 1e-12 * a.amplitude);
    }

    #[test]
    fn fidelity_invariant_under_relabeling(p in prop::collection::vec(0.0..=1.0f64, 3..30)) {
        let phases = (0..p.len()).map(|i| i as f64).collect();
        let c = DetectionCurve::from_probabilities(phases, p, 100);
        let a = separation_fidelity(&c).unwrap();
        let b = separation_fidelity(&c.complement()).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn wilson_brackets_estimate(n in 1usize..5000, frac in 0.0..=1.0f64) {
        let k = ((n as f64) * frac).floor() as usize;
        let (lo, hi) = wilson_interval(k, n, Z95);
        let p = k as f64 / n as f64;
        prop_assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
        prop_assert!(lo <= p + 1e-12 && p <= hi + 1e-12);
    }

    #[test]
    fn flux_mapping_is_linear(a in -1e-3..1e-3f64, b in -1e-3..1e-3f64, s in -10.0..10.0f64) {
        let p = FbdParams::default();
        let lhs = flux_from_ilfb(s * a + b, &p);
        let rhs = s * flux_from_ilfb(a, &p) + flux_from_ilfb(b, &p);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        prop_assert_eq!(flux_from_ilfb(0.0, &p), 0.0);
    }

    #[test]
    fn staircase_reaches_target_for_any_spacing(n in 1usize..12, interval in 10e-12..500e-12f64) {
        let p = FbdParams { n_steps: n, step_interval: interval, rise_time: 0.4 * interval, ..FbdParams::default() };
        let train = build_pulse_train(n, interval, 0.0, None).unwrap();
        let w = ilfb_from_pulses(&train, &p).unwrap();
        let last = w.end();
        prop_assert_eq!(w.current_at(last), p.target_current());
        prop_assert!((flux_from_ilfb(w.current_at(last), &p) - p.target_flux).abs() < 1e-12);
    }

    #[test]
    fn second_reset_is_a_no_op(n in 1usize..6, instant in any::<bool>()) {
        let mode = if instant { ResetMode::Instant } else { ResetMode::StaircaseDown };
        let p = FbdParams { n_steps: n, reset_mode: mode, ..FbdParams::default() };
        let r = n as f64 * p.step_interval + 1e-9;
        let once = ilfb_from_pulses(&build_pulse_train(n, p.step_interval, 0.0, Some(r)).unwrap(), &p).unwrap();
        let mut twice_train = build_pulse_train(n, p.step_interval, 0.0, Some(r)).unwrap();
        twice_train.reset_times.push(r + 3e-9);
        let twice = ilfb_from_pulses(&twice_train, &p).unwrap();
        for k in 0..200 {
            let t = k as f64 * 50e-12;
            prop_assert_eq!(once.current_at(t), twice.current_at(t));
        }
        prop_assert_eq!(twice.current_at(r + 10e-9), 0.0);
    }

    #[test]
    fn mod_pi_distance_properties(a in -10.0..10.0f64, b in -10.0..10.0f64) {
        let d = phase_distance_mod_pi(a, b);
        prop_assert!((0.0..=PI / 2.0 + 1e-12).contains(&d));
        prop_assert!((d - phase_distance_mod_pi(b, a)).abs() < 1e-9);
        prop_assert!((d - phase_distance_mod_pi(a + PI, b)).abs() < 1e-9);
    }

    #[test]
    fn seed_derivation_is_stable(parent in any::<u64>(), i in 0u64..1000) {
        prop_assert_eq!(derive_seed(parent, i), derive_seed(parent, i));
        prop_assert_ne!(derive_seed(parent, i), derive_seed(parent, i + 1));
    }

    #[test]
    fn csv_float_format_round_trips(x in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        let s = format!("{x:.16e}");
        prop_assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits());
    }

    #[test]
    fn config_echo_round_trips(
        reps in 1usize..10_000, phases in 3usize..64, seed in any::<u64>(),
        dt in 1e-14..1e-12f64, sigma in 0.0..1.0f64,
    ) {
        let sets = vec![
            format!("n_reps={reps}"),
            format!("n_phases={phases}"),
            format!("seed={seed}"),
            format!("simulation.dt={dt:e}"),
            format!("flux_switch.flux_noise_sigma={sigma:e}"),
        ];
        let cfg = ExperimentConfig::load(None, &sets).unwrap();
        prop_assert_eq!(cfg.simulation.dt, dt);
        let echo = ExperimentConfig::load(Some(&cfg.to_json_pretty()), &[]).unwrap();
        prop_assert_eq!(echo, cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// `phi = 2 pi L I_L / Phi0` at every recorded sample.
    #[test]
    fn trajectory_phi_tracks_inductor_current(phase in 0.0..TAU, seed in any::<u64>()) {
        let mut cfg = SimulationConfig::default();
        cfg.settle_time = 0.2e-9;
        let sim = Simulator::new(&cfg).unwrap();
        let tr = sim.integrate(phase, seed, true).unwrap().trajectory.unwrap();
        let p = cfg.params;
        let k = TAU * p.central_inductance() / p.constants().flux_quantum;
        for (phi, i) in tr.phi.iter().zip(&tr.i_l) {
            prop_assert!((phi - k * i).abs() <= 1e-12 * phi.abs().max(1e-3));
        }
        prop_assert_eq!(tr.times.len(), tr.delta_1.len());
        prop_assert_eq!(tr.times.len(), tr.delta_2.len());
    }
}

#[test]
fn flux_noise_mean_matches_noiseless_level() {
    let spec = FluxSwitchSpec {
        flux_noise_sigma: 0.29,
        ..FluxSwitchSpec::default()
    };
    let t = spec.switch_time + 0.5 * spec.flip_duration;
    let clean = spec.level_at(t);
    let n = 10_000;
    let mean = (0..n)
        .map(|r| {
            let noise = FluxNoise::new(0.29, 10e-12, 1e-12, stream_rng(r, Stream::FluxNoise));
            spec.noisy_level_at(t, noise.current())
        })
        .sum::<f64>()
        / n as f64;
    assert!((mean - clean).abs() < 3.0 * 0.29 / 100.0, "{mean} vs {clean}");
}
