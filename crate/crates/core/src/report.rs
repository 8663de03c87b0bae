//! Runs a configured experiment and persists its results: CSV tables, a
//! JSON summary and a manifest with content digests.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::analysis::{
    evaluate_point, fbd_cycle_response, fit_gray_zone, separation_fidelity, staircase_dephasing,
    sweep_flip_duration, sweep_flux_noise, sweep_staircase_steps, DetectionCurve, SweepResult,
};
use crate::config::{Experiment, ExperimentConfig};
use crate::engine::{classify_well, SimulationConfig, Simulator};
use crate::error::{EngineError, RunError};
use crate::fbd::{flux_from_ilfb, CycleTiming};
use crate::stats::spearman;

pub const TOOL_NAME: &str = "jdpd-lab";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const SUMMARY_FILE: &str = "summary.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// One written file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileRecord {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointSeed {
    pub label: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub experiment: Experiment,
    pub seed: u64,
    pub seed_generated: bool,
    pub wall_clock_s: f64,
    pub point_seeds: Vec<PointSeed>,
    pub files: Vec<FileRecord>,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub manifest: RunManifest,
    /// Per-point failures that did not stop the run.
    pub warnings: Vec<String>,
}

struct Output {
    dir: PathBuf,
    files: Vec<FileRecord>,
}

impl Output {
    fn create(dir: &Path) -> Result<Self, RunError> {
        fs::create_dir_all(dir).map_err(|source| RunError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Output {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write_untracked(&self, name: &str, bytes: &[u8]) -> Result<(), RunError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|source| RunError::Io { path, source })
    }

    fn write(&mut self, name: &str, bytes: Vec<u8>) -> Result<(), RunError> {
        self.write_untracked(name, &bytes)?;
        self.files.push(FileRecord {
            name: name.to_string(),
            bytes: bytes.len() as u64,
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(())
    }

    fn csv<F>(&mut self, name: &str, f: F) -> Result<(), RunError>
    where
        F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf).expect("writing to memory cannot fail");
        self.write(name, buf)
    }

    fn json(&mut self, name: &str, v: &Value) -> Result<(), RunError> {
        let mut s = serde_json::to_string_pretty(v).expect("summary is serializable");
        s.push('\n');
        self.write(name, s.into_bytes())
    }
}

struct Outcome {
    summary: Value,
    point_seeds: Vec<PointSeed>,
    warnings: Vec<String>,
}

/// Runs `cfg` and writes every output under `out_dir`. A missing seed is
/// generated and recorded.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunReport, RunError> {
    let started = Instant::now();
    let mut cfg = cfg.clone();
    let seed_generated = cfg.ensure_seed();
    cfg.validate()?;
    let seed = cfg.seed.expect("seed was just ensured");
    let base = cfg.simulation_config()?;
    let mut out = Output::create(out_dir)?;
    let result = match cfg.experiment {
        Experiment::SingleRun => single_run(&base, &mut out)?,
        Experiment::PhaseSweep => phase_sweep_run(&cfg, &base, &mut out)?,
        Experiment::FlipDurationSweep => {
            let r = sweep_flip_duration(&base, &cfg.sweeps.flip_durations, cfg.n_phases, cfg.n_reps);
            sweep_outputs(&r, &mut out, Value::Null)?
        }
        Experiment::FluxNoiseSweep => {
            let r = sweep_flux_noise(&base, &cfg.sweeps.flux_noise_sigmas, cfg.n_phases, cfg.n_reps);
            sweep_outputs(&r, &mut out, Value::Null)?
        }
        Experiment::StaircaseSweep => {
            let r = sweep_staircase_steps(
                &base,
                &cfg.fbd,
                &cfg.staircase,
                &cfg.sweeps.steps,
                cfg.n_phases,
                cfg.n_reps,
            );
            let dephasing = json!(staircase_dephasing(&r));
            sweep_outputs(&r, &mut out, json!({ "phi_t_distance_from_one_step_rad": dephasing }))?
        }
        Experiment::FbdCycle => fbd_cycle_run(&cfg, &base, &mut out)?,
    };
    let mut summary = json!({
        "experiment": cfg.experiment,
        "seed": seed,
        "seed_generated": seed_generated,
        "warnings": result.warnings,
        "config": cfg,
    });
    summary["result"] = result.summary;
    out.json(SUMMARY_FILE, &summary)?;
    let manifest = RunManifest {
        tool: TOOL_NAME.to_string(),
        version: TOOL_VERSION.to_string(),
        experiment: cfg.experiment,
        seed,
        seed_generated,
        wall_clock_s: started.elapsed().as_secs_f64(),
        point_seeds: result.point_seeds,
        files: out.files.clone(),
        config: cfg,
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest is serializable");
    text.push('\n');
    out.write_untracked(MANIFEST_FILE, text.as_bytes())?;
    Ok(RunReport {
        out_dir: out_dir.to_path_buf(),
        manifest,
        warnings: result.warnings,
    })
}

fn single_run(
    base: &SimulationConfig,
    out: &mut Output,
) -> Result<Outcome, RunError> {
    let seed = base.seed;
    let sim = Simulator::new(base)?;
    let rec = sim.integrate(base.stimulus.phase_offset, seed, true)?;
    let traj = rec.trajectory.expect("trajectory was requested");
    out.csv("trajectory.csv", |w| traj.write_csv(w))?;
    let mut warnings = Vec::new();
    let outcome = match sim.phi_star() {
        Some(star) => classify_well(&rec.settle_phi, star, seed),
        None => Err(EngineError::Config("end level does not produce a double well".into())),
    };
    let outcome = match outcome {
        Ok(o) => json!(o),
        Err(e) => {
            warnings.push(format!("run not classified: {e}"));
            Value::Null
        }
    };
    Ok(Outcome {
        summary: json!({
            "outcome": outcome,
            "phi_star_rad": sim.phi_star(),
            "switch_time_s": sim.config().flux_switch.switch_time,
            "stimulus_duration_s": sim.config().stimulus.duration,
            "n_samples": traj.len(),
        }),
        point_seeds: vec![PointSeed {
            label: "run".into(),
            seed,
        }],
        warnings,
    })
}

fn curve_warnings(label: &str, c: &DetectionCurve) -> Vec<String> {
    c.errors
        .iter()
        .enumerate()
        .filter_map(|(i, e)| {
            e.as_ref()
                .map(|e| format!("{label}, phase {:.6} rad: {e}", c.phases[i]))
        })
        .collect()
}

fn curve_json(c: &DetectionCurve) -> Value {
    let points: Vec<Value> = (0..c.len())
        .map(|i| {
            json!({
                "phase_rad": c.phases[i],
                "p_hat": c.p_hat[i],
                "ci_low": c.ci_low[i],
                "ci_high": c.ci_high[i],
                "n_valid": c.n_valid[i],
                "n_ambiguous": c.n_ambiguous[i],
                "n_escaped": c.n_escaped[i],
                "seed": c.seeds[i],
                "error": c.errors[i],
            })
        })
        .collect();
    json!(points)
}

fn phase_sweep_run(
    cfg: &ExperimentConfig,
    base: &SimulationConfig,
    out: &mut Output,
) -> Result<Outcome, RunError> {
    let sim = Simulator::new(base)?;
    let flip = base.flux_switch.flip_duration;
    let point = evaluate_point(&sim, flip, base.seed, cfg.n_phases, cfg.n_reps);
    if let Some(e) = &point.error {
        return Err(EngineError::Config(e.clone()).into());
    }
    let curve = point.curve.as_ref().expect("successful point has a curve");
    out.csv("detection_curve.csv", |w| curve.write_csv(w))?;
    let fit = fit_gray_zone(curve);
    let mut warnings = curve_warnings("phase sweep", curve);
    if let Err(e) = &fit {
        warnings.push(format!("gray-zone fit failed: {e}"));
    }
    let point_seeds = curve
        .phases
        .iter()
        .zip(&curve.seeds)
        .map(|(p, s)| PointSeed {
            label: format!("phase={p:.16e}"),
            seed: *s,
        })
        .collect();
    Ok(Outcome {
        summary: json!({
            "fidelity": separation_fidelity(curve).ok(),
            "gray_zone_rad": point.gray_zone,
            "capped": point.capped,
            "fit": fit.ok(),
            "max_p": curve.max_p(),
            "min_p": curve.min_p(),
            "points": curve_json(curve),
        }),
        point_seeds,
        warnings,
    })
}

pub const CURVES_HEADER: &str =
    "control,phase_rad,p_hat,ci_low,ci_high,n_valid,n_ambiguous,n_escaped,seed";

/// Every detection curve of a sweep in long format.
pub fn write_sweep_curves<W: std::io::Write>(r: &SweepResult, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{CURVES_HEADER}")?;
    for p in &r.points {
        let Some(c) = &p.curve else { continue };
        for i in 0..c.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{},{},{}",
                p.control,
                c.phases[i],
                c.p_hat[i],
                c.ci_low[i],
                c.ci_high[i],
                c.n_valid[i],
                c.n_ambiguous[i],
                c.n_escaped[i],
                c.seeds[i]
            )?;
        }
    }
    Ok(())
}

fn sweep_outputs(r: &SweepResult, out: &mut Output, extra: Value) -> Result<Outcome, RunError> {
    out.csv("sweep.csv", |w| r.write_csv(w))?;
    out.csv("curves.csv", |w| write_sweep_curves(r, w))?;
    let mut warnings = Vec::new();
    let mut points = Vec::new();
    for p in &r.points {
        let label = format!("{}={:e}", r.control_name, p.control);
        if let Some(e) = &p.error {
            warnings.push(format!("{label}: {e}"));
        }
        if let Some(c) = &p.curve {
            warnings.extend(curve_warnings(&label, c));
        }
        if p.error.is_none() && p.fit.is_none() {
            warnings.push(format!("{label}: gray-zone fit failed, reported as capped"));
        }
        points.push(json!({
            "control": p.control,
            "seed": p.seed,
            "fidelity": p.fidelity,
            "gray_zone_rad": p.gray_zone,
            "capped": p.capped,
            "fit": p.fit,
            "error": p.error,
            "curve": p.curve.as_ref().map(curve_json),
        }));
    }
    let (x, f, g) = finite_triples(r);
    let mut summary = json!({
        "control_name": r.control_name,
        "spearman_fidelity": spearman(&x, &f),
        "spearman_gray_zone": spearman(&x, &g),
        "points": points,
    });
    if let Value::Object(m) = extra {
        for (k, v) in m {
            summary[k] = v;
        }
    }
    let point_seeds = r
        .points
        .iter()
        .map(|p| PointSeed {
            label: format!("{}={:.16e}", r.control_name, p.control),
            seed: p.seed,
        })
        .collect();
    Ok(Outcome {
        summary,
        point_seeds,
        warnings,
    })
}

fn finite_triples(r: &SweepResult) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut x = Vec::new();
    let mut f = Vec::new();
    let mut g = Vec::new();
    for p in r.points.iter().filter(|p| p.fidelity.is_finite()) {
        x.push(p.control);
        f.push(p.fidelity);
        g.push(p.gray_zone);
    }
    (x, f, g)
}

/// Driver current, the flux it couples, and the detector bias it produces,
/// sampled on the simulation grid.
pub const FBD_WAVEFORM_HEADER: &str = "t_s,i_lfb_A,phi_lfb_rad,phi_plus_rad";

fn fbd_cycle_run(
    cfg: &ExperimentConfig,
    base: &SimulationConfig,
    out: &mut Output,
) -> Result<Outcome, RunError> {
    let timing: CycleTiming = cfg.cycle;
    let run = fbd_cycle_response(base, &cfg.fbd, &timing, base.seed)?;
    let wave = &run.waveform;
    let sampled: Vec<(f64, f64)> = run
        .trajectory
        .times
        .iter()
        .map(|&t| (t, wave.current_at(t - run.offset + wave.start())))
        .collect();
    out.csv("fbd_waveform.csv", |w| {
        use std::io::Write;
        writeln!(w, "{FBD_WAVEFORM_HEADER}")?;
        for (t, i) in &sampled {
            let level = base.flux_switch.start_level
                + (base.flux_switch.end_level - base.flux_switch.start_level)
                    * (*i / cfg.fbd.target_current());
            let coupled = flux_from_ilfb(*i, &cfg.fbd);
            writeln!(w, "{t:.16e},{i:.16e},{coupled:.16e},{level:.16e}")?;
        }
        Ok(())
    })?;
    out.csv("fbd_trajectory.csv", |w| run.trajectory.write_csv(w))?;
    let mut warnings = Vec::new();
    let settled = run
        .phi_star
        .map(|s| (run.plateau_phi.abs() - s).abs() <= 0.1 * s);
    if settled != Some(true) {
        warnings.push(format!(
            "plateau phase {} rad is not within 10% of a double-well minimum",
            run.plateau_phi
        ));
    }
    let breakpoints: Vec<Value> = run
        .flux
        .iter()
        .map(|(t, phi)| json!({ "t_s": t, "i_lfb_A": wave.current_at(*t), "flux_rad": phi }))
        .collect();
    Ok(Outcome {
        summary: json!({
            "cycle_duration_s": run.cycle_duration,
            "budget_s": timing.budget,
            "within_budget": run.cycle_duration <= timing.budget,
            "target_current_A": cfg.fbd.target_current(),
            "target_flux_rad": flux_from_ilfb(cfg.fbd.target_current(), &cfg.fbd),
            "plateau_phi_rad": run.plateau_phi,
            "phi_star_rad": run.phi_star,
            "settled_near_minimum": settled,
            "first_set_pulse_s": run.offset,
            "breakpoints": breakpoints,
        }),
        point_seeds: vec![PointSeed {
            label: "cycle".into(),
            seed: base.seed,
        }],
        warnings,
    })
}
