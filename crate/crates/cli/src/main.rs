use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use jdpd_core::config::{Experiment, ExperimentConfig};
use jdpd_core::plot::plot_file;
use jdpd_core::report::run_experiment;

/// Josephson digital phase detector experiments.
#[derive(Parser)]
#[command(name = "jdpd-lab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write CSV, summary.json and manifest.json.
    Run(RunArgs),
    /// Render SVG charts from CSV files written by `run`.
    Plot(PlotArgs),
    /// Print the fully resolved default configuration.
    PrintDefaults,
}

#[derive(Args)]
struct RunArgs {
    /// JSON configuration file; omitted fields take their defaults.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Dotted-path override such as `simulation.dt=5e-13`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// single-run, phase-sweep, flip-duration-sweep, flux-noise-sweep,
    /// staircase-sweep or fbd-cycle.
    #[arg(long, value_parser = parse_experiment)]
    experiment: Option<Experiment>,
    /// Output directory; defaults to `output_dir` from the configuration.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads; all cores when unset.
    #[arg(long, env = "JDPD_LAB_THREADS", value_name = "N")]
    threads: Option<usize>,
    /// Root seed; one is generated and recorded when neither this nor the
    /// configuration sets it.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
}

#[derive(Args)]
struct PlotArgs {
    /// CSV files, or run directories whose CSV files are all plotted.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Where to write the SVG files; next to each CSV when unset.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn parse_experiment(s: &str) -> Result<Experiment, String> {
    s.parse()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Plot(args) => plot(args),
        Command::PrintDefaults => {
            println!("{}", ExperimentConfig::default().to_json_pretty());
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(args: RunArgs) -> Result<()> {
    if let Some(n) = args.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let text = match &args.config {
        Some(p) => Some(fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?),
        None => None,
    };
    let mut overrides = args.overrides.clone();
    if let Some(e) = args.experiment {
        overrides.push(format!("experiment=\"{}\"", e.name()));
    }
    if let Some(s) = args.seed {
        overrides.push(format!("seed={s}"));
    }
    let mut cfg = ExperimentConfig::load(text.as_deref(), &overrides)?;
    if cfg.ensure_seed() {
        eprintln!("no seed given, generated seed {}", cfg.seed.unwrap_or_default());
    }
    let out = args.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    eprintln!(
        "running {} (seed {}, {} threads) into {}",
        cfg.experiment.name(),
        cfg.seed.unwrap_or_default(),
        rayon::current_num_threads(),
        out.display()
    );
    let report = run_experiment(&cfg, &out)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for f in &report.manifest.files {
        println!("{}", out.join(&f.name).display());
    }
    println!("{}", out.join(jdpd_core::report::MANIFEST_FILE).display());
    eprintln!("done in {:.1} s", report.manifest.wall_clock_s);
    Ok(())
}

fn csv_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("reading {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "csv"))
                .collect();
            found.sort();
            if found.is_empty() {
                bail!("{} holds no CSV files", p.display());
            }
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

fn plot(args: PlotArgs) -> Result<()> {
    for csv in csv_inputs(&args.inputs)? {
        let dir = match &args.out {
            Some(d) => d.clone(),
            None => csv.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf),
        };
        let svg = plot_file(&csv, &dir).with_context(|| format!("plotting {}", csv.display()))?;
        println!("{}", svg.display());
    }
    Ok(())
}
