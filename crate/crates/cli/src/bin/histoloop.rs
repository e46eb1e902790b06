use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use histoloop_cli::evaluate::evaluate_report_dir;
use histoloop_cli::synth::{self, SynthSpec};
use histoloop_cli::{pipeline, Config, Dataset};

#[derive(Parser)]
#[command(name = "histoloop", version, about = "Histogram-based LiDAR loop closure")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect loops and correct drift over a recorded dataset.
    Run(RunArgs),
    /// Generate a synthetic dataset with ground truth.
    Synth {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a run's outputs against ground truth.
    Eval {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration; defaults apply when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    frames: PathBuf,
    #[arg(long)]
    trajectory: PathBuf,
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Override any configuration key, e.g. `--set alignment.max_iterations=30`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    keyframe_size: Option<usize>,
    #[arg(long)]
    cell_size: Option<f64>,
    #[arg(long)]
    min_points: Option<usize>,
    #[arg(long)]
    plane_ratio: Option<f64>,
    #[arg(long)]
    line_ratio: Option<f64>,
    #[arg(long)]
    blur_sigma: Option<f64>,
    #[arg(long)]
    plane_thresh: Option<f64>,
    #[arg(long)]
    line_thresh: Option<f64>,
    #[arg(long)]
    temporal_exclusion: Option<u64>,
    #[arg(long)]
    accept_distance: Option<f64>,
}

impl RunArgs {
    fn overrides(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut push = |key: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push(format!("{key}={v}"));
            }
        };
        let float = |v: Option<f64>| v.map(|v| format!("{v:?}"));
        push("keyframe_size", self.keyframe_size.map(|v| v.to_string()));
        push("cell_size", float(self.cell_size));
        push("min_points", self.min_points.map(|v| v.to_string()));
        push("plane_ratio", float(self.plane_ratio));
        push("line_ratio", float(self.line_ratio));
        push("blur_sigma", float(self.blur_sigma));
        push("plane_thresh", float(self.plane_thresh));
        push("line_thresh", float(self.line_thresh));
        push("temporal_exclusion", self.temporal_exclusion.map(|v| v.to_string()));
        push("accept_distance", float(self.accept_distance));
        out.extend(self.overrides.iter().cloned());
        out
    }
}

fn run(args: RunArgs) -> anyhow::Result<()> {
    let overrides = args.overrides();
    let config = match &args.config {
        Some(path) => Config::load(path, &overrides)?,
        None => Config::from_toml("", &overrides)?,
    };
    let data = Dataset::load(&args.frames, &args.trajectory, args.ground_truth.as_deref())?;
    let report = pipeline::run(&config, &data)?;
    report.write(&args.out)?;
    print!("{}", report.summary());
    if let Some(gt) = &args.ground_truth {
        let metrics = evaluate_report_dir(&args.out, gt)?;
        println!("{metrics}");
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Synth { spec, seed, out } => (|| {
            let spec = match spec {
                Some(path) => SynthSpec::load(&path)?,
                None => SynthSpec::default(),
            };
            let data = synth::generate(&spec, seed)?;
            data.save(&out)?;
            println!("wrote {} frames to {}", data.len(), out.display());
            Ok(())
        })(),
        Command::Eval { report, ground_truth } => evaluate_report_dir(&report, &ground_truth)
            .map(|m| println!("{m}"))
            .with_context(|| format!("evaluating {}", report.display())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
