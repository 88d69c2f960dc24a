use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use artikit::evalkit::{evaluate, render_table, GroundTruthRecord};
use artikit::pipeline::{self, PipelineConfig, Predictions, RunOutput, StageFile};
use artikit::segmenter::Segment;
use artikit::synth::{generate, SynthConfig};
use artikit::trackfilter::StaticMode;
use artikit::trackio::{load_trackset, read_json, save_trackset, to_json_string, write_json};
use artikit::trajest::EstimationMode;
use artikit::Result;

#[derive(Parser)]
#[command(name = "artikit", version, about = "Articulation estimation from depth-annotated point tracks")]
struct Cli {
    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic scene and its ground truth.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_tracks: PathBuf,
        #[arg(long)]
        out_gt: PathBuf,
        /// Overrides the scene's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Detect interaction segments from the hand signal.
    Segment {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: Opts,
    },
    /// Lift, static-filter and reliability-filter each segment's tracks.
    Filter {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        segments: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Optional removal report.
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        opts: Opts,
    },
    /// Smooth filtered tracks.
    Smooth {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: Opts,
    },
    /// Estimate trajectories and joint models from smoothed tracks.
    Estimate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[arg(long)]
        export_ply: Option<PathBuf>,
        #[command(flatten)]
        opts: Opts,
    },
    /// Score predictions against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full pipeline from a track file to results.
    Run {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[arg(long)]
        export_ply: Option<PathBuf>,
        #[command(flatten)]
        opts: Opts,
    },
}

/// Pipeline settings; flags win over the config file, which wins over defaults.
#[derive(Args, Default)]
struct Opts {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    wh: Option<usize>,
    #[arg(long)]
    tmin: Option<usize>,
    #[arg(long)]
    tmax: Option<usize>,
    #[arg(long)]
    sigma_static: Option<f64>,
    #[arg(long)]
    static_mode: Option<StaticMode>,
    #[arg(long)]
    sigma_reliable: Option<f64>,
    #[arg(long)]
    outlier_k: Option<f64>,
    #[arg(long)]
    no_outlier_filter: bool,
    #[arg(long)]
    lambda_vel: Option<f64>,
    #[arg(long)]
    lambda_jerk: Option<f64>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<EstimationMode>,
    #[arg(long)]
    max_depth: Option<f64>,
}

fn parse_mode(s: &str) -> std::result::Result<EstimationMode, String> {
    match s {
        "independent" => Ok(EstimationMode::Independent),
        "regularized" => Ok(EstimationMode::Regularized),
        _ => Err(format!("unknown mode {s:?}, expected independent or regularized")),
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl Opts {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg: PipelineConfig = match &self.config {
            Some(path) => read_json(path)?,
            None => PipelineConfig::default(),
        };
        set(&mut cfg.segmenter.tau_h, self.tau);
        set(&mut cfg.segmenter.w_h, self.wh);
        set(&mut cfg.segmenter.t_min, self.tmin);
        set(&mut cfg.segmenter.t_max, self.tmax);
        set(&mut cfg.filter.sigma_static, self.sigma_static);
        set(&mut cfg.filter.static_mode, self.static_mode);
        set(&mut cfg.filter.sigma_reliable, self.sigma_reliable);
        set(&mut cfg.filter.outlier_k, self.outlier_k);
        if self.no_outlier_filter {
            cfg.filter.outlier_filter = false;
        }
        set(&mut cfg.smoother.lambda_vel, self.lambda_vel);
        set(&mut cfg.smoother.lambda_jerk, self.lambda_jerk);
        set(&mut cfg.stride, self.stride);
        set(&mut cfg.mode, self.mode);
        set(&mut cfg.max_depth, self.max_depth);
        if self.jobs.is_some() {
            cfg.jobs = self.jobs;
        }
        set(&mut cfg.seed, self.seed);
        cfg.validate()?;
        eprintln!("config: {}", serde_json::to_string(&cfg).unwrap_or_default());
        Ok(cfg)
    }
}

fn write_outputs(out: &RunOutput, results: &Path, trajectory: Option<&Path>, ply: Option<&Path>) -> Result<()> {
    write_json(results, &out.results)?;
    if let Some(path) = trajectory {
        write_json(path, &out.trajectories)?;
    }
    if let Some(dir) = ply {
        pipeline::export_ply(dir, out)?;
    }
    Ok(())
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth {
            config,
            out_tracks,
            out_gt,
            seed,
        } => {
            let mut cfg: SynthConfig = read_json(&config)?;
            set(&mut cfg.seed, seed);
            let out = generate(&cfg)?;
            save_trackset(&out_tracks, &out.tracks)?;
            write_json(&out_gt, &out.ground_truth)
        }
        Command::Segment { input, out, opts } => {
            let cfg = opts.resolve()?;
            let set = load_trackset(&input)?;
            write_json(&out, &pipeline::detect_segments(&set, &cfg.segmenter)?)
        }
        Command::Filter {
            input,
            segments,
            out,
            report,
            opts,
        } => {
            let cfg = opts.resolve()?;
            let set = load_trackset(&input)?;
            let segments: Vec<Segment> = read_json(&segments)?;
            let stage = pipeline::filter_all(&set, &segments, &cfg)?;
            if let Some(path) = report {
                let removals: Vec<_> = stage
                    .segments
                    .iter()
                    .map(|s| serde_json::json!({"segment": s.segment, "removed": s.removed}))
                    .collect();
                write_json(&path, &removals)?;
            }
            write_json(&out, &stage)
        }
        Command::Smooth { input, out, opts } => {
            let cfg = opts.resolve()?;
            let stage: StageFile = read_json(&input)?;
            write_json(&out, &pipeline::smooth_all(&stage, &cfg)?)
        }
        Command::Estimate {
            input,
            out,
            trajectory,
            export_ply,
            opts,
        } => {
            let cfg = opts.resolve()?;
            let stage: StageFile = read_json(&input)?;
            let result = pipeline::estimate_all(&stage, &cfg)?;
            write_outputs(&result, &out, trajectory.as_deref(), export_ply.as_deref())
        }
        Command::Eval { pred, gt, out } => {
            let pred: Predictions = read_json(&pred)?;
            let gt: Vec<GroundTruthRecord> = read_json(&gt)?;
            let report = evaluate(&pred.into_records(), &gt)?;
            print!("{}", render_table(&report));
            write_json(&out, &report)
        }
        Command::Run {
            input,
            out,
            trajectory,
            export_ply,
            opts,
        } => {
            let cfg = opts.resolve()?;
            let set = load_trackset(&input)?;
            let result = pipeline::run(&set, &cfg)?;
            write_outputs(&result, &out, trajectory.as_deref(), export_ply.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = serde_json::json!({ "error": e.report() });
            eprintln!("{}", to_json_string(&report).unwrap_or_else(|_| e.to_string()));
            ExitCode::FAILURE
        }
    }
}

