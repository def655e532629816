use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use trackflow::evaluation::{evaluate, learn_weights};
use trackflow::io::{
    fmt_real, load_config, load_detections, load_ground_truth, write_trajectories,
    FrameDetections, TrackSet,
};
use trackflow::pipeline::{prepare, track};
use trackflow::synth::{self, ScenarioSpec};
use trackflow::{Error, Result, RunConfig};

#[derive(Parser)]
#[command(name = "trackflow", version, about = "Tracklet-association multi-object tracker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Link detections into trajectories.
    Track {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        out: PathBuf,
        /// Optional per-trajectory JSON summary.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Score a result file against ground truth.
    Evaluate {
        #[arg(long)]
        result: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Learn the motion weights for difficult situations from ground truth.
    LearnWeights {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Generate a synthetic scenario.
    Synth {
        /// Scenario description in JSON.
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        spec: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        det: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Write the resolved scenario description here.
        #[arg(long)]
        write_spec: Option<PathBuf>,
    },
    /// Write the pairwise affinity table as CSV.
    DumpAffinity {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Input {
    #[arg(long)]
    det: PathBuf,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Ignore appearance: no refinement and a constant appearance affinity.
    #[arg(long)]
    no_appearance: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Crossing,
    CrossingSimilar,
    MotionUnreliable,
}

impl Input {
    fn load(&self) -> Result<(FrameDetections, RunConfig)> {
        let mut cfg = match &self.config {
            Some(p) => load_config(p)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.rng_seed = seed;
        }
        if self.no_appearance || self.features.is_none() {
            cfg.use_appearance = false;
        }
        cfg.validate()?;
        let frames = load_detections(&self.det, self.features.as_deref(), Some(cfg.feature_dim))?;
        Ok((frames, cfg))
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn load_truth(path: &Path) -> Result<TrackSet> {
    load_ground_truth(path)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Track { input, out, summary } => {
            let (frames, cfg) = input.load()?;
            let (prepared, assoc) = track(&frames, &cfg)?;
            write_trajectories(&assoc.trajectories, &out)?;
            if let Some(p) = summary {
                write_text(&p, &trackflow::association::summary_json(&assoc, &prepared.table)?)?;
            }
            println!(
                "{} trajectories from {} tracklets, cost {}",
                assoc.trajectories.len(),
                prepared.tracklets.len(),
                fmt_real(assoc.cost)
            );
        }
        Command::Evaluate { result, gt, json } => {
            let hyp = load_truth(&result)?;
            let truth = load_truth(&gt)?;
            let report = evaluate(&hyp, &truth)?;
            print!("{report}");
            if let Some(p) = json {
                write_text(&p, &serde_json::to_string_pretty(&report)?)?;
            }
        }
        Command::LearnWeights { input, gt, json } => {
            let (frames, cfg) = input.load()?;
            let truth = load_truth(&gt)?;
            let prepared = prepare(&frames, &cfg)?;
            let learned = learn_weights(&prepared.tracklets, &prepared.table, &truth, &cfg)?;
            println!("lambda1 = {}", fmt_real(learned.lambda1));
            println!("lambda2 = {}", fmt_real(learned.lambda2));
            println!("MOTA    = {:.4}", learned.report.mota);
            if let Some(p) = json {
                write_text(&p, &serde_json::to_string_pretty(&learned)?)?;
            }
        }
        Command::Synth {
            spec,
            preset,
            seed,
            det,
            features,
            gt,
            write_spec,
        } => {
            let spec = match (spec, preset) {
                (Some(p), _) => {
                    let text = fs::read_to_string(&p).map_err(|e| Error::Io { path: p, source: e })?;
                    ScenarioSpec::from_json(&text)?
                }
                (None, Some(Preset::Crossing)) => synth::crossing(seed),
                (None, Some(Preset::CrossingSimilar)) => synth::crossing_similar(seed),
                (None, Some(Preset::MotionUnreliable)) => synth::motion_unreliable(seed),
                (None, None) => unreachable!("clap requires one of --spec or --preset"),
            };
            let scenario = synth::generate(&spec, seed)?;
            synth::write_scenario(&scenario, &det, &features, &gt)?;
            if let Some(p) = write_spec {
                write_text(&p, &spec.to_json()?)?;
            }
        }
        Command::DumpAffinity { input, out } => {
            let (frames, cfg) = input.load()?;
            let prepared = prepare(&frames, &cfg)?;
            write_text(&out, &prepared.table.to_csv())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
