//! Command-line driver for the house-navigation laboratory: floor-plan
//! generation, policy training, goal-assessment data and training, agent
//! composition, evaluation, failure analysis, and plotting.

mod cmds;
mod ctx;
mod metrics;
mod svg;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use ctx::Ctx;

#[derive(Parser)]
#[command(
    name = "housenav",
    version,
    about = "Procedural house navigation laboratory",
    propagate_version = true
)]
struct Cli {
    /// TOML configuration file; every field has a default when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one configuration field (repeatable), e.g. --set rl.gamma=0.9
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Enumerate all connected floor plans and the train/holdout split.
    GenFloorplans {
        /// Plan list file; the split lands next to it unless --split is given.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long, default_value = "standard")]
        house: String,
    },
    /// Train the low-level navigation policy (checkpoint + metrics CSV).
    TrainController {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Train without room cues (the no-enhancement ablation).
        #[arg(long)]
        ablation: bool,
        #[arg(long, default_value = "standard")]
        house: String,
    },
    /// Train the high-level room-cue policy.
    TrainMeta {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// `coverage` (room-graph pre-training) or `frozen` (against a
        /// frozen navigator); defaults to the config's hierarchy.scheme.
        #[arg(long)]
        scheme: Option<String>,
        /// Trained navigator checkpoint (required for --scheme frozen).
        #[arg(long)]
        controller: Option<PathBuf>,
        #[arg(long, default_value = "standard")]
        house: String,
    },
    /// Collect a labeled goal-assessment frame dataset.
    CollectGaData {
        /// Output directory (frames/ plus index.tsv).
        #[arg(long)]
        out: PathBuf,
        /// Frames to collect; defaults to the config's ga.n_frames.
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long, default_value = "standard")]
        house: String,
    },
    /// Train the goal-assessment classifier on a collected dataset.
    TrainGa {
        /// Dataset directory from collect-ga-data.
        #[arg(long)]
        data: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the flat single-level baseline policy.
    TrainBaseline {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "standard")]
        house: String,
    },
    /// Bundle trained parts into one composed-agent checkpoint.
    Compose {
        #[arg(long)]
        controller: PathBuf,
        /// Cue-policy checkpoint (required for --enhance meta).
        #[arg(long)]
        meta: Option<PathBuf>,
        /// Classifier checkpoint (required for --gate model).
        #[arg(long)]
        ga: Option<PathBuf>,
        /// Room-cue source: oracle, meta, or plain.
        #[arg(long, default_value = "oracle")]
        enhance: String,
        /// Termination gate: oracle, model, or never.
        #[arg(long, default_value = "oracle")]
        gate: String,
        /// Composed checkpoint file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate an agent checkpoint: report CSV plus per-episode traces.
    Eval {
        /// Checkpoint to evaluate (composed, controller, or baseline).
        #[arg(long)]
        agent: PathBuf,
        /// Plan regime: static, train, or holdout.
        #[arg(long, default_value = "train")]
        split: String,
        /// Scene contents: single (goal only) or multiple (plus distractors).
        #[arg(long, default_value = "multiple")]
        objects: String,
        /// Goal-object pool: train or holdout (unseen color-shape pairs).
        #[arg(long, default_value = "train")]
        pool: String,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "standard")]
        house: String,
    },
    /// Classify failed episode traces by failure mode.
    ClassifyFailures {
        /// Directory of trace files written by eval.
        #[arg(long)]
        traces: PathBuf,
        /// Output CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render evaluation reports or training metrics as an SVG chart.
    Plot {
        /// Chart type: sr, failures, or curves.
        #[arg(long)]
        kind: String,
        /// Evaluation report CSVs (for sr and failures).
        #[arg(long, num_args = 1..)]
        reports: Vec<PathBuf>,
        /// Training metrics CSVs (for curves).
        #[arg(long, num_args = 1..)]
        metrics: Vec<PathBuf>,
        /// Output SVG file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write one first-person observation as a portable pixmap image.
    DumpObs {
        /// Output PPM file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "standard")]
        house: String,
        #[arg(long, default_value_t = 0)]
        plan_id: u32,
        /// Goal object as "<color> <shape>", e.g. "red ball".
        #[arg(long)]
        goal: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Optional camera override (all three together).
        #[arg(long)]
        x: Option<f64>,
        #[arg(long)]
        y: Option<f64>,
        /// Heading index, 0..16 (0 = +x, counter-clockwise).
        #[arg(long)]
        heading: Option<u8>,
    },
}

/// One error channel for the whole binary: a stable category tag plus a
/// message, printed as a single line.
pub struct CliError {
    pub kind: &'static str,
    pub msg: String,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn new(kind: &'static str, msg: impl Into<String>) -> CliError {
        CliError { kind, msg: msg.into() }
    }
}

impl From<housenav_core::error::ConfigError> for CliError {
    fn from(e: housenav_core::error::ConfigError) -> Self {
        CliError::new("config", format!("{}: {}", e.field, e.reason))
    }
}

impl From<housenav_core::error::CkptError> for CliError {
    fn from(e: housenav_core::error::CkptError) -> Self {
        CliError::new("ckpt", e.to_string())
    }
}

impl From<housenav_core::error::RlError> for CliError {
    fn from(e: housenav_core::error::RlError) -> Self {
        CliError::new("train", e.to_string())
    }
}

impl From<housenav_core::error::GaError> for CliError {
    fn from(e: housenav_core::error::GaError) -> Self {
        CliError::new("ga", e.to_string())
    }
}

impl From<housenav_core::error::EvalError> for CliError {
    fn from(e: housenav_core::error::EvalError) -> Self {
        CliError::new("eval", e.to_string())
    }
}

impl From<housenav_core::error::FloorplanError> for CliError {
    fn from(e: housenav_core::error::FloorplanError) -> Self {
        CliError::new("plan", e.to_string())
    }
}

impl From<housenav_core::error::SimError> for CliError {
    fn from(e: housenav_core::error::SimError) -> Self {
        CliError::new("sim", e.to_string())
    }
}

impl From<housenav_core::error::LangError> for CliError {
    fn from(e: housenav_core::error::LangError) -> Self {
        CliError::new("lang", e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new("io", e.to_string())
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        // Exactly one machine-parsable line on stderr.
        eprintln!("error[{}]: {}", e.kind, e.msg.replace('\n', " | "));
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let sub = subcommand_name(&cli.cmd);
    let mut ctx = Ctx::new(sub, cli.config.as_deref(), &cli.overrides)?;
    match cli.cmd {
        Cmd::GenFloorplans { out, split, house } => cmds::gen_floorplans(&mut ctx, &out, split.as_deref(), &house),
        Cmd::TrainController { out, ablation, house } => cmds::train_controller(&mut ctx, &out, ablation, &house),
        Cmd::TrainMeta { out, scheme, controller, house } => {
            cmds::train_meta(&mut ctx, &out, scheme.as_deref(), controller.as_deref(), &house)
        }
        Cmd::CollectGaData { out, frames, house } => cmds::collect_ga_data(&mut ctx, &out, frames, &house),
        Cmd::TrainGa { data, out } => cmds::train_ga(&mut ctx, &data, &out),
        Cmd::TrainBaseline { out, house } => cmds::train_baseline(&mut ctx, &out, &house),
        Cmd::Compose { controller, meta, ga, enhance, gate, out } => {
            cmds::compose(&mut ctx, &controller, meta.as_deref(), ga.as_deref(), &enhance, &gate, &out)
        }
        Cmd::Eval { agent, split, objects, pool, out, house } => {
            cmds::eval(&mut ctx, &agent, &split, &objects, &pool, &out, &house)
        }
        Cmd::ClassifyFailures { traces, out } => cmds::classify_failures(&mut ctx, &traces, &out),
        Cmd::Plot { kind, reports, metrics, out } => cmds::plot(&mut ctx, &kind, &reports, &metrics, &out),
        Cmd::DumpObs { out, house, plan_id, goal, seed, x, y, heading } => {
            cmds::dump_obs(&mut ctx, &out, &house, plan_id, goal.as_deref(), seed, x, y, heading)
        }
    }
}

fn subcommand_name(cmd: &Cmd) -> &'static str {
    match cmd {
        Cmd::GenFloorplans { .. } => "gen-floorplans",
        Cmd::TrainController { .. } => "train-controller",
        Cmd::TrainMeta { .. } => "train-meta",
        Cmd::CollectGaData { .. } => "collect-ga-data",
        Cmd::TrainGa { .. } => "train-ga",
        Cmd::TrainBaseline { .. } => "train-baseline",
        Cmd::Compose { .. } => "compose",
        Cmd::Eval { .. } => "eval",
        Cmd::ClassifyFailures { .. } => "classify-failures",
        Cmd::Plot { .. } => "plot",
        Cmd::DumpObs { .. } => "dump-obs",
    }
}
