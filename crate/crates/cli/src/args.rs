use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

pub const CONFIG_HELP: &str = "\
Config file (--config) is flat `key = value` text; `#` starts a comment and
blank lines are ignored. Dashes and underscores in keys are interchangeable.
Keys match the run flags:

  mode              hierarchical | boxes_only | hybrid
  backend           oracle | external
  external_cmd      command line for an external server (shell-style quoting)
  external_addr     host:port of an external server already listening
  timeout           per-request timeout in seconds
  recall            oracle detector recall in [0, 1]
  seed              oracle detector seed
  coarse            round-1 grid points per side
  dense             round-2 grid points per side
  sparse            hybrid sparse grid points per side
  nms_iou           suppression IoU threshold
  high_conf         round-1 keep threshold
  detection_floor   minimum detector confidence for a box prompt
  min_area          minimum mask area in pixels
  jobs              worker threads
  fixtures          fixture directory or scene file

Precedence: command-line flags, then --config, then --manifest, then defaults.
Relative paths are resolved against the working directory.

Environment: PROMPTPLAN_LOG sets log verbosity (error, warn, info, debug, trace).
Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.";

#[derive(Debug, Parser)]
#[command(name = "promptplan", version, about = "Prompt-planned segmentation runs on fixtures", after_help = CONFIG_HELP)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate deterministic synthetic fixtures.
    Synth(SynthArgs),
    /// Run a pipeline mode over a fixture set.
    Run(Box<RunArgs>),
    /// Score a run against its fixtures.
    Eval(EvalArgs),
    /// Compare runs and render overlays.
    Report(ReportArgs),
    /// Serve oracle answers over the external-backend protocol.
    #[command(hide = true)]
    ServeOracle(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of scenes.
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    #[arg(long, default_value_t = 256)]
    pub width: u32,
    #[arg(long, default_value_t = 256)]
    pub height: u32,
    /// Instances per scene, `N` or `LO-HI` inclusive.
    #[arg(long, default_value = "5-20")]
    pub instances: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Oracle,
    External,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// hierarchical, boxes_only or hybrid.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    /// Server command for the external backend, shell-style quoted.
    #[arg(long)]
    pub external_cmd: Option<String>,
    /// Connect to an external server at host:port instead of spawning one.
    #[arg(long)]
    pub external_addr: Option<String>,
    /// Per-request timeout in seconds.
    #[arg(long)]
    pub timeout: Option<f64>,
    /// Oracle detector recall.
    #[arg(long)]
    pub recall: Option<f64>,
    /// Oracle detector seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub coarse: Option<u32>,
    #[arg(long)]
    pub dense: Option<u32>,
    #[arg(long)]
    pub sparse: Option<u32>,
    #[arg(long)]
    pub nms_iou: Option<f64>,
    #[arg(long)]
    pub high_conf: Option<f64>,
    #[arg(long)]
    pub detection_floor: Option<f64>,
    #[arg(long)]
    pub min_area: Option<u64>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Fixture directory or a single scene file.
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    /// Flat key = value settings file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Replay the settings recorded in a previous run's manifest.json.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Run directory holding predictions.jsonl, stats.csv and manifest.json.
    pub run_dir: Option<PathBuf>,
    /// Predictions file; defaults to RUN_DIR/predictions.jsonl.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Ground-truth fixtures; defaults to the path in the run manifest.
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    /// detector, class_agnostic or both.
    #[arg(long, default_value = "both")]
    pub track: String,
    /// Also report mean IoU over matched pairs at IoU 0.5.
    #[arg(long)]
    pub matched_miou: bool,
    /// Output directory for report.json and report.csv; defaults to RUN_DIR.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directories to compare.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Track used for runs that have not been evaluated yet.
    #[arg(long, default_value = "both")]
    pub track: String,
    /// Skip PNG overlays.
    #[arg(long)]
    pub no_overlays: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub fixtures: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub recall: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Listen on host:port instead of stdio.
    #[arg(long)]
    pub listen: Option<String>,
}
