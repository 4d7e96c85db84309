mod commands;
mod config;
mod layout;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mosi_core::Error;

/// Moving object segmentation evaluation and track linking.
///
/// Reports are JSON on stdout (or `--output`). Failures print a JSON error
/// object on stderr and exit with: 1 failed check, 2 invalid input,
/// 3 missing file, 4 schema violation, 5 dimension mismatch, 6 runtime error.
#[derive(Debug, Parser)]
#[command(name = "mosi", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Worker threads for per-sequence work [default: available cores]
    #[arg(long, global = true, env = "MOSI_WORKERS")]
    pub workers: Option<usize>,
    /// TOML file overriding built-in defaults; flags override the file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Write the report here instead of stdout
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    /// Print a plain-text table instead of JSON (eval commands)
    #[arg(long, global = true)]
    pub table: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Region similarity J, contour accuracy F and detection success rate
    EvalMos(EvalMosArgs),
    /// Motion-aware J_mov, false-positive count and mean temporal IoU
    EvalMosi(EvalMosiArgs),
    /// Link per-frame proposals into tracks with motion flags
    Propagate(PropagateArgs),
    /// Check annotations against ground-truth masks
    Validate(ValidateArgs),
    /// Convert a mask store between indexed PNG and RLE JSON
    Convert(ConvertArgs),
    /// Run the gradient and brute-force equivalence suite
    Selfcheck(SelfcheckArgs),
    /// Render a scenario's ground truth, annotation and proposals to disk
    Render(RenderArgs),
    /// Write annotation.json sidecars from an interval CSV
    Ingest(IngestArgs),
    /// Dataset statistics over annotated sequences
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
pub struct EvalMosArgs {
    /// Prediction root with one mask store per sequence
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth root with one mask store per sequence
    #[arg(long)]
    pub gt: PathBuf,
    /// Boundary tolerance in pixels [default: 0.8% of the image diagonal]
    #[arg(long)]
    pub tolerance: Option<usize>,
    /// Score objects separately or merged into one foreground
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Compute the detection success rate
    #[arg(long)]
    pub sr: bool,
    /// Box IoU thresholds for the success rate [default: 0.5..0.9 step 0.05]
    #[arg(long, value_delimiter = ',')]
    pub sr_thresholds: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Multi,
    Fgbg,
}

#[derive(Debug, Args)]
pub struct EvalMosiArgs {
    /// Prediction root; each sequence has masks plus motion.json
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth root; each sequence has masks plus annotation.json
    #[arg(long)]
    pub gt: PathBuf,
    /// Interval CSV used instead of annotation.json sidecars
    #[arg(long, requires = "fps")]
    pub intervals: Option<PathBuf>,
    /// Frame rate for --intervals
    #[arg(long)]
    pub fps: Option<f64>,
    /// J below which a moving prediction is a false positive [default: 0.5]
    #[arg(long)]
    pub fp_floor: Option<f64>,
    /// Temporal IoU thresholds [default: 0.5..0.95 step 0.05]
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RunMode {
    Online,
    Offline,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StoreFormat {
    Png,
    Rle,
}

#[derive(Debug, Args)]
pub struct PropagateArgs {
    /// Scenario JSON; drives a synthetic proposer and an oracle tracker
    #[arg(long, conflicts_with = "proposals", required_unless_present = "proposals")]
    pub scenario: Option<PathBuf>,
    /// Proposal directory (`%05d/mask_%03d.png` + `scores.json`)
    #[arg(long)]
    pub proposals: Option<PathBuf>,
    /// Ground-truth mask store for an oracle tracker; without it masks carry over
    #[arg(long, requires = "proposals")]
    pub oracle_gt: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "offline")]
    pub mode: RunMode,
    /// Output mask store; motion.json is written next to the masks
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "png")]
    pub format: StoreFormat,
    /// Overrides the scenario seed
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub tau_motion: Option<f64>,
    #[arg(long)]
    pub tau_iou: Option<f64>,
    #[arg(long)]
    pub tau_match: Option<f64>,
    #[arg(long)]
    pub tau_new: Option<f64>,
    #[arg(long)]
    pub topk_fraction: Option<f64>,
    #[arg(long)]
    pub topk_iou_floor: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Ground-truth root
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, requires = "fps")]
    pub intervals: Option<PathBuf>,
    #[arg(long)]
    pub fps: Option<f64>,
    /// Exit with status 1 when any sequence is inconsistent
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output_dir: PathBuf,
    /// Target encoding [default: the other one]
    #[arg(long, value_enum)]
    pub to: Option<StoreFormat>,
}

#[derive(Debug, Args)]
pub struct SelfcheckArgs {
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    pub scenario: PathBuf,
    /// Sequence directory for ground-truth masks and annotation.json
    #[arg(long)]
    pub gt: PathBuf,
    /// Also write the synthetic proposals here
    #[arg(long)]
    pub proposals: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "png")]
    pub format: StoreFormat,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub intervals: PathBuf,
    #[arg(long)]
    pub fps: f64,
    /// Ground-truth root; frame counts come from its mask stores
    #[arg(long)]
    pub gt: PathBuf,
    /// Where to write `<sequence>/annotation.json` [default: --gt]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, requires = "fps")]
    pub intervals: Option<PathBuf>,
    #[arg(long)]
    pub fps: Option<f64>,
    /// Also write per-object motion proportions as CSV
    #[arg(long)]
    pub proportions_csv: Option<PathBuf>,
}

/// Exit status for a report whose checks did not all pass.
pub const CHECK_FAILED: u8 = 1;

fn error_json(kind: &str, code: i32, message: &str) -> String {
    serde_json::json!({ "error": { "kind": kind, "code": code, "message": message } }).to_string()
}

fn report_error(e: &Error) -> ExitCode {
    let kind = e.kind();
    eprintln!("{}", error_json(kind.as_str(), kind.exit_code(), &e.to_string()));
    ExitCode::from(kind.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let kind = mosi_core::ErrorKind::InvalidInput;
            let message = e.render().to_string();
            eprintln!("{}", error_json(kind.as_str(), kind.exit_code(), &message));
            return ExitCode::from(kind.exit_code() as u8);
        }
    };
    match commands::run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(CHECK_FAILED),
        Err(e) => report_error(&e),
    }
}
