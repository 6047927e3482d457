use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "voltgrid", version, about = "Two-timescale volt/var control experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one policy and write its traces, checkpoint and manifest.
    Run(RunArgs),
    /// Run several policies on the same scenario, one subdirectory each.
    Compare(CompareArgs),
    /// Check a feeder (and optionally a profile file) and print a summary.
    Validate(ValidateArgs),
    /// Exhaustive best commitment per interval, for auditing baselines.
    Oracle(OracleArgs),
    /// Summarize trace directories into plot-ready JSON.
    Summarize(SummarizeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PhysicsArg {
    Linear,
    Socp,
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// Feeder JSON file, or `builtin:sce47` / `builtin:ieee123`.
    #[arg(long)]
    pub feeder: Option<String>,
    /// Profile CSV with columns tau,t,bus,p_c,q_c,p_g.
    #[arg(long, conflicts_with = "synth")]
    pub profiles: Option<PathBuf>,
    /// Synthesize profiles: `default` or a chain-spec JSON file.
    #[arg(long)]
    pub synth: Option<String>,
    /// Control intervals to simulate.
    #[arg(long)]
    pub intervals: Option<u64>,
    /// Slots per interval of synthesized profiles.
    #[arg(long)]
    pub slots_per_interval: Option<usize>,
    #[arg(long, value_enum)]
    pub physics: Option<PhysicsArg>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct AgentArgs {
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Replay capacity.
    #[arg(long)]
    pub replay: Option<usize>,
    /// Mini-batch size.
    #[arg(long)]
    pub batch: Option<usize>,
    /// Target network sync period in intervals.
    #[arg(long)]
    pub target_sync: Option<u64>,
    /// Number of sub-networks splitting the action space.
    #[arg(long)]
    pub hyper_k: Option<usize>,
    /// Learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// Upper end of the Q-network output.
    #[arg(long)]
    pub output_scale: Option<f64>,
    /// Exploration: `stepped` or a constant probability.
    #[arg(long)]
    pub epsilon: Option<String>,
    /// Divisor applied to interval costs before learning.
    #[arg(long)]
    pub cost_scale: Option<f64>,
    /// Fixed commitment as a bit string (capacitor order), `off` or `on`.
    #[arg(long)]
    pub fixcap_pattern: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct OutArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Replace an existing output directory.
    #[arg(long)]
    pub force: bool,
    /// Re-run exactly what a previous manifest describes.
    #[arg(long, conflicts_with_all = ["feeder", "profiles", "synth"])]
    pub from_manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub agent: AgentArgs,
    #[command(flatten)]
    pub out: OutArgs,
    #[arg(long)]
    pub policy: Option<String>,
    /// Continue from an episode checkpoint up to `--intervals` in total. The
    /// configuration, feeder and profiles come from the checkpoint and the
    /// manifest beside it unless given explicitly.
    #[arg(long, conflicts_with_all = ["from_manifest", "policy"])]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub agent: AgentArgs,
    #[command(flatten)]
    pub out: OutArgs,
    /// Comma-separated policies; all four by default.
    #[arg(long, value_delimiter = ',')]
    pub policies: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub feeder: String,
    #[arg(long)]
    pub profiles: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Enumerate all commitments (required; the only oracle mode).
    #[arg(long)]
    pub enumerate_actions: bool,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    /// A run directory or a directory of run directories.
    #[arg(long)]
    pub dir: PathBuf,
    /// Output JSON; `<dir>/summary.json` when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
