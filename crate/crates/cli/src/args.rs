use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Group shift pointwise convolution: verify, generate, train, evaluate,
/// profile and benchmark.
///
/// Settings resolve as: command-line flag, then `--config` file, then the
/// built-in default. All randomness comes from `--seed`.
#[derive(Parser, Debug)]
#[command(name = "gsconv", version)]
pub struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the group shift property suite over a built-in grid and an
    /// optional user config.
    VerifyGs(VerifyArgs),
    /// Generate a synthetic dataset.
    Gen(GenArgs),
    /// Train a network on a synthetic or generated dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint.
    Eval(EvalArgs),
    /// Parameter and FLOP report.
    Profile(ProfileArgs),
    /// Time the reference shift against the table gather.
    Bench(BenchArgs),
}

pub fn parse_list(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("`{p}`: {e}")))
        .collect()
}

fn parse_triple(s: &str) -> Result<(usize, usize, usize), String> {
    match parse_list(s)?[..] {
        [a, b, c] => Ok((a, b, c)),
        _ => Err(format!("expected three comma-separated integers, got `{s}`")),
    }
}

fn parse_dims5(s: &str) -> Result<[usize; 5], String> {
    parse_list(s)?.try_into().map_err(|_| format!("expected N,D,H,W,C, got `{s}`"))
}

fn parse_dims4(s: &str) -> Result<[usize; 4], String> {
    parse_list(s)?.try_into().map_err(|_| format!("expected D,H,W,C, got `{s}`"))
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Per-sample dims D,H,W,C of an extra config to check.
    #[arg(long, value_parser = parse_dims4)]
    pub dims: Option<[usize; 4]>,
    /// Spatial groups gd,gh,gw of the extra config.
    #[arg(long, value_parser = parse_triple, requires = "dims")]
    pub groups: Option<(usize, usize, usize)>,
    /// Channels per channel group.
    #[arg(long, default_value_t = 1)]
    pub cg: usize,
    /// Shifted channel count; must equal G·cg.
    #[arg(long)]
    pub cs: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Skip the built-in grid.
    #[arg(long)]
    pub no_grid: bool,
    /// Corrupt the first table before checking (exercises the failure path).
    #[arg(long, hide = true)]
    pub inject_corruption: bool,
}

/// Network selection shared by train and profile.
#[derive(Args, Debug, Clone)]
pub struct NetArgs {
    /// Network spec JSON; overrides the flags below.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Spatial-group preset: prosgv1..prosgv4, brats.
    #[arg(long)]
    pub preset: Option<String>,
    /// Uniform spatial groups gd,gh,gw for every stage (when no preset).
    #[arg(long, value_parser = parse_triple)]
    pub groups: Option<(usize, usize, usize)>,
    /// Stage widths, comma separated (1 to 5 stages).
    #[arg(long, value_delimiter = ',')]
    pub channels: Option<Vec<usize>>,
    /// none, csc, ccs, cscs, cscs_upshift.
    #[arg(long)]
    pub insert: Option<String>,
    /// encoder, decoder, both.
    #[arg(long)]
    pub placement: Option<String>,
    /// Fraction of channels shifted, e.g. 1/2 or 0.5.
    #[arg(long)]
    pub shift_fraction: Option<String>,
    /// pointwise or conv3.
    #[arg(long)]
    pub conv: Option<String>,
    #[arg(long)]
    pub in_channels: Option<usize>,
    #[arg(long)]
    pub classes: Option<usize>,
}

/// Synthetic dataset selection.
#[derive(Args, Debug, Clone)]
pub struct TaskArgs {
    /// longrange or local.
    #[arg(long, default_value = "longrange")]
    pub task: String,
    /// Volume dims D,H,W.
    #[arg(long, value_parser = parse_triple, default_value = "32,32,16")]
    pub dims: (usize, usize, usize),
    #[arg(long, default_value_t = 400)]
    pub count: usize,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[command(flatten)]
    pub task: TaskArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub net: NetArgs,
    #[command(flatten)]
    pub task: TaskArgs,
    /// Dataset directory written by `gen`; otherwise generated in memory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// JSON file with training settings (any TrainConfig field).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub power: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub log_interval: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Evaluate on this many fresh samples after training.
    #[arg(long, default_value_t = 0)]
    pub eval_count: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Expected spec; the checkpoint must match it.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[command(flatten)]
    pub task: TaskArgs,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Also write eval.json and a manifest here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ProfileArgs {
    #[command(flatten)]
    pub net: NetArgs,
    /// Input dims N,D,H,W,C.
    #[arg(long, value_parser = parse_dims5)]
    pub input: [usize; 5],
    /// Compare against the same network with this conv kind.
    #[arg(long)]
    pub baseline: Option<String>,
    /// csv or table.
    #[arg(long, default_value = "csv")]
    pub format: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Per-sample dims D,H,W,C.
    #[arg(long, value_parser = parse_dims4, default_value = "64,64,64,32")]
    pub dims: [usize; 4],
    #[arg(long, value_parser = parse_triple, default_value = "2,2,2")]
    pub groups: (usize, usize, usize),
    #[arg(long, default_value_t = 2)]
    pub cg: usize,
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
