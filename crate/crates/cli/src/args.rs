use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "symlab",
    version,
    about = "Symmetry-based representation learning on a cyclic grid world"
)]
pub struct Cli {
    /// Where to write the config echo (default: next to the main output).
    #[arg(long, global = true)]
    pub echo: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate a random-walk transition dataset.
    Gen(GenArgs),
    /// Train a representation model.
    #[command(subcommand)]
    Train(TrainCommand),
    /// Learn the latent action of a frozen representation with an MLP.
    LearnAction(LearnActionArgs),
    /// Check equivariance and disentanglement, or run the theorem demonstrations.
    #[command(subcommand)]
    Verify(VerifyCommand),
    /// Evaluate trained representations.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Regenerate every artifact: data, four models, action MLP, checks, evaluations.
    ReproduceAll(ReproduceArgs),
    /// Re-run a command from its config echo.
    #[serde(skip)]
    Replay { path: PathBuf },
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, PartialEq)]
pub struct WorldArgs {
    /// Grid size N (the world is N x N).
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(2..=1000))]
    pub n: u64,
    /// Observation side length in pixels.
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u64).range(1..=4096))]
    pub image_size: u64,
    /// Agent disc radius in pixels.
    #[arg(long, default_value_t = 4.0)]
    pub radius: f32,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, PartialEq)]
pub struct GenArgs {
    #[command(flatten)]
    pub world: WorldArgs,
    #[arg(long, default_value_t = 15_000, value_parser = clap::value_parser!(u64).range(1..=1_000_000_000))]
    pub steps: u64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelChoice {
    ForwardVae,
    CciVae,
    Ae,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
pub enum TrainCommand {
    ForwardVae(TrainArgs),
    CciVae(TrainArgs),
    Ae(TrainArgs),
}

impl TrainCommand {
    pub fn parts(&self) -> (ModelChoice, &TrainArgs) {
        match self {
            TrainCommand::ForwardVae(a) => (ModelChoice::ForwardVae, a),
            TrainCommand::CciVae(a) => (ModelChoice::CciVae, a),
            TrainCommand::Ae(a) => (ModelChoice::Ae, a),
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, PartialEq)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Default: 35 for forward-vae, 11 otherwise.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Latent size. Forward-VAE is fixed at 4, the auto-encoder at 2.
    #[arg(long)]
    pub z_dim: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Let the frozen (identity/zero) action-matrix entries train too.
    #[arg(long)]
    pub unfreeze_blocks: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// Loss log (default: the output path with a `.log.csv` suffix).
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, PartialEq)]
pub struct LearnActionArgs {
    /// Frozen representation checkpoint.
    #[arg(long)]
    pub repr: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 300)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
pub enum VerifyCommand {
    /// Equivariance residual and disentanglement violations of a representation.
    Sb(VerifySbArgs),
    /// Permuted-world and linear-collapse demonstrations.
    Theorems(TheoremArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, PartialEq)]
pub struct VerifySbArgs {
    /// A model checkpoint, or `analytic` for the closed-form representation.
    #[arg(long)]
    pub repr: String,
    /// Action-MLP checkpoint; without it the model's own matrices are used.
    #[arg(long)]
    pub action: Option<PathBuf>,
    /// Grid size for `--repr analytic`.
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    /// Fail (exit 1) when the residual exceeds this.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, PartialEq)]
pub struct TheoremArgs {
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(2..=12))]
    pub n: u64,
    /// Permuted worlds to construct.
    #[arg(long, default_value_t = 3)]
    pub worlds: usize,
    /// Observation side length used for the byte-level comparison.
    #[arg(long, default_value_t = 16)]
    pub image_size: usize,
    /// Grid size of the linear-collapse probe.
    #[arg(long, default_value_t = 4)]
    pub probe_n: usize,
    /// Random nonconstant maps in the probe.
    #[arg(long, default_value_t = 64)]
    pub probe_maps: usize,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
pub enum EvalCommand {
    /// Inverse-model benchmark with a random forest and k-fold cross-validation.
    Inverse(InverseArgs),
    /// Learned action matrices against ideal rotations.
    Matrices(MatricesArgs),
    /// Determinant of composed action matrices.
    Drift(DriftArgs),
    /// Decoded latent traversals as a PGM grid.
    Traverse(TraverseArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, PartialEq)]
pub struct InverseArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// `NAME=PATH` per representation; PATH may be `analytic`.
    #[arg(long = "repr", required = true)]
    pub reprs: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "1000,10000")]
    pub sizes: Vec<usize>,
    /// `LO:HI` (inclusive) or a comma list.
    #[arg(long, default_value = "1:10")]
    pub depths: String,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Shuffle labels (chance-level control).
    #[arg(long)]
    pub shuffle_labels: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, PartialEq)]
pub struct MatricesArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionChoice {
    Left,
    Right,
    Up,
    Down,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, PartialEq)]
pub struct DriftArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u32).range(1..))]
    pub max_k: u32,
    #[arg(long, value_enum, default_value_t = ActionChoice::Right)]
    pub action: ActionChoice,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, PartialEq)]
pub struct TraverseArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 9, value_parser = clap::value_parser!(u64).range(1..=1000))]
    pub steps: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, PartialEq)]
pub struct ReproduceArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub data_seed: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Scale every epoch count down (for smoke runs); 1 is the full protocol.
    #[arg(long, default_value_t = 1)]
    pub epoch_divisor: usize,
    /// Benchmark dataset sizes.
    #[arg(long, value_delimiter = ',', default_value = "1000,10000")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
}
