use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "alpharec", version, about = "Collaborative filtering on pre-computed language embeddings")]
pub struct Cli {
    /// Worker threads for parallel sections (falls back to ALPHAREC_THREADS, then all cores).
    #[arg(long, global = true, env = "ALPHAREC_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse an interaction log, drop sparse users and assign dense indices.
    Ingest(IngestArgs),
    /// Filter, index and split an interaction log into train/validation/test.
    Split(SplitArgs),
    /// Generate a synthetic dataset with a planted feature-to-preference map.
    Synth(SynthArgs),
    /// Train a linear probe on language features (no graph propagation by default).
    ProbeTrain(TrainArgs),
    /// Train the MLP + graph + InfoNCE model, its ablations, or an ID baseline.
    Train(TrainArgs),
    /// Score a checkpoint on a split with all-ranking metrics.
    Eval(EvalArgs),
    /// Score the Random or Pop strategy on a split.
    Baseline(BaselineArgs),
    /// Score a frozen checkpoint on an unseen dataset.
    ZeroShotEval(ZeroShotArgs),
    /// Single-target intention capture with blended query representations.
    IntentEval(IntentEvalArgs),
    /// Top-K list for one user after blending one query.
    IntentRank(IntentRankArgs),
    /// Write final user and item representations as TSV.
    ExportReps(ExportArgs),
    /// Permute the rows of an embedding matrix (row ids stay in place).
    ShuffleEmbeddings(ShuffleArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderArg {
    Random,
    Chronological,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelArg {
    Alpharec,
    Probe,
    Id,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LossArg {
    Infonce,
    Bpr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MixArg {
    Pooled,
    Alternate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum HeldOutArg {
    Validation,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyArg {
    Random,
    Pop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScopeArg {
    LayerZero,
    Repropagate,
}

#[derive(Debug, Args, Serialize)]
pub struct IngestArgs {
    /// Interaction log: `user<TAB>item[<TAB>timestamp]` per line.
    #[arg(long)]
    pub input: PathBuf,
    /// Users with fewer records are dropped.
    #[arg(long, default_value_t = 20)]
    pub min_interactions: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SplitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub min_interactions: usize,
    /// Train, validation and test shares.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.4, 0.3, 0.3])]
    pub ratios: Vec<f64>,
    #[arg(long, value_enum, default_value_t = OrderArg::Random)]
    pub order: OrderArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 500)]
    pub n_users: usize,
    #[arg(long, default_value_t = 300)]
    pub n_items: usize,
    #[arg(long, default_value_t = 8)]
    pub d_latent: usize,
    #[arg(long, default_value_t = 64)]
    pub d_lang: usize,
    #[arg(long, default_value_t = 30)]
    pub interactions_per_user: usize,
    #[arg(long, default_value_t = 0.1)]
    pub noise_sigma: f64,
    /// Apply `z + 0.5 z^3` before the linear map.
    #[arg(long)]
    pub nonlinear: bool,
    #[arg(long, default_value_t = 0.1)]
    pub gen_temperature: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write a second domain sharing the map, into `<out>/a` and `<out>/b`.
    #[arg(long)]
    pub pair_seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Split directory; repeat to co-train on several datasets.
    #[arg(long = "split", required = true)]
    pub splits: Vec<PathBuf>,
    /// Item embedding matrix per split, in the same order.
    #[arg(long = "features")]
    pub features: Vec<PathBuf>,
    /// Model family (probe-train always uses `probe`).
    #[arg(long, value_enum, default_value_t = ModelArg::Alpharec)]
    pub model: ModelArg,
    /// Replace the MLP by a single linear map (keeps graph and contrastive loss).
    #[arg(long)]
    pub no_mlp: bool,
    #[arg(long, value_enum, default_value_t = LossArg::Infonce)]
    pub loss: LossArg,
    /// Propagation layers; 0 disables the graph. probe-train defaults to 0.
    #[arg(long)]
    pub layers: Option<usize>,
    /// InfoNCE temperature.
    #[arg(long, default_value_t = 0.15)]
    pub tau: f64,
    /// Search these temperatures and keep the best validation Recall@20.
    #[arg(long, value_delimiter = ',')]
    pub tau_grid: Vec<f64>,
    /// Negatives per positive (InfoNCE; BPR always uses one).
    #[arg(long, default_value_t = 256)]
    pub negatives: usize,
    #[arg(long, default_value_t = 1024)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 5e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 500)]
    pub max_epochs: usize,
    /// Stop after this many evaluations without improvement.
    #[arg(long, default_value_t = 20)]
    pub patience: usize,
    #[arg(long, default_value_t = 1)]
    pub eval_every: usize,
    /// MLP hidden width (input width comes from the features file, e.g. 3072).
    #[arg(long, default_value_t = 1536)]
    pub hidden_dim: usize,
    #[arg(long, default_value_t = 64)]
    pub out_dim: usize,
    #[arg(long, default_value_t = 0.01)]
    pub leaky_slope: f64,
    /// How co-trained datasets share batches.
    #[arg(long, value_enum, default_value_t = MixArg::Pooled)]
    pub mix: MixArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    /// Required unless the checkpoint is an ID model.
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = HeldOutArg::Test)]
    pub held_out: HeldOutArg,
    /// Also hide validation positives when ranking for the test set.
    #[arg(long)]
    pub mask_validation: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct BaselineArgs {
    #[arg(long, value_enum)]
    pub kind: StrategyArg,
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ZeroShotArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Target split; its train part builds the graph and user features.
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    /// Propagation layers on the target graph (defaults to the checkpoint's).
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long, default_value_t = 20)]
    pub k: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct IntentEvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    /// One query embedding per item, aligned like the features.
    #[arg(long)]
    pub queries: PathBuf,
    /// Blend strength in [0, 1].
    #[arg(long, default_value_t = 0.8)]
    pub alpha: f64,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = ScopeArg::LayerZero)]
    pub scope: ScopeArg,
    /// Seed for choosing each user's target item.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct IntentRankArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    /// External user id.
    #[arg(long)]
    pub user: String,
    /// Row of the query matrix to blend in.
    #[arg(long)]
    pub query_row: usize,
    #[arg(long, default_value_t = 0.8)]
    pub alpha: f64,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = ScopeArg::LayerZero)]
    pub scope: ScopeArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ExportArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ShuffleArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}
