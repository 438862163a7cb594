//! Flag definitions for every subcommand.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "micromil",
    version,
    about = "Redundancy-aware graph MIL over bags of feature vectors",
    propagate_version = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset (MILB bags plus manifest).
    Synth(SynthArgs),
    /// Train a model on a manifest.
    Train(TrainArgs),
    /// Evaluate a saved model on a manifest.
    Eval(EvalArgs),
    /// Redundancy statistics and similarity heatmaps.
    Analyze(AnalyzeArgs),
    /// Split a manifest into its most/least redundant bags.
    Split(SplitArgs),
    /// Train+eval over a grid of edge/selection ablation modes.
    Ablate(AblateArgs),
    /// Compare analytic gradients to finite differences on a fixed bag.
    Gradcheck(GradcheckArgs),
    /// Run the scripted desk-scale reproductions end to end.
    Repro(ReproArgs),
}

/// Hyperparameter flags shared by the training-style subcommands.
/// Unset flags fall back to the config file (`--config`, `key=value`
/// lines, `#` comments), then to built-in defaults.
#[derive(Args, Debug, Default, Clone)]
pub struct TrainFlags {
    /// Optional key=value config file; explicit flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub warmup_dce_iters: Option<usize>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
}

/// Ablation-axis flags for the single-run subcommands.
#[derive(Args, Debug, Default, Clone)]
pub struct ModeFlags {
    /// Edge construction: cosine|reverse|random|none.
    #[arg(long)]
    pub edge_method: Option<String>,
    /// Representative selection: gumbel|random|mean|centroid.
    #[arg(long)]
    pub rie_select: Option<String>,
    /// Clustering arm: dce (learnable) | kmeans (frozen).
    #[arg(long)]
    pub rie_cluster: Option<String>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub bags: usize,
    #[arg(long, default_value_t = 40)]
    pub images_per_bag: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.0)]
    pub redundancy: f64,
    #[arg(long, default_value_t = 0.5)]
    pub pos_fraction: f64,
    #[arg(long, default_value_t = 8)]
    pub concepts: usize,
    #[arg(long, default_value_t = 0)]
    pub signal_concept: usize,
    #[arg(long, default_value_t = 1.0)]
    pub noise_sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output model file.
    #[arg(long, default_value = "model.bin")]
    pub model_out: PathBuf,
    /// Optional `epoch,loss,acc` history file.
    #[arg(long)]
    pub history_out: Option<PathBuf>,
    /// Train the mean-pool baseline instead of the full model.
    #[arg(long, default_value_t = false)]
    pub baseline: bool,
    #[command(flatten)]
    pub flags: TrainFlags,
    #[command(flatten)]
    pub modes: ModeFlags,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Optional per-bag `bag_id,probability,label` CSV.
    #[arg(long)]
    pub report_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Cosine threshold defining a redundant pair.
    #[arg(long, default_value_t = 0.995)]
    pub threshold: f64,
    /// Also report the pooled (dataset-level) ratio.
    #[arg(long, default_value_t = false)]
    pub pooled: bool,
    /// Write per-bag cosine heatmaps (raw instances) into this directory.
    #[arg(long)]
    pub heatmap_dir: Option<PathBuf>,
    /// With a trained model, also write representative heatmaps.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Cap the number of bags exported as heatmaps.
    #[arg(long)]
    pub heatmap_limit: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 0.995)]
    pub threshold: f64,
    /// Fraction per split (0.1 keeps the top and bottom 10%).
    #[arg(long, default_value_t = 0.1)]
    pub quantile: f64,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Held-out manifest; defaults to evaluating on the training bags.
    #[arg(long)]
    pub test_manifest: Option<PathBuf>,
    /// Comma-separated edge methods, e.g. none,random,reverse,cosine.
    #[arg(long, default_value = "cosine")]
    pub edge_method: String,
    /// Comma-separated clustering arms (dce,kmeans).
    #[arg(long, default_value = "dce")]
    pub rie_cluster: String,
    /// Comma-separated selection strategies.
    #[arg(long, default_value = "gumbel")]
    pub rie_select: String,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Optional CSV output for the comparison table.
    #[arg(long)]
    pub table_out: Option<PathBuf>,
    #[command(flatten)]
    pub flags: TrainFlags,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Central-difference step (`--eps` is the Adam epsilon).
    #[arg(long, default_value_t = 1e-5)]
    pub fd_eps: f64,
    /// Pass/fail bound on the max relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    #[command(flatten)]
    pub flags: TrainFlags,
    #[command(flatten)]
    pub modes: ModeFlags,
}

#[derive(Args, Debug)]
pub struct ReproArgs {
    /// Working directory for generated data, models, and reports.
    #[arg(long, default_value = "repro_out")]
    pub out_dir: PathBuf,
}
