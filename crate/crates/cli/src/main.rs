//! `langsim` command-line interface. One subcommand per pipeline stage.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "langsim",
    version,
    about = "Acoustic and typological language similarity toolkit"
)]
struct Cli {
    /// Worker threads (default: number of cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute log-Mel features for every utterance in a manifest.
    Featurize(FeaturizeArgs),
    /// Train the speech (and text) encoder.
    Train(TrainArgs),
    /// Average encoder outputs per language into an embedding store.
    Embed(EmbedArgs),
    /// Build a distance table from embeddings, a family tree or coordinates.
    Distance(DistanceArgs),
    /// Min-max rescale and average several distance tables.
    Ensemble(EnsembleArgs),
    /// Rank candidate source languages for a target.
    Rank(RankArgs),
    /// Spearman correlation between a distance table and downstream scores.
    Correlate(CorrelateArgs),
    /// Zero-shot language family classification accuracy.
    FamilyEval(FamilyEvalArgs),
    /// k-means over language embeddings.
    Cluster(ClusterArgs),
    /// Write a deterministic synthetic tone-burst corpus.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct FeaturizeArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory; one `<id>.lmel` file per utterance.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LossArg {
    Ce,
    Supcon,
    Multimodal,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Directory written by `featurize`; features are computed on the fly when absent.
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long, value_enum)]
    loss: LossArg,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 128)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Weight of the speech-text alignment term (multimodal only).
    #[arg(long, default_value_t = 3e-2)]
    alpha: f64,
    /// SupCon temperature.
    #[arg(long, default_value_t = 0.1)]
    tau: f64,
    /// Output directory for `model.ckpt` and `loss_trace.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

#[derive(Args, Debug)]
struct EmbedArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    features: Option<PathBuf>,
    /// Which utterances to average.
    #[arg(long, value_enum, default_value_t = SplitArg::All)]
    split: SplitArg,
    /// Use at most this many utterances per language (lowest ids first).
    #[arg(long)]
    max_per_language: Option<usize>,
    /// Output directory for `embeddings.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DistanceArgs {
    /// speech-ce, speech-sc, multimodal (needs --store), genetic (needs --tree)
    /// or geographic (needs --registry).
    #[arg(long)]
    measure: String,
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long)]
    tree: Option<PathBuf>,
    #[arg(long)]
    registry: Option<PathBuf>,
    /// Comma-separated ISO codes (default: every language in the input).
    #[arg(long, value_delimiter = ',')]
    langs: Vec<String>,
    /// Output directory for `<measure>.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EnsembleArgs {
    /// Distance table, as `path` (measure from the file stem) or `measure=path`.
    #[arg(long, required = true)]
    table: Vec<String>,
    /// CSV `lang_a,lang_b` listing the pairs to combine.
    #[arg(long)]
    pairs: Option<PathBuf>,
    /// Alternatively combine every (source, target) pair for this target.
    #[arg(long)]
    target: Option<String>,
    /// Output directory for `ensemble.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RankArgs {
    #[arg(long)]
    table: String,
    #[arg(long)]
    target: String,
    /// Comma-separated candidates (default: every language paired with the target).
    #[arg(long, value_delimiter = ',')]
    candidates: Vec<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AnchorArg {
    Source,
    Target,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TaskArg {
    Cer,
    Mcd,
    Mos,
}

#[derive(Args, Debug)]
struct CorrelateArgs {
    /// Distance table, as `path` or `measure=path`; repeatable.
    #[arg(long, required = true)]
    table: Vec<String>,
    #[arg(long)]
    scores: PathBuf,
    #[arg(long, value_enum)]
    task: TaskArg,
    #[arg(long, value_enum)]
    anchor: AnchorArg,
    /// Anchor languages (default: every anchor language in the scores).
    #[arg(long, value_delimiter = ',')]
    lang: Vec<String>,
    /// Also write report.csv and report.json here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FamilyEvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    registry: PathBuf,
    #[arg(long)]
    features: Option<PathBuf>,
    /// Also write family_eval.json here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ClusterArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    /// Output directory for `clusters.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    per_language: usize,
    #[arg(long, default_value_t = 1.0)]
    duration: f64,
    /// Output directory for the WAV files and `manifest.jsonl`.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("error[usage]: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error[validation]: cannot start {n} workers: {e}");
            return ExitCode::from(5);
        }
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
