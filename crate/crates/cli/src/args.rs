use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "seqseg",
    version,
    about = "Sentence-level document segmentation toolkit"
)]
pub struct Cli {
    /// Seed for every random choice (synthesis, init, shuffling, dropout, noise).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for per-document inference.
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,

    /// `key = value` settings file; command-line flags override it.
    #[arg(long, global = true, env = "SEQSEG_CONFIG")]
    pub config: Option<PathBuf>,

    /// Print nothing but errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic labeled corpus.
    Synth(SynthArgs),
    /// Convert wiki-style text or records, optionally splitting and adding homophone noise.
    Convert(ConvertArgs),
    /// Build a subword vocabulary from a corpus.
    Vocab(VocabArgs),
    /// Train a segmentation model.
    Train(TrainArgs),
    /// Segment documents with a trained model.
    Segment(SegmentArgs),
    /// Score segmentation output against reference labels.
    Eval(EvalArgs),
    /// Sweep step sizes for the window strategies and the cross-segment baseline.
    Bench(BenchArgs),
    /// Aggregate crowd annotations into labels.
    Aggregate(AggregateArgs),
    /// Compare analytic gradients with finite differences on a tiny model.
    Gradcheck(GradcheckArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Convert(_) => "convert",
            Command::Vocab(_) => "vocab",
            Command::Train(_) => "train",
            Command::Segment(_) => "segment",
            Command::Eval(_) => "eval",
            Command::Bench(_) => "bench",
            Command::Aggregate(_) => "aggregate",
            Command::Gradcheck(_) => "gradcheck",
        }
    }

    /// The command with every setting flag cleared; those live in the
    /// resolved settings instead.
    pub fn without_settings(&self) -> Command {
        let mut c = self.clone();
        match &mut c {
            Command::Train(a) => {
                a.model = ModelFlags::default();
                a.train = TrainFlags::default();
                a.left_ctx = None;
                a.right_ctx = None;
            }
            Command::Segment(a) => a.infer = InferFlags::default(),
            Command::Bench(a) => a.infer = InferFlags::default(),
            Command::Gradcheck(a) => a.model = ModelFlags::default(),
            _ => {}
        }
        c
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SourceArg {
    Written,
    Spoken,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    /// Plain text; a directory holds one document per `.txt` file.
    Wiki,
    /// Line-delimited JSON records.
    Records,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GranularityArg {
    Section,
    Paragraph,
}

/// An inclusive `lo-hi` range, or a single number.
pub fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (lo, hi) = s.split_once('-').unwrap_or((s, s));
    let lo: usize = lo.trim().parse().map_err(|_| format!("bad range `{s}`"))?;
    let hi: usize = hi.trim().parse().map_err(|_| format!("bad range `{s}`"))?;
    if lo > hi {
        return Err(format!("empty range `{s}`"));
    }
    Ok((lo, hi))
}

#[derive(Clone, Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub docs: usize,
    #[arg(long, default_value = "10-20", value_parser = parse_range)]
    pub sentences: (usize, usize),
    #[arg(long, default_value = "3-6", value_parser = parse_range)]
    pub words: (usize, usize),
    /// Sentences per segment.
    #[arg(long, default_value = "2-5", value_parser = parse_range)]
    pub segment_len: (usize, usize),
    #[arg(long, default_value_t = 60)]
    pub vocab_size: usize,
    #[arg(long, default_value_t = 4)]
    pub cue_words: usize,
    /// Probability that a segment opens with a cue word.
    #[arg(long, default_value_t = 1.0)]
    pub cue_strength: f64,
    #[arg(long, value_enum, default_value_t = SourceArg::Written)]
    pub source: SourceArg,
    /// Also write a homophone lexicon for the generated vocabulary.
    #[arg(long)]
    pub lexicon_out: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub class_size: usize,
}

#[derive(Clone, Debug, Args)]
pub struct ConvertArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = InputFormat::Wiki)]
    pub format: InputFormat,
    #[arg(long, value_enum, default_value_t = GranularityArg::Section)]
    pub granularity: GranularityArg,
    #[arg(long, value_enum, default_value_t = SourceArg::Written)]
    pub source: SourceArg,
    #[arg(long)]
    pub out: PathBuf,
    /// Move the last N documents to `--test-out`.
    #[arg(long, requires = "test_out")]
    pub test_docs: Option<usize>,
    #[arg(long, requires = "test_docs")]
    pub test_out: Option<PathBuf>,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Homophone substitution rate, applied to every document before splitting.
    #[arg(long, requires = "lexicon")]
    pub noise: Option<f64>,
}

#[derive(Clone, Debug, Args)]
pub struct VocabArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 8000)]
    pub size: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Default, Args)]
pub struct ModelFlags {
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub d_ff: Option<usize>,
    #[arg(long)]
    pub max_seq_len: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// `sentence` for the windowed model, `cls` for the cross-segment baseline.
    #[arg(long)]
    pub head: Option<String>,
    #[arg(long)]
    pub use_phone: bool,
}

#[derive(Clone, Debug, Default, Args)]
pub struct TrainFlags {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub forward_step: Option<usize>,
    #[arg(long)]
    pub max_sentences: Option<usize>,
    /// `fixed` or `adaptive_reference`.
    #[arg(long)]
    pub sample_strategy: Option<String>,
}

#[derive(Clone, Debug, Default, Args)]
pub struct InferFlags {
    /// `fixed`, `adaptive` or `cross-segment`.
    #[arg(long)]
    pub strategy: Option<String>,
    #[arg(long)]
    pub step: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub window_tokens: Option<usize>,
    #[arg(long)]
    pub window_sentences: Option<usize>,
    #[arg(long)]
    pub left_ctx: Option<usize>,
    #[arg(long)]
    pub right_ctx: Option<usize>,
}

#[derive(Clone, Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Held-out corpus; the epoch with the lowest loss on it is kept.
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch losses as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelFlags,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long)]
    pub left_ctx: Option<usize>,
    #[arg(long)]
    pub right_ctx: Option<usize>,
}

#[derive(Clone, Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub infer: InferFlags,
}

#[derive(Clone, Debug, Args)]
pub struct EvalArgs {
    /// Segmentation output to score.
    #[arg(long, required_unless_present = "runs_a")]
    pub pred: Option<PathBuf>,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Segmentation outputs of system A, one per seed, for a permutation test.
    #[arg(long, value_delimiter = ',', requires = "runs_b")]
    pub runs_a: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', requires = "runs_a")]
    pub runs_b: Vec<PathBuf>,
}

#[derive(Clone, Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Cross-segment model, run once without a step.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1,3,5,7,10")]
    pub steps: Vec<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Write `<strategy>_<metric>.tsv` step series here.
    #[arg(long)]
    pub series_dir: Option<PathBuf>,
    #[command(flatten)]
    pub infer: InferFlags,
}

#[derive(Clone, Debug, Args)]
pub struct AggregateArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = seqseg_core::annotate::DEFAULT_TOP_K)]
    pub top_k: usize,
    #[arg(long, default_value_t = seqseg_core::annotate::DEFAULT_POSITIVE_VOTES)]
    pub positive_votes: usize,
    /// Annotations of the screening documents; failing annotators are dropped.
    #[arg(long, requires = "screen_ref")]
    pub screen: Option<PathBuf>,
    /// Reference records for the screening documents.
    #[arg(long, requires = "screen")]
    pub screen_ref: Option<PathBuf>,
    #[arg(long, default_value_t = seqseg_core::annotate::MIN_SCREEN_F1)]
    pub min_f1: f64,
}

#[derive(Clone, Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 1e-5)]
    pub epsilon: f64,
    /// Coordinates checked per parameter tensor.
    #[arg(long, default_value_t = 20)]
    pub coords: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 3)]
    pub sentences: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelFlags,
}
