//! Windowed segmentation of whole documents.
//!
//! Every strategy implements [`Strategy`] and is looked up by name in a
//! [`StrategyRegistry`]. Strategies talk to the network only through the
//! [`Scorer`] trait, which lets tests drive them with scripted probabilities.

mod adaptive;
mod cross_segment;
mod fixed;
mod window;

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Head, Mode, PairInput, SegModel};

pub use adaptive::{adaptive_next_start, AdaptiveWindow};
pub use cross_segment::{build_pair_input, CrossSegment};
pub use fixed::FixedWindow;
pub(crate) use window::pack_capped;
pub use window::{pack_window, PackedWindow, PhoneContext, PreparedDocument};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    /// Registry name of the strategy.
    pub strategy: String,
    /// Tokens per SeqModel window, `[CLS]` included.
    pub window_token_budget: usize,
    pub max_window_sentences: usize,
    /// Backward step size: overlap for `fixed`, search span for `adaptive`.
    pub step: usize,
    pub left_context: usize,
    pub right_context: usize,
    pub threshold: f64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            strategy: "adaptive".into(),
            window_token_budget: 512,
            max_window_sentences: 60,
            step: 5,
            left_context: 128,
            right_context: 128,
            threshold: 0.5,
        }
    }
}

/// Keys [`InferenceConfig::apply_setting`] understands.
pub const INFERENCE_KEYS: &[&str] = &[
    "strategy",
    "step",
    "threshold",
    "window_tokens",
    "window_sentences",
    "left_context",
    "right_context",
];

impl InferenceConfig {
    /// Applies one `key = value` setting.
    pub fn apply_setting(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::config(format!("invalid value `{value}` for `{key}`")))
        }
        match key {
            "strategy" => self.strategy = value.to_string(),
            "step" => self.step = parse(key, value)?,
            "threshold" => self.threshold = parse(key, value)?,
            "window_tokens" => self.window_token_budget = parse(key, value)?,
            "window_sentences" => self.max_window_sentences = parse(key, value)?,
            "left_context" => self.left_context = parse(key, value)?,
            "right_context" => self.right_context = parse(key, value)?,
            _ => return Err(Error::config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.step == 0 {
            return Err(Error::config("step must be at least 1"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::config("threshold must lie in (0, 1)"));
        }
        if self.window_token_budget < 2 || self.max_window_sentences == 0 {
            return Err(Error::config(
                "windows need room for [CLS] and one sentence",
            ));
        }
        if self.left_context == 0 || self.right_context == 0 {
            return Err(Error::config("cross-segment contexts must be non-empty"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentationResult {
    pub id: String,
    pub probs: Vec<f64>,
    pub decisions: Vec<bool>,
    pub n_windows: usize,
    pub n_encoder_calls: usize,
}

impl SegmentationResult {
    pub(crate) fn from_probs(
        id: &str,
        probs: Vec<f64>,
        threshold: f64,
        n_windows: usize,
        n_calls: usize,
    ) -> Self {
        let decisions = probs.iter().map(|&p| p > threshold).collect();
        SegmentationResult {
            id: id.to_string(),
            probs,
            decisions,
            n_windows,
            n_encoder_calls: n_calls,
        }
    }
}

pub fn count_encoder_calls(result: &SegmentationResult) -> usize {
    result.n_encoder_calls
}

/// Something that turns encoder inputs into boundary probabilities.
pub trait Scorer: Sync {
    /// One probability per sentence of the window.
    fn score_window(&self, window: &PackedWindow) -> Result<Vec<f64>>;

    /// Probability that the break encoded by `input` is a boundary.
    fn score_break(&self, input: &PairInput) -> Result<f64>;

    /// Longest input the scorer accepts, if limited.
    fn max_tokens(&self) -> Option<usize> {
        None
    }
}

impl Scorer for SegModel {
    fn score_window(&self, window: &PackedWindow) -> Result<Vec<f64>> {
        if self.config.head != Head::Sentence {
            return Err(Error::config(
                "this model has a [CLS] head; use the cross-segment strategy",
            ));
        }
        Ok(self.forward(&window.input, Mode::Eval)?.probs)
    }

    fn score_break(&self, input: &PairInput) -> Result<f64> {
        if self.config.head != Head::Cls {
            return Err(Error::config(
                "cross-segment inference needs a model trained with a [CLS] head",
            ));
        }
        self.forward_pair(input, Mode::Eval)
    }

    fn max_tokens(&self) -> Option<usize> {
        Some(self.config.max_seq_len)
    }
}

pub trait Strategy: Send + Sync {
    fn name(&self) -> &'static str;

    fn segment(
        &self,
        doc: &PreparedDocument,
        scorer: &dyn Scorer,
        cfg: &InferenceConfig,
    ) -> Result<SegmentationResult>;
}

/// Name-keyed collection of strategies.
#[derive(Clone)]
pub struct StrategyRegistry {
    strategies: BTreeMap<&'static str, Arc<dyn Strategy>>,
}

impl StrategyRegistry {
    pub fn empty() -> Self {
        StrategyRegistry {
            strategies: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, strategy: Arc<dyn Strategy>) {
        self.strategies.insert(strategy.name(), strategy);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Strategy>> {
        self.strategies.get(name).cloned().ok_or_else(|| {
            Error::config(format!(
                "unknown strategy `{name}` (known: {})",
                self.names().join(", ")
            ))
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.strategies.keys().copied().collect()
    }
}

impl Default for StrategyRegistry {
    fn default() -> Self {
        let mut r = StrategyRegistry::empty();
        r.register(Arc::new(FixedWindow));
        r.register(Arc::new(AdaptiveWindow));
        r.register(Arc::new(CrossSegment));
        r
    }
}

/// Effective window budget: the configured one, capped by the scorer.
pub(crate) fn window_budget(cfg: &InferenceConfig, scorer: &dyn Scorer) -> usize {
    scorer
        .max_tokens()
        .map_or(cfg.window_token_budget, |m| m.min(cfg.window_token_budget))
}

/// Segments documents with the configured strategy. `workers > 1` scores
/// documents in parallel; output order always follows input order.
pub fn segment_documents(
    docs: &[PreparedDocument],
    scorer: &dyn Scorer,
    cfg: &InferenceConfig,
    registry: &StrategyRegistry,
    workers: usize,
) -> Result<Vec<SegmentationResult>> {
    cfg.validate()?;
    let strategy = registry.get(&cfg.strategy)?;
    if workers <= 1 {
        return docs
            .iter()
            .map(|d| strategy.segment(d, scorer, cfg))
            .collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config(e.to_string()))?;
    pool.install(|| {
        docs.par_iter()
            .map(|d| strategy.segment(d, scorer, cfg))
            .collect()
    })
}

/// SeqModel windows share this loop; `next_start` picks where the following
/// window begins given the scored window.
pub(crate) fn run_windows(
    doc: &PreparedDocument,
    scorer: &dyn Scorer,
    cfg: &InferenceConfig,
    mut next_start: impl FnMut(&PackedWindow, &[f64]) -> usize,
) -> Result<SegmentationResult> {
    let n = doc.len();
    if n == 0 {
        return Err(Error::EmptyDocument);
    }
    let budget = window_budget(cfg, scorer);
    let mut probs = vec![f64::NAN; n];
    let mut start = 0;
    let mut windows = 0;
    loop {
        let w = pack_window(doc, start, budget, cfg.max_window_sentences);
        let scores = scorer.score_window(&w)?;
        if scores.len() != w.sentences.len() {
            return Err(Error::input(
                "scorer returned the wrong number of probabilities",
            ));
        }
        windows += 1;
        let b = w.last();
        let finalize_to = if b + 1 == n {
            n
        } else {
            next_start(&w, &scores).max(start + 1).min(b + 1)
        };
        probs[start..finalize_to].copy_from_slice(&scores[..finalize_to - start]);
        if finalize_to == n {
            break;
        }
        start = finalize_to;
    }
    Ok(SegmentationResult::from_probs(
        &doc.id,
        probs,
        cfg.threshold,
        windows,
        windows,
    ))
}

#[cfg(test)]
pub(crate) mod scripted {
    use super::*;

    /// Scores sentence `s` of a window starting at `a` with `f(a, s)`.
    pub struct ScriptedScorer<F> {
        pub f: F,
        pub calls: std::sync::atomic::AtomicUsize,
    }

    impl<F: Fn(usize, usize) -> f64 + Sync> ScriptedScorer<F> {
        pub fn new(f: F) -> Self {
            ScriptedScorer {
                f,
                calls: Default::default(),
            }
        }
    }

    impl<F: Fn(usize, usize) -> f64 + Sync> Scorer for ScriptedScorer<F> {
        fn score_window(&self, w: &PackedWindow) -> Result<Vec<f64>> {
            self.calls
                .fetch_add(1, std::sync::atomic::Ordering::Relaxed);
            Ok(w.sentences
                .clone()
                .map(|s| (self.f)(w.first(), s))
                .collect())
        }

        fn score_break(&self, input: &PairInput) -> Result<f64> {
            self.calls
                .fetch_add(1, std::sync::atomic::Ordering::Relaxed);
            Ok((self.f)(0, input.token_ids.len()))
        }
    }
}
