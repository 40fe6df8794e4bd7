//! Training-sample construction, the Adam training loop and gradient checks.

mod adam;
mod config_file;
mod gradcheck;
mod samples;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::PreparedDocument;
use crate::model::{Head, Mode, ModelConfig, Params, SegModel};

pub use adam::{adam_step, AdamHyper, AdamState};
pub use config_file::{apply_setting, parse_settings, Setting, SETTING_KEYS};
pub use gradcheck::{
    grad_check, grad_check_classifier, relative_error, GradCheckOptions, GradCheckReport,
    TensorCheck,
};
pub use samples::{
    build_corpus_pair_samples, build_corpus_samples, build_pair_samples, build_training_samples,
    per_sentence_cap, PairSample, TrainSample, Variant,
};

/// How training windows are placed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleStrategy {
    /// Every `forward_step` sentences.
    #[default]
    Fixed,
    /// Adaptive placement driven by the reference labels.
    AdaptiveReference,
}

impl std::str::FromStr for SampleStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(SampleStrategy::Fixed),
            "adaptive_reference" | "adaptive-reference" => Ok(SampleStrategy::AdaptiveReference),
            other => Err(Error::config(format!("unknown sample strategy `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub forward_step: usize,
    pub max_sentences: usize,
    pub max_seq_len: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub sample_strategy: SampleStrategy,
    /// Context lengths for cross-segment samples.
    pub left_context: usize,
    pub right_context: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            forward_step: 10,
            max_sentences: 60,
            max_seq_len: 512,
            batch_size: 48,
            epochs: 2,
            learning_rate: 5e-5,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            sample_strategy: SampleStrategy::Fixed,
            left_context: 128,
            right_context: 128,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.forward_step == 0 {
            return Err(Error::config("forward_step must be at least 1"));
        }
        if self.max_sentences < self.forward_step {
            return Err(Error::config("max_sentences must be at least forward_step"));
        }
        if self.max_seq_len < 2 {
            return Err(Error::config(
                "max_seq_len must leave room for [CLS] and a token",
            ));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::config("batch_size and epochs must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::config(
                "learning_rate must be finite and non-negative",
            ));
        }
        let beta_ok = |b: f64| (0.0..1.0).contains(&b);
        if !beta_ok(self.adam_beta1) || !beta_ok(self.adam_beta2) || !(self.adam_eps > 0.0) {
            return Err(Error::config(
                "Adam betas must lie in [0, 1) and eps be positive",
            ));
        }
        if self.left_context == 0 || self.right_context == 0 {
            return Err(Error::config("cross-segment contexts must be non-empty"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamHyper {
        AdamHyper {
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    /// Checks that samples built with this config fit `model`.
    pub fn check_model(&self, model: &ModelConfig) -> Result<()> {
        match model.head {
            Head::Sentence if self.max_seq_len > model.max_seq_len => Err(Error::config(format!(
                "training windows of {} tokens exceed the model's {} positions",
                self.max_seq_len, model.max_seq_len
            ))),
            Head::Cls if 2 + self.left_context + self.right_context > model.max_seq_len => {
                Err(Error::config(format!(
                    "cross-segment contexts {}+{} exceed the model's {} positions",
                    self.left_context, self.right_context, model.max_seq_len
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Samples for one of the two heads.
#[derive(Clone, Debug)]
pub enum TrainData {
    Windows(Vec<TrainSample>),
    Pairs(Vec<PairSample>),
}

impl TrainData {
    /// Samples matching the model head.
    pub fn build(docs: &[PreparedDocument], head: Head, cfg: &TrainConfig) -> Self {
        match head {
            Head::Sentence => TrainData::Windows(build_corpus_samples(docs, cfg)),
            Head::Cls => TrainData::Pairs(build_corpus_pair_samples(docs, cfg)),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TrainData::Windows(s) => s.len(),
            TrainData::Pairs(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn loss_and_grad(&self, model: &SegModel, i: usize, mode: Mode) -> Result<(Params, f64)> {
        match self {
            TrainData::Windows(s) => model.loss_and_grad(&s[i].window, &s[i].labels, mode),
            TrainData::Pairs(s) => model.pair_loss_and_grad(&s[i].input, s[i].label, mode),
        }
    }

    fn eval_loss(&self, model: &SegModel, i: usize) -> Result<f64> {
        match self {
            TrainData::Windows(s) => model.loss(&s[i].window, &s[i].labels),
            TrainData::Pairs(s) => {
                let p = model.forward_pair(&s[i].input, Mode::Eval)?;
                Ok(-(if s[i].label { p } else { 1.0 - p }).ln())
            }
        }
    }
}

/// Mean eval-mode loss over all samples.
pub fn mean_loss(model: &SegModel, data: &TrainData) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::input("no samples"));
    }
    let losses: Vec<f64> = (0..data.len())
        .into_par_iter()
        .map(|i| data.eval_loss(model, i))
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Dropout seed of sample `index` in `epoch`.
fn dropout_seed(seed: u64, epoch: usize, index: usize) -> u64 {
    splitmix(splitmix(seed ^ splitmix(epoch as u64)) ^ index as u64)
}

/// Single-writer optimizer loop. Per-sample gradients may be computed in
/// parallel but are always summed in batch order.
pub struct Trainer {
    pub model: SegModel,
    cfg: TrainConfig,
    adam: AdamState,
    rng: ChaCha8Rng,
    epoch: usize,
}

impl Trainer {
    pub fn new(model: SegModel, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        cfg.check_model(&model.config)?;
        let adam = AdamState::new(&model.params);
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Trainer {
            model,
            cfg,
            adam,
            rng,
            epoch: 0,
        })
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    /// One shuffled pass; returns the mean training loss.
    pub fn run_epoch(&mut self, data: &TrainData) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::input("no training samples"));
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.rng);
        let epoch = self.epoch;
        let mut total = 0.0;
        for (b, batch) in order.chunks(self.cfg.batch_size).enumerate() {
            let model = &self.model;
            let seed = self.cfg.seed;
            let results: Vec<(Params, f64)> = batch
                .par_iter()
                .map(|&i| {
                    data.loss_and_grad(
                        model,
                        i,
                        Mode::Train {
                            seed: dropout_seed(seed, epoch, i),
                        },
                    )
                })
                .collect::<Result<_>>()?;
            let mut grads = self.model.zero_grads();
            let mut batch_loss = 0.0;
            for (g, l) in &results {
                grads.add_assign(g);
                batch_loss += l;
            }
            if !batch_loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "training loss diverged in epoch {} batch {}",
                    epoch + 1,
                    b + 1
                )));
            }
            grads.scale(1.0 / batch.len() as f64);
            adam_step(
                &mut self.model.params,
                &grads,
                &mut self.adam,
                self.cfg.learning_rate,
                self.cfg.adam(),
            )?;
            total += batch_loss;
        }
        self.epoch += 1;
        Ok(total / data.len() as f64)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub dev_losses: Vec<f64>,
    /// 1-based epoch of the returned model when a dev split chose it.
    pub best_epoch: Option<usize>,
    pub n_samples: usize,
}

/// Trains a fresh model. With `dev` the epoch of lowest dev loss wins,
/// otherwise the final parameters are returned.
pub fn train(
    train_docs: &[PreparedDocument],
    dev_docs: Option<&[PreparedDocument]>,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<(SegModel, TrainReport)> {
    if train_docs.is_empty() {
        return Err(Error::input("training corpus is empty"));
    }
    let model = SegModel::init(model_cfg.clone(), cfg.seed)?;
    let mut trainer = Trainer::new(model, cfg.clone())?;
    let data = TrainData::build(train_docs, model_cfg.head, cfg);
    let dev = dev_docs
        .filter(|d| !d.is_empty())
        .map(|d| TrainData::build(d, model_cfg.head, cfg));
    let mut report = TrainReport {
        n_samples: data.len(),
        ..Default::default()
    };
    let mut best: Option<(f64, Params)> = None;
    for e in 0..cfg.epochs {
        let loss = trainer.run_epoch(&data)?;
        log::info!("epoch {} train loss {loss:.6}", e + 1);
        report.epoch_losses.push(loss);
        if let Some(dev) = &dev {
            let dl = mean_loss(&trainer.model, dev)?;
            log::info!("epoch {} dev loss {dl:.6}", e + 1);
            report.dev_losses.push(dl);
            if best.as_ref().is_none_or(|(b, _)| dl < *b) {
                best = Some((dl, trainer.model.params.clone()));
                report.best_epoch = Some(e + 1);
            }
        }
    }
    let mut model = trainer.model;
    if let Some((_, params)) = best {
        model.params = params;
    }
    Ok((model, report))
}
