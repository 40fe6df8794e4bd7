use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use seqseg_core::inference::{InferenceConfig, INFERENCE_KEYS};
use seqseg_core::model::ModelConfig;
use seqseg_core::training::{apply_setting, parse_settings, TrainConfig, SETTING_KEYS};
use seqseg_core::{Error, Result};

use crate::args::{InferFlags, ModelFlags, TrainFlags};

/// Effective configuration after defaults, the settings file and flags.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Settings {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub infer: InferenceConfig,
}

/// Flag values in settings-file form.
#[derive(Debug, Default)]
pub struct Overrides(Vec<(&'static str, String)>);

impl Overrides {
    pub fn set(&mut self, key: &'static str, value: Option<impl ToString>) {
        if let Some(v) = value {
            self.0.push((key, v.to_string()));
        }
    }

    pub fn model(&mut self, f: &ModelFlags) {
        self.set("d_model", f.d_model);
        self.set("n_layers", f.layers);
        self.set("n_heads", f.heads);
        self.set("d_ff", f.d_ff);
        self.set("max_seq_len", f.max_seq_len);
        self.set("dropout_rate", f.dropout);
        self.set("head", f.head.as_ref());
        if f.use_phone {
            self.set("use_phone", Some(true));
        }
    }

    pub fn train(&mut self, f: &TrainFlags) {
        self.set("epochs", f.epochs);
        self.set("batch_size", f.batch_size);
        self.set("learning_rate", f.lr);
        self.set("forward_step", f.forward_step);
        self.set("max_sentences", f.max_sentences);
        self.set("sample_strategy", f.sample_strategy.as_ref());
    }

    pub fn infer(&mut self, f: &InferFlags) {
        self.set("strategy", f.strategy.as_ref());
        self.set("step", f.step);
        self.set("threshold", f.threshold);
        self.set("window_tokens", f.window_tokens);
        self.set("window_sentences", f.window_sentences);
        self.set("left_context", f.left_ctx);
        self.set("right_context", f.right_ctx);
    }
}

impl Settings {
    /// Applies `key = value`; context keys feed both training and inference.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let mut known = false;
        if SETTING_KEYS.contains(&key) {
            apply_setting(&mut self.model, &mut self.train, key, value)?;
            known = true;
        }
        if INFERENCE_KEYS.contains(&key) {
            self.infer.apply_setting(key, value)?;
            known = true;
        }
        if !known {
            return Err(Error::Config(format!("unknown key `{key}`")));
        }
        Ok(())
    }

    /// `base`, then the settings file, then the flags.
    pub fn resolve(mut self, file: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.to_path_buf(),
                source,
            })?;
            for s in parse_settings(&text)? {
                self.apply(&s.key, &s.value).map_err(|e| {
                    Error::Config(format!("{} line {}: {e}", path.display(), s.line))
                })?;
            }
        }
        for (k, v) in &overrides.0 {
            self.apply(k, v)?;
        }
        Ok(self)
    }
}

/// Hex SHA-256 of the command name, its arguments and the settings.
pub fn fingerprint(command: &str, args_debug: &str, settings: &Settings) -> String {
    let mut h = Sha256::new();
    h.update(command.as_bytes());
    h.update([0]);
    h.update(args_debug.as_bytes());
    h.update([0]);
    h.update(serde_json::to_vec(settings).expect("settings serialize"));
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
