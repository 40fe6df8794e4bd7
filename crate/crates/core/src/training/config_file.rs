use std::str::FromStr;

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::model::{Head, ModelConfig};

/// Keys accepted in `key = value` settings files.
pub const SETTING_KEYS: &[&str] = &[
    "d_model",
    "n_layers",
    "n_heads",
    "d_ff",
    "max_seq_len",
    "dropout_rate",
    "use_phone",
    "head",
    "forward_step",
    "max_sentences",
    "batch_size",
    "epochs",
    "learning_rate",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "seed",
    "sample_strategy",
    "left_context",
    "right_context",
];

/// One `key = value` line of a settings file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Setting {
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// `key = value` lines; `#` starts a comment, blank lines are ignored.
/// Keys are not checked here since several config types share one file.
pub fn parse_settings(text: &str) -> Result<Vec<Setting>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("line {}: expected `key = value`", i + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::config(format!("line {}: empty key", i + 1)));
        }
        out.push(Setting {
            line: i + 1,
            key: k.to_string(),
            value: v.to_string(),
        });
    }
    Ok(out)
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("invalid value `{value}` for `{key}`")))
}

/// Applies one setting. `max_seq_len` sets both the model and the windows.
pub fn apply_setting(
    model: &mut ModelConfig,
    train: &mut TrainConfig,
    key: &str,
    value: &str,
) -> Result<()> {
    match key {
        "d_model" => model.d_model = parse(key, value)?,
        "n_layers" => model.n_layers = parse(key, value)?,
        "n_heads" => model.n_heads = parse(key, value)?,
        "d_ff" => model.d_ff = parse(key, value)?,
        "max_seq_len" => {
            model.max_seq_len = parse(key, value)?;
            train.max_seq_len = model.max_seq_len;
        }
        "dropout_rate" => model.dropout_rate = parse(key, value)?,
        "use_phone" => model.use_phone = parse(key, value)?,
        "head" => {
            model.head = match value {
                "sentence" => Head::Sentence,
                "cls" => Head::Cls,
                _ => return Err(Error::config(format!("invalid value `{value}` for `head`"))),
            }
        }
        "forward_step" => train.forward_step = parse(key, value)?,
        "max_sentences" => train.max_sentences = parse(key, value)?,
        "batch_size" => train.batch_size = parse(key, value)?,
        "epochs" => train.epochs = parse(key, value)?,
        "learning_rate" => train.learning_rate = parse(key, value)?,
        "adam_beta1" => train.adam_beta1 = parse(key, value)?,
        "adam_beta2" => train.adam_beta2 = parse(key, value)?,
        "adam_eps" => train.adam_eps = parse(key, value)?,
        "seed" => train.seed = parse(key, value)?,
        "sample_strategy" => train.sample_strategy = value.parse()?,
        "left_context" => train.left_context = parse(key, value)?,
        "right_context" => train.right_context = parse(key, value)?,
        _ => return Err(Error::config(format!("unknown key `{key}`"))),
    }
    Ok(())
}
