use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::expected_shapes;
use super::{ModelConfig, Params, SegModel, Tensor};
use crate::error::{Error, Result};

const FORMAT: &str = "seqseg-checkpoint-v1";

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    config: ModelConfig,
    tensors: BTreeMap<String, Tensor>,
}

pub(super) fn save(model: &SegModel, path: &Path) -> Result<()> {
    let mut tensors = BTreeMap::new();
    model.params.visit(|name, t| {
        tensors.insert(name.to_string(), t.clone());
    });
    let ckpt = Checkpoint {
        format: FORMAT.into(),
        config: model.config.clone(),
        tensors,
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer(&mut out, &ckpt)?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub(super) fn load(path: &Path) -> Result<SegModel> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let ckpt: Checkpoint = serde_json::from_reader(BufReader::new(file))?;
    if ckpt.format != FORMAT {
        return Err(Error::input(format!(
            "unsupported checkpoint format `{}`",
            ckpt.format
        )));
    }
    from_checkpoint(ckpt)
}

fn from_checkpoint(mut ckpt: Checkpoint) -> Result<SegModel> {
    ckpt.config.validate()?;
    let expected = expected_shapes(&ckpt.config);
    if ckpt.tensors.len() != expected.len() {
        return Err(Error::input(format!(
            "checkpoint has {} tensors, configuration needs {}",
            ckpt.tensors.len(),
            expected.len()
        )));
    }
    for (name, rows, cols) in &expected {
        let t = ckpt
            .tensors
            .get(name)
            .ok_or_else(|| Error::input(format!("checkpoint is missing tensor `{name}`")))?;
        if t.shape() != (*rows, *cols) || t.len() != rows * cols {
            return Err(Error::input(format!(
                "tensor `{name}` has shape {:?}, expected ({rows}, {cols})",
                t.shape()
            )));
        }
        if !t.is_finite() {
            return Err(Error::Numerical(format!(
                "tensor `{name}` holds non-finite values"
            )));
        }
    }
    // Params::init gives the right structure; overwrite every tensor.
    let mut params = Params::init(&ckpt.config, 0);
    params.visit_mut(|name, t| {
        *t = ckpt.tensors.remove(name).expect("presence checked above");
    });
    SegModel::from_params(ckpt.config, params)
}
