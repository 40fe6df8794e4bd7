use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::TrainSample;
use crate::error::Result;
use crate::model::SegModel;

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub epsilon: f64,
    /// Coordinates sampled per tensor (all of them when a tensor is smaller).
    pub coords_per_tensor: usize,
    pub seed: u64,
    /// Only check tensors whose name starts with this prefix.
    pub only: Option<String>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            epsilon: 1e-5,
            coords_per_tensor: 20,
            seed: 0,
            only: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub coords: usize,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub tensors: Vec<TensorCheck>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Flat indices worth checking: embedding tables only have gradient in the
/// rows the sample references.
fn candidates(name: &str, rows: usize, cols: usize, sample: &TrainSample) -> Vec<usize> {
    let w = &sample.window;
    let used_rows: Option<BTreeSet<usize>> = match name {
        "token_emb" => Some(w.token_ids.iter().map(|&t| t as usize).collect()),
        "pos_emb" => Some((0..w.len()).collect()),
        "seg_emb" => Some([0].into()),
        "phone_emb" => Some(
            w.phones
                .iter()
                .flatten()
                .flatten()
                .map(|&p| p as usize)
                .collect(),
        ),
        _ => None,
    };
    match used_rows {
        Some(set) => set
            .into_iter()
            .filter(|&r| r < rows)
            .flat_map(|r| r * cols..(r + 1) * cols)
            .collect(),
        None => (0..rows * cols).collect(),
    }
}

fn model_value(model: &SegModel, name: &str, i: usize) -> f64 {
    let mut v = 0.0;
    model.params.visit(|n, t| {
        if n == name {
            v = t.data()[i];
        }
    });
    v
}

/// Compares the analytic gradient against central differences in eval mode.
pub fn grad_check(
    model: &SegModel,
    s: &TrainSample,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let (grads, _) = model.backward(&s.window, &s.labels)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut plan: Vec<(String, Vec<usize>)> = Vec::new();
    model.params.visit(|name, t| {
        if opts.only.as_deref().is_some_and(|p| !name.starts_with(p)) {
            return;
        }
        let cand = candidates(name, t.rows(), t.cols(), s);
        let picked = if cand.len() <= opts.coords_per_tensor {
            cand
        } else {
            sample(&mut rng, cand.len(), opts.coords_per_tensor)
                .into_iter()
                .map(|i| cand[i])
                .collect()
        };
        plan.push((name.to_string(), picked));
    });

    let mut probe = model.clone();
    let mut tensors = Vec::with_capacity(plan.len());
    for (name, coords) in plan {
        let mut analytic = Vec::new();
        grads.visit(|n, t| {
            if n == name {
                analytic = coords.iter().map(|&i| t.data()[i]).collect();
            }
        });
        let mut worst: f64 = 0.0;
        for (&i, &a) in coords.iter().zip(&analytic) {
            let base = model_value(model, &name, i);
            let set = |probe: &mut SegModel, v: f64| {
                probe.params.visit_mut(|n, t| {
                    if n == name {
                        t.data_mut()[i] = v;
                    }
                })
            };
            set(&mut probe, base + opts.epsilon);
            let up = probe.loss(&s.window, &s.labels)?;
            set(&mut probe, base - opts.epsilon);
            let down = probe.loss(&s.window, &s.labels)?;
            set(&mut probe, base);
            let numeric = (up - down) / (2.0 * opts.epsilon);
            worst = worst.max(relative_error(a, numeric));
        }
        tensors.push(TensorCheck {
            name,
            coords: coords.len(),
            max_rel_error: worst,
        });
    }
    let max_rel_error = tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        max_rel_error,
        tensors,
    })
}

/// Gradient check of the classifier alone, the encoder held fixed.
pub fn grad_check_classifier(
    model: &SegModel,
    s: &TrainSample,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let opts = GradCheckOptions {
        only: Some("classifier.".into()),
        ..opts.clone()
    };
    grad_check(model, s, &opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{tiny_config, WindowInput};
    use crate::training::Variant;

    fn sample() -> TrainSample {
        TrainSample {
            window: WindowInput {
                token_ids: vec![2, 4, 5, 6, 7, 8, 9, 10],
                sentence_spans: vec![(1, 3), (3, 5), (5, 8)],
                phones: Some(vec![
                    vec![],
                    vec![0, 1],
                    vec![0, 1],
                    vec![2],
                    vec![3],
                    vec![4, 1],
                    vec![4, 1],
                    vec![2],
                ]),
            },
            labels: vec![false, true, true],
            variant: Variant::TailTruncate,
        }
    }

    fn model() -> SegModel {
        let mut cfg = tiny_config();
        cfg.use_phone = true;
        SegModel::init(cfg, 11).unwrap()
    }

    #[test]
    fn full_gradient_matches_finite_differences() {
        let r = grad_check(&model(), &sample(), &GradCheckOptions::default()).unwrap();
        assert!(r.max_rel_error < 1e-4, "{:?}", r);
        assert!(r.tensors.iter().all(|t| t.coords >= 2));
        let emb = r.tensors.iter().find(|t| t.name == "layers.0.wq").unwrap();
        assert_eq!(emb.coords, 20);
    }

    #[test]
    fn epsilon_choice_is_stable() {
        let m = model();
        let a = grad_check(&m, &sample(), &GradCheckOptions::default()).unwrap();
        let b = grad_check(
            &m,
            &sample(),
            &GradCheckOptions {
                epsilon: 1e-6,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(
            a.max_rel_error < 1e-4 && b.max_rel_error < 1e-3,
            "{} {}",
            a.max_rel_error,
            b.max_rel_error
        );
    }

    #[test]
    fn classifier_alone_is_tight() {
        let r = grad_check_classifier(&model(), &sample(), &GradCheckOptions::default()).unwrap();
        assert_eq!(r.tensors.len(), 2);
        assert!(r.max_rel_error < 1e-6, "{:?}", r);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-9, 2e-9) - 1e-3).abs() < 1e-15);
        assert!((relative_error(1.0, 0.5) - 0.5).abs() < 1e-15);
    }
}
