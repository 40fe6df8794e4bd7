use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ModelConfig, Tensor};
use crate::error::{Error, Result};

const INIT_STD: f64 = 0.02;

/// Weights of one pre-norm encoder block.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub ln1_gain: Tensor,
    pub ln1_bias: Tensor,
    pub wq: Tensor,
    pub bq: Tensor,
    pub wk: Tensor,
    pub bk: Tensor,
    pub wv: Tensor,
    pub bv: Tensor,
    pub wo: Tensor,
    pub bo: Tensor,
    pub ln2_gain: Tensor,
    pub ln2_bias: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl LayerParams {
    fn fields(&self) -> [(&'static str, &Tensor); 16] {
        [
            ("ln1_gain", &self.ln1_gain),
            ("ln1_bias", &self.ln1_bias),
            ("wq", &self.wq),
            ("bq", &self.bq),
            ("wk", &self.wk),
            ("bk", &self.bk),
            ("wv", &self.wv),
            ("bv", &self.bv),
            ("wo", &self.wo),
            ("bo", &self.bo),
            ("ln2_gain", &self.ln2_gain),
            ("ln2_bias", &self.ln2_bias),
            ("w1", &self.w1),
            ("b1", &self.b1),
            ("w2", &self.w2),
            ("b2", &self.b2),
        ]
    }

    fn fields_mut(&mut self) -> [(&'static str, &mut Tensor); 16] {
        let LayerParams {
            ln1_gain,
            ln1_bias,
            wq,
            bq,
            wk,
            bk,
            wv,
            bv,
            wo,
            bo,
            ln2_gain,
            ln2_bias,
            w1,
            b1,
            w2,
            b2,
        } = self;
        [
            ("ln1_gain", ln1_gain),
            ("ln1_bias", ln1_bias),
            ("wq", wq),
            ("bq", bq),
            ("wk", wk),
            ("bk", bk),
            ("wv", wv),
            ("bv", bv),
            ("wo", wo),
            ("bo", bo),
            ("ln2_gain", ln2_gain),
            ("ln2_bias", ln2_bias),
            ("w1", w1),
            ("b1", b1),
            ("w2", w2),
            ("b2", b2),
        ]
    }
}

/// Every trainable tensor. Gradients use the same type.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub token_emb: Tensor,
    pub pos_emb: Tensor,
    pub seg_emb: Tensor,
    pub phone_emb: Option<Tensor>,
    pub layers: Vec<LayerParams>,
    pub cls_weight: Tensor,
    pub cls_bias: Tensor,
}

/// Expected `(name, rows, cols)` of every tensor for `cfg`, in canonical order.
pub(crate) fn expected_shapes(cfg: &ModelConfig) -> Vec<(String, usize, usize)> {
    let d = cfg.d_model;
    let mut out = vec![
        ("token_emb".to_string(), cfg.vocab_size, d),
        ("pos_emb".to_string(), cfg.max_seq_len, d),
        ("seg_emb".to_string(), 2, d),
    ];
    if cfg.use_phone {
        out.push(("phone_emb".to_string(), cfg.phone_vocab_size, d));
    }
    for l in 0..cfg.n_layers {
        for (name, r, c) in [
            ("ln1_gain", 1, d),
            ("ln1_bias", 1, d),
            ("wq", d, d),
            ("bq", 1, d),
            ("wk", d, d),
            ("bk", 1, d),
            ("wv", d, d),
            ("bv", 1, d),
            ("wo", d, d),
            ("bo", 1, d),
            ("ln2_gain", 1, d),
            ("ln2_bias", 1, d),
            ("w1", d, cfg.d_ff),
            ("b1", 1, cfg.d_ff),
            ("w2", cfg.d_ff, d),
            ("b2", 1, d),
        ] {
            out.push((format!("layers.{l}.{name}"), r, c));
        }
    }
    out.push(("classifier.weight".to_string(), d, 2));
    out.push(("classifier.bias".to_string(), 1, 2));
    out
}

impl Params {
    pub(crate) fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let mut shapes = expected_shapes(cfg).into_iter();
        let mut next = |kind: Init| {
            let (_, r, c) = shapes
                .next()
                .expect("shape list matches construction order");
            let mut t = Tensor::zeros(r, c);
            match kind {
                Init::Normal => {
                    for v in t.data_mut() {
                        *v = loop {
                            let x: f64 = normal.sample(&mut rng);
                            if x.abs() <= 2.0 * INIT_STD {
                                break x;
                            }
                        };
                    }
                }
                Init::Zeros => {}
                Init::Ones => t.fill(1.0),
            }
            t
        };
        let token_emb = next(Init::Normal);
        let pos_emb = next(Init::Normal);
        let seg_emb = next(Init::Normal);
        let phone_emb = cfg.use_phone.then(|| next(Init::Normal));
        let layers = (0..cfg.n_layers)
            .map(|_| LayerParams {
                ln1_gain: next(Init::Ones),
                ln1_bias: next(Init::Zeros),
                wq: next(Init::Normal),
                bq: next(Init::Zeros),
                wk: next(Init::Normal),
                bk: next(Init::Zeros),
                wv: next(Init::Normal),
                bv: next(Init::Zeros),
                wo: next(Init::Normal),
                bo: next(Init::Zeros),
                ln2_gain: next(Init::Ones),
                ln2_bias: next(Init::Zeros),
                w1: next(Init::Normal),
                b1: next(Init::Zeros),
                w2: next(Init::Normal),
                b2: next(Init::Zeros),
            })
            .collect();
        let cls_weight = next(Init::Normal);
        let cls_bias = next(Init::Zeros);
        Params {
            token_emb,
            pos_emb,
            seg_emb,
            phone_emb,
            layers,
            cls_weight,
            cls_bias,
        }
    }

    /// Visits every tensor in canonical order with its checkpoint name.
    pub fn visit(&self, mut f: impl FnMut(&str, &Tensor)) {
        f("token_emb", &self.token_emb);
        f("pos_emb", &self.pos_emb);
        f("seg_emb", &self.seg_emb);
        if let Some(p) = &self.phone_emb {
            f("phone_emb", p);
        }
        for (l, layer) in self.layers.iter().enumerate() {
            for (name, t) in layer.fields() {
                f(&format!("layers.{l}.{name}"), t);
            }
        }
        f("classifier.weight", &self.cls_weight);
        f("classifier.bias", &self.cls_bias);
    }

    pub fn visit_mut(&mut self, mut f: impl FnMut(&str, &mut Tensor)) {
        f("token_emb", &mut self.token_emb);
        f("pos_emb", &mut self.pos_emb);
        f("seg_emb", &mut self.seg_emb);
        if let Some(p) = &mut self.phone_emb {
            f("phone_emb", p);
        }
        for (l, layer) in self.layers.iter_mut().enumerate() {
            for (name, t) in layer.fields_mut() {
                f(&format!("layers.{l}.{name}"), t);
            }
        }
        f("classifier.weight", &mut self.cls_weight);
        f("classifier.bias", &mut self.cls_bias);
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        self.visit_refs(&mut out);
        out
    }

    fn visit_refs<'a>(&'a self, out: &mut Vec<&'a Tensor>) {
        out.extend([&self.token_emb, &self.pos_emb, &self.seg_emb]);
        out.extend(self.phone_emb.as_ref());
        for layer in &self.layers {
            out.extend(layer.fields().into_iter().map(|(_, t)| t));
        }
        out.extend([&self.cls_weight, &self.cls_bias]);
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> =
            vec![&mut self.token_emb, &mut self.pos_emb, &mut self.seg_emb];
        out.extend(self.phone_emb.as_mut());
        for layer in &mut self.layers {
            out.extend(layer.fields_mut().into_iter().map(|(_, t)| t));
        }
        out.push(&mut self.cls_weight);
        out.push(&mut self.cls_bias);
        out
    }

    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit(|n, _| out.push(n.to_string()));
        out
    }

    pub fn zeros_like(&self) -> Params {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    pub fn add_assign(&mut self, other: &Params) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.scale(s);
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.tensors().iter().map(|t| t.squared_norm()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    pub fn check_shapes(&self, cfg: &ModelConfig) -> Result<()> {
        let expected = expected_shapes(cfg);
        let mut actual = Vec::new();
        self.visit(|n, t| actual.push((n.to_string(), t.rows(), t.cols())));
        if actual != expected {
            return Err(Error::config(
                "parameter shapes do not match the model configuration",
            ));
        }
        Ok(())
    }
}

enum Init {
    Normal,
    Zeros,
    Ones,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tiny_config;

    #[test]
    fn init_matches_expected_shapes() {
        for use_phone in [false, true] {
            let cfg = ModelConfig {
                use_phone,
                n_layers: 2,
                ..tiny_config()
            };
            let p = Params::init(&cfg, 3);
            p.check_shapes(&cfg).unwrap();
            assert_eq!(p.names().len(), expected_shapes(&cfg).len());
            assert_eq!(p.tensors().len(), p.names().len());
        }
    }

    #[test]
    fn init_distribution() {
        let cfg = tiny_config();
        let p = Params::init(&cfg, 9);
        assert!(p.token_emb.data().iter().all(|v| v.abs() <= 0.04));
        assert!(p.layers[0].ln1_gain.data().iter().all(|&v| v == 1.0));
        assert!(p.layers[0].b1.data().iter().all(|&v| v == 0.0));
        assert!(p.cls_bias.data().iter().all(|&v| v == 0.0));
        assert_eq!(p, Params::init(&cfg, 9));
    }
}
