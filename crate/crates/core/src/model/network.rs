//! Forward and exact backward passes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::dot;
use super::{LayerParams, PairInput, Params, SegModel, SentenceProbs, Tensor, WindowInput};
use crate::error::{Error, Result};
use crate::tokenizer::PAD;

const LN_EPS: f64 = 1e-5;

/// Evaluation is deterministic; training draws dropout masks from `seed`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Eval,
    Train { seed: u64 },
}

/// Borrowed view of one encoder input.
#[derive(Clone, Copy)]
pub(crate) struct SeqRef<'a> {
    pub tokens: &'a [u32],
    pub segments: Option<&'a [u8]>,
    pub phones: Option<&'a [Vec<u32>]>,
}

impl<'a> From<&'a WindowInput> for SeqRef<'a> {
    fn from(w: &'a WindowInput) -> Self {
        SeqRef {
            tokens: &w.token_ids,
            segments: None,
            phones: w.phones.as_deref(),
        }
    }
}

impl<'a> From<&'a PairInput> for SeqRef<'a> {
    fn from(p: &'a PairInput) -> Self {
        SeqRef {
            tokens: &p.token_ids,
            segments: Some(&p.segment_ids),
            phones: p.phones.as_deref(),
        }
    }
}

struct Dropout {
    rng: ChaCha8Rng,
    keep: f64,
}

impl Dropout {
    fn new(rate: f64, mode: Mode) -> Option<Self> {
        match mode {
            Mode::Train { seed } if rate > 0.0 => Some(Dropout {
                rng: ChaCha8Rng::seed_from_u64(seed),
                keep: 1.0 - rate,
            }),
            _ => None,
        }
    }

    /// Applies inverted dropout in place and returns the multipliers.
    fn apply(&mut self, t: &mut Tensor) -> Vec<f64> {
        let scale = 1.0 / self.keep;
        let mask: Vec<f64> = (0..t.len())
            .map(|_| {
                if self.rng.random::<f64>() < self.keep {
                    scale
                } else {
                    0.0
                }
            })
            .collect();
        for (v, m) in t.data_mut().iter_mut().zip(&mask) {
            *v *= m;
        }
        mask
    }
}

fn apply_mask(t: &mut Tensor, mask: &Option<Vec<f64>>) {
    if let Some(m) = mask {
        for (v, s) in t.data_mut().iter_mut().zip(m) {
            *v *= s;
        }
    }
}

struct LnTrace {
    xhat: Tensor,
    inv_std: Vec<f64>,
}

fn layer_norm(x: &Tensor, gain: &Tensor, bias: &Tensor) -> (Tensor, LnTrace) {
    let (rows, cols) = x.shape();
    let mut xhat = Tensor::zeros(rows, cols);
    let mut out = Tensor::zeros(rows, cols);
    let mut inv_std = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / cols as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / cols as f64;
        let is = 1.0 / (var + LN_EPS).sqrt();
        inv_std.push(is);
        let xh = xhat.row_mut(r);
        for (h, &v) in xh.iter_mut().zip(row) {
            *h = (v - mean) * is;
        }
        let o = out.row_mut(r);
        for c in 0..cols {
            o[c] = xhat.get(r, c) * gain.data()[c] + bias.data()[c];
        }
    }
    (out, LnTrace { xhat, inv_std })
}

fn layer_norm_backward(
    dy: &Tensor,
    tr: &LnTrace,
    gain: &Tensor,
    dgain: &mut Tensor,
    dbias: &mut Tensor,
) -> Tensor {
    let (rows, cols) = dy.shape();
    let n = cols as f64;
    let mut dx = Tensor::zeros(rows, cols);
    let mut dxhat = vec![0.0; cols];
    for r in 0..rows {
        let dyr = dy.row(r);
        let xh = tr.xhat.row(r);
        for c in 0..cols {
            dgain.data_mut()[c] += dyr[c] * xh[c];
            dbias.data_mut()[c] += dyr[c];
            dxhat[c] = dyr[c] * gain.data()[c];
        }
        let mean_d = dxhat.iter().sum::<f64>() / n;
        let mean_dx = dot(&dxhat, xh) / n;
        let is = tr.inv_std[r];
        for (c, o) in dx.row_mut(r).iter_mut().enumerate() {
            *o = is * (dxhat[c] - mean_d - xh[c] * mean_dx);
        }
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

fn linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let mut y = x.matmul(w);
    y.add_row_broadcast(b);
    y
}

/// Gradient of `y = x w + b` given `dy`; returns `dx`.
fn linear_backward(
    x: &Tensor,
    w: &Tensor,
    dy: &Tensor,
    dw: &mut Tensor,
    db: &mut Tensor,
) -> Tensor {
    x.matmul_tn_into(dy, dw);
    dy.sum_rows_into(db);
    dy.matmul_nt(w)
}

struct LayerTrace {
    ln1: LnTrace,
    a: Tensor,
    q: Tensor,
    k: Tensor,
    v: Tensor,
    attn: Vec<Tensor>,
    ctx: Tensor,
    drop_att: Option<Vec<f64>>,
    ln2: LnTrace,
    b: Tensor,
    pre: Tensor,
    act: Tensor,
    drop_ff: Option<Vec<f64>>,
}

/// Masked multi-head scaled dot-product attention. Keys with `valid = false`
/// receive zero weight.
fn attention(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    valid: &[bool],
    n_heads: usize,
) -> (Tensor, Vec<Tensor>) {
    let (len, d) = q.shape();
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut ctx = Tensor::zeros(len, d);
    let mut probs = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let cols = h * dh..(h + 1) * dh;
        let mut p = Tensor::zeros(len, len);
        for i in 0..len {
            let qi = &q.row(i)[cols.clone()];
            let row = p.row_mut(i);
            let mut max = f64::NEG_INFINITY;
            for j in 0..len {
                if valid[j] {
                    let s = scale * dot(qi, &k.row(j)[cols.clone()]);
                    row[j] = s;
                    max = max.max(s);
                }
            }
            let mut z = 0.0;
            for j in 0..len {
                if valid[j] {
                    row[j] = (row[j] - max).exp();
                    z += row[j];
                }
            }
            if z > 0.0 {
                for x in row.iter_mut() {
                    *x /= z;
                }
            }
        }
        for i in 0..len {
            for j in 0..len {
                let pij = p.get(i, j);
                if pij == 0.0 {
                    continue;
                }
                let vj = &v.row(j)[cols.clone()];
                let out = &mut ctx.row_mut(i)[cols.clone()];
                for (o, &x) in out.iter_mut().zip(vj) {
                    *o += pij * x;
                }
            }
        }
        probs.push(p);
    }
    (ctx, probs)
}

fn attention_backward(
    dctx: &Tensor,
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    probs: &[Tensor],
) -> (Tensor, Tensor, Tensor) {
    let (len, d) = q.shape();
    let n_heads = probs.len();
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut dq = Tensor::zeros(len, d);
    let mut dk = Tensor::zeros(len, d);
    let mut dv = Tensor::zeros(len, d);
    let mut dp = vec![0.0; len];
    for (h, p) in probs.iter().enumerate() {
        let cols = h * dh..(h + 1) * dh;
        for i in 0..len {
            let doi = &dctx.row(i)[cols.clone()];
            let pi = p.row(i);
            for j in 0..len {
                dp[j] = if pi[j] == 0.0 {
                    0.0
                } else {
                    dot(doi, &v.row(j)[cols.clone()])
                };
                if pi[j] != 0.0 {
                    let dvj = &mut dv.row_mut(j)[cols.clone()];
                    for (g, &x) in dvj.iter_mut().zip(doi) {
                        *g += pi[j] * x;
                    }
                }
            }
            let inner = dot(pi, &dp);
            for j in 0..len {
                if pi[j] == 0.0 {
                    continue;
                }
                let ds = pi[j] * (dp[j] - inner) * scale;
                let kj = &k.row(j)[cols.clone()];
                let dqi = &mut dq.row_mut(i)[cols.clone()];
                for (g, &x) in dqi.iter_mut().zip(kj) {
                    *g += ds * x;
                }
                let qi = &q.row(i)[cols.clone()];
                let dkj = &mut dk.row_mut(j)[cols.clone()];
                for (g, &x) in dkj.iter_mut().zip(qi) {
                    *g += ds * x;
                }
            }
        }
    }
    (dq, dk, dv)
}

fn layer_forward(
    p: &LayerParams,
    x: &mut Tensor,
    valid: &[bool],
    n_heads: usize,
    dropout: &mut Option<Dropout>,
) -> LayerTrace {
    let (a, ln1) = layer_norm(x, &p.ln1_gain, &p.ln1_bias);
    let q = linear(&a, &p.wq, &p.bq);
    let k = linear(&a, &p.wk, &p.bk);
    let v = linear(&a, &p.wv, &p.bv);
    let (ctx, attn) = attention(&q, &k, &v, valid, n_heads);
    let mut att = linear(&ctx, &p.wo, &p.bo);
    let drop_att = dropout.as_mut().map(|d| d.apply(&mut att));
    x.add_assign(&att);

    let (b, ln2) = layer_norm(x, &p.ln2_gain, &p.ln2_bias);
    let pre = linear(&b, &p.w1, &p.b1);
    let mut act = pre.clone();
    for val in act.data_mut() {
        *val = gelu(*val);
    }
    let mut ff = linear(&act, &p.w2, &p.b2);
    let drop_ff = dropout.as_mut().map(|d| d.apply(&mut ff));
    x.add_assign(&ff);

    LayerTrace {
        ln1,
        a,
        q,
        k,
        v,
        attn,
        ctx,
        drop_att,
        ln2,
        b,
        pre,
        act,
        drop_ff,
    }
}

/// Backpropagates through one block; `dx` enters as the gradient of the
/// block output and leaves as the gradient of its input.
fn layer_backward(p: &LayerParams, g: &mut LayerParams, tr: &LayerTrace, dx: &mut Tensor) {
    let mut dff = dx.clone();
    apply_mask(&mut dff, &tr.drop_ff);
    let mut dact = linear_backward(&tr.act, &p.w2, &dff, &mut g.w2, &mut g.b2);
    for (d, &x) in dact.data_mut().iter_mut().zip(tr.pre.data()) {
        *d *= gelu_grad(x);
    }
    let db = linear_backward(&tr.b, &p.w1, &dact, &mut g.w1, &mut g.b1);
    dx.add_assign(&layer_norm_backward(
        &db,
        &tr.ln2,
        &p.ln2_gain,
        &mut g.ln2_gain,
        &mut g.ln2_bias,
    ));

    let mut datt = dx.clone();
    apply_mask(&mut datt, &tr.drop_att);
    let dctx = linear_backward(&tr.ctx, &p.wo, &datt, &mut g.wo, &mut g.bo);
    let (dq, dk, dv) = attention_backward(&dctx, &tr.q, &tr.k, &tr.v, &tr.attn);
    let mut da = linear_backward(&tr.a, &p.wq, &dq, &mut g.wq, &mut g.bq);
    da.add_assign(&linear_backward(&tr.a, &p.wk, &dk, &mut g.wk, &mut g.bk));
    da.add_assign(&linear_backward(&tr.a, &p.wv, &dv, &mut g.wv, &mut g.bv));
    dx.add_assign(&layer_norm_backward(
        &da,
        &tr.ln1,
        &p.ln1_gain,
        &mut g.ln1_gain,
        &mut g.ln1_bias,
    ));
}

/// Mean of the hidden rows inside each span.
pub fn pool_sentences(h: &Tensor, spans: &[(usize, usize)]) -> Result<Tensor> {
    let mut out = Tensor::zeros(spans.len(), h.cols());
    for (m, &(a, b)) in spans.iter().enumerate() {
        if b <= a || b > h.rows() {
            return Err(Error::input(format!(
                "invalid span ({a}, {b}) for {} rows",
                h.rows()
            )));
        }
        let inv = 1.0 / (b - a) as f64;
        let dst = out.row_mut(m);
        for t in a..b {
            for (o, &v) in dst.iter_mut().zip(h.row(t)) {
                *o += v;
            }
        }
        for o in dst.iter_mut() {
            *o *= inv;
        }
    }
    Ok(out)
}

fn softmax2(z: [f64; 2]) -> [f64; 2] {
    let m = z[0].max(z[1]);
    let e0 = (z[0] - m).exp();
    let e1 = (z[1] - m).exp();
    let s = e0 + e1;
    [e0 / s, e1 / s]
}

struct Trace {
    drop_emb: Option<Vec<f64>>,
    layers: Vec<LayerTrace>,
    pooled: Tensor,
    probs: Vec<[f64; 2]>,
    logits: Vec<[f64; 2]>,
}

impl SegModel {
    fn check_ids(&self, seq: SeqRef<'_>) -> Result<()> {
        let cfg = &self.config;
        if seq.tokens.is_empty() {
            return Err(Error::input("empty encoder input"));
        }
        if seq.tokens.len() > cfg.max_seq_len {
            return Err(Error::input(format!(
                "input of {} tokens exceeds max_seq_len {}",
                seq.tokens.len(),
                cfg.max_seq_len
            )));
        }
        if let Some(&bad) = seq.tokens.iter().find(|&&t| t as usize >= cfg.vocab_size) {
            return Err(Error::input(format!("token id {bad} out of range")));
        }
        if let Some(segs) = seq.segments {
            if segs.len() != seq.tokens.len() || segs.iter().any(|&s| s > 1) {
                return Err(Error::input("invalid segment ids"));
            }
        }
        if let Some(phones) = seq.phones {
            if phones.len() != seq.tokens.len() {
                return Err(Error::input("phone plan length differs from token count"));
            }
            if cfg.use_phone {
                let bad = phones
                    .iter()
                    .flatten()
                    .find(|&&p| p as usize >= cfg.phone_vocab_size);
                if let Some(bad) = bad {
                    return Err(Error::input(format!("phone id {bad} out of range")));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn embed(&self, seq: SeqRef<'_>) -> Result<Tensor> {
        self.check_ids(seq)?;
        let p = &self.params;
        let d = self.config.d_model;
        let mut x = Tensor::zeros(seq.tokens.len(), d);
        for (t, &id) in seq.tokens.iter().enumerate() {
            let seg = seq.segments.map_or(0, |s| s[t] as usize);
            let row = x.row_mut(t);
            for c in 0..d {
                row[c] =
                    p.token_emb.get(id as usize, c) + p.pos_emb.get(t, c) + p.seg_emb.get(seg, c);
            }
            if let (Some(table), Some(phones)) = (&p.phone_emb, seq.phones) {
                let ids = &phones[t];
                if !ids.is_empty() {
                    let inv = 1.0 / ids.len() as f64;
                    for &ph in ids {
                        for (r, &e) in row.iter_mut().zip(table.row(ph as usize)) {
                            *r += inv * e;
                        }
                    }
                }
            }
        }
        Ok(x)
    }

    /// Input representation of a window: token + position + segment
    /// embeddings plus the mean phone embedding of each token's word.
    pub fn embed_input(&self, w: &WindowInput) -> Result<Tensor> {
        w.validate()?;
        self.embed(w.into())
    }

    /// Runs the encoder stack. `valid[t] = false` marks padding that no
    /// position may attend to.
    pub fn encode(&self, x: Tensor, valid: &[bool], mode: Mode) -> Result<Tensor> {
        let mut dropout = Dropout::new(self.config.dropout_rate, mode);
        let mut x = x;
        for layer in &self.params.layers {
            layer_forward(layer, &mut x, valid, self.config.n_heads, &mut dropout);
        }
        if !x.is_finite() {
            return Err(Error::Numerical("non-finite encoder state".into()));
        }
        Ok(x)
    }

    pub fn classify(&self, pooled: &Tensor) -> SentenceProbs {
        SentenceProbs {
            probs: self
                .logits(pooled)
                .into_iter()
                .map(|z| softmax2(z)[1])
                .collect(),
        }
    }

    fn logits(&self, pooled: &Tensor) -> Vec<[f64; 2]> {
        let z = linear(pooled, &self.params.cls_weight, &self.params.cls_bias);
        (0..z.rows()).map(|r| [z.get(r, 0), z.get(r, 1)]).collect()
    }

    fn trace(&self, seq: SeqRef<'_>, spans: &[(usize, usize)], mode: Mode) -> Result<Trace> {
        let mut x = self.embed(seq)?;
        let mut dropout = Dropout::new(self.config.dropout_rate, mode);
        let drop_emb = dropout.as_mut().map(|d| d.apply(&mut x));
        let valid: Vec<bool> = seq.tokens.iter().map(|&t| t != PAD).collect();
        let layers = self
            .params
            .layers
            .iter()
            .map(|l| layer_forward(l, &mut x, &valid, self.config.n_heads, &mut dropout))
            .collect();
        if !x.is_finite() {
            return Err(Error::Numerical("non-finite encoder state".into()));
        }
        let pooled = pool_sentences(&x, spans)?;
        let logits = self.logits(&pooled);
        if logits.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite classifier logits".into()));
        }
        let probs = logits.iter().map(|&z| softmax2(z)).collect();
        Ok(Trace {
            drop_emb,
            layers,
            pooled,
            probs,
            logits,
        })
    }

    fn grad_from_trace(
        &self,
        seq: SeqRef<'_>,
        spans: &[(usize, usize)],
        labels: &[bool],
        tr: &Trace,
    ) -> (Params, f64) {
        let p = &self.params;
        let mut g = p.zeros_like();
        let n = labels.len() as f64;
        let mut loss = 0.0;
        let mut dlogits = Tensor::zeros(labels.len(), 2);
        for (m, &y) in labels.iter().enumerate() {
            let z = tr.logits[m];
            let mx = z[0].max(z[1]);
            let lse = mx + ((z[0] - mx).exp() + (z[1] - mx).exp()).ln();
            loss -= z[y as usize] - lse;
            let probs = tr.probs[m];
            dlogits.set(m, 0, (probs[0] - if y { 0.0 } else { 1.0 }) / n);
            dlogits.set(m, 1, (probs[1] - if y { 1.0 } else { 0.0 }) / n);
        }
        loss /= n;

        let dpooled = linear_backward(
            &tr.pooled,
            &p.cls_weight,
            &dlogits,
            &mut g.cls_weight,
            &mut g.cls_bias,
        );
        let mut dx = Tensor::zeros(seq.tokens.len(), self.config.d_model);
        for (m, &(a, b)) in spans.iter().enumerate() {
            let inv = 1.0 / (b - a) as f64;
            for t in a..b {
                for (d, &s) in dx.row_mut(t).iter_mut().zip(dpooled.row(m)) {
                    *d += inv * s;
                }
            }
        }
        for (l, layer_trace) in tr.layers.iter().enumerate().rev() {
            layer_backward(&p.layers[l], &mut g.layers[l], layer_trace, &mut dx);
        }
        apply_mask(&mut dx, &tr.drop_emb);

        for (t, &id) in seq.tokens.iter().enumerate() {
            let row = dx.row(t);
            let seg = seq.segments.map_or(0, |s| s[t] as usize);
            for (dst, &v) in g.token_emb.row_mut(id as usize).iter_mut().zip(row) {
                *dst += v;
            }
            for (dst, &v) in g.pos_emb.row_mut(t).iter_mut().zip(row) {
                *dst += v;
            }
            for (dst, &v) in g.seg_emb.row_mut(seg).iter_mut().zip(row) {
                *dst += v;
            }
            if let (Some(table), Some(phones)) = (g.phone_emb.as_mut(), seq.phones) {
                let ids = &phones[t];
                let inv = 1.0 / ids.len().max(1) as f64;
                for &ph in ids {
                    for (dst, &v) in table.row_mut(ph as usize).iter_mut().zip(row) {
                        *dst += inv * v;
                    }
                }
            }
        }
        (g, loss)
    }

    /// Boundary probability for every sentence of the window.
    pub fn forward(&self, w: &WindowInput, mode: Mode) -> Result<SentenceProbs> {
        w.validate()?;
        let tr = self.trace(w.into(), &w.sentence_spans, mode)?;
        Ok(SentenceProbs {
            probs: tr.probs.iter().map(|p| p[1]).collect(),
        })
    }

    /// Boundary probability of a cross-segment input, read from `[CLS]`.
    pub fn forward_pair(&self, p: &PairInput, mode: Mode) -> Result<f64> {
        let tr = self.trace(p.into(), &[(0, 1)], mode)?;
        Ok(tr.probs[0][1])
    }

    /// Mean cross-entropy over sentences and its exact gradient, dropout off.
    pub fn backward(&self, w: &WindowInput, labels: &[bool]) -> Result<(Params, f64)> {
        self.loss_and_grad(w, labels, Mode::Eval)
    }

    pub fn loss_and_grad(
        &self,
        w: &WindowInput,
        labels: &[bool],
        mode: Mode,
    ) -> Result<(Params, f64)> {
        w.validate()?;
        if labels.len() != w.sentence_spans.len() {
            return Err(Error::input(format!(
                "{} labels for {} sentences",
                labels.len(),
                w.sentence_spans.len()
            )));
        }
        let tr = self.trace(w.into(), &w.sentence_spans, mode)?;
        Ok(self.grad_from_trace(w.into(), &w.sentence_spans, labels, &tr))
    }

    pub fn pair_loss_and_grad(
        &self,
        p: &PairInput,
        label: bool,
        mode: Mode,
    ) -> Result<(Params, f64)> {
        let tr = self.trace(p.into(), &[(0, 1)], mode)?;
        Ok(self.grad_from_trace(p.into(), &[(0, 1)], &[label], &tr))
    }

    /// Eval-mode loss only; the finite-difference oracle uses this.
    pub fn loss(&self, w: &WindowInput, labels: &[bool]) -> Result<f64> {
        let probs = self.forward(w, Mode::Eval)?.probs;
        Ok(-probs
            .iter()
            .zip(labels)
            .map(|(&p, &y)| if y { p.ln() } else { (1.0 - p).ln() })
            .sum::<f64>()
            / labels.len() as f64)
    }
}
