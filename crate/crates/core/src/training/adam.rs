use crate::error::{Error, Result};
use crate::model::Params;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Params,
    pub v: Params,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &Params) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update. Parameters are left untouched when the
/// gradient holds a non-finite value.
pub fn adam_step(
    params: &mut Params,
    grads: &Params,
    state: &mut AdamState,
    lr: f64,
    h: AdamHyper,
) -> Result<()> {
    if !grads.is_finite() {
        return Err(Error::Numerical("non-finite gradient".into()));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - h.beta1.powi(t);
    let c2 = 1.0 - h.beta2.powi(t);
    let ps = params.tensors_mut();
    let gs = grads.tensors();
    let ms = state.m.tensors_mut();
    let vs = state.v.tensors_mut();
    if ps.len() != gs.len() {
        return Err(Error::input("gradient structure does not match parameters"));
    }
    for (((p, g), m), v) in ps.into_iter().zip(gs).zip(ms).zip(vs) {
        if p.shape() != g.shape() {
            return Err(Error::input("gradient shape does not match parameter"));
        }
        for (((p, &g), m), v) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *m = h.beta1 * *m + (1.0 - h.beta1) * g;
            *v = h.beta2 * *v + (1.0 - h.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + h.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{tiny_config, SegModel};

    fn setup() -> (Params, Params) {
        let m = SegModel::init(tiny_config(), 3).unwrap();
        let g = m.params.zeros_like();
        (m.params, g)
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let (mut p, g) = setup();
        let before = p.clone();
        let mut s = AdamState::new(&p);
        for _ in 0..3 {
            adam_step(&mut p, &g, &mut s, 1e-2, AdamHyper::default()).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_lr_against_sign() {
        let (mut p, mut g) = setup();
        let before = p.clone();
        let mut k = 0;
        g.visit_mut(|_, t| {
            for v in t.data_mut() {
                k += 1;
                *v = if k % 3 == 0 { -0.3 } else { 0.05 * k as f64 };
            }
        });
        let lr = 1e-3;
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &g, &mut s, lr, AdamHyper::default()).unwrap();
        let (a, b, gr) = (before.tensors(), p.tensors(), g.tensors());
        for ((a, b), gr) in a.iter().zip(&b).zip(&gr) {
            for ((&x, &y), &gv) in a.data().iter().zip(b.data()).zip(gr.data()) {
                let expected = -gv.signum() * lr;
                assert!(
                    ((y - x) - expected).abs() < lr * 1e-6,
                    "{} vs {}",
                    y - x,
                    expected
                );
            }
        }
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let (mut p, mut g) = setup();
        g.cls_bias.set(0, 1, f64::NAN);
        let before = p.clone();
        let mut s = AdamState::new(&p);
        let err = adam_step(&mut p, &g, &mut s, 1e-3, AdamHyper::default()).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
        assert_eq!(p, before);
        assert_eq!(s.t, 0);
    }

    #[test]
    fn matches_scalar_reference() {
        // Hand-rolled Adam on one coordinate over a few steps.
        let (mut p, mut g) = setup();
        let h = AdamHyper::default();
        let mut s = AdamState::new(&p);
        let (mut x, mut m, mut v) = (p.cls_bias.get(0, 0), 0.0, 0.0);
        for (i, grad) in [0.5, -0.25, 1.0, 0.125].into_iter().enumerate() {
            g.cls_bias.set(0, 0, grad);
            adam_step(&mut p, &g, &mut s, 0.01, h).unwrap();
            m = 0.9 * m + (1.0 - 0.9) * grad;
            v = 0.999 * v + (1.0 - 0.999) * grad * grad;
            let t = (i + 1) as i32;
            x -= 0.01 * (m / (1.0 - 0.9f64.powi(t)))
                / ((v / (1.0 - 0.999f64.powi(t))).sqrt() + 1e-8);
            assert!((p.cls_bias.get(0, 0) - x).abs() < 1e-15);
        }
    }
}
