use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Positive-class confusion counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl AddAssign for Confusion {
    fn add_assign(&mut self, o: Confusion) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl From<Confusion> for MetricReport {
    fn from(c: Confusion) -> Self {
        let precision = ratio(c.tp, c.tp + c.fp);
        let recall = ratio(c.tp, c.tp + c.fn_);
        // Harmonic mean of precision and recall, in count form.
        let f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_);
        MetricReport {
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
            precision,
            recall,
            f1,
        }
    }
}

impl MetricReport {
    pub fn confusion(&self) -> Confusion {
        Confusion {
            tp: self.tp,
            fp: self.fp,
            fn_: self.fn_,
        }
    }
}

/// Predictions and reference labels of one document.
#[derive(Clone, Copy, Debug)]
pub struct DocPair<'a> {
    pub id: &'a str,
    pub pred: &'a [bool],
    pub reference: &'a [bool],
}

/// Counts over every sentence but the last, whose boundary is trivial.
pub fn doc_confusion(p: &DocPair<'_>) -> Result<Confusion> {
    if p.pred.len() != p.reference.len() {
        return Err(Error::LengthMismatch {
            doc_id: p.id.to_string(),
            reason: format!(
                "{} predictions for {} reference labels",
                p.pred.len(),
                p.reference.len()
            ),
        });
    }
    let n = p.pred.len().saturating_sub(1);
    let mut c = Confusion::default();
    for (&y_hat, &y) in p.pred[..n].iter().zip(&p.reference[..n]) {
        match (y_hat, y) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(c)
}

/// Micro-averaged positive precision, recall and F1.
pub fn positive_prf(docs: &[DocPair<'_>]) -> Result<MetricReport> {
    let mut total = Confusion::default();
    for d in docs {
        total += doc_confusion(d)?;
    }
    Ok(total.into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair<'a>(pred: &'a [bool], reference: &'a [bool]) -> DocPair<'a> {
        DocPair {
            id: "d",
            pred,
            reference,
        }
    }

    #[test]
    fn perfect_prediction() {
        let y = [false, true, false, true];
        let r = positive_prf(&[pair(&y, &y)]).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn all_negative_degenerate() {
        let r = positive_prf(&[pair(&[false, false, false], &[false, false, true])]).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_), (0, 0, 0));
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn six_sentence_example() {
        let reference = [false, false, true, false, false, true];
        let pred = [false, false, true, false, true, false];
        let r = positive_prf(&[pair(&pred, &reference)]).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_), (1, 1, 0));
        assert_eq!(r.precision, 0.5);
        assert_eq!(r.recall, 1.0);
        assert!((r.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn mismatch_names_document() {
        let err = positive_prf(&[DocPair {
            id: "doc-7",
            pred: &[true],
            reference: &[false, true],
        }])
        .unwrap_err();
        assert!(err.to_string().contains("doc-7"), "{err}");
    }

    #[test]
    fn serializes_fn_field() {
        let r: MetricReport = Confusion {
            tp: 1,
            fp: 2,
            fn_: 3,
        }
        .into();
        let json = serde_json::to_value(r).unwrap();
        assert_eq!(json["fn"], 3);
    }

    proptest! {
        #[test]
        fn final_sentence_never_counts(mut docs in proptest::collection::vec(
            proptest::collection::vec(any::<(bool, bool)>(), 1..20), 1..6)
        ) {
            let split = |docs: &[Vec<(bool, bool)>]| -> MetricReport {
                let preds: Vec<Vec<bool>> = docs.iter().map(|d| d.iter().map(|p| p.0).collect()).collect();
                let refs: Vec<Vec<bool>> = docs.iter().map(|d| d.iter().map(|p| p.1).collect()).collect();
                let pairs: Vec<DocPair> = preds.iter().zip(&refs).map(|(p, r)| pair(p, r)).collect();
                positive_prf(&pairs).unwrap()
            };
            let before = split(&docs);
            for d in &mut docs {
                let last = d.last_mut().unwrap();
                last.0 = !last.0;
                last.1 = !last.1;
            }
            prop_assert_eq!(before, split(&docs));
            docs.reverse();
            prop_assert_eq!(before, split(&docs));
        }
    }
}
