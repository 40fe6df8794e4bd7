use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Confusion, MetricReport};
use crate::error::{Error, Result};

/// Per-document confusion counts of one run (one seed).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunCounts {
    pub docs: Vec<(String, Confusion)>,
}

impl RunCounts {
    pub fn micro(&self) -> MetricReport {
        let mut c = Confusion::default();
        for (_, d) in &self.docs {
            c += *d;
        }
        c.into()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub n_docs: usize,
    /// Mean over seeds of the micro F1 of each side.
    pub f1_a: f64,
    pub f1_b: f64,
    /// Mean per-document F1 difference, a − b.
    pub mean_diff: f64,
    /// Two-sided p-value of the paired sign-flip test.
    pub p_value: f64,
    /// Whether every sign assignment was enumerated.
    pub exact: bool,
}

/// Largest document count enumerated exactly.
pub const EXACT_LIMIT: usize = 20;
const MONTE_CARLO_ROUNDS: usize = 100_000;

fn per_doc_mean_f1(runs: &[RunCounts], ids: &[String]) -> Result<Vec<f64>> {
    let mut sums = vec![0.0; ids.len()];
    for run in runs {
        if run.docs.len() != ids.len() || run.docs.iter().zip(ids).any(|((id, _), want)| id != want)
        {
            return Err(Error::input("runs cover different document sets"));
        }
        for (s, (_, c)) in sums.iter_mut().zip(&run.docs) {
            *s += MetricReport::from(*c).f1;
        }
    }
    Ok(sums.into_iter().map(|s| s / runs.len() as f64).collect())
}

/// Paired permutation test over per-document F1, averaged across seeds.
pub fn compare_runs(a: &[RunCounts], b: &[RunCounts], seed: u64) -> Result<Significance> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::input(
            "compare_runs needs at least two seeds per side",
        ));
    }
    let ids: Vec<String> = a[0].docs.iter().map(|(id, _)| id.clone()).collect();
    if ids.is_empty() {
        return Err(Error::input("runs contain no documents"));
    }
    let fa = per_doc_mean_f1(a, &ids)?;
    let fb = per_doc_mean_f1(b, &ids)?;
    let diffs: Vec<f64> = fa.iter().zip(&fb).map(|(x, y)| x - y).collect();
    let n = diffs.len();
    let observed = diffs.iter().sum::<f64>().abs();
    // Relative slack so that sign patterns tying the observed sum count.
    let tol = 1e-12 * diffs.iter().map(|d| d.abs()).sum::<f64>().max(1e-300);

    let (p_value, exact) = if n <= EXACT_LIMIT {
        let mut hits = 0u64;
        for mask in 0u64..1 << n {
            let s: f64 = diffs
                .iter()
                .enumerate()
                .map(|(j, d)| if mask >> j & 1 == 1 { -d } else { *d })
                .sum();
            if s.abs() >= observed - tol {
                hits += 1;
            }
        }
        (hits as f64 / (1u64 << n) as f64, true)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut hits = 0usize;
        for _ in 0..MONTE_CARLO_ROUNDS {
            let s: f64 = diffs
                .iter()
                .map(|d| if rng.random::<bool>() { -d } else { *d })
                .sum();
            if s.abs() >= observed - tol {
                hits += 1;
            }
        }
        ((hits + 1) as f64 / (MONTE_CARLO_ROUNDS + 1) as f64, false)
    };

    let mean_micro =
        |runs: &[RunCounts]| runs.iter().map(|r| r.micro().f1).sum::<f64>() / runs.len() as f64;
    Ok(Significance {
        n_docs: n,
        f1_a: mean_micro(a),
        f1_b: mean_micro(b),
        mean_diff: diffs.iter().sum::<f64>() / n as f64,
        p_value,
        exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(counts: &[(usize, usize, usize)]) -> RunCounts {
        RunCounts {
            docs: counts
                .iter()
                .enumerate()
                .map(|(i, &(tp, fp, fn_))| (format!("d{i}"), Confusion { tp, fp, fn_ }))
                .collect(),
        }
    }

    #[test]
    fn identical_runs() {
        let r = run(&[(1, 0, 1), (2, 1, 0), (0, 0, 3)]);
        let s = compare_runs(&[r.clone(), r.clone()], &[r.clone(), r], 0).unwrap();
        assert_eq!(s.p_value, 1.0);
        assert_eq!(s.mean_diff, 0.0);
    }

    #[test]
    fn perfect_versus_zero_on_twenty_docs() {
        let good = run(&[(3, 0, 0); 20]);
        let bad = run(&[(0, 2, 3); 20]);
        let s = compare_runs(&[good.clone(), good], &[bad.clone(), bad], 0).unwrap();
        assert!(s.exact);
        assert_eq!(s.mean_diff, 1.0);
        // Only the all-plus and all-minus patterns reach the observed sum.
        assert_eq!(s.p_value, 2.0 / (1u64 << 20) as f64);
        assert!(s.p_value < 0.01);
    }

    #[test]
    fn single_seed_rejected() {
        let r = run(&[(1, 0, 0)]);
        assert!(compare_runs(&[r.clone()], &[r.clone(), r], 0).is_err());
    }

    #[test]
    fn document_sets_must_match() {
        let a = run(&[(1, 0, 0), (1, 0, 0)]);
        let b = run(&[(1, 0, 0)]);
        assert!(compare_runs(&[a.clone(), a], &[b.clone(), b], 0).is_err());
    }

    #[test]
    fn monte_carlo_above_limit_is_seeded() {
        let a = run(&[(2, 1, 0); 30]);
        let mut b = run(&[(1, 1, 1); 30]);
        b.docs[3].1 = Confusion {
            tp: 2,
            fp: 1,
            fn_: 0,
        };
        let s1 = compare_runs(&[a.clone(), a.clone()], &[b.clone(), b.clone()], 9).unwrap();
        let s2 = compare_runs(&[a.clone(), a], &[b.clone(), b], 9).unwrap();
        assert!(!s1.exact);
        assert_eq!(s1, s2);
        assert!(s1.p_value < 1e-3);
    }
}
