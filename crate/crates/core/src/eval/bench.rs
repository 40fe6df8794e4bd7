use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{score_results, MetricReport};
use crate::error::{Error, Result};
use crate::inference::{
    segment_documents, InferenceConfig, PreparedDocument, Scorer, StrategyRegistry,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub strategy: String,
    /// `None` for the cross-segment baseline, which has no step.
    pub step: Option<usize>,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub n_encoder_calls_total: usize,
    pub n_windows_total: usize,
    /// Advisory; depends on the machine.
    pub wall_ms_total: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

/// Which column a series reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchMetric {
    F1,
    EncoderCalls,
    WallMs,
}

impl BenchReport {
    pub fn row(&self, strategy: &str, step: Option<usize>) -> Option<&BenchRow> {
        self.rows
            .iter()
            .find(|r| r.strategy == strategy && r.step == step)
    }

    /// `(step, value)` points of one strategy, ordered by step.
    pub fn series(&self, strategy: &str, metric: BenchMetric) -> Vec<(usize, f64)> {
        let mut pts: Vec<(usize, f64)> = self
            .rows
            .iter()
            .filter(|r| r.strategy == strategy)
            .filter_map(|r| {
                let v = match metric {
                    BenchMetric::F1 => r.f1,
                    BenchMetric::EncoderCalls => r.n_encoder_calls_total as f64,
                    BenchMetric::WallMs => r.wall_ms_total,
                };
                r.step.map(|s| (s, v))
            })
            .collect();
        pts.sort_by_key(|p| p.0);
        pts
    }

    /// Two whitespace-separated columns, one point per line.
    pub fn series_text(&self, strategy: &str, metric: BenchMetric) -> String {
        let mut out = String::new();
        for (s, v) in self.series(strategy, metric) {
            let _ = writeln!(out, "{s}\t{v}");
        }
        out
    }

    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<14} {:>5} {:>8} {:>8} {:>8} {:>10} {:>10}\n",
            "strategy", "step", "f1", "prec", "recall", "calls", "wall_ms"
        );
        for r in &self.rows {
            let step = r.step.map_or("-".to_string(), |s| s.to_string());
            let _ = writeln!(
                out,
                "{:<14} {:>5} {:>8.4} {:>8.4} {:>8.4} {:>10} {:>10.1}",
                r.strategy,
                step,
                r.f1,
                r.precision,
                r.recall,
                r.n_encoder_calls_total,
                r.wall_ms_total
            );
        }
        out
    }
}

fn bench_one(
    docs: &[PreparedDocument],
    scorer: &dyn Scorer,
    cfg: &InferenceConfig,
    registry: &StrategyRegistry,
    workers: usize,
    step: Option<usize>,
) -> Result<BenchRow> {
    let t0 = Instant::now();
    let results = segment_documents(docs, scorer, cfg, registry, workers)?;
    let wall_ms_total = t0.elapsed().as_secs_f64() * 1e3;
    let m: MetricReport = score_results(&results, docs)?;
    Ok(BenchRow {
        strategy: cfg.strategy.clone(),
        step,
        f1: m.f1,
        precision: m.precision,
        recall: m.recall,
        n_encoder_calls_total: results.iter().map(|r| r.n_encoder_calls).sum(),
        n_windows_total: results.iter().map(|r| r.n_windows).sum(),
        wall_ms_total,
    })
}

/// Fixed and adaptive windows at every step, plus the cross-segment
/// baseline once when a baseline scorer is given.
pub fn bench_sweep(
    model: &dyn Scorer,
    baseline: Option<&dyn Scorer>,
    docs: &[PreparedDocument],
    steps: &[usize],
    base: &InferenceConfig,
    registry: &StrategyRegistry,
    workers: usize,
) -> Result<BenchReport> {
    let mut uniq = steps.to_vec();
    uniq.sort_unstable();
    uniq.dedup();
    if uniq.len() != steps.len() {
        return Err(Error::config("bench steps must be distinct"));
    }
    let mut report = BenchReport::default();
    for strategy in ["fixed", "adaptive"] {
        for &step in steps {
            let cfg = InferenceConfig {
                strategy: strategy.into(),
                step,
                ..base.clone()
            };
            report
                .rows
                .push(bench_one(docs, model, &cfg, registry, workers, Some(step))?);
        }
    }
    if let Some(b) = baseline {
        let cfg = InferenceConfig {
            strategy: "cross-segment".into(),
            ..base.clone()
        };
        report
            .rows
            .push(bench_one(docs, b, &cfg, registry, workers, None)?);
    }
    Ok(report)
}
