//! Positive-class boundary metrics, run comparison and step-size sweeps.

mod bench;
mod metrics;
mod significance;

use std::collections::HashMap;

pub use bench::{bench_sweep, BenchMetric, BenchReport, BenchRow};
pub use metrics::{doc_confusion, positive_prf, Confusion, DocPair, MetricReport};
pub use significance::{compare_runs, RunCounts, Significance, EXACT_LIMIT};

use crate::error::{Error, Result};
use crate::inference::{PreparedDocument, SegmentationResult};

fn pairs<'a>(
    results: &'a [SegmentationResult],
    docs: &'a [PreparedDocument],
) -> Result<Vec<DocPair<'a>>> {
    let by_id: HashMap<&str, &PreparedDocument> = docs.iter().map(|d| (d.id.as_str(), d)).collect();
    results
        .iter()
        .map(|r| {
            let d = by_id
                .get(r.id.as_str())
                .ok_or_else(|| Error::input(format!("no reference for document `{}`", r.id)))?;
            Ok(DocPair {
                id: &r.id,
                pred: &r.decisions,
                reference: &d.labels,
            })
        })
        .collect()
}

/// Micro-averaged metrics of segmentation results against reference labels.
pub fn score_results(
    results: &[SegmentationResult],
    docs: &[PreparedDocument],
) -> Result<MetricReport> {
    positive_prf(&pairs(results, docs)?)
}

/// Per-document counts of one run, for [`compare_runs`].
pub fn run_counts(results: &[SegmentationResult], docs: &[PreparedDocument]) -> Result<RunCounts> {
    let docs = pairs(results, docs)?
        .iter()
        .map(|p| Ok((p.id.to_string(), doc_confusion(p)?)))
        .collect::<Result<_>>()?;
    Ok(RunCounts { docs })
}
