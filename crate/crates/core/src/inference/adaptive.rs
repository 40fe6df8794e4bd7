use super::{run_windows, InferenceConfig, PreparedDocument, Scorer, SegmentationResult, Strategy};
use crate::error::Result;

/// Self-adaptive sliding window. After scoring sentences `[a, b]`, look back
/// over `[b − step + 1, b]` for predicted boundaries; the next window starts
/// right after the latest one, or at `b` when there is none.
#[derive(Clone, Copy, Debug, Default)]
pub struct AdaptiveWindow;

/// Start of the next window given the scores of a window beginning at `first`.
pub fn adaptive_next_start(first: usize, scores: &[f64], step: usize, threshold: f64) -> usize {
    let last = first + scores.len() - 1;
    let lo = first.max((last + 1).saturating_sub(step));
    (lo..=last)
        .rev()
        .find(|&i| scores[i - first] > threshold)
        .map_or(last, |i| i + 1)
}

impl Strategy for AdaptiveWindow {
    fn name(&self) -> &'static str {
        "adaptive"
    }

    fn segment(
        &self,
        doc: &PreparedDocument,
        scorer: &dyn Scorer,
        cfg: &InferenceConfig,
    ) -> Result<SegmentationResult> {
        run_windows(doc, scorer, cfg, |w, scores| {
            adaptive_next_start(w.first(), scores, cfg.step, cfg.threshold)
        })
    }
}
