use super::{run_windows, InferenceConfig, PreparedDocument, Scorer, SegmentationResult, Strategy};
use crate::error::Result;

/// Sliding window with a constant overlap: the next window starts at
/// `last − step + 1`, and sentences before that are final.
#[derive(Clone, Copy, Debug, Default)]
pub struct FixedWindow;

impl Strategy for FixedWindow {
    fn name(&self) -> &'static str {
        "fixed"
    }

    fn segment(
        &self,
        doc: &PreparedDocument,
        scorer: &dyn Scorer,
        cfg: &InferenceConfig,
    ) -> Result<SegmentationResult> {
        run_windows(doc, scorer, cfg, |w, _| {
            (w.last() + 1).saturating_sub(cfg.step)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::scripted::ScriptedScorer;
    use crate::inference::window::fixtures::doc_with_lengths;
    use std::sync::Mutex;

    fn starts(n: usize, lens: usize, cfg: &InferenceConfig) -> (Vec<usize>, SegmentationResult) {
        let doc = doc_with_lengths(&vec![lens; n]);
        let seen = Mutex::new(Vec::new());
        let scorer = ScriptedScorer::new(|a, _| {
            let mut s = seen.lock().unwrap();
            if s.last() != Some(&a) {
                s.push(a);
            }
            0.1
        });
        let r = FixedWindow.segment(&doc, &scorer, cfg).unwrap();
        (seen.into_inner().unwrap(), r)
    }

    #[test]
    fn single_window_document() {
        let cfg = InferenceConfig::default();
        let doc = doc_with_lengths(&[4, 4, 4]);
        let scorer = ScriptedScorer::new(|_, s| if s == 1 { 0.9 } else { 0.2 });
        let r = FixedWindow.segment(&doc, &scorer, &cfg).unwrap();
        assert_eq!(r.n_windows, 1);
        assert_eq!(r.decisions, [false, true, false]);
    }

    #[test]
    fn window_starts_follow_overlap_rule() {
        let cfg = InferenceConfig {
            step: 5,
            max_window_sentences: 60,
            ..Default::default()
        };
        let (s, r) = starts(100, 3, &cfg);
        // [0,59] -> 55, [55,99] ends the document.
        assert_eq!(s, [0, 55]);
        assert_eq!(r.n_encoder_calls, 2);

        let (s, _) = starts(200, 3, &cfg);
        assert_eq!(s, [0, 55, 110, 165]);
    }

    #[test]
    fn oversized_step_is_clamped() {
        let cfg = InferenceConfig {
            step: 1000,
            max_window_sentences: 4,
            ..Default::default()
        };
        let (s, r) = starts(10, 3, &cfg);
        assert_eq!(s, (0..7).collect::<Vec<_>>());
        assert!(r.probs.iter().all(|p| p.is_finite()));
    }

    #[test]
    fn overlap_sentences_take_earliest_finalizing_window() {
        // 12 sentences, 5 per window, step 2: windows [0,4] [3,7] [6,10] [9,11].
        let cfg = InferenceConfig {
            step: 2,
            max_window_sentences: 5,
            ..Default::default()
        };
        let doc = doc_with_lengths(&[2; 12]);
        let scorer = ScriptedScorer::new(|a, _| a as f64 / 100.0);
        let r = FixedWindow.segment(&doc, &scorer, &cfg).unwrap();
        let from: Vec<usize> = r
            .probs
            .iter()
            .map(|p| (p * 100.0).round() as usize)
            .collect();
        assert_eq!(from, [0, 0, 0, 3, 3, 3, 6, 6, 6, 9, 9, 9]);
        assert_eq!(r.n_windows, 4);
    }
}
