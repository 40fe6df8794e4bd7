use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{SampleStrategy, TrainConfig};
use crate::inference::{
    adaptive_next_start, build_pair_input, pack_capped, pack_window, PreparedDocument,
};
use crate::model::{PairInput, WindowInput};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Whole sentences until the token budget runs out.
    TailTruncate,
    /// Every sentence of the window, each capped to an equal share.
    PerSentenceTruncate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSample {
    pub window: WindowInput,
    pub labels: Vec<bool>,
    pub variant: Variant,
}

/// One candidate break for the cross-segment baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct PairSample {
    pub input: PairInput,
    pub label: bool,
}

/// Per-sentence token cap for a window of `n` sentences. `n` is first
/// limited so that every sentence keeps at least one token.
pub fn per_sentence_cap(max_seq_len: usize, n: usize) -> (usize, usize) {
    let room = max_seq_len - 1;
    let n = n.min(room).max(1);
    (n, room / n)
}

fn window_starts(doc: &PreparedDocument, cfg: &TrainConfig) -> Vec<usize> {
    let n = doc.len();
    match cfg.sample_strategy {
        SampleStrategy::Fixed => (0..n).step_by(cfg.forward_step).collect(),
        SampleStrategy::AdaptiveReference => {
            // Restart after the latest reference boundary near the window end.
            let mut starts = vec![0];
            let mut a = 0;
            loop {
                let b = (a + cfg.max_sentences).min(n) - 1;
                if b + 1 == n {
                    break starts;
                }
                let scores: Vec<f64> = doc.labels[a..=b]
                    .iter()
                    .map(|&y| f64::from(u8::from(y)))
                    .collect();
                a = adaptive_next_start(a, &scores, cfg.forward_step, 0.5).max(a + 1);
                starts.push(a);
            }
        }
    }
}

/// Training windows of one document, both truncation variants, duplicates removed.
pub fn build_training_samples(doc: &PreparedDocument, cfg: &TrainConfig) -> Vec<TrainSample> {
    let mut out: Vec<TrainSample> = Vec::new();
    for start in window_starts(doc, cfg) {
        let tail = pack_window(doc, start, cfg.max_seq_len, cfg.max_sentences);
        let n = cfg.max_sentences.min(doc.len() - start);
        let (n, cap) = per_sentence_cap(cfg.max_seq_len, n);
        let capped = pack_capped(doc, start, n, cap);
        for (w, variant) in [
            (tail, Variant::TailTruncate),
            (capped, Variant::PerSentenceTruncate),
        ] {
            let labels = doc.labels[w.sentences.clone()].to_vec();
            if out
                .iter()
                .any(|s| s.window == w.input && s.labels == labels)
            {
                continue;
            }
            out.push(TrainSample {
                window: w.input,
                labels,
                variant,
            });
        }
    }
    out
}

/// Samples of every document, in document order.
pub fn build_corpus_samples(docs: &[PreparedDocument], cfg: &TrainConfig) -> Vec<TrainSample> {
    let per_doc: Vec<Vec<TrainSample>> = docs
        .par_iter()
        .map(|d| build_training_samples(d, cfg))
        .collect();
    per_doc.into_iter().flatten().collect()
}

/// One sample per non-final sentence break.
pub fn build_pair_samples(doc: &PreparedDocument, cfg: &TrainConfig) -> Vec<PairSample> {
    (0..doc.len().saturating_sub(1))
        .map(|i| PairSample {
            input: build_pair_input(doc, i, cfg.left_context, cfg.right_context),
            label: doc.labels[i],
        })
        .collect()
}

pub fn build_corpus_pair_samples(docs: &[PreparedDocument], cfg: &TrainConfig) -> Vec<PairSample> {
    let per_doc: Vec<Vec<PairSample>> = docs
        .par_iter()
        .map(|d| build_pair_samples(d, cfg))
        .collect();
    per_doc.into_iter().flatten().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::PreparedDocument;
    use crate::tokenizer::TokenizedSentence;
    use proptest::prelude::*;

    fn doc(lens: &[usize], labels: Option<&[bool]>) -> PreparedDocument {
        let sentences = lens
            .iter()
            .map(|&n| TokenizedSentence {
                token_ids: (0..n).map(|t| 4 + (t % 5) as u32).collect(),
                word_spans: (0..n).map(|t| (t, t + 1)).collect(),
            })
            .collect();
        let labels = labels.map(<[bool]>::to_vec).unwrap_or_else(|| {
            let mut l = vec![false; lens.len()];
            *l.last_mut().unwrap() = true;
            l
        });
        PreparedDocument {
            id: "d".into(),
            sentences,
            token_phones: None,
            labels,
        }
    }

    #[test]
    fn single_window_deduplicated() {
        let d = doc(&[4; 10], None);
        let s = build_training_samples(&d, &TrainConfig::default());
        // Everything fits, so both variants coincide.
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].labels.len(), 10);
    }

    #[test]
    fn window_starts_follow_forward_step() {
        let d = doc(&[4; 25], None);
        assert_eq!(window_starts(&d, &TrainConfig::default()), [0, 10, 20]);
        let s = build_training_samples(&d, &TrainConfig::default());
        let lens: Vec<usize> = s.iter().map(|s| s.labels.len()).collect();
        assert_eq!(lens, [25, 15, 5]);
    }

    #[test]
    fn per_sentence_cap_of_sixty_sentences() {
        let d = doc(&[20; 60], None);
        let s = build_training_samples(&d, &TrainConfig::default());
        let capped = s
            .iter()
            .find(|s| s.variant == Variant::PerSentenceTruncate)
            .unwrap();
        assert_eq!(capped.labels.len(), 60);
        assert!(capped
            .window
            .sentence_spans
            .iter()
            .all(|&(a, b)| b - a == 8));
        let tail = s
            .iter()
            .find(|s| s.variant == Variant::TailTruncate)
            .unwrap();
        // 511 tokens: 25 whole sentences and 11 tokens of the 26th.
        assert_eq!(tail.labels.len(), 26);
        assert_eq!(tail.window.len(), 512);
    }

    #[test]
    fn cap_keeps_one_token_per_sentence() {
        assert_eq!(per_sentence_cap(512, 60), (60, 8));
        assert_eq!(per_sentence_cap(8, 60), (7, 1));
    }

    #[test]
    fn tail_labels_follow_retained_sentences() {
        let labels = [false, true, false, false, true];
        let d = doc(&[6, 6, 6, 6, 6], Some(&labels));
        let cfg = TrainConfig {
            max_seq_len: 16,
            forward_step: 2,
            max_sentences: 4,
            ..Default::default()
        };
        for s in build_training_samples(&d, &cfg) {
            assert_eq!(s.labels.len(), s.window.sentence_spans.len());
            assert!(s.window.len() <= 16);
        }
    }

    #[test]
    fn adaptive_reference_restarts_after_boundary() {
        let mut labels = vec![false; 30];
        labels[7] = true;
        labels[17] = true;
        labels[29] = true;
        let d = doc(&[3; 30], Some(&labels));
        let cfg = TrainConfig {
            max_sentences: 10,
            forward_step: 5,
            sample_strategy: SampleStrategy::AdaptiveReference,
            ..Default::default()
        };
        // [0,9] finds 7 → 8; [8,17] finds 17 → 18; [18,27] none → 27; [27,29] ends.
        assert_eq!(window_starts(&d, &cfg), [0, 8, 18, 27]);
    }

    #[test]
    fn pair_samples_cover_breaks() {
        let labels = [false, true, false, true];
        let d = doc(&[3, 3, 3, 3], Some(&labels));
        let s = build_pair_samples(&d, &TrainConfig::default());
        assert_eq!(
            s.iter().map(|s| s.label).collect::<Vec<_>>(),
            [false, true, false]
        );
    }

    proptest! {
        #[test]
        fn samples_cover_and_respect_limits(
            lens in proptest::collection::vec(1usize..40, 1..50),
            forward in 1usize..8,
            extra in 0usize..10,
            max_len in 8usize..128,
        ) {
            let d = doc(&lens, None);
            let cfg = TrainConfig {
                forward_step: forward,
                max_sentences: forward + extra,
                max_seq_len: max_len,
                ..Default::default()
            };
            let samples = build_training_samples(&d, &cfg);
            let mut seen = vec![false; d.len()];
            for s in &samples {
                prop_assert!(s.window.len() <= cfg.max_seq_len);
                prop_assert!(s.labels.len() <= cfg.max_sentences);
                prop_assert_eq!(s.labels.len(), s.window.sentence_spans.len());
                s.window.validate().unwrap();
            }
            for a in window_starts(&d, &cfg) {
                let (n, _) = per_sentence_cap(cfg.max_seq_len, cfg.max_sentences.min(d.len() - a));
                for i in a..a + n {
                    seen[i] = true;
                }
            }
            prop_assert!(seen.iter().all(|&x| x));
        }
    }
}
