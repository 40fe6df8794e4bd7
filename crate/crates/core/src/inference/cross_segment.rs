use super::{InferenceConfig, PreparedDocument, Scorer, SegmentationResult, Strategy};
use crate::error::{Error, Result};
use crate::model::PairInput;
use crate::tokenizer::{CLS, SEP};

/// Cross-segment baseline: one encoder call per candidate break, each
/// seeing `left_context` tokens before and `right_context` tokens after it.
#[derive(Clone, Copy, Debug, Default)]
pub struct CrossSegment;

/// `[CLS] left [SEP] right` for the break after sentence `after`.
pub fn build_pair_input(
    doc: &PreparedDocument,
    after: usize,
    left: usize,
    right: usize,
) -> PairInput {
    assert!(after + 1 < doc.len(), "no break after the final sentence");
    let phones = doc.token_phones.as_ref();

    // Left context: tokens of sentences ..=after, keeping the last `left`.
    let mut left_tokens: Vec<(u32, &[u32])> = Vec::with_capacity(left);
    'outer: for s in (0..=after).rev() {
        let ids = &doc.sentences[s].token_ids;
        for t in (0..ids.len()).rev() {
            if left_tokens.len() == left {
                break 'outer;
            }
            left_tokens.push((ids[t], phones.map_or(&[][..], |p| p[s][t].as_slice())));
        }
    }
    left_tokens.reverse();

    let mut right_tokens: Vec<(u32, &[u32])> = Vec::with_capacity(right);
    'outer: for s in after + 1..doc.len() {
        let ids = &doc.sentences[s].token_ids;
        for (t, &id) in ids.iter().enumerate() {
            if right_tokens.len() == right {
                break 'outer;
            }
            right_tokens.push((id, phones.map_or(&[][..], |p| p[s][t].as_slice())));
        }
    }

    let len = 2 + left_tokens.len() + right_tokens.len();
    let mut token_ids = Vec::with_capacity(len);
    let mut segment_ids = Vec::with_capacity(len);
    let mut token_phones = Vec::with_capacity(len);
    token_ids.push(CLS);
    segment_ids.push(0);
    token_phones.push(Vec::new());
    for (id, ph) in left_tokens {
        token_ids.push(id);
        segment_ids.push(0);
        token_phones.push(ph.to_vec());
    }
    token_ids.push(SEP);
    segment_ids.push(0);
    token_phones.push(Vec::new());
    for (id, ph) in right_tokens {
        token_ids.push(id);
        segment_ids.push(1);
        token_phones.push(ph.to_vec());
    }
    PairInput {
        token_ids,
        segment_ids,
        phones: phones.map(|_| token_phones),
    }
}

impl Strategy for CrossSegment {
    fn name(&self) -> &'static str {
        "cross-segment"
    }

    fn segment(
        &self,
        doc: &PreparedDocument,
        scorer: &dyn Scorer,
        cfg: &InferenceConfig,
    ) -> Result<SegmentationResult> {
        let n = doc.len();
        if n == 0 {
            return Err(Error::EmptyDocument);
        }
        let need = 2 + cfg.left_context + cfg.right_context;
        if let Some(max) = scorer.max_tokens() {
            if need > max {
                return Err(Error::config(format!(
                    "contexts {}+{} need {need} tokens, the model accepts {max}",
                    cfg.left_context, cfg.right_context
                )));
            }
        }
        let mut probs = Vec::with_capacity(n);
        for i in 0..n - 1 {
            let input = build_pair_input(doc, i, cfg.left_context, cfg.right_context);
            probs.push(scorer.score_break(&input)?);
        }
        // The document end is a boundary by definition.
        probs.push(1.0);
        Ok(SegmentationResult::from_probs(
            &doc.id,
            probs,
            cfg.threshold,
            n - 1,
            n - 1,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::scripted::ScriptedScorer;
    use crate::inference::window::fixtures::doc_with_lengths;

    #[test]
    fn one_call_per_break() {
        let doc = doc_with_lengths(&[5; 10]);
        let scorer = ScriptedScorer::new(|_, len| if len % 2 == 0 { 0.7 } else { 0.2 });
        let r = CrossSegment
            .segment(&doc, &scorer, &InferenceConfig::default())
            .unwrap();
        assert_eq!(r.n_encoder_calls, 9);
        assert_eq!(scorer.calls.load(std::sync::atomic::Ordering::Relaxed), 9);
        assert_eq!(
            r.decisions,
            r.probs.iter().map(|&p| p > 0.5).collect::<Vec<_>>()
        );
        assert!(*r.decisions.last().unwrap());
    }

    #[test]
    fn first_break_left_context_is_first_sentence_tail() {
        let doc = doc_with_lengths(&[200, 50, 300]);
        let p = build_pair_input(&doc, 0, 128, 128);
        assert_eq!(p.token_ids[0], CLS);
        assert_eq!(p.token_ids[129], SEP);
        assert_eq!(&p.token_ids[1..129], &doc.sentences[0].token_ids[72..]);
        // Right context spans sentence 1 and the head of sentence 2.
        assert_eq!(&p.token_ids[130..180], &doc.sentences[1].token_ids[..]);
        assert_eq!(&p.token_ids[180..], &doc.sentences[2].token_ids[..78]);
        assert_eq!(p.segment_ids.iter().filter(|&&s| s == 1).count(), 128);
        assert!(p.phones.is_none());
    }

    #[test]
    fn short_contexts_near_edges() {
        let doc = doc_with_lengths(&[3, 4]);
        let p = build_pair_input(&doc, 0, 128, 128);
        assert_eq!(p.token_ids.len(), 2 + 3 + 4);
    }

    #[test]
    fn contexts_longer_than_model_rejected() {
        let cfg = crate::model::ModelConfig {
            vocab_size: 20,
            max_seq_len: 64,
            head: crate::model::Head::Cls,
            ..Default::default()
        };
        let model = crate::model::SegModel::init(cfg, 0).unwrap();
        let doc = doc_with_lengths(&[3, 4]);
        assert!(CrossSegment
            .segment(&doc, &model, &InferenceConfig::default())
            .is_err());
    }
}
