use std::ops::Range;

use crate::corpus::{Document, PhoneInventory, PhoneLexicon};
use crate::model::WindowInput;
use crate::tokenizer::{tokenize_sentence, TokenizedSentence, Vocab, CLS};

/// A lexicon with its phone-id assignment.
#[derive(Clone, Debug)]
pub struct PhoneContext {
    pub lexicon: PhoneLexicon,
    pub inventory: PhoneInventory,
}

impl PhoneContext {
    pub fn new(lexicon: PhoneLexicon) -> Self {
        let inventory = lexicon.inventory();
        PhoneContext { lexicon, inventory }
    }

    pub fn phone_vocab_size(&self) -> usize {
        self.inventory.len()
    }
}

/// A document tokenized once, ready to be cut into windows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PreparedDocument {
    pub id: String,
    pub sentences: Vec<TokenizedSentence>,
    /// Per sentence, per token: phone ids of the token's word.
    pub token_phones: Option<Vec<Vec<Vec<u32>>>>,
    pub labels: Vec<bool>,
}

impl PreparedDocument {
    pub fn new(doc: &Document, vocab: &Vocab, phones: Option<&PhoneContext>) -> Self {
        let sentences: Vec<TokenizedSentence> = doc
            .sentences()
            .iter()
            .map(|s| tokenize_sentence(s, vocab))
            .collect();
        let token_phones = phones.map(|ctx| {
            doc.sentences()
                .iter()
                .zip(&sentences)
                .map(|(s, ts)| {
                    let per_word: Vec<Vec<u32>> = s
                        .words()
                        .iter()
                        .map(|w| ctx.inventory.word_phone_ids(&ctx.lexicon, w))
                        .collect();
                    (0..ts.len())
                        .map(|t| per_word[ts.word_of(t)].clone())
                        .collect()
                })
                .collect()
        });
        PreparedDocument {
            id: doc.id().to_string(),
            sentences,
            token_phones,
            labels: doc.labels(),
        }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(TokenizedSentence::len).sum()
    }
}

/// A window together with the document sentences it covers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PackedWindow {
    pub input: WindowInput,
    pub sentences: Range<usize>,
}

impl PackedWindow {
    pub fn first(&self) -> usize {
        self.sentences.start
    }

    /// Index of the last covered sentence.
    pub fn last(&self) -> usize {
        self.sentences.end - 1
    }
}

struct Builder<'a> {
    doc: &'a PreparedDocument,
    input: WindowInput,
}

impl<'a> Builder<'a> {
    fn new(doc: &'a PreparedDocument) -> Self {
        Builder {
            doc,
            input: WindowInput {
                token_ids: vec![CLS],
                sentence_spans: Vec::new(),
                phones: doc.token_phones.as_ref().map(|_| vec![Vec::new()]),
            },
        }
    }

    fn push(&mut self, sentence: usize, n_tokens: usize) {
        let ts = &self.doc.sentences[sentence];
        let a = self.input.token_ids.len();
        self.input
            .token_ids
            .extend_from_slice(&ts.token_ids[..n_tokens]);
        self.input.sentence_spans.push((a, a + n_tokens));
        if let (Some(dst), Some(src)) = (self.input.phones.as_mut(), &self.doc.token_phones) {
            dst.extend(src[sentence][..n_tokens].iter().cloned());
        }
    }
}

/// `[CLS]` followed by whole sentences from `start` until `token_budget`
/// (which counts `[CLS]`) or `max_sentences` is reached. The sentence that
/// overflows the budget is tail-truncated and kept if one token fits.
pub fn pack_window(
    doc: &PreparedDocument,
    start: usize,
    token_budget: usize,
    max_sentences: usize,
) -> PackedWindow {
    assert!(
        start < doc.len(),
        "window start {start} beyond {} sentences",
        doc.len()
    );
    assert!(token_budget >= 2 && max_sentences >= 1);
    let mut b = Builder::new(doc);
    let mut room = token_budget - 1;
    let mut end = start;
    while end < doc.len() && end - start < max_sentences && room > 0 {
        let len = doc.sentences[end].len();
        let take = len.min(room);
        b.push(end, take);
        room -= take;
        end += 1;
        if take < len {
            break;
        }
    }
    PackedWindow {
        input: b.input,
        sentences: start..end,
    }
}

/// `n_sentences` sentences from `start`, each cut to at most `cap` tokens.
pub(crate) fn pack_capped(
    doc: &PreparedDocument,
    start: usize,
    n_sentences: usize,
    cap: usize,
) -> PackedWindow {
    assert!(cap >= 1);
    let mut b = Builder::new(doc);
    for s in start..start + n_sentences {
        b.push(s, doc.sentences[s].len().min(cap));
    }
    PackedWindow {
        input: b.input,
        sentences: start..start + n_sentences,
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// A prepared document whose sentence `i` has `lens[i]` tokens.
    pub fn doc_with_lengths(lens: &[usize]) -> PreparedDocument {
        let sentences = lens
            .iter()
            .map(|&n| TokenizedSentence {
                token_ids: (0..n).map(|t| 4 + (t % 7) as u32).collect(),
                word_spans: (0..n).map(|t| (t, t + 1)).collect(),
            })
            .collect();
        let mut labels = vec![false; lens.len()];
        *labels.last_mut().unwrap() = true;
        PreparedDocument {
            id: "fixture".into(),
            sentences,
            token_phones: None,
            labels,
        }
    }
}
