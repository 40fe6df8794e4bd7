//! Subword vocabulary and greedy longest-match tokenization.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use crate::corpus::{Corpus, Sentence};
use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const CLS: u32 = 2;
pub const SEP: u32 = 3;

pub const SPECIALS: [&str; 4] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"];
pub const CONTINUATION: &str = "##";

/// Longest n-gram (in characters) considered for continuation pieces.
const MAX_NGRAM: usize = 8;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    id_of: HashMap<String, u32>,
    tokens: Vec<String>,
    max_piece_chars: usize,
}

impl Vocab {
    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < SPECIALS.len() || tokens[..4] != SPECIALS {
            return Err(Error::input(format!(
                "vocabulary must start with {}",
                SPECIALS.join(", ")
            )));
        }
        let mut id_of = HashMap::with_capacity(tokens.len());
        let mut max_piece_chars = 1;
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t == CONTINUATION {
                return Err(Error::input(format!("empty token at id {i}")));
            }
            if id_of.insert(t.clone(), i as u32).is_some() {
                return Err(Error::input(format!("duplicate token `{t}`")));
            }
            if i >= SPECIALS.len() {
                let n = t.strip_prefix(CONTINUATION).unwrap_or(t).chars().count();
                max_piece_chars = max_piece_chars.max(n);
            }
        }
        Ok(Vocab {
            id_of,
            tokens,
            max_piece_chars,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.id_of.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tokens(text.lines().map(String::from).collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.tokens.join("\n");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Builds a vocabulary from the specials, every character in the corpus,
/// and the most frequent whole words and continuation n-grams. Frequency
/// ties are broken lexicographically.
pub fn build_vocab(corpus: &Corpus, max_size: usize) -> Result<Vocab> {
    let mut word_counts: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in corpus.documents() {
        for s in doc.sentences() {
            for w in s.words() {
                *word_counts.entry(w).or_default() += 1;
            }
        }
    }
    if word_counts.is_empty() {
        return Err(Error::input(
            "cannot build a vocabulary from an empty corpus",
        ));
    }

    let chars: BTreeSet<char> = word_counts.keys().flat_map(|w| w.chars()).collect();
    if max_size < 5 + chars.len() {
        return Err(Error::config(format!(
            "max_size {max_size} is below the {} required for {} distinct characters",
            5 + chars.len(),
            chars.len()
        )));
    }

    let mut candidates: HashMap<String, usize> = HashMap::new();
    for (&word, &count) in &word_counts {
        let cs: Vec<char> = word.chars().collect();
        if cs.len() > 1 {
            *candidates.entry(word.to_owned()).or_default() += count;
        }
        for i in 1..cs.len() {
            for j in i + 1..=cs.len().min(i + MAX_NGRAM) {
                let piece: String = cs[i..j].iter().collect();
                *candidates
                    .entry(format!("{CONTINUATION}{piece}"))
                    .or_default() += count;
            }
        }
    }
    let mut ranked: Vec<(String, usize)> = candidates.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

    let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
    tokens.extend(chars.iter().map(|c| c.to_string()));
    let room = max_size - tokens.len();
    tokens.extend(ranked.into_iter().take(room).map(|(t, _)| t));
    Vocab::from_tokens(tokens)
}

/// Greedy longest-match from the left; pieces after the first carry the
/// `##` prefix. A word with any unmatched position becomes a single UNK.
pub fn tokenize_word(word: &str, vocab: &Vocab) -> Vec<u32> {
    let cs: Vec<char> = word.chars().collect();
    let mut ids = Vec::new();
    let mut i = 0;
    let mut buf = String::new();
    while i < cs.len() {
        let mut matched = None;
        for end in (i + 1..=cs.len().min(i + vocab.max_piece_chars)).rev() {
            buf.clear();
            if i > 0 {
                buf.push_str(CONTINUATION);
            }
            buf.extend(&cs[i..end]);
            if let Some(id) = vocab.id(&buf) {
                matched = Some((id, end));
                break;
            }
        }
        match matched {
            Some((id, end)) => {
                ids.push(id);
                i = end;
            }
            None => return vec![UNK],
        }
    }
    ids
}

/// A sentence's token ids with the half-open token range of every word.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenizedSentence {
    pub token_ids: Vec<u32>,
    pub word_spans: Vec<(usize, usize)>,
}

impl TokenizedSentence {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Index of the word that token `t` belongs to.
    pub fn word_of(&self, t: usize) -> usize {
        self.word_spans.partition_point(|&(_, end)| end <= t)
    }
}

pub fn tokenize_sentence(sentence: &Sentence, vocab: &Vocab) -> TokenizedSentence {
    let mut token_ids = Vec::new();
    let mut word_spans = Vec::with_capacity(sentence.words().len());
    for w in sentence.words() {
        let start = token_ids.len();
        token_ids.extend(tokenize_word(w, vocab));
        word_spans.push((start, token_ids.len()));
    }
    TokenizedSentence {
        token_ids,
        word_spans,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{doc_from_strs, Split};
    use proptest::prelude::*;

    fn vocab_of(pieces: &[&str]) -> Vocab {
        let mut t: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        t.extend(pieces.iter().map(|s| s.to_string()));
        Vocab::from_tokens(t).unwrap()
    }

    fn corpus_of(words: &str) -> Corpus {
        Corpus::new(vec![doc_from_strs("d", &[words], &[true])], Split::Unsplit).unwrap()
    }

    #[test]
    fn toy_corpus_ngrams() {
        let v = build_vocab(&corpus_of("ab"), 100).unwrap();
        assert_eq!(v.tokens()[4..], ["a", "b", "##b", "ab"]);
    }

    #[test]
    fn build_is_deterministic_and_bounded() {
        let c = corpus_of("the cat sat on the mat with a hat");
        let a = build_vocab(&c, 30).unwrap();
        assert_eq!(a, build_vocab(&c, 30).unwrap());
        assert_eq!(a.len(), 30);
        // "the" occurs twice, more than any other whole word.
        assert!(a.id("the").is_some());
    }

    #[test]
    fn max_size_below_characters() {
        assert!(matches!(
            build_vocab(&corpus_of("abc"), 7),
            Err(Error::Config(_))
        ));
        assert!(build_vocab(&corpus_of("abc"), 8).is_ok());
        assert!(build_vocab(&Corpus::default(), 100).is_err());
    }

    #[test]
    fn greedy_match() {
        let v = vocab_of(&["a", "##b", "abc", "b"]);
        assert_eq!(tokenize_word("abc", &v), [v.id("abc").unwrap()]);
        assert_eq!(
            tokenize_word("ab", &v),
            [v.id("a").unwrap(), v.id("##b").unwrap()]
        );
        assert_eq!(tokenize_word("ba", &v), [UNK]);
        assert_eq!(tokenize_word("az", &v), [UNK]);
    }

    #[test]
    fn sentence_spans() {
        let v = vocab_of(&["a", "##b", "c", "d", "e"]);
        let s = |t: &str| Sentence::new(t.split(' ').map(String::from).collect(), true).unwrap();
        assert_eq!(tokenize_sentence(&s("c"), &v).word_spans, [(0, 1)]);
        assert_eq!(
            tokenize_sentence(&s("c d e"), &v).word_spans,
            [(0, 1), (1, 2), (2, 3)]
        );
        let ts = tokenize_sentence(&s("ab c"), &v);
        assert_eq!(ts.word_spans, [(0, 2), (2, 3)]);
        assert_eq!((ts.word_of(0), ts.word_of(1), ts.word_of(2)), (0, 0, 1));
    }

    #[test]
    fn file_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vocab.txt");
        let v = build_vocab(&corpus_of("alpha beta gamma"), 40).unwrap();
        v.save(&p).unwrap();
        assert_eq!(Vocab::load(&p).unwrap(), v);
        std::fs::write(&p, "[UNK]\n[PAD]\n[CLS]\n[SEP]\n").unwrap();
        assert!(Vocab::load(&p).is_err());
    }

    proptest! {
        #[test]
        fn spans_partition_tokens(words in prop::collection::vec("[a-e]{1,6}", 1..8)) {
            let v = build_vocab(&corpus_of("abc bad cede eab"), 30).unwrap();
            let s = Sentence::new(words.clone(), true).unwrap();
            let ts = tokenize_sentence(&s, &v);
            let mut cursor = 0;
            for &(a, b) in &ts.word_spans {
                prop_assert_eq!(a, cursor);
                prop_assert!(b > a);
                cursor = b;
            }
            prop_assert_eq!(cursor, ts.token_ids.len());
            for (w, &(a, b)) in words.iter().zip(&ts.word_spans) {
                let unk = ts.token_ids[a..b] == [UNK];
                prop_assert_eq!(unk, tokenize_word(w, &v) == vec![UNK]);
            }
        }
    }
}
