use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, Document, PhoneLexicon, Sentence, Source, Split};
use crate::error::{Error, Result};

/// Parameters of a synthetic segmentation corpus. Ranges are inclusive
/// `(min, max)` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_docs: usize,
    pub sentences_per_doc: (usize, usize),
    pub words_per_sentence: (usize, usize),
    /// Sentences per segment.
    pub segment_length: (usize, usize),
    /// Ordinary (non-cue) words.
    pub vocab_size: usize,
    /// Size of the cue sub-vocabulary that may open a segment.
    pub cue_words: usize,
    /// Probability that a segment-initial sentence starts with a cue word.
    pub boundary_cue_strength: f64,
    pub seed: u64,
    pub source: Source,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_docs: 20,
            sentences_per_doc: (10, 20),
            words_per_sentence: (3, 6),
            segment_length: (2, 5),
            vocab_size: 60,
            cue_words: 4,
            boundary_cue_strength: 1.0,
            seed: 0,
            source: Source::Written,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("sentences_per_doc", self.sentences_per_doc),
            ("words_per_sentence", self.words_per_sentence),
            ("segment_length", self.segment_length),
        ] {
            if lo == 0 || lo > hi {
                return Err(Error::config(format!(
                    "degenerate range {name} = [{lo}, {hi}]"
                )));
            }
        }
        if self.vocab_size == 0 {
            return Err(Error::config("vocab_size must be positive"));
        }
        if !(0.0..=1.0).contains(&self.boundary_cue_strength) {
            return Err(Error::config("boundary_cue_strength outside [0, 1]"));
        }
        if self.boundary_cue_strength > 0.0 && self.cue_words == 0 {
            return Err(Error::config(
                "cue strength > 0 needs at least one cue word",
            ));
        }
        Ok(())
    }
}

/// The word lists a synthetic corpus draws from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynthVocabulary {
    pub words: Vec<String>,
    pub cue_words: Vec<String>,
}

impl SynthVocabulary {
    pub fn generate(spec: &SynthSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_0000_0000_0001);
        let mut taken = HashSet::new();
        let cue_words = (0..spec.cue_words)
            .map(|_| fresh_word(&mut rng, &mut taken))
            .collect();
        let words = (0..spec.vocab_size)
            .map(|_| fresh_word(&mut rng, &mut taken))
            .collect();
        SynthVocabulary { words, cue_words }
    }

    fn all(&self) -> impl Iterator<Item = &String> {
        self.cue_words.iter().chain(&self.words)
    }
}

fn fresh_word(rng: &mut ChaCha8Rng, taken: &mut HashSet<String>) -> String {
    loop {
        let len = rng.random_range(3..=7);
        let w: String = (0..len)
            .map(|_| char::from(b'a' + rng.random_range(0..26u8)))
            .collect();
        if taken.insert(w.clone()) {
            return w;
        }
    }
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (usize, usize)) -> usize {
    rng.random_range(lo..=hi)
}

/// Generates a corpus whose segment-initial sentences start with a cue word
/// with probability `boundary_cue_strength`. Cue words appear nowhere else.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<Corpus> {
    spec.validate()?;
    let vocab = SynthVocabulary::generate(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut docs = Vec::with_capacity(spec.n_docs);
    for d in 0..spec.n_docs {
        let n = draw(&mut rng, spec.sentences_per_doc);
        let mut sentences = Vec::with_capacity(n);
        while sentences.len() < n {
            let seg_len = draw(&mut rng, spec.segment_length).min(n - sentences.len());
            for i in 0..seg_len {
                let n_words = draw(&mut rng, spec.words_per_sentence);
                let mut words = Vec::with_capacity(n_words);
                let cue = i == 0 && rng.random::<f64>() < spec.boundary_cue_strength;
                if cue {
                    words.push(vocab.cue_words[rng.random_range(0..vocab.cue_words.len())].clone());
                }
                while words.len() < n_words {
                    words.push(vocab.words[rng.random_range(0..vocab.words.len())].clone());
                }
                sentences.push(Sentence::new(words, i + 1 == seg_len)?);
            }
        }
        docs.push(Document::new(
            format!("synth-{}-{d:05}", spec.seed),
            sentences,
            spec.source,
        )?);
    }
    Corpus::new(docs, Split::Unsplit)
}

/// Builds a lexicon for a synthetic vocabulary in which every word has a
/// distinct pronunciation shared with `class_size - 1` fresh partner words.
/// Partners never occur in generated text; they enter only through
/// homophone noise.
pub fn generate_homophone_lexicon(
    vocab: &SynthVocabulary,
    class_size: usize,
    seed: u64,
) -> Result<PhoneLexicon> {
    if class_size == 0 {
        return Err(Error::config("class_size must be positive"));
    }
    const N_PHONES: u32 = 24;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut taken: HashSet<String> = vocab.all().cloned().collect();
    let mut prons = HashSet::new();
    let mut lex = PhoneLexicon::new();
    for word in vocab.all() {
        let pron = loop {
            let len = rng.random_range(2..=4);
            let p: Vec<String> = (0..len)
                .map(|_| format!("p{:02}", rng.random_range(0..N_PHONES)))
                .collect();
            if prons.insert(p.clone()) {
                break p;
            }
        };
        lex.add(word.clone(), pron.clone())?;
        for _ in 1..class_size {
            lex.add(fresh_word(&mut rng, &mut taken), pron.clone())?;
        }
    }
    Ok(lex)
}
