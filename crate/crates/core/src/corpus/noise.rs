use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Document, PhoneLexicon};
use crate::error::{Error, Result};

/// Groups of words sharing an identical canonical pronunciation.
#[derive(Clone, Debug, Default)]
pub struct HomophoneClasses {
    class_of: HashMap<String, usize>,
    members: Vec<Vec<String>>,
}

impl HomophoneClasses {
    pub fn from_lexicon(lex: &PhoneLexicon) -> Self {
        let mut by_pron: HashMap<&[String], usize> = HashMap::new();
        let mut classes = HomophoneClasses::default();
        // Lexicon words iterate in sorted order, so class membership order
        // is deterministic.
        for word in lex.words() {
            let pron = lex
                .canonical(word)
                .expect("listed words have a pronunciation");
            let idx = *by_pron.entry(pron).or_insert_with(|| {
                classes.members.push(Vec::new());
                classes.members.len() - 1
            });
            classes.members[idx].push(word.to_owned());
            classes.class_of.insert(word.to_owned(), idx);
        }
        classes
    }

    /// Other words that sound like `word`.
    pub fn alternatives<'a>(&'a self, word: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.class_of
            .get(word)
            .map(|&c| self.members[c].as_slice())
            .unwrap_or_default()
            .iter()
            .map(String::as_str)
            .filter(move |w| *w != word)
    }

    pub fn class(&self, word: &str) -> Option<&[String]> {
        self.class_of.get(word).map(|&c| self.members[c].as_slice())
    }
}

/// Simulates ASR substitutions: every word is, with probability `rate`,
/// replaced by a uniformly chosen different member of its homophone class.
pub fn apply_homophone_noise(
    doc: &Document,
    lex: &PhoneLexicon,
    rate: f64,
    seed: u64,
) -> Result<Document> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::input(format!("noise rate {rate} outside [0, 1]")));
    }
    let classes = HomophoneClasses::from_lexicon(lex);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sentences = doc
        .sentences()
        .iter()
        .map(|s| {
            let words = s
                .words()
                .iter()
                .map(|w| {
                    // One draw per word regardless of class size keeps the
                    // stream aligned across lexicons.
                    let hit = rng.random::<f64>() < rate;
                    let alts: Vec<&str> = classes.alternatives(w).collect();
                    if hit && !alts.is_empty() {
                        alts[rng.random_range(0..alts.len())].to_owned()
                    } else {
                        w.clone()
                    }
                })
                .collect();
            s.with_words(words)
        })
        .collect();
    Ok(doc.with_sentences(sentences))
}
