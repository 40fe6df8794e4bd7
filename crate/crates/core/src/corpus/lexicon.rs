use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Pronunciation dictionary: each word maps to one or more phone sequences.
/// The first sequence listed is the canonical one.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PhoneLexicon {
    entries: BTreeMap<String, Vec<Vec<String>>>,
}

impl PhoneLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a pronunciation for `word`.
    pub fn add(&mut self, word: impl Into<String>, phones: Vec<String>) -> Result<()> {
        let word = word.into();
        if phones.is_empty() {
            return Err(Error::input(format!("empty phone sequence for `{word}`")));
        }
        self.entries.entry(word).or_default().push(phones);
        Ok(())
    }

    pub fn canonical(&self, word: &str) -> Option<&[String]> {
        self.entries
            .get(word)
            .and_then(|p| p.first())
            .map(Vec::as_slice)
    }

    pub fn pronunciations(&self, word: &str) -> Option<&[Vec<String>]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Every phone symbol used by any pronunciation, in sorted order.
    pub fn inventory(&self) -> PhoneInventory {
        let symbols: BTreeSet<&str> = self
            .entries
            .values()
            .flatten()
            .flatten()
            .map(String::as_str)
            .collect();
        PhoneInventory {
            symbols: symbols.into_iter().map(String::from).collect(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lex = PhoneLexicon::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |reason: &str| Error::MalformedRecord {
                line: i + 1,
                reason: reason.into(),
            };
            let (word, phones) = line
                .split_once('\t')
                .ok_or_else(|| malformed("expected `word<TAB>phones`"))?;
            let word = word.trim();
            if word.is_empty() {
                return Err(malformed("empty word"));
            }
            let phones: Vec<String> = phones.split_whitespace().map(String::from).collect();
            if phones.is_empty() {
                return Err(malformed("empty phone sequence"));
            }
            lex.add(word, phones)?;
        }
        Ok(lex)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (word, prons) in &self.entries {
            for p in prons {
                let _ = writeln!(out, "{word}\t{}", p.join(" "));
            }
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Dense ids for phone symbols.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PhoneInventory {
    symbols: Vec<String>,
}

impl PhoneInventory {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn id(&self, symbol: &str) -> Option<u32> {
        self.symbols
            .binary_search_by(|s| s.as_str().cmp(symbol))
            .ok()
            .map(|i| i as u32)
    }

    /// Phone ids of the canonical pronunciation of `word`; empty when the
    /// word is not in the lexicon.
    pub fn word_phone_ids(&self, lex: &PhoneLexicon, word: &str) -> Vec<u32> {
        lex.canonical(word)
            .map(|phones| phones.iter().filter_map(|p| self.id(p)).collect())
            .unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_entry_is_canonical() {
        let lex = PhoneLexicon::parse("read\tr iy d\nread\tr eh d\nred\tr eh d\n").unwrap();
        assert_eq!(lex.canonical("read").unwrap(), ["r", "iy", "d"]);
        assert_eq!(lex.pronunciations("read").unwrap().len(), 2);
        assert!(lex.canonical("blue").is_none());
    }

    #[test]
    fn malformed_lines_rejected() {
        assert!(matches!(
            PhoneLexicon::parse("ok\ta\nbad line\n"),
            Err(Error::MalformedRecord { line: 2, .. })
        ));
        assert!(PhoneLexicon::parse("w\t  \n").is_err());
    }

    #[test]
    fn inventory_ids_sorted() {
        let lex = PhoneLexicon::parse("a\tz y\nb\tx\n").unwrap();
        let inv = lex.inventory();
        assert_eq!(inv.len(), 3);
        assert_eq!(inv.id("x"), Some(0));
        assert_eq!(inv.word_phone_ids(&lex, "a"), vec![2, 1]);
        assert!(inv.word_phone_ids(&lex, "zzz").is_empty());
    }

    #[test]
    fn text_round_trip() {
        let lex = PhoneLexicon::parse("to\tt uw\ntwo\tt uw\ntoo\tt uw\ntoo\tt ow\n").unwrap();
        assert_eq!(PhoneLexicon::parse(&lex.to_text()).unwrap(), lex);
    }
}
