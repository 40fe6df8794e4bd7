//! Corpus data model, record-file I/O, wiki-text ingestion, synthetic
//! corpora and homophone noise.

mod lexicon;
mod noise;
mod synth;
mod wiki;

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use lexicon::{PhoneInventory, PhoneLexicon};
pub use noise::{apply_homophone_noise, HomophoneClasses};
pub use synth::{generate_homophone_lexicon, generate_synthetic, SynthSpec, SynthVocabulary};
pub use wiki::{parse_wiki_text, Granularity};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    #[default]
    Written,
    Spoken,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Dev,
    Test,
    #[default]
    Unsplit,
}

/// A sentence of whitespace-free word tokens. `is_boundary` marks the
/// sentence that closes a segment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    words: Vec<String>,
    pub is_boundary: bool,
}

impl Sentence {
    pub fn new(words: Vec<String>, is_boundary: bool) -> Result<Self> {
        if words.is_empty() {
            return Err(Error::input("sentence has no words"));
        }
        if let Some(w) = words
            .iter()
            .find(|w| w.is_empty() || w.chars().any(char::is_whitespace))
        {
            return Err(Error::input(format!("invalid word {w:?}")));
        }
        Ok(Sentence { words, is_boundary })
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Replaces the words, keeping the label. Used by noise injection,
    /// which maps words to words one for one.
    pub(crate) fn with_words(&self, words: Vec<String>) -> Self {
        debug_assert_eq!(words.len(), self.words.len());
        Sentence {
            words,
            is_boundary: self.is_boundary,
        }
    }
}

/// An ordered list of sentences with one boundary label each. The last
/// sentence always closes a segment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    id: String,
    sentences: Vec<Sentence>,
    pub source: Source,
}

impl Document {
    pub fn new(id: impl Into<String>, sentences: Vec<Sentence>, source: Source) -> Result<Self> {
        let id = id.into();
        let Some(last) = sentences.last() else {
            return Err(Error::InvalidDocument {
                id,
                reason: "document has no sentences".into(),
            });
        };
        if !last.is_boundary {
            return Err(Error::InvalidDocument {
                id,
                reason: "final sentence must be labeled as a boundary".into(),
            });
        }
        Ok(Document {
            id,
            sentences,
            source,
        })
    }

    /// Builds a document from word lists and labels, as stored in record files.
    pub fn from_parts(
        id: impl Into<String>,
        sentences: Vec<Vec<String>>,
        labels: &[bool],
        source: Source,
    ) -> Result<Self> {
        let id = id.into();
        if sentences.len() != labels.len() {
            return Err(Error::InvalidDocument {
                id,
                reason: format!("{} sentences but {} labels", sentences.len(), labels.len()),
            });
        }
        let sentences = sentences
            .into_iter()
            .zip(labels)
            .map(|(words, &label)| Sentence::new(words, label))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::InvalidDocument {
                id: id.clone(),
                reason: e.to_string(),
            })?;
        Document::new(id, sentences, source)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.sentences.iter().map(|s| s.is_boundary).collect()
    }

    pub fn word_count(&self) -> usize {
        self.sentences.iter().map(|s| s.words.len()).sum()
    }

    /// Returns a copy with the given labels; the final label is forced to
    /// `true` to keep the storage invariant.
    pub fn relabeled(&self, labels: &[bool]) -> Result<Self> {
        if labels.len() != self.sentences.len() {
            return Err(Error::LengthMismatch {
                doc_id: self.id.clone(),
                reason: format!(
                    "{} labels for {} sentences",
                    labels.len(),
                    self.sentences.len()
                ),
            });
        }
        let last = self.sentences.len() - 1;
        let sentences = self
            .sentences
            .iter()
            .zip(labels)
            .enumerate()
            .map(|(i, (s, &l))| Sentence {
                words: s.words.clone(),
                is_boundary: l || i == last,
            })
            .collect();
        Ok(Document {
            id: self.id.clone(),
            sentences,
            source: self.source,
        })
    }

    pub(crate) fn with_sentences(&self, sentences: Vec<Sentence>) -> Self {
        Document {
            id: self.id.clone(),
            sentences,
            source: self.source,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Corpus {
    documents: Vec<Document>,
    pub split: Split,
}

impl Corpus {
    pub fn new(documents: Vec<Document>, split: Split) -> Result<Self> {
        let mut seen = HashSet::new();
        for d in &documents {
            if !seen.insert(d.id.as_str()) {
                return Err(Error::DuplicateId(d.id.clone()));
            }
        }
        Ok(Corpus { documents, split })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn into_documents(self) -> Vec<Document> {
        self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.id == id)
    }

    /// Splits off the last `n_test` documents as a test corpus.
    pub fn split_tail(self, n_test: usize) -> Result<(Corpus, Corpus)> {
        if n_test > self.documents.len() {
            return Err(Error::input(format!(
                "cannot split {n_test} test documents from a corpus of {}",
                self.documents.len()
            )));
        }
        let mut train = self.documents;
        let test = train.split_off(train.len() - n_test);
        Ok((
            Corpus {
                documents: train,
                split: Split::Train,
            },
            Corpus {
                documents: test,
                split: Split::Test,
            },
        ))
    }
}

/// One line of a record file.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    sentences: Vec<Vec<String>>,
    labels: Vec<bool>,
    source: Source,
}

pub fn load_records(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut documents = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            line: line_no,
            reason: e.to_string(),
        })?;
        if rec.sentences.len() != rec.labels.len() {
            return Err(Error::LabelMismatch { line: line_no });
        }
        let doc =
            Document::from_parts(rec.id, rec.sentences, &rec.labels, rec.source).map_err(|e| {
                Error::MalformedRecord {
                    line: line_no,
                    reason: e.to_string(),
                }
            })?;
        documents.push(doc);
    }
    if documents.is_empty() {
        log::warn!("{}: no documents", path.display());
    }
    Corpus::new(documents, Split::Unsplit)
}

pub fn save_records(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for doc in &corpus.documents {
        let rec = Record {
            id: doc.id.clone(),
            sentences: doc.sentences.iter().map(|s| s.words.clone()).collect(),
            labels: doc.labels(),
            source: doc.source,
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
pub(crate) fn doc_from_strs(id: &str, sentences: &[&str], labels: &[bool]) -> Document {
    Document::from_parts(
        id,
        sentences
            .iter()
            .map(|s| s.split_whitespace().map(String::from).collect())
            .collect(),
        labels,
        Source::Written,
    )
    .unwrap()
}
