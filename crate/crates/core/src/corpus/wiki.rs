use super::{Document, Sentence, Source};
use crate::error::{Error, Result};

/// Which structural unit delimits a segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Granularity {
    /// Segments are separated by heading lines (`== Title ==`).
    Section,
    /// Segments are separated by blank lines.
    Paragraph,
}

impl std::str::FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "section" => Ok(Granularity::Section),
            "paragraph" => Ok(Granularity::Paragraph),
            other => Err(Error::config(format!("unknown granularity `{other}`"))),
        }
    }
}

const SENTENCE_FINAL: &[char] = &['.', '?', '!', '。', '？', '！', '．'];

fn is_heading(line: &str) -> bool {
    let t = line.trim();
    t.len() >= 4 && t.starts_with("==") && t.ends_with("==")
}

/// Splits running text after every run of sentence-final punctuation. The
/// punctuation stays attached to the last word.
fn split_sentences(text: &str) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        current.push(c);
        if SENTENCE_FINAL.contains(&c) {
            if chars.peek().is_some_and(|n| SENTENCE_FINAL.contains(n)) {
                continue;
            }
            push_sentence(&mut out, &current);
            current.clear();
        }
    }
    push_sentence(&mut out, &current);
    out
}

fn push_sentence(out: &mut Vec<Vec<String>>, text: &str) {
    let words: Vec<String> = text.split_whitespace().map(String::from).collect();
    if !words.is_empty() {
        out.push(words);
    }
}

/// Parses wiki-style plain text into a labeled document.
///
/// Heading lines are dropped in both modes. A segment that yields no
/// sentences is skipped.
pub fn parse_wiki_text(
    id: impl Into<String>,
    raw: &str,
    granularity: Granularity,
) -> Result<Document> {
    let mut blocks: Vec<String> = vec![String::new()];
    for line in raw.lines() {
        let breaks = match granularity {
            Granularity::Section => is_heading(line),
            Granularity::Paragraph => is_heading(line) || line.trim().is_empty(),
        };
        if breaks {
            blocks.push(String::new());
        } else if !is_heading(line) {
            let block = blocks.last_mut().expect("at least one block");
            block.push_str(line);
            block.push('\n');
        }
    }

    let mut sentences = Vec::new();
    for block in &blocks {
        let words = split_sentences(block);
        let n = words.len();
        for (i, w) in words.into_iter().enumerate() {
            sentences.push(Sentence::new(w, i + 1 == n)?);
        }
    }
    if sentences.is_empty() {
        return Err(Error::EmptyDocument);
    }
    Document::new(id, sentences, Source::Written)
}
