//! Annotator screening, leave-one-out scoring and top-k vote aggregation.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Split};
use crate::error::{Error, Result};
use crate::eval::{doc_confusion, positive_prf, Confusion, DocPair, MetricReport};

/// All annotators' votes on one document.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnnotationSet {
    pub doc_id: String,
    pub n_sentences: usize,
    pub annotator_ids: Vec<String>,
    /// `votes[a][s]`: annotator `a` marks sentence `s` as a boundary.
    pub votes: Vec<Vec<bool>>,
}

impl AnnotationSet {
    pub fn new(
        doc_id: impl Into<String>,
        annotator_ids: Vec<String>,
        votes: Vec<Vec<bool>>,
    ) -> Result<Self> {
        let doc_id = doc_id.into();
        if annotator_ids.len() != votes.len() {
            return Err(Error::input(format!(
                "{doc_id}: {} ids for {} vote rows",
                annotator_ids.len(),
                votes.len()
            )));
        }
        let n_sentences = votes.first().map_or(0, Vec::len);
        if votes.iter().any(|v| v.len() != n_sentences) {
            return Err(Error::LengthMismatch {
                doc_id,
                reason: "annotators voted on different sentence counts".into(),
            });
        }
        let unique: BTreeSet<&String> = annotator_ids.iter().collect();
        if unique.len() != annotator_ids.len() {
            return Err(Error::input(format!("{doc_id}: duplicate annotator id")));
        }
        Ok(AnnotationSet {
            doc_id,
            n_sentences,
            annotator_ids,
            votes,
        })
    }

    pub fn n_annotators(&self) -> usize {
        self.votes.len()
    }

    fn row(&self, annotator: &str) -> Option<&[bool]> {
        self.annotator_ids
            .iter()
            .position(|a| a == annotator)
            .map(|i| self.votes[i].as_slice())
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnotationRecord {
    doc_id: String,
    annotator_id: String,
    votes: Vec<bool>,
}

/// Reads `{doc_id, annotator_id, votes}` lines, grouped by document in
/// first-appearance order.
pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<AnnotationSet>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut order: Vec<String> = Vec::new();
    let mut grouped: HashMap<String, (Vec<String>, Vec<Vec<bool>>)> = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: AnnotationRecord =
            serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                line: i + 1,
                reason: e.to_string(),
            })?;
        let entry = grouped.entry(rec.doc_id.clone()).or_insert_with(|| {
            order.push(rec.doc_id.clone());
            Default::default()
        });
        entry.0.push(rec.annotator_id);
        entry.1.push(rec.votes);
    }
    order
        .into_iter()
        .map(|id| {
            let (ids, votes) = grouped.remove(&id).expect("grouped above");
            AnnotationSet::new(id, ids, votes)
        })
        .collect()
}

pub fn save_annotations(sets: &[AnnotationSet], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for set in sets {
        for (a, v) in set.annotator_ids.iter().zip(&set.votes) {
            let rec = AnnotationRecord {
                doc_id: set.doc_id.clone(),
                annotator_id: a.clone(),
                votes: v.clone(),
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScreenResult {
    pub annotator_id: String,
    pub report: MetricReport,
    pub passed: bool,
    /// Screening documents the annotator did not label.
    pub missing: Vec<String>,
}

/// Default screening bar; an annotator must exceed it.
pub const MIN_SCREEN_F1: f64 = 0.60;

/// Scores every annotator against reference labels over the pooled
/// screening documents. Passing requires F1 strictly above `min_f1` and a
/// vote on every screening document.
pub fn screen(
    sets: &[AnnotationSet],
    refs: &BTreeMap<String, Vec<bool>>,
    min_f1: f64,
) -> Result<Vec<ScreenResult>> {
    for s in sets {
        let r = refs.get(&s.doc_id).ok_or_else(|| {
            Error::input(format!(
                "no reference labels for screening document `{}`",
                s.doc_id
            ))
        })?;
        if r.len() != s.n_sentences {
            return Err(Error::LengthMismatch {
                doc_id: s.doc_id.clone(),
                reason: format!(
                    "{} reference labels for {} annotated sentences",
                    r.len(),
                    s.n_sentences
                ),
            });
        }
    }
    let annotators: BTreeSet<&String> = sets.iter().flat_map(|s| &s.annotator_ids).collect();
    let mut out = Vec::new();
    for a in annotators {
        let mut pairs = Vec::new();
        let mut missing = Vec::new();
        for s in sets {
            match s.row(a) {
                Some(votes) => pairs.push(DocPair {
                    id: &s.doc_id,
                    pred: votes,
                    reference: &refs[&s.doc_id],
                }),
                None => missing.push(s.doc_id.clone()),
            }
        }
        let report = positive_prf(&pairs)?;
        if !missing.is_empty() {
            log::warn!(
                "annotator {a} fails screening: missing {}",
                missing.join(", ")
            );
        }
        out.push(ScreenResult {
            annotator_id: a.clone(),
            passed: missing.is_empty() && report.f1 > min_f1,
            report,
            missing,
        });
    }
    Ok(out)
}

/// Majority of the rows other than `skip`; ties are negative.
fn majority_without(set: &AnnotationSet, skip: usize) -> Vec<bool> {
    let others = set.n_annotators() - 1;
    (0..set.n_sentences)
        .map(|s| {
            let pos = set
                .votes
                .iter()
                .enumerate()
                .filter(|&(i, v)| i != skip && v[s])
                .count();
            2 * pos > others
        })
        .collect()
}

/// Leave-one-out F1 of every annotator on this document, in row order.
pub fn loo_scores(set: &AnnotationSet) -> Result<Vec<(String, f64)>> {
    loo_confusions(set).map(|v| {
        v.into_iter()
            .map(|(id, c)| (id, MetricReport::from(c).f1))
            .collect()
    })
}

/// Leave-one-out confusion counts, for pooling across documents.
pub fn loo_confusions(set: &AnnotationSet) -> Result<Vec<(String, Confusion)>> {
    if set.n_annotators() < 3 {
        return Err(Error::input(format!(
            "{}: leave-one-out scoring needs at least 3 annotators, got {}",
            set.doc_id,
            set.n_annotators()
        )));
    }
    (0..set.n_annotators())
        .map(|i| {
            let reference = majority_without(set, i);
            let c = doc_confusion(&DocPair {
                id: &set.doc_id,
                pred: &set.votes[i],
                reference: &reference,
            })?;
            Ok((set.annotator_ids[i].clone(), c))
        })
        .collect()
}

/// Keeps the `k` annotators with the best leave-one-out F1 (ties by id)
/// and marks a sentence positive when at least `threshold` of them vote so.
pub fn aggregate_topk(set: &AnnotationSet, k: usize, threshold: usize) -> Result<Vec<bool>> {
    if k == 0 || k > set.n_annotators() {
        return Err(Error::config(format!(
            "{}: k = {k} but {} annotators",
            set.doc_id,
            set.n_annotators()
        )));
    }
    if threshold == 0 || threshold > k {
        return Err(Error::config(format!(
            "positive threshold {threshold} must lie in 1..={k}"
        )));
    }
    let mut ranked: Vec<(usize, f64)> = if k == set.n_annotators() {
        (0..k).map(|i| (i, 0.0)).collect()
    } else {
        loo_scores(set)?
            .into_iter()
            .map(|(_, f)| f)
            .enumerate()
            .collect()
    };
    ranked.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| set.annotator_ids[a.0].cmp(&set.annotator_ids[b.0]))
    });
    let kept: Vec<usize> = ranked.into_iter().take(k).map(|(i, _)| i).collect();
    Ok((0..set.n_sentences)
        .map(|s| kept.iter().filter(|&&i| set.votes[i][s]).count() >= threshold)
        .collect())
}

pub const DEFAULT_TOP_K: usize = 4;
pub const DEFAULT_POSITIVE_VOTES: usize = 3;

/// Relabels the annotated documents of `corpus` with aggregated votes. The
/// final sentence of each document stays a boundary.
pub fn aggregate_corpus(
    corpus: &Corpus,
    sets: &[AnnotationSet],
    k: usize,
    threshold: usize,
) -> Result<Corpus> {
    let docs = sets
        .iter()
        .map(|s| {
            let doc = corpus.get(&s.doc_id).ok_or_else(|| {
                Error::input(format!("annotated document `{}` not in corpus", s.doc_id))
            })?;
            if doc.len() != s.n_sentences {
                return Err(Error::LengthMismatch {
                    doc_id: s.doc_id.clone(),
                    reason: format!(
                        "{} sentences, {} votes per annotator",
                        doc.len(),
                        s.n_sentences
                    ),
                });
            }
            doc.relabeled(&aggregate_topk(s, k, threshold)?)
        })
        .collect::<Result<Vec<_>>>()?;
    Corpus::new(docs, Split::Unsplit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::doc_from_strs;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("a{i}")).collect()
    }

    fn set(rows: &[&[bool]]) -> AnnotationSet {
        AnnotationSet::new(
            "d",
            ids(rows.len()),
            rows.iter().map(|r| r.to_vec()).collect(),
        )
        .unwrap()
    }

    const T: bool = true;
    const F: bool = false;

    #[test]
    fn identical_annotators_score_one() {
        let s = set(&[&[T, F, T], &[T, F, T], &[T, F, T]]);
        assert!(loo_scores(&s).unwrap().iter().all(|(_, f)| *f == 1.0));
    }

    #[test]
    fn contrarian_scores_zero() {
        let agree: &[bool] = &[T, T];
        let s = set(&[agree, agree, &[F, T], agree, agree]);
        let scores = loo_scores(&s).unwrap();
        assert_eq!(scores[2], ("a2".to_string(), 0.0));
        for (i, (_, f)) in scores.iter().enumerate() {
            if i != 2 {
                assert_eq!(*f, 1.0);
            }
        }
    }

    #[test]
    fn loo_tie_is_negative() {
        // Without a0 the others split 2–2 on sentence 0.
        let s = set(&[&[T, T], &[T, T], &[T, T], &[F, T], &[F, T]]);
        assert_eq!(majority_without(&s, 0), [F, T]);
        assert_eq!(majority_without(&s, 3), [T, T]);
    }

    #[test]
    fn too_few_annotators() {
        assert!(loo_scores(&set(&[&[T], &[T]])).is_err());
    }

    #[test]
    fn dissenter_dropped_four_of_four() {
        let s = set(&[&[T, F, T], &[T, F, T], &[T, F, T], &[T, F, T], &[F, T, T]]);
        assert_eq!(aggregate_topk(&s, 4, 3).unwrap(), [T, F, T]);
    }

    #[test]
    fn two_of_four_is_negative() {
        let s = set(&[&[T, T], &[T, T], &[F, T], &[F, T]]);
        assert_eq!(aggregate_topk(&s, 4, 3).unwrap(), [F, T]);
    }

    #[test]
    fn k_equal_to_count_is_plain_vote() {
        let s = set(&[&[T, F], &[T, T], &[F, T], &[T, F]]);
        assert_eq!(aggregate_topk(&s, 4, 3).unwrap(), [T, F]);
        assert!(aggregate_topk(&s, 5, 3).is_err());
        assert!(aggregate_topk(&s, 4, 5).is_err());
    }

    #[test]
    fn ties_broken_by_id_not_row_order() {
        let rows: Vec<Vec<bool>> = vec![
            vec![T, F, T],
            vec![F, T, T],
            vec![T, F, T],
            vec![F, T, T],
            vec![T, T, T],
        ];
        let a = AnnotationSet::new("d", ids(5), rows.clone()).unwrap();
        let mut perm_ids = ids(5);
        perm_ids.reverse();
        let mut perm_rows = rows;
        perm_rows.reverse();
        let b = AnnotationSet::new("d", perm_ids, perm_rows).unwrap();
        assert_eq!(
            aggregate_topk(&a, 3, 2).unwrap(),
            aggregate_topk(&b, 3, 2).unwrap()
        );
    }

    fn refs(labels: &[bool]) -> BTreeMap<String, Vec<bool>> {
        [("d".to_string(), labels.to_vec())].into()
    }

    #[test]
    fn screening_boundary_is_strict() {
        // Five reference positives; a1 finds three and adds two false ones:
        // tp 3, fp 2, fn 2 gives F1 exactly 0.6.
        let reference = [T, T, T, T, T, F, F, F, T];
        let exact = [T, T, T, F, F, T, T, F, T];
        let s = AnnotationSet::new(
            "d",
            ids(3),
            vec![reference.to_vec(), exact.to_vec(), vec![F; 9]],
        )
        .unwrap();
        let r = screen(&[s], &refs(&reference), MIN_SCREEN_F1).unwrap();
        assert!(r[0].passed);
        assert_eq!(r[1].report.f1, 0.6);
        assert!(!r[1].passed);
        assert_eq!(r[2].report.f1, 0.0);
        assert!(!r[2].passed);
    }

    #[test]
    fn screening_missing_document_fails() {
        let s1 = AnnotationSet::new("d", ids(2), vec![vec![T, T], vec![T, T]]).unwrap();
        let s2 = AnnotationSet::new("e", vec!["a0".into()], vec![vec![T, T]]).unwrap();
        let mut r = refs(&[T, T]);
        r.insert("e".into(), vec![T, T]);
        let out = screen(&[s1, s2], &r, 0.6).unwrap();
        let a1 = out.iter().find(|x| x.annotator_id == "a1").unwrap();
        assert!(!a1.passed);
        assert_eq!(a1.missing, ["e"]);
    }

    #[test]
    fn file_round_trip_and_corpus_relabel() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ann.jsonl");
        let s = set(&[&[T, F, F], &[T, F, F], &[T, F, F], &[T, F, F], &[F, T, F]]);
        save_annotations(std::slice::from_ref(&s), &p).unwrap();
        let loaded = load_annotations(&p).unwrap();
        assert_eq!(loaded, [s.clone()]);
        let corpus = Corpus::new(
            vec![doc_from_strs("d", &["x", "y", "z"], &[F, F, T])],
            Split::Unsplit,
        )
        .unwrap();
        let out = aggregate_corpus(&corpus, &loaded, 4, 3).unwrap();
        assert_eq!(out.documents()[0].labels(), [T, F, T]);
    }

    #[test]
    fn ragged_votes_rejected() {
        assert!(AnnotationSet::new("d", ids(2), vec![vec![T], vec![T, F]]).is_err());
        assert!(
            AnnotationSet::new("d", vec!["x".into(), "x".into()], vec![vec![T], vec![T]]).is_err()
        );
    }
}
