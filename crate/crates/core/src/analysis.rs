//! Detailed analysis: translation-pair scoring of suspicious sentences
//! against retrieved candidates, threshold calibration and best-candidate
//! selection.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::FragmentRef;
use crate::textproc::{fragment_terms, segment, CharSpan, Document, Fragment, FragmentKind, ResourceSet};
use crate::thesaurus::ClusterDictionary;

pub mod remote;

pub use remote::RemoteScorer;

/// One sentence pair to classify.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairInput {
    pub a: String,
    pub la: String,
    pub b: String,
    pub lb: String,
}

impl PairInput {
    pub fn new(a: &str, la: &str, b: &str, lb: &str) -> Self {
        PairInput {
            a: a.into(),
            la: la.into(),
            b: b.into(),
            lb: lb.into(),
        }
    }
}

/// Probability-like score in `[0, 1]` that two texts are translations of
/// each other. Implementations must be deterministic and return exactly one
/// score per input, in input order.
pub trait Scorer: Send + Sync {
    fn id(&self) -> String;

    fn score_batch(&self, pairs: &[PairInput]) -> Result<Vec<f64>>;
}

/// Jaccard similarity of the conceptualized term sets of both texts.
pub struct OverlapScorer<'a> {
    dict: &'a ClusterDictionary,
    resources: &'a ResourceSet,
}

impl<'a> OverlapScorer<'a> {
    pub fn new(dict: &'a ClusterDictionary, resources: &'a ResourceSet) -> Self {
        OverlapScorer { dict, resources }
    }

    fn term_set(&self, text: &str, lang: &str) -> HashSet<String> {
        fragment_terms(text, lang, self.resources, self.dict)
            .terms
            .into_iter()
            .collect()
    }
}

pub fn jaccard<T: Eq + std::hash::Hash>(a: &HashSet<T>, b: &HashSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

impl Scorer for OverlapScorer<'_> {
    fn id(&self) -> String {
        format!("overlap:{}", self.dict.fingerprint())
    }

    fn score_batch(&self, pairs: &[PairInput]) -> Result<Vec<f64>> {
        Ok(pairs
            .iter()
            .map(|p| jaccard(&self.term_set(&p.a, &p.la), &self.term_set(&p.b, &p.lb)))
            .collect())
    }
}

pub fn score_pairs(scorer: &dyn Scorer, pairs: &[PairInput]) -> Result<Vec<f64>> {
    let scores = scorer.score_batch(pairs)?;
    if scores.len() != pairs.len() {
        return Err(Error::Invalid(format!(
            "scorer {} returned {} scores for {} pairs",
            scorer.id(),
            scores.len(),
            pairs.len()
        )));
    }
    if let Some(bad) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::Invalid(format!(
            "scorer {} returned score {bad} outside [0, 1]",
            scorer.id()
        )));
    }
    Ok(scores)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub value: f64,
    pub beta: f64,
}

impl Threshold {
    pub const DEFAULT_BETA: f64 = 0.25;

    pub fn new(value: f64) -> Self {
        Threshold {
            value,
            beta: Self::DEFAULT_BETA,
        }
    }

    pub fn accepts(&self, score: f64) -> bool {
        score >= self.value
    }
}

/// Score of one suspicious sentence against one sentence of a candidate
/// fragment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairVerdict {
    /// Sentence ordinal within the suspicious document.
    pub suspicious: usize,
    pub candidate: FragmentRef,
    /// Sentence ordinal within the candidate fragment.
    pub sentence: usize,
    /// Span of that sentence in the candidate's source document.
    pub src_span: CharSpan,
    pub score: f64,
    pub is_translation: bool,
}

/// Candidate fragment sentences with spans relative to the source document.
pub fn candidate_sentences(candidate: &Fragment) -> Vec<Fragment> {
    let doc = Document::new(candidate.doc_id.clone(), candidate.lang.clone(), candidate.text.clone());
    let mut sentences = segment(&doc, FragmentKind::Sentence);
    for s in &mut sentences {
        s.span = s.span.shift(candidate.span.start);
    }
    sentences
}

/// Scores every sentence pair of `suspicious` against several candidate
/// fragments in one scorer call. Returns one verdict list per candidate.
pub fn compare_candidates(
    suspicious: &Fragment,
    candidates: &[(FragmentRef, &Fragment)],
    scorer: &dyn Scorer,
    threshold: Threshold,
) -> Result<Vec<Vec<PairVerdict>>> {
    let split: Vec<Vec<Fragment>> = candidates.iter().map(|(_, f)| candidate_sentences(f)).collect();
    let pairs: Vec<PairInput> = split
        .iter()
        .flatten()
        .map(|s| PairInput::new(&suspicious.text, &suspicious.lang, &s.text, &s.lang))
        .collect();
    if pairs.is_empty() {
        return Ok(vec![Vec::new(); candidates.len()]);
    }
    let mut scores = score_pairs(scorer, &pairs)?.into_iter();
    Ok(candidates
        .iter()
        .zip(split)
        .map(|((cref, _), sentences)| {
            sentences
                .into_iter()
                .map(|s| {
                    let score = scores.next().expect("one score per pair");
                    PairVerdict {
                        suspicious: suspicious.ordinal,
                        candidate: *cref,
                        sentence: s.ordinal,
                        src_span: s.span,
                        score,
                        is_translation: threshold.accepts(score),
                    }
                })
                .collect()
        })
        .collect())
}

pub fn compare_fragments(
    suspicious: &Fragment,
    candidate: &Fragment,
    candidate_ref: FragmentRef,
    scorer: &dyn Scorer,
    threshold: Threshold,
) -> Result<Vec<PairVerdict>> {
    Ok(
        compare_candidates(suspicious, &[(candidate_ref, candidate)], scorer, threshold)?
            .pop()
            .unwrap_or_default(),
    )
}

/// Fragment-level verdict: the highest-scoring sentence pair, earliest
/// sentence on ties.
pub fn fragment_verdict(verdicts: &[PairVerdict]) -> Option<&PairVerdict> {
    verdicts
        .iter()
        .reduce(|best, v| if v.score > best.score { v } else { best })
}

/// Among fragment-level verdicts of one suspicious sentence, the positive
/// one with the highest score; ties go to the smaller fragment handle.
pub fn select_best(verdicts: &[PairVerdict]) -> Option<&PairVerdict> {
    verdicts.iter().filter(|v| v.is_translation).reduce(|best, v| {
        if v.score > best.score || (v.score == best.score && v.candidate < best.candidate) {
            v
        } else {
            best
        }
    })
}

/// Weighted harmonic mean of precision and recall; 0 when both are 0.
pub fn f_beta(precision: f64, recall: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    let denom = b2 * precision + recall;
    if denom == 0.0 {
        0.0
    } else {
        (1.0 + b2) * precision * recall / denom
    }
}

/// Precision and recall of the rule `score >= t` from confusion counts.
pub fn precision_recall(tp: usize, fp: usize, fn_: usize) -> (f64, f64) {
    let p = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let r = if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    (p, r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub threshold: Threshold,
    pub f_beta: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Candidate thresholds: 0, 1 and the midpoints between adjacent distinct
/// scores, ascending.
pub fn candidate_thresholds(scores: &[f64]) -> Vec<f64> {
    let mut distinct: Vec<f64> = scores.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut out = Vec::with_capacity(distinct.len() + 1);
    out.push(0.0);
    out.extend(distinct.windows(2).map(|w| (w[0] + w[1]) / 2.0));
    out.push(1.0);
    out
}

/// Picks the threshold that maximizes F_β on labelled dev scores. Ties go
/// to the largest threshold.
pub fn calibrate(dev: &[(f64, bool)], beta: f64) -> Result<Calibration> {
    if beta.is_nan() || beta <= 0.0 {
        return Err(Error::Invalid(format!("beta must be positive, got {beta}")));
    }
    if let Some((s, _)) = dev.iter().find(|(s, _)| !(0.0..=1.0).contains(s)) {
        return Err(Error::Invalid(format!("score {s} outside [0, 1]")));
    }
    let positives = dev.iter().filter(|(_, l)| *l).count();
    if positives == 0 || positives == dev.len() {
        return Err(Error::Invalid(
            "calibration needs both positive and negative examples".into(),
        ));
    }
    let mut sorted: Vec<(f64, bool)> = dev.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    // positives_below[i] = positives among the i smallest scores
    let mut positives_below = Vec::with_capacity(sorted.len() + 1);
    positives_below.push(0usize);
    for (_, label) in &sorted {
        positives_below.push(positives_below.last().unwrap() + usize::from(*label));
    }
    let scores: Vec<f64> = sorted.iter().map(|(s, _)| *s).collect();
    let mut best: Option<Calibration> = None;
    for t in candidate_thresholds(&scores) {
        let below = scores.partition_point(|s| *s < t);
        let tp = positives - positives_below[below];
        let fp = (sorted.len() - below) - tp;
        let fn_ = positives_below[below];
        let (p, r) = precision_recall(tp, fp, fn_);
        let f = f_beta(p, r, beta);
        if best.is_none_or(|b| f >= b.f_beta) {
            best = Some(Calibration {
                threshold: Threshold { value: t, beta },
                f_beta: f,
                precision: p,
                recall: r,
            });
        }
    }
    Ok(best.expect("at least two candidate thresholds"))
}
