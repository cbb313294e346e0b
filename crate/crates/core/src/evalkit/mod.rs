//! Evaluation metrics and benchmark generation.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::analysis::{f_beta, precision_recall, score_pairs, PairInput, Scorer};
use crate::error::{Error, Result};
use crate::pipeline::{Detection, SentenceTrace};
use crate::textproc::{segment, CharSpan, Document, Fragment, FragmentKind};

mod gen;
pub mod synth;

pub use gen::{build_pair_dataset, generate_dataset, read_parallel_tsv, Dataset, GenConfig, ParallelPair};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldAnnotation {
    pub susp_doc: String,
    pub susp_span: CharSpan,
    pub src_doc: String,
    pub src_span: CharSpan,
}

/// Labelled sentence pair; `label` is serialized as `0` or `1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairExample {
    pub a: String,
    pub la: String,
    pub b: String,
    pub lb: String,
    #[serde(with = "label01")]
    pub label: bool,
}

impl PairExample {
    pub fn input(&self) -> PairInput {
        PairInput::new(&self.a, &self.la, &self.b, &self.lb)
    }
}

mod label01 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u8),
            Bool(bool),
        }
        match Raw::deserialize(d)? {
            Raw::Bool(b) => Ok(b),
            Raw::Int(0) => Ok(false),
            Raw::Int(1) => Ok(true),
            Raw::Int(n) => Err(serde::de::Error::custom(format!("label must be 0 or 1, got {n}"))),
        }
    }
}

pub fn read_jsonl<T: serde::de::DeserializeOwned, R: BufRead>(reader: R, source_name: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse(source_name, idx + 1, e.to_string()))?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize, W: Write>(mut out: W, items: &[T]) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Mean over queries of `|top-K ∩ gold| / |gold|`. The top K entries are
/// taken as a set, so repeated ids count once.
pub fn recall_at_k<S: AsRef<str>, G: AsRef<str>>(results: &[Vec<S>], gold: &[Vec<G>], k: usize) -> Result<f64> {
    if results.len() != gold.len() {
        return Err(Error::Invalid(format!(
            "{} result lists for {} gold lists",
            results.len(),
            gold.len()
        )));
    }
    if gold.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (i, (ranked, relevant)) in results.iter().zip(gold).enumerate() {
        let relevant: HashSet<&str> = relevant.iter().map(AsRef::as_ref).collect();
        if relevant.is_empty() {
            return Err(Error::Invalid(format!("query {i} has no relevant items")));
        }
        let top: HashSet<&str> = ranked.iter().take(k).map(AsRef::as_ref).collect();
        total += top.intersection(&relevant).count() as f64 / relevant.len() as f64;
    }
    Ok(total / gold.len() as f64)
}

/// Recall at each K, keyed by K.
pub fn recall_table<S: AsRef<str>, G: AsRef<str>>(
    results: &[Vec<S>],
    gold: &[Vec<G>],
    ks: &[usize],
) -> Result<BTreeMap<usize, f64>> {
    ks.iter().map(|&k| Ok((k, recall_at_k(results, gold, k)?))).collect()
}

/// Key of a reference paragraph in retrieval results.
pub fn paragraph_key(doc_id: &str, ordinal: usize) -> String {
    format!("{doc_id}#{ordinal}")
}

/// Paragraph keys of one query.
pub type KeyList = Vec<String>;

/// Ranked paragraph keys and relevant paragraph keys for every traced
/// sentence that overlaps a gold span. A paragraph is relevant when it
/// overlaps the source span of such an annotation.
pub fn retrieval_lists(
    trace: &[SentenceTrace],
    gold: &[GoldAnnotation],
    reference: &[Document],
) -> Result<(Vec<KeyList>, Vec<KeyList>)> {
    let paragraphs: HashMap<&str, Vec<Fragment>> = reference
        .iter()
        .map(|d| (d.id.as_str(), segment(d, FragmentKind::Paragraph)))
        .collect();
    let mut gold_by_doc: HashMap<&str, Vec<&GoldAnnotation>> = HashMap::new();
    for g in gold {
        gold_by_doc.entry(&g.susp_doc).or_default().push(g);
    }
    let (mut results, mut relevant) = (Vec::new(), Vec::new());
    for t in trace {
        let mut keys = Vec::new();
        for g in gold_by_doc.get(t.susp_doc.as_str()).into_iter().flatten() {
            if !g.susp_span.overlaps(&t.susp_span) {
                continue;
            }
            let paras = paragraphs
                .get(g.src_doc.as_str())
                .ok_or_else(|| Error::Invalid(format!("gold source {:?} not in the reference corpus", g.src_doc)))?;
            for p in paras.iter().filter(|p| p.span.overlaps(&g.src_span)) {
                let key = paragraph_key(&p.doc_id, p.ordinal);
                if !keys.contains(&key) {
                    keys.push(key);
                }
            }
        }
        if keys.is_empty() {
            continue;
        }
        results.push(
            t.candidates
                .iter()
                .map(|c| paragraph_key(&c.src_doc, c.paragraph))
                .collect(),
        );
        relevant.push(keys);
    }
    Ok((results, relevant))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrfMetrics {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

impl PrfMetrics {
    pub fn new(precision: f64, recall: f64) -> Self {
        PrfMetrics {
            recall,
            precision,
            f1: f_beta(precision, recall, 1.0),
        }
    }
}

/// Micro-averaged character-level precision and recall over suspicious
/// documents. A detected character is correct when some gold annotation
/// with the same source document covers it.
pub fn char_pr(
    detections: &[Detection],
    gold: &[GoldAnnotation],
    doc_lengths: &HashMap<String, usize>,
) -> Result<PrfMetrics> {
    let check = |doc: &str, span: &CharSpan| -> Result<usize> {
        let len = *doc_lengths
            .get(doc)
            .ok_or_else(|| Error::Invalid(format!("unknown suspicious document {doc:?}")))?;
        if span.start > span.end || span.end > len {
            return Err(Error::Invalid(format!(
                "span [{}, {}) outside document {doc:?} of length {len}",
                span.start, span.end
            )));
        }
        Ok(len)
    };

    struct Masks {
        detected: Vec<bool>,
        // chars inside both a detection and a gold annotation of the same source
        matched: Vec<bool>,
        gold: Vec<bool>,
    }
    impl Masks {
        fn new(len: usize) -> Self {
            Masks {
                detected: vec![false; len],
                matched: vec![false; len],
                gold: vec![false; len],
            }
        }
    }
    let mut docs: HashMap<&str, Masks> = HashMap::new();

    let mut gold_by_doc: HashMap<&str, Vec<&GoldAnnotation>> = HashMap::new();
    for g in gold {
        let len = check(&g.susp_doc, &g.susp_span)?;
        let m = docs.entry(&g.susp_doc).or_insert_with(|| Masks::new(len));
        m.gold[g.susp_span.start..g.susp_span.end]
            .iter_mut()
            .for_each(|c| *c = true);
        gold_by_doc.entry(&g.susp_doc).or_default().push(g);
    }
    for d in detections {
        let len = check(&d.susp_doc, &d.susp_span)?;
        let m = docs.entry(&d.susp_doc).or_insert_with(|| Masks::new(len));
        m.detected[d.susp_span.start..d.susp_span.end]
            .iter_mut()
            .for_each(|c| *c = true);
        for g in gold_by_doc.get(d.susp_doc.as_str()).into_iter().flatten() {
            if g.src_doc != d.src_doc {
                continue;
            }
            let lo = g.susp_span.start.max(d.susp_span.start);
            let hi = g.susp_span.end.min(d.susp_span.end);
            if lo < hi {
                m.matched[lo..hi].iter_mut().for_each(|c| *c = true);
            }
        }
    }
    let count =
        |f: fn(&Masks) -> &Vec<bool>| -> usize { docs.values().map(|m| f(m).iter().filter(|c| **c).count()).sum() };
    let detected = count(|m| &m.detected);
    let matched = count(|m| &m.matched);
    let gold_chars = count(|m| &m.gold);
    let precision = if detected == 0 {
        0.0
    } else {
        matched as f64 / detected as f64
    };
    let recall = if gold_chars == 0 {
        0.0
    } else {
        matched as f64 / gold_chars as f64
    };
    Ok(PrfMetrics::new(precision, recall))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairMetrics {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

/// Binary metrics of `score >= threshold` with "translation" as the
/// positive class.
pub fn pair_metrics_from_scores(scores: &[f64], labels: &[bool], threshold: f64) -> Result<PairMetrics> {
    if scores.len() != labels.len() {
        return Err(Error::Invalid("scores and labels differ in length".into()));
    }
    let positives = labels.iter().filter(|l| **l).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::Invalid("pair evaluation needs both classes".into()));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (s, l) in scores.iter().zip(labels) {
        match (*s >= threshold, *l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let (precision, recall) = precision_recall(tp, fp, fn_);
    Ok(PairMetrics {
        recall,
        precision,
        f1: f_beta(precision, recall, 1.0),
        tp,
        fp,
        fn_,
        tn,
    })
}

pub fn pair_metrics(examples: &[PairExample], scorer: &dyn Scorer, threshold: f64) -> Result<PairMetrics> {
    let inputs: Vec<PairInput> = examples.iter().map(PairExample::input).collect();
    let labels: Vec<bool> = examples.iter().map(|e| e.label).collect();
    if labels.iter().all(|l| *l) || !labels.iter().any(|l| *l) {
        return Err(Error::Invalid("pair evaluation needs both classes".into()));
    }
    let scores = score_pairs(scorer, &inputs)?;
    pair_metrics_from_scores(&scores, &labels, threshold)
}
