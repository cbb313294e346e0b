//! Benchmark generation from a host corpus and a parallel corpus.
//!
//! Suspicious documents are host documents (suspicious language) in which a
//! random fraction of sentences is replaced by translations from the parallel
//! corpus. The originals of those translations are planted as sentences in
//! reference documents, which are filled up with the originals of the
//! unused parallel pairs.

use std::collections::HashSet;
use std::io::BufRead;

use rand::seq::{index::sample, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GoldAnnotation, PairExample};
use crate::error::{Error, Result};
use crate::textproc::{segment, CharSpan, Document, FragmentKind};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParallelPair {
    /// Reference-language side.
    pub l1: String,
    /// Suspicious-language side.
    pub l2: String,
}

impl ParallelPair {
    pub fn new(l1: impl Into<String>, l2: impl Into<String>) -> Self {
        ParallelPair {
            l1: l1.into(),
            l2: l2.into(),
        }
    }
}

/// Reads `l1_text<TAB>l2_text` lines.
pub fn read_parallel_tsv<R: BufRead>(reader: R, source_name: &str) -> Result<Vec<ParallelPair>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (l1, l2) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(source_name, idx + 1, "expected l1_text<TAB>l2_text"))?;
        let (l1, l2) = (l1.trim(), l2.trim());
        if l1.is_empty() || l2.is_empty() || l2.contains('\t') {
            return Err(Error::parse(source_name, idx + 1, "empty side or extra column"));
        }
        out.push(ParallelPair::new(l1, l2));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub seed: u64,
    /// Inclusive range of the plagiarised share of sentences per document.
    pub fraction: (f64, f64),
    /// Inclusive range of source documents per suspicious document.
    pub sources: (usize, usize),
    pub suspicious_docs: usize,
    pub reference_docs: usize,
    /// Inclusive range of sentences per reference paragraph.
    pub paragraph_sentences: (usize, usize),
    /// Cap on filler sentences drawn from unused parallel pairs; `None` uses
    /// all of them.
    pub max_fillers: Option<usize>,
    pub reference_lang: String,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 0,
            fraction: (0.2, 0.8),
            sources: (1, 10),
            suspicious_docs: 10,
            reference_docs: 40,
            paragraph_sentences: (1, 3),
            max_fillers: None,
            reference_lang: "en".into(),
        }
    }
}

impl GenConfig {
    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.fraction;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::Invalid(format!("invalid fraction range [{lo}, {hi}]")));
        }
        let (slo, shi) = self.sources;
        if slo == 0 || slo > shi {
            return Err(Error::Invalid(format!("invalid sources range [{slo}, {shi}]")));
        }
        if self.reference_docs == 0 {
            return Err(Error::Invalid("at least one reference document is required".into()));
        }
        let (plo, phi) = self.paragraph_sentences;
        if plo == 0 || plo > phi {
            return Err(Error::Invalid(format!("invalid paragraph size range [{plo}, {phi}]")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub suspicious: Vec<Document>,
    pub reference: Vec<Document>,
    pub gold: Vec<GoldAnnotation>,
}

enum RefItem {
    Source { annotation: usize, text: String },
    Filler(String),
}

/// Joins sentences with single spaces and paragraphs with blank lines,
/// returning the text and the character span of every sentence.
fn layout(paragraphs: &[Vec<&str>]) -> (String, Vec<Vec<CharSpan>>) {
    let mut text = String::new();
    let mut offset = 0usize;
    let mut spans = Vec::with_capacity(paragraphs.len());
    for (pi, para) in paragraphs.iter().enumerate() {
        if pi > 0 {
            text.push_str("\n\n");
            offset += 2;
        }
        let mut para_spans = Vec::with_capacity(para.len());
        for (si, sentence) in para.iter().enumerate() {
            if si > 0 {
                text.push(' ');
                offset += 1;
            }
            let len = sentence.chars().count();
            para_spans.push(CharSpan::new(offset, offset + len));
            text.push_str(sentence);
            offset += len;
        }
        spans.push(para_spans);
    }
    (text, spans)
}

fn host_sentences(doc: &Document) -> Vec<Vec<String>> {
    let sentences = segment(doc, FragmentKind::Sentence);
    segment(doc, FragmentKind::Paragraph)
        .into_iter()
        .map(|p| {
            sentences
                .iter()
                .filter(|s| p.span.contains(&s.span))
                .map(|s| s.text.split_whitespace().collect::<Vec<_>>().join(" "))
                .collect()
        })
        .filter(|p: &Vec<String>| !p.is_empty())
        .collect()
}

/// Builds suspicious documents, a reference collection and gold spans.
/// Output is a pure function of the inputs and `cfg.seed`.
pub fn generate_dataset(hosts: &[Document], parallel: &[ParallelPair], cfg: &GenConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    if hosts.len() < cfg.suspicious_docs {
        return Err(Error::Invalid(format!(
            "{} host documents for {} suspicious documents",
            hosts.len(),
            cfg.suspicious_docs
        )));
    }
    for p in parallel {
        if p.l1.trim().is_empty() || p.l2.trim().is_empty() || p.l1.contains('\n') || p.l2.contains('\n') {
            return Err(Error::Invalid("parallel pairs must be non-empty single lines".into()));
        }
    }
    let mut host_order: Vec<usize> = (0..hosts.len()).collect();
    host_order.shuffle(&mut rng);
    let mut pool: Vec<usize> = (0..parallel.len()).collect();
    pool.shuffle(&mut rng);
    let mut pool = pool.into_iter();

    let mut reference_items: Vec<Vec<RefItem>> = (0..cfg.reference_docs).map(|_| Vec::new()).collect();
    let mut pending_gold: Vec<GoldAnnotation> = Vec::new();
    let mut suspicious = Vec::with_capacity(cfg.suspicious_docs);

    for (n, &h) in host_order.iter().take(cfg.suspicious_docs).enumerate() {
        let host = &hosts[h];
        let mut paragraphs = host_sentences(host);
        let total: usize = paragraphs.iter().map(Vec::len).sum();
        if total == 0 {
            return Err(Error::Invalid(format!("host document {:?} has no sentences", host.id)));
        }
        let fraction = rng.gen_range(cfg.fraction.0..=cfg.fraction.1);
        let replaced = ((fraction * total as f64).round() as usize).clamp(1, total);
        let mut positions: Vec<usize> = sample(&mut rng, total, replaced).into_vec();
        positions.sort_unstable();
        let sources = rng
            .gen_range(cfg.sources.0..=cfg.sources.1)
            .min(replaced)
            .min(cfg.reference_docs);
        let targets: Vec<usize> = sample(&mut rng, cfg.reference_docs, sources).into_vec();
        let mut assignment: Vec<usize> = (0..replaced)
            .map(|i| if i < sources { i } else { rng.gen_range(0..sources) })
            .collect();
        assignment.shuffle(&mut rng);

        let susp_id = format!("susp-{n:05}");
        let mut flat = 0usize;
        let mut slot = 0usize;
        let mut planted: Vec<((usize, usize), usize)> = Vec::with_capacity(replaced);
        for (pi, para) in paragraphs.iter_mut().enumerate() {
            for (si, sentence) in para.iter_mut().enumerate() {
                if slot < positions.len() && positions[slot] == flat {
                    let pair_idx = pool.next().ok_or_else(|| {
                        Error::Invalid("parallel corpus too small for the requested plagiarism".into())
                    })?;
                    let pair = &parallel[pair_idx];
                    *sentence = pair.l2.clone();
                    let annotation = pending_gold.len();
                    pending_gold.push(GoldAnnotation {
                        susp_doc: susp_id.clone(),
                        susp_span: CharSpan::new(0, 0),
                        src_doc: String::new(),
                        src_span: CharSpan::new(0, 0),
                    });
                    reference_items[targets[assignment[slot]]].push(RefItem::Source {
                        annotation,
                        text: pair.l1.clone(),
                    });
                    planted.push(((pi, si), annotation));
                    slot += 1;
                }
                flat += 1;
            }
        }
        let refs: Vec<Vec<&str>> = paragraphs
            .iter()
            .map(|p| p.iter().map(String::as_str).collect())
            .collect();
        let (text, spans) = layout(&refs);
        for ((pi, si), annotation) in planted {
            pending_gold[annotation].susp_span = spans[pi][si];
        }
        suspicious.push(Document::new(susp_id, host.lang.clone(), text));
    }

    let fillers: Vec<usize> = match cfg.max_fillers {
        Some(cap) => pool.take(cap).collect(),
        None => pool.collect(),
    };
    for (i, pair_idx) in fillers.into_iter().enumerate() {
        reference_items[i % cfg.reference_docs].push(RefItem::Filler(parallel[pair_idx].l1.clone()));
    }

    let mut reference = Vec::with_capacity(cfg.reference_docs);
    for (r, mut items) in reference_items.into_iter().enumerate() {
        if items.is_empty() {
            continue;
        }
        items.shuffle(&mut rng);
        let mut paragraphs: Vec<Vec<&RefItem>> = Vec::new();
        let mut rest: &[RefItem] = &items;
        while !rest.is_empty() {
            let size = rng
                .gen_range(cfg.paragraph_sentences.0..=cfg.paragraph_sentences.1)
                .min(rest.len());
            paragraphs.push(rest[..size].iter().collect());
            rest = &rest[size..];
        }
        let texts: Vec<Vec<&str>> = paragraphs
            .iter()
            .map(|p| {
                p.iter()
                    .map(|item| match item {
                        RefItem::Source { text, .. } | RefItem::Filler(text) => text.as_str(),
                    })
                    .collect()
            })
            .collect();
        let (text, spans) = layout(&texts);
        let ref_id = format!("ref-{r:05}");
        for (pi, para) in paragraphs.iter().enumerate() {
            for (si, item) in para.iter().enumerate() {
                if let RefItem::Source { annotation, .. } = item {
                    pending_gold[*annotation].src_doc = ref_id.clone();
                    pending_gold[*annotation].src_span = spans[pi][si];
                }
            }
        }
        reference.push(Document::new(ref_id, cfg.reference_lang.clone(), text));
    }

    Ok(Dataset {
        suspicious,
        reference,
        gold: pending_gold,
    })
}

/// Translation-pair training data: every parallel pair is a positive, and
/// each reference-side sentence is paired with `negatives_per_positive`
/// random non-matching suspicious-side sentences. No pair occurs twice.
pub fn build_pair_dataset(
    parallel: &[ParallelPair],
    l1: &str,
    l2: &str,
    negatives_per_positive: usize,
    seed: u64,
) -> Result<Vec<PairExample>> {
    let mut seen = HashSet::new();
    let unique: Vec<&ParallelPair> = parallel.iter().filter(|p| seen.insert((*p).clone())).collect();
    if unique.len() < 2 {
        return Err(Error::Invalid("need at least two distinct parallel pairs".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut emitted: HashSet<(&str, &str)> = unique.iter().map(|p| (p.l1.as_str(), p.l2.as_str())).collect();
    let example = |a: &str, b: &str, label: bool| PairExample {
        a: a.to_string(),
        la: l1.to_string(),
        b: b.to_string(),
        lb: l2.to_string(),
        label,
    };
    let mut out = Vec::with_capacity(unique.len() * (1 + negatives_per_positive));
    for (i, p) in unique.iter().enumerate() {
        out.push(example(&p.l1, &p.l2, true));
        let mut others: Vec<usize> = (0..unique.len()).filter(|&j| j != i).collect();
        others.shuffle(&mut rng);
        let mut taken = 0;
        for j in others {
            if taken == negatives_per_positive {
                break;
            }
            let b = unique[j].l2.as_str();
            if emitted.insert((p.l1.as_str(), b)) {
                out.push(example(&p.l1, b, false));
                taken += 1;
            }
        }
    }
    Ok(out)
}
