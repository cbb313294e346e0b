//! End-to-end detection: paragraph indexing of the reference collection,
//! then per suspicious sentence retrieval, pairwise comparison and
//! best-candidate selection.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::analysis::{compare_candidates, fragment_verdict, select_best, PairVerdict, Scorer, Threshold};
use crate::error::{Error, Result};
use crate::index::{FragmentMeta, FragmentRef, InvertedIndex, RetrievalConfig};
use crate::textproc::{fragment_terms, segment, CharSpan, Document, Fragment, FragmentKind, ResourceSet};
use crate::thesaurus::ClusterDictionary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub susp_doc: String,
    pub susp_span: CharSpan,
    pub src_doc: String,
    pub src_span: CharSpan,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub dictionary: String,
    pub retrieval: RetrievalConfig,
    pub threshold: f64,
    pub beta: f64,
    pub scorer: String,
    pub merge_adjacent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: ReportConfig,
    pub detections: Vec<Detection>,
}

impl Report {
    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceCandidate {
    pub fragment: FragmentRef,
    pub src_doc: String,
    pub paragraph: usize,
    pub bm25: f64,
    pub score: Option<f64>,
}

/// Retrieval and comparison details for one suspicious sentence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SentenceTrace {
    pub susp_doc: String,
    pub sentence: usize,
    pub susp_span: CharSpan,
    pub candidates: Vec<TraceCandidate>,
    pub selected: Option<FragmentRef>,
}

pub fn write_trace<W: Write>(mut out: W, trace: &[SentenceTrace]) -> Result<()> {
    for t in trace {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(feature = "parallel")]
fn map_ordered<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_ordered<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    items.iter().map(f).collect()
}

/// Builds a sealed index with one entry per reference paragraph.
/// Preprocessing may run in parallel; handles are assigned in document order.
pub fn index_reference(
    docs: &[Document],
    dict: &ClusterDictionary,
    resources: &ResourceSet,
    cfg: RetrievalConfig,
) -> Result<InvertedIndex> {
    let prepared = map_ordered(docs, |doc| {
        segment(doc, FragmentKind::Paragraph)
            .into_iter()
            .map(|p| {
                let terms = fragment_terms(&p.text, &doc.lang, resources, dict);
                (p, terms)
            })
            .collect::<Vec<_>>()
    });
    let mut index = InvertedIndex::new()
        .with_dictionary(dict.fingerprint())
        .with_build_config(cfg);
    for (p, terms) in prepared.into_iter().flatten() {
        let meta = FragmentMeta {
            doc_id: p.doc_id,
            lang: p.lang,
            ordinal: p.ordinal,
            span: p.span,
            text: p.text,
        };
        index.add_fragment(meta, &terms)?;
    }
    index.seal()?;
    Ok(index)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DetectOptions {
    /// Join detections of consecutive sentences that point into the same
    /// source paragraph.
    pub merge_adjacent: bool,
    pub trace: bool,
}

/// Detection output for one document.
#[derive(Debug, Clone, Default)]
pub struct DocumentResult {
    pub detections: Vec<Detection>,
    pub trace: Vec<SentenceTrace>,
}

struct Hit {
    sentence: usize,
    susp_span: CharSpan,
    fragment: FragmentRef,
    src_span: CharSpan,
    score: f64,
}

/// Shared, read-only detection context.
pub struct Detector<'a> {
    index: &'a InvertedIndex,
    dict: &'a ClusterDictionary,
    resources: &'a ResourceSet,
    scorer: &'a dyn Scorer,
    cfg: RetrievalConfig,
    threshold: Threshold,
    options: DetectOptions,
    dictionary_id: String,
}

impl<'a> Detector<'a> {
    pub fn new(
        index: &'a InvertedIndex,
        dict: &'a ClusterDictionary,
        resources: &'a ResourceSet,
        scorer: &'a dyn Scorer,
        cfg: RetrievalConfig,
        threshold: Threshold,
    ) -> Result<Self> {
        if !index.is_sealed() {
            return Err(Error::Usage("detection requires a sealed index".into()));
        }
        cfg.validate()?;
        let dictionary_id = dict.fingerprint();
        if let Some(built_with) = index.dictionary() {
            if built_with != dictionary_id {
                return Err(Error::DictionaryMismatch {
                    index: built_with.to_string(),
                    dictionary: dictionary_id,
                });
            }
        }
        Ok(Detector {
            index,
            dict,
            resources,
            scorer,
            cfg,
            threshold,
            options: DetectOptions::default(),
            dictionary_id,
        })
    }

    pub fn with_options(mut self, options: DetectOptions) -> Self {
        self.options = options;
        self
    }

    pub fn config(&self) -> ReportConfig {
        ReportConfig {
            dictionary: self.dictionary_id.clone(),
            retrieval: self.cfg,
            threshold: self.threshold.value,
            beta: self.threshold.beta,
            scorer: self.scorer.id(),
            merge_adjacent: self.options.merge_adjacent,
        }
    }

    fn check_language(&self, doc: &Document) -> Result<()> {
        if let Some(first) = self.index.fragments().first() {
            if first.lang == doc.lang {
                return Err(Error::Usage(format!(
                    "suspicious document {:?} is in the reference language {:?}",
                    doc.id, doc.lang
                )));
            }
        }
        Ok(())
    }

    fn candidate_fragment(&self, fragment: FragmentRef) -> Fragment {
        let meta = self.index.meta(fragment).expect("search returns valid handles");
        Fragment {
            doc_id: meta.doc_id.clone(),
            lang: meta.lang.clone(),
            kind: FragmentKind::Paragraph,
            ordinal: meta.ordinal,
            span: meta.span,
            text: meta.text.clone(),
        }
    }

    fn process_sentence(&self, sentence: &Fragment, trace: &mut Vec<SentenceTrace>) -> Result<Option<Hit>> {
        let query = fragment_terms(&sentence.text, &sentence.lang, self.resources, self.dict);
        let hits = self.index.search(&query.terms, &self.cfg)?;
        let fragments: Vec<Fragment> = hits.iter().map(|c| self.candidate_fragment(c.fragment)).collect();
        let candidates: Vec<(FragmentRef, &Fragment)> = hits.iter().map(|c| c.fragment).zip(fragments.iter()).collect();
        let verdicts = compare_candidates(sentence, &candidates, self.scorer, self.threshold)?;
        let per_fragment: Vec<PairVerdict> = verdicts.iter().filter_map(|v| fragment_verdict(v).cloned()).collect();
        let best = select_best(&per_fragment);

        if self.options.trace {
            trace.push(SentenceTrace {
                susp_doc: sentence.doc_id.clone(),
                sentence: sentence.ordinal,
                susp_span: sentence.span,
                candidates: hits
                    .iter()
                    .zip(&fragments)
                    .map(|(c, f)| TraceCandidate {
                        fragment: c.fragment,
                        src_doc: f.doc_id.clone(),
                        paragraph: f.ordinal,
                        bm25: c.score,
                        score: per_fragment.iter().find(|v| v.candidate == c.fragment).map(|v| v.score),
                    })
                    .collect(),
                selected: best.map(|b| b.candidate),
            });
        }

        Ok(best.map(|b| Hit {
            sentence: sentence.ordinal,
            susp_span: sentence.span,
            fragment: b.candidate,
            src_span: b.src_span,
            score: b.score,
        }))
    }

    /// Retrieval only: ranked candidates for every sentence of `doc`,
    /// without pairwise scoring.
    pub fn retrieve(&self, doc: &Document) -> Result<Vec<SentenceTrace>> {
        self.check_language(doc)?;
        let mut out = Vec::new();
        for sentence in segment(doc, FragmentKind::Sentence) {
            let query = fragment_terms(&sentence.text, &sentence.lang, self.resources, self.dict);
            let hits = if self.cfg.k == 0 {
                Vec::new()
            } else {
                self.index.search(&query.terms, &self.cfg)?
            };
            out.push(SentenceTrace {
                susp_doc: sentence.doc_id.clone(),
                sentence: sentence.ordinal,
                susp_span: sentence.span,
                candidates: hits
                    .iter()
                    .map(|c| {
                        let meta = self.index.meta(c.fragment).expect("search returns valid handles");
                        TraceCandidate {
                            fragment: c.fragment,
                            src_doc: meta.doc_id.clone(),
                            paragraph: meta.ordinal,
                            bm25: c.score,
                            score: None,
                        }
                    })
                    .collect(),
                selected: None,
            });
        }
        Ok(out)
    }

    pub fn detect_document(&self, doc: &Document) -> Result<DocumentResult> {
        self.check_language(doc)?;
        let mut result = DocumentResult::default();
        if self.cfg.k == 0 {
            return Ok(result);
        }
        let mut hits = Vec::new();
        for sentence in segment(doc, FragmentKind::Sentence) {
            if let Some(hit) = self.process_sentence(&sentence, &mut result.trace)? {
                hits.push(hit);
            }
        }
        if self.options.merge_adjacent {
            hits = merge_adjacent(hits);
        }
        result.detections = hits
            .into_iter()
            .map(|h| Detection {
                susp_doc: doc.id.clone(),
                susp_span: h.susp_span,
                src_doc: self.index.meta(h.fragment).expect("valid handle").doc_id.clone(),
                src_span: h.src_span,
                score: h.score,
            })
            .collect();
        Ok(result)
    }

    /// Processes documents independently (in parallel when enabled) and
    /// concatenates their results in input order.
    pub fn detect_all(&self, docs: &[Document]) -> Result<(Report, Vec<SentenceTrace>)> {
        let results = map_ordered(docs, |d| self.detect_document(d));
        let mut detections = Vec::new();
        let mut trace = Vec::new();
        for r in results {
            let r = r?;
            detections.extend(r.detections);
            trace.extend(r.trace);
        }
        Ok((
            Report {
                config: self.config(),
                detections,
            },
            trace,
        ))
    }
}

fn merge_adjacent(hits: Vec<Hit>) -> Vec<Hit> {
    let mut out: Vec<Hit> = Vec::with_capacity(hits.len());
    for h in hits {
        match out.last_mut() {
            Some(prev) if prev.fragment == h.fragment && prev.sentence + 1 == h.sentence => {
                prev.sentence = h.sentence;
                prev.susp_span.end = h.susp_span.end;
                prev.src_span = CharSpan::new(
                    prev.src_span.start.min(h.src_span.start),
                    prev.src_span.end.max(h.src_span.end),
                );
                prev.score = prev.score.max(h.score);
            }
            _ => out.push(h),
        }
    }
    out
}

/// Runs detection on a single suspicious document.
pub fn detect(
    doc: &Document,
    index: &InvertedIndex,
    dict: &ClusterDictionary,
    resources: &ResourceSet,
    scorer: &dyn Scorer,
    cfg: RetrievalConfig,
    threshold: Threshold,
) -> Result<Report> {
    let detector = Detector::new(index, dict, resources, scorer, cfg, threshold)?;
    let result = detector.detect_document(doc)?;
    Ok(Report {
        config: detector.config(),
        detections: result.detections,
    })
}
