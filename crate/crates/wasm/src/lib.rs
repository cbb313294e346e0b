//! Browser bindings for a handful of `clpd` operations.
//!
//! Every exported function takes plain strings and numbers and returns a
//! JSON document, or an error message. The `*_json` functions hold the logic
//! and are callable from native code; the `#[wasm_bindgen]` wrappers only
//! convert the error type.

use std::collections::HashSet;
use std::io::Cursor;

use clpd::analysis::{calibrate, candidate_thresholds, f_beta, precision_recall};
use clpd::index::{idf, FragmentMeta, IdfVariant, InvertedIndex, RetrievalConfig};
use clpd::textproc::{conceptualize, normalize_text, segment, Document, FragmentKind, LangResources, TermSequence};
use clpd::thesaurus::{build_clusters, load_senses, MergeMode};
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

type Out = Result<String, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn to_json(v: &impl Serialize) -> Out {
    serde_json::to_string(v).map_err(err)
}

fn parse_idf(name: &str) -> Result<IdfVariant, String> {
    match name {
        "non-negative" | "" => Ok(IdfVariant::NonNegative),
        "classic" => Ok(IdfVariant::Classic),
        other => Err(format!("unknown idf variant {other:?}")),
    }
}

fn parse_mode(name: &str) -> Result<MergeMode, String> {
    match name.to_ascii_lowercase().as_str() {
        "top1" => Ok(MergeMode::Top1),
        "all" => Ok(MergeMode::All),
        other => Err(format!("unknown mode {other:?}")),
    }
}

fn resources(stopwords: &str) -> LangResources {
    LangResources::new("en").with_stopwords(stopwords.split_whitespace())
}

#[derive(Serialize)]
struct Hit {
    rank: usize,
    paragraph: usize,
    score: f64,
    length: u32,
    text: String,
}

#[derive(Serialize)]
struct QueryTerm {
    term: String,
    df: usize,
    idf: f64,
}

/// Splits `reference` into paragraphs, indexes them and ranks them against
/// `query` with BM25.
pub fn bm25_search_json(
    reference: &str,
    query: &str,
    stopwords: &str,
    k1: f64,
    b: f64,
    k: usize,
    idf_variant: &str,
) -> Out {
    let cfg = RetrievalConfig {
        k1,
        b,
        k,
        idf: parse_idf(idf_variant)?,
    };
    cfg.validate().map_err(err)?;
    let res = resources(stopwords);
    let doc = Document::new("reference", "en", reference);
    let mut index = InvertedIndex::new();
    for frag in segment(&doc, FragmentKind::Paragraph) {
        let terms = TermSequence {
            terms: normalize_text(&frag.text, &res),
        };
        let meta = FragmentMeta {
            doc_id: doc.id.clone(),
            lang: doc.lang.clone(),
            ordinal: frag.ordinal,
            span: frag.span,
            text: frag.text.clone(),
        };
        index.add_fragment(meta, &terms).map_err(err)?;
    }
    index.seal().map_err(err)?;
    let q = normalize_text(query, &res);
    let mut seen = HashSet::new();
    let terms: Vec<QueryTerm> = q
        .iter()
        .filter(|t| seen.insert(t.as_str()))
        .map(|t| {
            let df = index.doc_freq(t);
            QueryTerm {
                term: t.clone(),
                df,
                idf: idf(cfg.idf, index.len(), df),
            }
        })
        .collect();
    let hits: Vec<Hit> = index
        .search(&q, &cfg)
        .map_err(err)?
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let meta = index.meta(c.fragment).expect("candidate from this index");
            Hit {
                rank: i + 1,
                paragraph: meta.ordinal,
                score: c.score,
                length: index.fragment_len(c.fragment).unwrap_or(0),
                text: meta.text.clone(),
            }
        })
        .collect();
    to_json(&json!({
        "paragraphs": index.len(),
        "avgdl": index.avgdl(),
        "query": terms,
        "hits": hits,
    }))
}

/// Parses `score label` lines, where label is 0/1 or true/false.
fn parse_scored(text: &str) -> Result<Vec<(f64, bool)>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|c| !c.is_empty());
        let (Some(s), Some(l), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(format!("line {}: expected `score label`", i + 1));
        };
        let score: f64 = s.parse().map_err(|_| format!("line {}: bad score {s:?}", i + 1))?;
        let label = match l {
            "1" | "true" => true,
            "0" | "false" => false,
            _ => return Err(format!("line {}: bad label {l:?}", i + 1)),
        };
        out.push((score, label));
    }
    Ok(out)
}

/// F_β at every candidate threshold, plus the calibrated choice.
pub fn calibration_curve_json(scored: &str, beta: f64) -> Out {
    let dev = parse_scored(scored)?;
    let best = calibrate(&dev, beta).map_err(err)?;
    let scores: Vec<f64> = dev.iter().map(|(s, _)| *s).collect();
    let curve: Vec<_> = candidate_thresholds(&scores)
        .into_iter()
        .map(|t| {
            let tp = dev.iter().filter(|(s, l)| *l && *s >= t).count();
            let fp = dev.iter().filter(|(s, l)| !*l && *s >= t).count();
            let fn_ = dev.iter().filter(|(s, l)| *l && *s < t).count();
            let (p, r) = precision_recall(tp, fp, fn_);
            json!({"threshold": t, "precision": p, "recall": r, "f_beta": f_beta(p, r, beta)})
        })
        .collect();
    to_json(&json!({
        "pairs": dev.len(),
        "best": best,
        "curve": curve,
    }))
}

/// Builds a dictionary from sense lines and shows how `sentence` maps onto
/// its clusters.
pub fn conceptualize_json(senses: &str, sentence: &str, lang: &str, mode: &str) -> Out {
    let mode = parse_mode(mode)?;
    let load = load_senses(Cursor::new(senses), "senses").map_err(err)?;
    let (dict, report) = build_clusters(&load.records, mode);
    let lang = lang.trim().to_ascii_lowercase();
    let res = LangResources::new(&lang);
    let lemmas = normalize_text(sentence, &res);
    let words: Vec<_> = lemmas
        .iter()
        .map(|l| {
            let clusters = dict.lookup(&lang, l);
            let members: Vec<Vec<String>> = clusters
                .iter()
                .map(|c| {
                    dict.members()
                        .get(c)
                        .map(|m| m.iter().map(|(lg, w)| format!("{lg}:{w}")).collect())
                        .unwrap_or_default()
                })
                .collect();
            json!({"lemma": l, "clusters": clusters, "members": members})
        })
        .collect();
    let terms = conceptualize(&lemmas, &lang, &dict).terms;
    to_json(&json!({
        "mode": mode.as_str(),
        "fingerprint": dict.fingerprint(),
        "build": report,
        "words": words,
        "terms": terms,
    }))
}

#[wasm_bindgen]
pub fn bm25_search(
    reference: &str,
    query: &str,
    stopwords: &str,
    k1: f64,
    b: f64,
    k: usize,
    idf_variant: &str,
) -> Result<String, JsValue> {
    bm25_search_json(reference, query, stopwords, k1, b, k, idf_variant).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn calibration_curve(scored: &str, beta: f64) -> Result<String, JsValue> {
    calibration_curve_json(scored, beta).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn conceptualize_sentence(senses: &str, sentence: &str, lang: &str, mode: &str) -> Result<String, JsValue> {
    conceptualize_json(senses, sentence, lang, mode).map_err(|e| JsValue::from_str(&e))
}
