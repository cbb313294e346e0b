//! In-memory inverted index over conceptualized fragments, ranked with
//! Okapi BM25.
//!
//! ```text
//! score(q, d) = Σ_{t ∈ unique(q)} idf(t) · tf·(k1 + 1) / (tf + k1·(1 − b + b·|d|/avgdl))
//! idf(t)      = ln(1 + (N − n_t + 0.5) / (n_t + 0.5))
//! ```

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textproc::{CharSpan, TermSequence};

const FORMAT_NAME: &str = "clpd-index";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdfVariant {
    /// `ln(1 + (N − n + 0.5)/(n + 0.5))`, never negative.
    #[default]
    NonNegative,
    /// `ln((N − n + 0.5)/(n + 0.5))`, negative for terms in more than half
    /// of the fragments.
    Classic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub k1: f64,
    pub b: f64,
    /// Number of candidates returned per query.
    pub k: usize,
    #[serde(default)]
    pub idf: IdfVariant,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            k1: 1.2,
            b: 0.75,
            k: 50,
            idf: IdfVariant::NonNegative,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 > 0.0 && self.k1.is_finite()) {
            return Err(Error::Invalid(format!("k1 must be positive, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::Invalid(format!("b must lie in [0, 1], got {}", self.b)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FragmentRef(pub u32);

impl FragmentRef {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub fragment: FragmentRef,
    pub tf: u32,
}

/// Where an indexed fragment came from. The text is kept so the detailed
/// analysis can work from the index alone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FragmentMeta {
    pub doc_id: String,
    pub lang: String,
    pub ordinal: usize,
    pub span: CharSpan,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub fragment: FragmentRef,
    pub score: f64,
}

#[derive(Debug, Clone, Default)]
pub struct InvertedIndex {
    postings: HashMap<String, Vec<Posting>>,
    lengths: Vec<u32>,
    meta: Vec<FragmentMeta>,
    total_len: u64,
    avgdl: f64,
    sealed: bool,
    dictionary: Option<String>,
    build_config: RetrievalConfig,
}

pub fn idf(variant: IdfVariant, n: usize, df: usize) -> f64 {
    let ratio = (n as f64 - df as f64 + 0.5) / (df as f64 + 0.5);
    match variant {
        IdfVariant::NonNegative => (1.0 + ratio).ln(),
        IdfVariant::Classic => ratio.ln(),
    }
}

fn unique_terms<S: AsRef<str>>(query: &[S]) -> BTreeSet<&str> {
    query.iter().map(AsRef::as_ref).collect()
}

impl InvertedIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records the fingerprint of the dictionary used to produce the terms.
    pub fn with_dictionary(mut self, fingerprint: impl Into<String>) -> Self {
        self.dictionary = Some(fingerprint.into());
        self
    }

    pub fn with_build_config(mut self, cfg: RetrievalConfig) -> Self {
        self.build_config = cfg;
        self
    }

    pub fn dictionary(&self) -> Option<&str> {
        self.dictionary.as_deref()
    }

    pub fn build_config(&self) -> RetrievalConfig {
        self.build_config
    }

    pub fn add_fragment(&mut self, meta: FragmentMeta, terms: &TermSequence) -> Result<FragmentRef> {
        if self.sealed {
            return Err(Error::Usage("cannot add fragments to a sealed index".into()));
        }
        let id = u32::try_from(self.meta.len()).map_err(|_| Error::Usage("index is full".into()))?;
        let fragment = FragmentRef(id);
        let mut counts: HashMap<&str, u32> = HashMap::new();
        for t in &terms.terms {
            *counts.entry(t.as_str()).or_default() += 1;
        }
        for (term, tf) in counts {
            // handles are increasing, so posting lists stay sorted
            self.postings
                .entry(term.to_string())
                .or_default()
                .push(Posting { fragment, tf });
        }
        let len = u32::try_from(terms.len()).map_err(|_| Error::Usage("fragment too long".into()))?;
        self.lengths.push(len);
        self.total_len += u64::from(len);
        self.meta.push(meta);
        Ok(fragment)
    }

    /// Freezes N and avgdl; afterwards the index is read-only.
    pub fn seal(&mut self) -> Result<()> {
        if self.sealed {
            return Err(Error::Usage("index is already sealed".into()));
        }
        self.avgdl = if self.lengths.is_empty() {
            0.0
        } else {
            self.total_len as f64 / self.lengths.len() as f64
        };
        self.sealed = true;
        Ok(())
    }

    pub fn is_sealed(&self) -> bool {
        self.sealed
    }

    pub fn len(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn fragment_len(&self, fragment: FragmentRef) -> Option<u32> {
        self.lengths.get(fragment.index()).copied()
    }

    pub fn meta(&self, fragment: FragmentRef) -> Option<&FragmentMeta> {
        self.meta.get(fragment.index())
    }

    pub fn fragments(&self) -> &[FragmentMeta] {
        &self.meta
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings(term).len()
    }

    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }

    fn require_sealed(&self) -> Result<()> {
        if self.sealed {
            Ok(())
        } else {
            Err(Error::Usage("index must be sealed before scoring".into()))
        }
    }

    fn length_norm(&self, fragment: usize, cfg: &RetrievalConfig) -> f64 {
        let rel = if self.avgdl > 0.0 {
            f64::from(self.lengths[fragment]) / self.avgdl
        } else {
            0.0
        };
        cfg.k1 * (1.0 - cfg.b + cfg.b * rel)
    }

    pub fn bm25_score<S: AsRef<str>>(&self, fragment: FragmentRef, query: &[S], cfg: &RetrievalConfig) -> Result<f64> {
        self.require_sealed()?;
        if fragment.index() >= self.len() {
            return Err(Error::Usage(format!("unknown fragment {}", fragment.0)));
        }
        let norm = self.length_norm(fragment.index(), cfg);
        let n = self.len();
        let mut score = 0.0;
        for term in unique_terms(query) {
            let list = self.postings(term);
            if let Ok(pos) = list.binary_search_by_key(&fragment, |p| p.fragment) {
                let tf = f64::from(list[pos].tf);
                score += idf(cfg.idf, n, list.len()) * tf * (cfg.k1 + 1.0) / (tf + norm);
            }
        }
        Ok(score)
    }

    /// Top `cfg.k` fragments by BM25, ordered by descending score then
    /// ascending handle. Fragments with a non-positive score are dropped.
    pub fn search<S: AsRef<str>>(&self, query: &[S], cfg: &RetrievalConfig) -> Result<Vec<Candidate>> {
        self.require_sealed()?;
        if cfg.k == 0 || query.is_empty() || self.is_empty() {
            return Ok(Vec::new());
        }
        let n = self.len();
        let mut acc: HashMap<FragmentRef, f64> = HashMap::new();
        for term in unique_terms(query) {
            let list = self.postings(term);
            if list.is_empty() {
                continue;
            }
            let w = idf(cfg.idf, n, list.len());
            for p in list {
                let tf = f64::from(p.tf);
                let norm = self.length_norm(p.fragment.index(), cfg);
                *acc.entry(p.fragment).or_default() += w * tf * (cfg.k1 + 1.0) / (tf + norm);
            }
        }
        let mut out: Vec<Candidate> = acc
            .into_iter()
            .filter(|(_, s)| *s > 0.0)
            .map(|(fragment, score)| Candidate { fragment, score })
            .collect();
        let order = |a: &Candidate, b: &Candidate| b.score.total_cmp(&a.score).then(a.fragment.cmp(&b.fragment));
        if out.len() > cfg.k {
            out.select_nth_unstable_by(cfg.k - 1, order);
            out.truncate(cfg.k);
        }
        out.sort_by(order);
        Ok(out)
    }

    /// Line-based persisted form: a header, one line per fragment, then one
    /// line per term in sorted order. Identical for identical insertion order.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        self.require_sealed()?;
        let header = IndexHeader {
            format: FORMAT_NAME.to_string(),
            version: FORMAT_VERSION,
            n: self.len(),
            total_len: self.total_len,
            avgdl: self.avgdl,
            config: self.build_config,
            dictionary: self.dictionary.clone(),
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for (meta, len) in self.meta.iter().zip(&self.lengths) {
            serde_json::to_writer(
                &mut out,
                &FragmentLine {
                    len: *len,
                    meta: meta.clone(),
                },
            )?;
            out.write_all(b"\n")?;
        }
        let mut terms: Vec<&String> = self.postings.keys().collect();
        terms.sort();
        for term in terms {
            let postings: Vec<(u32, u32)> = self.postings[term].iter().map(|p| (p.fragment.0, p.tf)).collect();
            serde_json::to_writer(
                &mut out,
                &TermLine {
                    term: term.clone(),
                    postings,
                },
            )?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        Ok(buf)
    }

    pub fn read_from<R: BufRead>(reader: R, source_name: &str) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let header: IndexHeader = match lines.next() {
            Some((_, line)) => serde_json::from_str(&line?).map_err(|e| Error::parse(source_name, 1, e.to_string()))?,
            None => return Err(Error::parse(source_name, 1, "empty index file")),
        };
        if header.format != FORMAT_NAME || header.version != FORMAT_VERSION {
            return Err(Error::parse(
                source_name,
                1,
                format!("unsupported index format {} v{}", header.format, header.version),
            ));
        }
        let mut index = InvertedIndex {
            dictionary: header.dictionary,
            build_config: header.config,
            ..Default::default()
        };
        for _ in 0..header.n {
            let (idx, line) = lines
                .next()
                .ok_or_else(|| Error::parse(source_name, header.n + 1, "truncated fragment table"))?;
            let f: FragmentLine =
                serde_json::from_str(&line?).map_err(|e| Error::parse(source_name, idx + 1, e.to_string()))?;
            index.lengths.push(f.len);
            index.total_len += u64::from(f.len);
            index.meta.push(f.meta);
        }
        for (idx, line) in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let t: TermLine =
                serde_json::from_str(&line).map_err(|e| Error::parse(source_name, idx + 1, e.to_string()))?;
            let mut list = Vec::with_capacity(t.postings.len());
            let mut prev: Option<u32> = None;
            for (fragment, tf) in t.postings {
                if fragment as usize >= header.n || tf == 0 || prev.is_some_and(|p| p >= fragment) {
                    return Err(Error::parse(source_name, idx + 1, "invalid posting"));
                }
                prev = Some(fragment);
                list.push(Posting {
                    fragment: FragmentRef(fragment),
                    tf,
                });
            }
            index.postings.insert(t.term, list);
        }
        index.seal()?;
        if index.total_len != header.total_len {
            return Err(Error::parse(source_name, 1, "fragment lengths do not match header"));
        }
        Ok(index)
    }
}

#[derive(Serialize, Deserialize)]
struct IndexHeader {
    format: String,
    version: u32,
    n: usize,
    total_len: u64,
    avgdl: f64,
    config: RetrievalConfig,
    dictionary: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct FragmentLine {
    len: u32,
    #[serde(flatten)]
    meta: FragmentMeta,
}

#[derive(Serialize, Deserialize)]
struct TermLine {
    term: String,
    postings: Vec<(u32, u32)>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(i: usize) -> FragmentMeta {
        FragmentMeta {
            doc_id: format!("d{i}"),
            lang: "en".into(),
            ordinal: 0,
            span: CharSpan::new(0, 1),
            text: String::new(),
        }
    }

    fn terms(t: &[&str]) -> TermSequence {
        TermSequence {
            terms: t.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn two_fragment_index() -> InvertedIndex {
        let mut idx = InvertedIndex::new();
        idx.add_fragment(meta(0), &terms(&["c1", "c2"])).unwrap();
        idx.add_fragment(meta(1), &terms(&["c1"])).unwrap();
        idx.seal().unwrap();
        idx
    }

    #[test]
    fn handles_count_from_zero() {
        let mut idx = InvertedIndex::new();
        assert_eq!(idx.add_fragment(meta(0), &terms(&["a"])).unwrap(), FragmentRef(0));
        assert_eq!(idx.add_fragment(meta(1), &terms(&["a"])).unwrap(), FragmentRef(1));
    }

    #[test]
    fn term_frequencies_are_counted() {
        let mut idx = InvertedIndex::new();
        idx.add_fragment(meta(0), &terms(&["c1", "c1", "c2"])).unwrap();
        assert_eq!(
            idx.postings("c1"),
            [Posting {
                fragment: FragmentRef(0),
                tf: 2
            }]
        );
        assert_eq!(idx.postings("c2")[0].tf, 1);
    }

    #[test]
    fn empty_fragment_has_no_postings() {
        let mut idx = InvertedIndex::new();
        let r = idx.add_fragment(meta(0), &TermSequence::default()).unwrap();
        assert_eq!(idx.fragment_len(r), Some(0));
        assert_eq!(idx.vocabulary_size(), 0);
    }

    #[test]
    fn seal_freezes_average_length() {
        assert_eq!(two_fragment_index().avgdl(), 1.5);
    }

    #[test]
    fn empty_sealed_index_returns_nothing() {
        let mut idx = InvertedIndex::new();
        idx.seal().unwrap();
        assert!(idx.search(&["x"], &RetrievalConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn lifecycle_errors() {
        let mut idx = two_fragment_index();
        assert!(matches!(
            idx.add_fragment(meta(2), &terms(&["c3"])),
            Err(Error::Usage(_))
        ));
        assert!(matches!(idx.seal(), Err(Error::Usage(_))));
        let unsealed = InvertedIndex::new();
        assert!(matches!(
            unsealed.search(&["c1"], &RetrievalConfig::default()),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn hand_computed_score() {
        let idx = two_fragment_index();
        let cfg = RetrievalConfig::default();
        let expected = 0.88 * 2f64.ln();
        let s = idx.bm25_score(FragmentRef(0), &["c2"], &cfg).unwrap();
        assert!((s - expected).abs() < 1e-12, "{s}");
        assert!((s - 0.6100).abs() < 5e-5);
        assert_eq!(idx.bm25_score(FragmentRef(1), &["c2"], &cfg).unwrap(), 0.0);
        assert_eq!(idx.bm25_score(FragmentRef(0), &["zz"], &cfg).unwrap(), 0.0);
        assert!(idx.bm25_score(FragmentRef(9), &["c2"], &cfg).is_err());
    }

    #[test]
    fn repeated_query_terms_count_once() {
        let idx = two_fragment_index();
        let cfg = RetrievalConfig::default();
        let once = idx.bm25_score(FragmentRef(0), &["c2"], &cfg).unwrap();
        let twice = idx.bm25_score(FragmentRef(0), &["c2", "c2"], &cfg).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn search_top1() {
        let idx = two_fragment_index();
        let cfg = RetrievalConfig {
            k: 1,
            ..Default::default()
        };
        let hits = idx.search(&["c2"], &cfg).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].fragment, FragmentRef(0));
        assert!((hits[0].score - 0.6100).abs() < 5e-5);
    }

    #[test]
    fn search_with_large_k_returns_all_positive() {
        let idx = two_fragment_index();
        let hits = idx.search(&["c1", "c2"], &RetrievalConfig::default()).unwrap();
        assert_eq!(hits.iter().map(|c| c.fragment.0).collect::<Vec<_>>(), [0, 1]);
        assert!(hits[0].score >= hits[1].score);
        assert!(idx.search::<&str>(&[], &RetrievalConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn classic_idf_can_go_negative_and_is_filtered() {
        let mut idx = InvertedIndex::new();
        for i in 0..3 {
            idx.add_fragment(meta(i), &terms(&["common"])).unwrap();
        }
        idx.seal().unwrap();
        let cfg = RetrievalConfig {
            idf: IdfVariant::Classic,
            ..Default::default()
        };
        assert!(idf(IdfVariant::Classic, 3, 3) < 0.0);
        assert!(idx.search(&["common"], &cfg).unwrap().is_empty());
    }

    #[test]
    fn persisted_form_round_trips() {
        let idx = two_fragment_index().with_dictionary("sha256:abc");
        let bytes = idx.to_bytes().unwrap();
        let back = InvertedIndex::read_from(bytes.as_slice(), "t").unwrap();
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert_eq!(back.dictionary(), Some("sha256:abc"));
        let cfg = RetrievalConfig::default();
        assert_eq!(
            back.search(&["c1", "c2"], &cfg).unwrap(),
            idx.search(&["c1", "c2"], &cfg).unwrap()
        );
    }

    #[test]
    fn rejects_bad_config() {
        assert!(RetrievalConfig {
            k1: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(RetrievalConfig {
            b: 1.5,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(RetrievalConfig::default().validate().is_ok());
    }
}
