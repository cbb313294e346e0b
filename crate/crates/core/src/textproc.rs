//! Segmentation, token normalization and concept substitution.
//!
//! All offsets are in Unicode scalar values (`char`s), not bytes.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use unicode_general_category::{get_general_category, GeneralCategory};

use crate::error::{Error, Result};
use crate::thesaurus::{fold_case, ClusterDictionary, MergeMode};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub lang: String,
    pub text: String,
}

impl Document {
    pub fn new(id: impl Into<String>, lang: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            lang: lang.into(),
            text: text.into(),
        }
    }

    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }
}

/// Half-open character range `[start, end)`, serialized as `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct CharSpan {
    pub start: usize,
    pub end: usize,
}

impl CharSpan {
    pub fn new(start: usize, end: usize) -> Self {
        CharSpan { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &CharSpan) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn contains(&self, other: &CharSpan) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn shift(&self, by: usize) -> CharSpan {
        CharSpan::new(self.start + by, self.end + by)
    }
}

impl From<(usize, usize)> for CharSpan {
    fn from((start, end): (usize, usize)) -> Self {
        CharSpan { start, end }
    }
}

impl From<CharSpan> for (usize, usize) {
    fn from(s: CharSpan) -> Self {
        (s.start, s.end)
    }
}

/// Returns the substring covered by a character span, or `None` when the
/// span lies outside `text`.
pub fn slice_chars(text: &str, span: CharSpan) -> Option<&str> {
    if span.start > span.end {
        return None;
    }
    let mut indices = text.char_indices().map(|(i, _)| i).chain(std::iter::once(text.len()));
    let start = indices.nth(span.start)?;
    let end = if span.end == span.start {
        start
    } else {
        indices.nth(span.end - span.start - 1)?
    };
    Some(&text[start..end])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FragmentKind {
    Sentence,
    Paragraph,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fragment {
    pub doc_id: String,
    pub lang: String,
    pub kind: FragmentKind,
    pub ordinal: usize,
    pub span: CharSpan,
    pub text: String,
}

const TERMINATORS: [char; 4] = ['.', '!', '?', '։'];
const CLOSERS: [char; 8] = ['"', '\'', ')', ']', '»', '”', '’', '›'];
const OPENERS: [char; 8] = ['"', '\'', '(', '[', '«', '“', '‘', '‹'];

/// Abbreviations that never end a sentence, lower-cased and including the
/// trailing period.
pub fn default_abbreviations(lang: &str) -> HashSet<String> {
    let list: &[&str] = match lang {
        "en" => &[
            "dr.", "mr.", "mrs.", "ms.", "prof.", "st.", "jr.", "sr.", "vs.", "e.g.", "i.e.", "inc.", "ltd.", "co.",
            "no.", "fig.", "approx.", "mt.", "gen.", "col.", "lt.", "sgt.", "gov.", "rev.", "jan.", "feb.", "aug.",
            "sept.", "oct.", "nov.", "dec.",
        ],
        "ru" => &[
            "г.",
            "гг.",
            "т.е.",
            "т.д.",
            "т.п.",
            "др.",
            "см.",
            "им.",
            "ул.",
            "проф.",
            "акад.",
            "стр.",
            "рис.",
        ],
        "fr" => &["m.", "mme.", "mlle.", "dr.", "p.", "cf.", "av.", "ex."],
        "de" => &[
            "dr.", "hr.", "fr.", "bzw.", "usw.", "z.b.", "ca.", "nr.", "vgl.", "prof.",
        ],
        "es" => &["sr.", "sra.", "srta.", "dr.", "dra.", "ud.", "uds.", "p.ej.", "etc."],
        "hy" => &["թ.", "թթ.", "տ.", "պրոֆ."],
        _ => &[],
    };
    list.iter().map(|s| s.to_string()).collect()
}

/// Splits a document into paragraphs or sentences using the built-in
/// abbreviation list for its language.
pub fn segment(doc: &Document, kind: FragmentKind) -> Vec<Fragment> {
    segment_with(doc, kind, &default_abbreviations(&doc.lang))
}

pub fn segment_with(doc: &Document, kind: FragmentKind, abbreviations: &HashSet<String>) -> Vec<Fragment> {
    let chars: Vec<char> = doc.text.chars().collect();
    let paragraphs = paragraph_ranges(&chars);
    let ranges: Vec<(usize, usize)> = match kind {
        FragmentKind::Paragraph => paragraphs,
        FragmentKind::Sentence => paragraphs
            .into_iter()
            .flat_map(|(s, e)| sentence_ranges(&chars, s, e, abbreviations))
            .collect(),
    };
    ranges
        .into_iter()
        .enumerate()
        .map(|(ordinal, (start, end))| Fragment {
            doc_id: doc.id.clone(),
            lang: doc.lang.clone(),
            kind,
            ordinal,
            span: CharSpan::new(start, end),
            text: chars[start..end].iter().collect(),
        })
        .collect()
}

/// Trims whitespace from both ends of `[start, end)`; `None` when nothing
/// is left.
fn trim_range(chars: &[char], mut start: usize, mut end: usize) -> Option<(usize, usize)> {
    while start < end && chars[start].is_whitespace() {
        start += 1;
    }
    while end > start && chars[end - 1].is_whitespace() {
        end -= 1;
    }
    (start < end).then_some((start, end))
}

/// Paragraphs are separated by whitespace runs containing at least two
/// line breaks.
fn paragraph_ranges(chars: &[char]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            let run_start = i;
            let mut newlines = 0;
            while i < chars.len() && chars[i].is_whitespace() {
                if chars[i] == '\n' {
                    newlines += 1;
                }
                i += 1;
            }
            if newlines >= 2 {
                out.extend(trim_range(chars, start, run_start));
                start = i;
            }
        } else {
            i += 1;
        }
    }
    out.extend(trim_range(chars, start, chars.len()));
    out
}

fn is_abbreviation(chars: &[char], from: usize, dot: usize, abbreviations: &HashSet<String>) -> bool {
    let mut w = dot;
    while w > from && !chars[w - 1].is_whitespace() && !OPENERS.contains(&chars[w - 1]) {
        w -= 1;
    }
    let word: String = chars[w..=dot].iter().collect::<String>().to_lowercase();
    if abbreviations.contains(&word) {
        return true;
    }
    // single-letter initials such as "J. Smith"
    dot - w == 1 && chars[w].is_uppercase()
}

fn sentence_ranges(chars: &[char], start: usize, end: usize, abbreviations: &HashSet<String>) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut sent_start = start;
    let mut i = start;
    while i < end {
        if !TERMINATORS.contains(&chars[i]) {
            i += 1;
            continue;
        }
        let term = i;
        let mut j = i + 1;
        while j < end && (TERMINATORS.contains(&chars[j]) || CLOSERS.contains(&chars[j])) {
            j += 1;
        }
        if j >= end || !chars[j].is_whitespace() {
            i = j;
            continue;
        }
        let mut k = j;
        while k < end && chars[k].is_whitespace() {
            k += 1;
        }
        let mut first = k;
        while first < end && OPENERS.contains(&chars[first]) {
            first += 1;
        }
        let starts_sentence = first < end && (chars[first].is_uppercase() || chars[first].is_numeric());
        let abbreviated =
            chars[term] == '.' && j == term + 1 && is_abbreviation(chars, sent_start, term, abbreviations);
        if starts_sentence && !abbreviated {
            out.extend(trim_range(chars, sent_start, j));
            sent_start = k;
        }
        i = k;
    }
    out.extend(trim_range(chars, sent_start, end));
    out
}

/// Per-language preprocessing resources. Lemmatization is a dictionary
/// lookup with identity fallback.
#[derive(Debug, Clone, Default)]
pub struct LangResources {
    pub lang: String,
    pub stopwords: HashSet<String>,
    pub lemma_map: HashMap<String, String>,
}

impl LangResources {
    pub fn new(lang: &str) -> Self {
        LangResources {
            lang: lang.to_string(),
            ..Default::default()
        }
    }

    pub fn with_stopwords<I, S>(mut self, words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.stopwords.extend(words.into_iter().map(|w| fold_case(w.as_ref())));
        self
    }

    pub fn with_lemmas<I, S, T>(mut self, pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, T)>,
        S: AsRef<str>,
        T: AsRef<str>,
    {
        self.lemma_map.extend(
            pairs
                .into_iter()
                .map(|(s, l)| (fold_case(s.as_ref()), fold_case(l.as_ref()))),
        );
        self
    }

    /// One stopword per line.
    pub fn load_stopwords<R: BufRead>(&mut self, reader: R) -> Result<()> {
        for line in reader.lines() {
            let line = line?;
            let w = line.trim();
            if !w.is_empty() && !w.starts_with('#') {
                self.stopwords.insert(fold_case(w));
            }
        }
        Ok(())
    }

    /// `surface<TAB>lemma` per line.
    pub fn load_lemma_map<R: BufRead>(&mut self, reader: R, source_name: &str) -> Result<()> {
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let (surface, lemma) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(source_name, idx + 1, "expected surface<TAB>lemma"))?;
            self.lemma_map
                .insert(fold_case(surface.trim()), fold_case(lemma.trim()));
        }
        Ok(())
    }

    pub fn lemmatize<'a>(&'a self, folded: &'a str) -> &'a str {
        self.lemma_map.get(folded).map(String::as_str).unwrap_or(folded)
    }
}

/// Resources for several languages; unknown languages get empty resources.
#[derive(Debug, Clone, Default)]
pub struct ResourceSet {
    by_lang: HashMap<String, LangResources>,
    empty: LangResources,
}

impl ResourceSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, res: LangResources) {
        self.by_lang.insert(res.lang.clone(), res);
    }

    pub fn entry(&mut self, lang: &str) -> &mut LangResources {
        self.by_lang
            .entry(lang.to_string())
            .or_insert_with(|| LangResources::new(lang))
    }

    pub fn get(&self, lang: &str) -> &LangResources {
        self.by_lang.get(lang).unwrap_or(&self.empty)
    }
}

fn is_punctuation(c: char) -> bool {
    matches!(
        get_general_category(c),
        GeneralCategory::ConnectorPunctuation
            | GeneralCategory::DashPunctuation
            | GeneralCategory::OpenPunctuation
            | GeneralCategory::ClosePunctuation
            | GeneralCategory::InitialPunctuation
            | GeneralCategory::FinalPunctuation
            | GeneralCategory::OtherPunctuation
            | GeneralCategory::MathSymbol
            | GeneralCategory::CurrencySymbol
            | GeneralCategory::ModifierSymbol
            | GeneralCategory::OtherSymbol
    )
}

/// Armenian emphasis, exclamation and question marks are written inside
/// words; they carry no lexical content.
fn is_intraword_mark(c: char) -> bool {
    ('\u{055B}'..='\u{055E}').contains(&c)
}

/// Whitespace tokenization that peels leading and trailing punctuation off
/// as separate tokens; punctuation inside a token stays attached.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let cleaned: String = chunk.chars().filter(|c| !is_intraword_mark(*c)).collect();
        let chars: Vec<char> = cleaned.chars().collect();
        let mut lo = 0;
        let mut hi = chars.len();
        while lo < hi && is_punctuation(chars[lo]) {
            out.push(chars[lo].to_string());
            lo += 1;
        }
        let mut trailing = Vec::new();
        while hi > lo && is_punctuation(chars[hi - 1]) {
            trailing.push(chars[hi - 1].to_string());
            hi -= 1;
        }
        if lo < hi {
            out.push(chars[lo..hi].iter().collect());
        }
        out.extend(trailing.into_iter().rev());
    }
    out
}

/// All numeric once digit-group separators are removed.
pub fn is_number(token: &str) -> bool {
    let mut any = false;
    for c in token.chars() {
        if matches!(c, '.' | ',' | ' ' | '\u{a0}' | '\u{202f}') {
            continue;
        }
        if !c.is_numeric() {
            return false;
        }
        any = true;
    }
    any
}

pub fn has_punctuation(token: &str) -> bool {
    token.chars().any(is_punctuation)
}

pub fn normalize_tokens<I, S>(tokens: I, res: &LangResources) -> Vec<String>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    tokens
        .into_iter()
        .filter_map(|tok| {
            let tok = tok.as_ref();
            if tok.is_empty() || has_punctuation(tok) || is_number(tok) {
                return None;
            }
            let folded = fold_case(tok);
            if res.stopwords.contains(&folded) {
                return None;
            }
            let lemma = res.lemmatize(&folded);
            if res.stopwords.contains(lemma) || is_number(lemma) || has_punctuation(lemma) {
                return None;
            }
            Some(lemma.to_string())
        })
        .collect()
}

pub fn normalize(fragment: &Fragment, res: &LangResources) -> Vec<String> {
    normalize_text(&fragment.text, res)
}

pub fn normalize_text(text: &str, res: &LangResources) -> Vec<String> {
    normalize_tokens(tokenize(text), res)
}

/// Terms of one fragment after concept substitution.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermSequence {
    pub terms: Vec<String>,
}

impl TermSequence {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// Replaces each lemma by its cluster: the most frequent one in TOP1
/// dictionaries, every one in ALL dictionaries. Unmapped lemmas pass through.
pub fn conceptualize<S: AsRef<str>>(lemmas: &[S], lang: &str, dict: &ClusterDictionary) -> TermSequence {
    let mut terms = Vec::with_capacity(lemmas.len());
    for lemma in lemmas {
        let lemma = lemma.as_ref();
        match (dict.lookup(lang, lemma), dict.mode()) {
            ([], _) => terms.push(lemma.to_string()),
            ([first, ..], MergeMode::Top1) => terms.push(first.clone()),
            (all, MergeMode::All) => terms.extend(all.iter().cloned()),
        }
    }
    TermSequence { terms }
}

/// `normalize` followed by `conceptualize`.
pub fn fragment_terms(text: &str, lang: &str, res: &ResourceSet, dict: &ClusterDictionary) -> TermSequence {
    conceptualize(&normalize_text(text, res.get(lang)), lang, dict)
}

/// Reads a JSONL corpus, one `{"id", "lang", "text"}` object per line.
pub fn read_corpus<R: BufRead>(reader: R, source_name: &str) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    let mut ids = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document =
            serde_json::from_str(&line).map_err(|e| Error::parse(source_name, idx + 1, e.to_string()))?;
        if !ids.insert(doc.id.clone()) {
            return Err(Error::parse(
                source_name,
                idx + 1,
                format!("duplicate document id {:?}", doc.id),
            ));
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn write_corpus<W: Write>(mut out: W, docs: &[Document]) -> Result<()> {
    for d in docs {
        serde_json::to_writer(&mut out, d)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thesaurus::{build_clusters, Pos, SenseRecord};

    fn texts(frags: &[Fragment]) -> Vec<&str> {
        frags.iter().map(|f| f.text.as_str()).collect()
    }

    #[test]
    fn paragraphs_split_on_blank_lines() {
        let doc = Document::new("d", "en", "A b.\n\nC d.");
        let frags = segment(&doc, FragmentKind::Paragraph);
        assert_eq!(texts(&frags), ["A b.", "C d."]);
        assert_eq!(frags[1].span, CharSpan::new(6, 10));
    }

    #[test]
    fn single_paragraph_spans_text() {
        let doc = Document::new("d", "en", "one paragraph only");
        let frags = segment(&doc, FragmentKind::Paragraph);
        assert_eq!(frags.len(), 1);
        assert_eq!(frags[0].span, CharSpan::new(0, 18));
    }

    #[test]
    fn abbreviation_does_not_split() {
        let doc = Document::new("d", "en", "Dr. Smith ran. He won.");
        assert_eq!(
            texts(&segment(&doc, FragmentKind::Sentence)),
            ["Dr. Smith ran.", "He won."]
        );
    }

    #[test]
    fn lowercase_continuation_does_not_split() {
        let doc = Document::new("d", "en", "Version 2. is out. it works? Yes! 42 is fine.");
        assert_eq!(
            texts(&segment(&doc, FragmentKind::Sentence)),
            ["Version 2. is out. it works?", "Yes!", "42 is fine."]
        );
    }

    #[test]
    fn armenian_full_stop() {
        let doc = Document::new("d", "hy", "Սա առաջինն է։ Սա երկրորդն է։");
        assert_eq!(
            texts(&segment(&doc, FragmentKind::Sentence)),
            ["Սա առաջինն է։", "Սա երկրորդն է։"]
        );
    }

    #[test]
    fn quoted_sentence_boundaries() {
        let doc = Document::new("d", "en", "He said \"stop.\" Then \"Go!\" she said.");
        assert_eq!(
            texts(&segment(&doc, FragmentKind::Sentence)),
            ["He said \"stop.\"", "Then \"Go!\" she said."]
        );
    }

    #[test]
    fn sentences_do_not_cross_paragraphs() {
        let doc = Document::new("d", "en", "first one\n\nsecond one. Third.");
        let frags = segment(&doc, FragmentKind::Sentence);
        assert_eq!(texts(&frags), ["first one", "second one.", "Third."]);
        assert_eq!(frags.iter().map(|f| f.ordinal).collect::<Vec<_>>(), [0, 1, 2]);
    }

    #[test]
    fn whitespace_text_has_no_fragments() {
        let doc = Document::new("d", "en", " \n\n\t ");
        assert!(segment(&doc, FragmentKind::Sentence).is_empty());
        assert!(segment(&doc, FragmentKind::Paragraph).is_empty());
    }

    #[test]
    fn slice_chars_uses_char_offsets() {
        assert_eq!(slice_chars("ափ bank", CharSpan::new(3, 7)), Some("bank"));
        assert_eq!(slice_chars("ափ", CharSpan::new(0, 2)), Some("ափ"));
        assert_eq!(slice_chars("ափ", CharSpan::new(1, 1)), Some(""));
        assert_eq!(slice_chars("ափ", CharSpan::new(0, 3)), None);
    }

    #[test]
    fn normalize_applies_every_rule() {
        let res = LangResources::new("en").with_lemmas([("dogs", "dog"), ("barked", "bark")]);
        let out = normalize_tokens(["Dogs", "barked", ",", "42", "at-home"], &res);
        assert_eq!(out, ["dog", "bark"]);
    }

    #[test]
    fn normalize_tokenizes_raw_text() {
        let res = LangResources::new("en")
            .with_stopwords(["the", "at"])
            .with_lemmas([("dogs", "dog"), ("barked", "bark")]);
        assert_eq!(
            normalize_text("The dogs barked, at 1,000 cats (at-home).", &res),
            ["dog", "bark", "cats"]
        );
    }

    #[test]
    fn all_stopwords_give_nothing() {
        let res = LangResources::new("en").with_stopwords(["it", "is", "what"]);
        assert!(normalize_text("It is what it is", &res).is_empty());
    }

    #[test]
    fn digit_inside_word_is_kept() {
        let res = LangResources::new("en");
        assert_eq!(normalize_tokens(["π3a", "3", "1.5", "٣"], &res), ["π3a"]);
    }

    #[test]
    fn armenian_question_mark_is_removed_inside_word() {
        assert_eq!(tokenize("ինչո՞ւ"), ["ինչու"]);
    }

    fn bank_dict(mode: MergeMode) -> ClusterDictionary {
        let rec = |c: &str, l: &str, w: &str, r: Option<u32>| SenseRecord {
            lemma: w.into(),
            lang: l.into(),
            pos: Pos::Noun,
            concept_id: c.into(),
            freq_rank: r,
            weight: None,
        };
        let records = vec![
            rec("c_fin", "en", "bank", Some(0)),
            rec("c_river", "en", "bank", Some(1)),
            rec("c_river", "en", "shore", Some(0)),
            rec("c_fin", "fr", "banque", None),
            rec("c_river", "fr", "rive", None),
            rec("c_river", "fr", "banque", None),
        ];
        build_clusters(&records, mode).0
    }

    #[test]
    fn unmapped_words_pass_through() {
        let dict = bank_dict(MergeMode::Top1);
        assert_eq!(
            conceptualize(&["bank", "xylophone"], "en", &dict).terms,
            ["c_fin", "xylophone"]
        );
        assert!(conceptualize::<&str>(&[], "en", &dict).is_empty());
    }

    #[test]
    fn top1_emits_one_term_per_word() {
        let dict = bank_dict(MergeMode::Top1);
        // banque belongs to both c_fin and c_river; equal ranks fall back to id order
        assert_eq!(conceptualize(&["banque"], "fr", &dict).terms, ["c_fin"]);
    }

    #[test]
    fn all_mode_emits_every_cluster_in_dictionary_order() {
        let dict = bank_dict(MergeMode::All);
        let terms = conceptualize(&["banque", "rive"], "fr", &dict).terms;
        // rive is a primary sense of "shore" but a secondary one of "bank"
        assert_eq!(terms, ["bank/NOUN", "shore/NOUN", "shore/NOUN", "bank/NOUN"]);
    }
}
