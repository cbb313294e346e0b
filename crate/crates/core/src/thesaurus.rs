//! Multilingual word clusters.
//!
//! Per-language sense inventories are merged into clusters anchored on
//! English words. Two merge strategies are supported:
//!
//! * [`MergeMode::All`]: the cluster of an English `(lemma, pos)` is the union
//!   of the synset members of every concept of that word.
//! * [`MergeMode::Top1`]: only the most frequent concept of the English word is
//!   kept, and the cluster is that concept's synset members across languages.
//!
//! English words are addressed by their own anchor cluster only, so in TOP1
//! mode every English key resolves to exactly one concept. Non-English words
//! map to every cluster that contains them.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const ENGLISH: &str = "en";

const DICTIONARY_MAGIC: &str = "#clpd-dictionary";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Pos {
    Noun,
    Verb,
    Adj,
    Adv,
    Other,
}

impl Pos {
    pub fn as_str(self) -> &'static str {
        match self {
            Pos::Noun => "NOUN",
            Pos::Verb => "VERB",
            Pos::Adj => "ADJ",
            Pos::Adv => "ADV",
            Pos::Other => "OTHER",
        }
    }

    /// Parses the tag names used by common sense inventories. Returns `None`
    /// for unrecognised tags.
    pub fn parse_tag(tag: &str) -> Option<Pos> {
        match tag.trim().to_ascii_uppercase().as_str() {
            "NOUN" | "N" => Some(Pos::Noun),
            "VERB" | "V" => Some(Pos::Verb),
            "ADJ" | "A" | "S" | "ADJECTIVE" => Some(Pos::Adj),
            "ADV" | "R" | "ADVERB" => Some(Pos::Adv),
            "OTHER" | "X" => Some(Pos::Other),
            _ => None,
        }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pos {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Pos::parse_tag(s).ok_or_else(|| Error::Invalid(format!("unknown part of speech {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MergeMode {
    All,
    Top1,
}

impl MergeMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MergeMode::All => "ALL",
            MergeMode::Top1 => "TOP1",
        }
    }
}

impl fmt::Display for MergeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MergeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "all" => Ok(MergeMode::All),
            "top1" => Ok(MergeMode::Top1),
            _ => Err(Error::Invalid(format!("unknown merge mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Provenance {
    Wordnet,
    Translation,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Wordnet => "WORDNET",
            Provenance::Translation => "TRANSLATION",
        }
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "WORDNET" => Ok(Provenance::Wordnet),
            "TRANSLATION" => Ok(Provenance::Translation),
            _ => Err(Error::Invalid(format!("unknown provenance {s:?}"))),
        }
    }
}

/// One word sense: a lemma of some language linked to a concept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SenseRecord {
    pub lemma: String,
    pub lang: String,
    pub pos: Pos,
    pub concept_id: String,
    /// Lower is more frequent. Required for English records in TOP1 mode;
    /// a missing rank sorts after every present rank.
    pub freq_rank: Option<u32>,
    pub weight: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct SenseLoad {
    pub records: Vec<SenseRecord>,
    /// Lines whose POS tag was not recognised and was mapped to `OTHER`.
    pub unknown_pos: usize,
}

pub(crate) fn fold_case(s: &str) -> String {
    s.to_lowercase()
}

fn validate_lemma(lemma: &str) -> bool {
    !lemma.is_empty() && !lemma.contains(['\t', '\n', '\r'])
}

/// Reads sense-TSV: `concept_id, lang, lemma, pos, freq_rank, weight`.
/// The last two columns may be empty or absent.
pub fn load_senses<R: BufRead>(reader: R, source_name: &str) -> Result<SenseLoad> {
    let mut out = SenseLoad::default();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 4 || cols.len() > 6 {
            return Err(Error::parse(
                source_name,
                line_no,
                format!("expected 4 to 6 tab-separated columns, found {}", cols.len()),
            ));
        }
        let concept_id = cols[0].trim();
        let lang = cols[1].trim().to_ascii_lowercase();
        let lemma = fold_case(cols[2].trim());
        if concept_id.is_empty() || lang.is_empty() || !validate_lemma(&lemma) {
            return Err(Error::parse(source_name, line_no, "empty concept, language or lemma"));
        }
        let pos = match Pos::parse_tag(cols[3]) {
            Some(p) => p,
            None => {
                out.unknown_pos += 1;
                Pos::Other
            }
        };
        let freq_rank = match cols.get(4).map(|s| s.trim()).filter(|s| !s.is_empty()) {
            Some(s) => Some(
                s.parse::<u32>()
                    .map_err(|_| Error::parse(source_name, line_no, format!("invalid frequency rank {s:?}")))?,
            ),
            None => None,
        };
        let weight = match cols.get(5).map(|s| s.trim()).filter(|s| !s.is_empty()) {
            Some(s) => {
                let w = s
                    .parse::<f64>()
                    .map_err(|_| Error::parse(source_name, line_no, format!("invalid weight {s:?}")))?;
                if !(0.0..=1.0).contains(&w) {
                    return Err(Error::parse(source_name, line_no, "weight outside [0, 1]"));
                }
                Some(w)
            }
            None => None,
        };
        out.records.push(SenseRecord {
            lemma,
            lang,
            pos,
            concept_id: concept_id.to_string(),
            freq_rank,
            weight,
        });
    }
    Ok(out)
}

/// Writes records in the format read by [`load_senses`].
pub fn write_senses<W: Write>(mut out: W, records: &[SenseRecord]) -> Result<()> {
    for r in records {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.concept_id,
            r.lang,
            r.lemma,
            r.pos,
            r.freq_rank.map(|x| x.to_string()).unwrap_or_default(),
            r.weight.map(|x| x.to_string()).unwrap_or_default()
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntryKey {
    pub lang: String,
    pub lemma: String,
    pub pos: Pos,
}

impl EntryKey {
    pub fn new(lang: &str, lemma: &str, pos: Pos) -> Self {
        EntryKey {
            lang: lang.to_string(),
            lemma: lemma.to_string(),
            pos,
        }
    }
}

/// Membership of one word in one cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EntryInfo {
    pub provenance: Provenance,
    /// Frequency rank of this word-cluster link, used to order the clusters
    /// of a word across parts of speech. `None` sorts last.
    pub rank: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct BuildReport {
    /// Concepts that have no English sense and therefore no anchor.
    pub concepts_without_anchor: usize,
    /// Concepts with English senses that no anchor selected (TOP1 only).
    pub concepts_unselected: usize,
    pub clusters: usize,
    pub entries: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AugmentReport {
    pub added: usize,
    pub already_present: usize,
    /// Rows whose English `(lemma, pos)` has no cluster.
    pub skipped: usize,
}

/// Compiled word-to-cluster mapping. Immutable after construction apart
/// from [`ClusterDictionary::augment`].
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterDictionary {
    mode: MergeMode,
    entries: BTreeMap<EntryKey, BTreeMap<String, EntryInfo>>,
    members: BTreeMap<String, BTreeSet<(String, String)>>,
    languages: BTreeSet<String>,
    lookup: HashMap<(String, String), Vec<String>>,
}

fn rank_key(rank: Option<u32>) -> u64 {
    rank.map_or(u64::MAX, u64::from)
}

fn min_rank(a: Option<u32>, b: Option<u32>) -> Option<u32> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Cluster identifier used for ALL-mode clusters, keyed by the English anchor.
pub fn anchor_cluster_id(lemma: &str, pos: Pos) -> String {
    format!("{lemma}/{pos}")
}

pub fn build_clusters(records: &[SenseRecord], mode: MergeMode) -> (ClusterDictionary, BuildReport) {
    // English senses per (lemma, pos): concept -> best rank.
    let mut english: BTreeMap<(String, Pos), BTreeMap<&str, Option<u32>>> = BTreeMap::new();
    // Non-English members per concept: (lang, lemma, pos) -> own rank.
    let mut foreign: BTreeMap<&str, BTreeMap<EntryKey, Option<u32>>> = BTreeMap::new();
    let mut concepts: BTreeSet<&str> = BTreeSet::new();
    let mut anchored: BTreeSet<&str> = BTreeSet::new();

    for r in records {
        concepts.insert(&r.concept_id);
        if r.lang == ENGLISH {
            anchored.insert(&r.concept_id);
            let slot = english
                .entry((r.lemma.clone(), r.pos))
                .or_default()
                .entry(&r.concept_id)
                .or_insert(r.freq_rank);
            *slot = min_rank(*slot, r.freq_rank);
        } else {
            let slot = foreign
                .entry(&r.concept_id)
                .or_default()
                .entry(EntryKey::new(&r.lang, &r.lemma, r.pos))
                .or_insert(r.freq_rank);
            *slot = min_rank(*slot, r.freq_rank);
        }
    }

    let mut report = BuildReport {
        concepts_without_anchor: concepts.len() - anchored.len(),
        ..Default::default()
    };
    let mut entries: BTreeMap<EntryKey, BTreeMap<String, EntryInfo>> = BTreeMap::new();
    let mut insert = |key: EntryKey, cluster: &str, rank: Option<u32>| {
        let slot = entries
            .entry(key)
            .or_default()
            .entry(cluster.to_string())
            .or_insert(EntryInfo {
                provenance: Provenance::Wordnet,
                rank,
            });
        slot.rank = min_rank(slot.rank, rank);
    };

    match mode {
        MergeMode::Top1 => {
            // concept -> rank of its best anchor
            let mut selected: BTreeMap<&str, Option<u32>> = BTreeMap::new();
            for ((lemma, pos), senses) in &english {
                let (&concept, &rank) = senses
                    .iter()
                    .min_by_key(|(c, r)| (rank_key(**r), **c))
                    .expect("english key without senses");
                insert(EntryKey::new(ENGLISH, lemma, *pos), concept, rank);
                let slot = selected.entry(concept).or_insert(rank);
                *slot = min_rank(*slot, rank);
            }
            for (&concept, &anchor_rank) in &selected {
                if let Some(words) = foreign.get(concept) {
                    for (key, own_rank) in words {
                        insert(key.clone(), concept, own_rank.or(anchor_rank));
                    }
                }
            }
            report.concepts_unselected = anchored.len() - selected.len();
        }
        MergeMode::All => {
            for ((lemma, pos), senses) in &english {
                let cluster = anchor_cluster_id(lemma, *pos);
                let anchor_rank = senses.values().fold(None, |acc, r| min_rank(acc, *r));
                insert(EntryKey::new(ENGLISH, lemma, *pos), &cluster, anchor_rank);
                for (&concept, &concept_rank) in senses {
                    if let Some(words) = foreign.get(concept) {
                        for (key, own_rank) in words {
                            insert(key.clone(), &cluster, own_rank.or(concept_rank));
                        }
                    }
                }
            }
        }
    }

    let dict = ClusterDictionary::from_entries(mode, entries);
    report.clusters = dict.members.len();
    report.entries = dict.entry_count();
    (dict, report)
}

impl ClusterDictionary {
    fn from_entries(mode: MergeMode, entries: BTreeMap<EntryKey, BTreeMap<String, EntryInfo>>) -> Self {
        let mut dict = ClusterDictionary {
            mode,
            entries,
            members: BTreeMap::new(),
            languages: BTreeSet::new(),
            lookup: HashMap::new(),
        };
        dict.reindex();
        dict
    }

    fn reindex(&mut self) {
        self.members.clear();
        self.languages.clear();
        let mut by_word: HashMap<(String, String), BTreeMap<String, u64>> = HashMap::new();
        for (key, clusters) in &self.entries {
            self.languages.insert(key.lang.clone());
            let word = by_word.entry((key.lang.clone(), key.lemma.clone())).or_default();
            for (cluster, info) in clusters {
                self.members
                    .entry(cluster.clone())
                    .or_default()
                    .insert((key.lang.clone(), key.lemma.clone()));
                let r = word.entry(cluster.clone()).or_insert(u64::MAX);
                *r = (*r).min(rank_key(info.rank));
            }
        }
        self.lookup = by_word
            .into_iter()
            .map(|(word, clusters)| {
                let mut ordered: Vec<(u64, String)> = clusters.into_iter().map(|(c, r)| (r, c)).collect();
                ordered.sort();
                (word, ordered.into_iter().map(|(_, c)| c).collect())
            })
            .collect();
    }

    pub fn mode(&self) -> MergeMode {
        self.mode
    }

    pub fn languages(&self) -> &BTreeSet<String> {
        &self.languages
    }

    pub fn entries(&self) -> &BTreeMap<EntryKey, BTreeMap<String, EntryInfo>> {
        &self.entries
    }

    pub fn members(&self) -> &BTreeMap<String, BTreeSet<(String, String)>> {
        &self.members
    }

    pub fn entry_count(&self) -> usize {
        self.entries.values().map(BTreeMap::len).sum()
    }

    /// Clusters of one `(lang, lemma, pos)` key in identifier order.
    pub fn clusters_of(&self, lang: &str, lemma: &str, pos: Pos) -> Vec<&str> {
        self.entries
            .get(&EntryKey::new(lang, lemma, pos))
            .map(|m| m.keys().map(String::as_str).collect())
            .unwrap_or_default()
    }

    /// All clusters of a word across parts of speech, most frequent sense
    /// first; ties are broken by cluster identifier.
    pub fn lookup(&self, lang: &str, lemma: &str) -> &[String] {
        self.lookup
            .get(&(lang.to_string(), lemma.to_string()))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn is_mapped(&self, lang: &str, lemma: &str) -> bool {
        !self.lookup(lang, lemma).is_empty()
    }

    /// Adds translated lemmas to the clusters of their English source words.
    /// Existing entries are kept, so repeated application is a no-op.
    pub fn augment(&mut self, table: &TranslationTable) -> AugmentReport {
        let mut report = AugmentReport::default();
        for row in table.rows() {
            let source = EntryKey::new(ENGLISH, &row.en_lemma, row.pos);
            let Some(clusters) = self.entries.get(&source) else {
                report.skipped += 1;
                continue;
            };
            let clusters: Vec<(String, Option<u32>)> =
                clusters.iter().map(|(c, info)| (c.clone(), info.rank)).collect();
            let target = self
                .entries
                .entry(EntryKey::new(&row.target_lang, &row.translated_lemma, row.pos))
                .or_default();
            for (cluster, rank) in clusters {
                match target.entry(cluster) {
                    std::collections::btree_map::Entry::Occupied(_) => report.already_present += 1,
                    std::collections::btree_map::Entry::Vacant(v) => {
                        v.insert(EntryInfo {
                            provenance: Provenance::Translation,
                            rank,
                        });
                        report.added += 1;
                    }
                }
            }
        }
        if report.added > 0 {
            self.reindex();
        }
        report
    }

    /// Writes the deterministic compiled form: a mode header followed by
    /// `lang, lemma, pos, cluster, provenance, rank` lines in sorted order.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(self.to_tsv().as_bytes())?;
        Ok(())
    }

    pub fn to_tsv(&self) -> String {
        let mut lines: Vec<String> = Vec::with_capacity(self.entry_count());
        for (key, clusters) in &self.entries {
            for (cluster, info) in clusters {
                lines.push(format!(
                    "{}\t{}\t{}\t{}\t{}\t{}\n",
                    key.lang,
                    key.lemma,
                    key.pos,
                    cluster,
                    info.provenance.as_str(),
                    info.rank.map(|r| r.to_string()).unwrap_or_default()
                ));
            }
        }
        lines.sort();
        let mut out = format!("{DICTIONARY_MAGIC}\tmode={}\n", self.mode);
        for l in lines {
            out.push_str(&l);
        }
        out
    }

    pub fn read_tsv<R: BufRead>(reader: R, source_name: &str) -> Result<Self> {
        let mut mode = None;
        let mut entries: BTreeMap<EntryKey, BTreeMap<String, EntryInfo>> = BTreeMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix(DICTIONARY_MAGIC) {
                let m = header
                    .trim()
                    .strip_prefix("mode=")
                    .ok_or_else(|| Error::parse(source_name, line_no, "missing mode in header"))?;
                mode = Some(
                    m.parse::<MergeMode>()
                        .map_err(|e| Error::parse(source_name, line_no, e.to_string()))?,
                );
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 5 && cols.len() != 6 {
                return Err(Error::parse(
                    source_name,
                    line_no,
                    format!("expected 5 or 6 columns, found {}", cols.len()),
                ));
            }
            let pos = cols[2]
                .parse::<Pos>()
                .map_err(|e| Error::parse(source_name, line_no, e.to_string()))?;
            let provenance = cols[4]
                .parse::<Provenance>()
                .map_err(|e| Error::parse(source_name, line_no, e.to_string()))?;
            let rank = match cols.get(5).filter(|s| !s.is_empty()) {
                Some(s) => Some(
                    s.parse::<u32>()
                        .map_err(|_| Error::parse(source_name, line_no, "invalid rank"))?,
                ),
                None => None,
            };
            entries
                .entry(EntryKey::new(cols[0], cols[1], pos))
                .or_default()
                .insert(cols[3].to_string(), EntryInfo { provenance, rank });
        }
        let mode = mode.ok_or_else(|| Error::parse(source_name, 1, "missing dictionary header"))?;
        Ok(Self::from_entries(mode, entries))
    }

    /// Content hash of the compiled form, used to tie indexes and reports
    /// to the dictionary they were built with.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_tsv().as_bytes());
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        format!("sha256:{hex}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TranslationRow {
    pub en_lemma: String,
    pub pos: Pos,
    pub target_lang: String,
    pub translated_lemma: String,
}

/// Offline word translations of English lemmas, one row per
/// `(en_lemma, pos, target_lang, translated_lemma)`, without duplicates.
#[derive(Debug, Clone, Default)]
pub struct TranslationTable {
    rows: Vec<TranslationRow>,
}

impl TranslationTable {
    pub fn new(rows: impl IntoIterator<Item = TranslationRow>) -> Result<Self> {
        let mut table = TranslationTable::default();
        let mut seen = std::collections::HashSet::new();
        for row in rows {
            if row.target_lang == ENGLISH {
                return Err(Error::Invalid(format!(
                    "translation of {:?} targets English",
                    row.en_lemma
                )));
            }
            if seen.insert(row.clone()) {
                table.rows.push(row);
            }
        }
        Ok(table)
    }

    pub fn rows(&self) -> &[TranslationRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn load<R: BufRead>(reader: R, source_name: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(Error::parse(
                    source_name,
                    line_no,
                    format!("expected 4 columns, found {}", cols.len()),
                ));
            }
            let pos = Pos::parse_tag(cols[1])
                .ok_or_else(|| Error::parse(source_name, line_no, format!("unknown pos {:?}", cols[1])))?;
            let target_lang = cols[2].trim().to_ascii_lowercase();
            if target_lang == ENGLISH {
                return Err(Error::parse(
                    source_name,
                    line_no,
                    "target language must not be English",
                ));
            }
            let translated = fold_case(cols[3].trim());
            if !validate_lemma(&translated) {
                return Err(Error::parse(source_name, line_no, "empty translated lemma"));
            }
            rows.push(TranslationRow {
                en_lemma: fold_case(cols[0].trim()),
                pos,
                target_lang,
                translated_lemma: translated,
            });
        }
        TranslationTable::new(rows)
    }

    /// Writes rows in the format read by [`TranslationTable::load`].
    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.rows {
            writeln!(
                out,
                "{}\t{}\t{}\t{}",
                r.en_lemma, r.pos, r.target_lang, r.translated_lemma
            )?;
        }
        Ok(())
    }
}

pub fn augment_clusters(mut dict: ClusterDictionary, table: &TranslationTable) -> (ClusterDictionary, AugmentReport) {
    let report = dict.augment(table);
    (dict, report)
}

/// Fraction of `(lang, lemma)` tokens mapped to at least one cluster; an
/// empty corpus has coverage 0.
pub fn coverage<'a, I>(dict: &ClusterDictionary, tokens: I) -> f64
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let (mut total, mut mapped) = (0usize, 0usize);
    for (lang, lemma) in tokens {
        total += 1;
        if dict.is_mapped(lang, lemma) {
            mapped += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        mapped as f64 / total as f64
    }
}
