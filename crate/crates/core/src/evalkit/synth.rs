//! A small synthetic bilingual world for benchmarks and demos.
//!
//! English pseudo-words carry one to several senses (concepts). Every
//! concept has a lemma in a second pseudo-language, but the multilingual
//! thesaurus only knows that lemma for part of the concepts, leaving a
//! coverage gap that a word-translation table can close. Parallel sentences
//! translate every English content word through the sense it is actually
//! used in, which is usually but not always its most frequent one.

use std::collections::HashSet;

use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ParallelPair;
use crate::error::Result;
use crate::textproc::{Document, LangResources, ResourceSet};
use crate::thesaurus::{Pos, SenseRecord, TranslationRow, TranslationTable};

const EN_STOPWORDS: [&str; 12] = [
    "the", "of", "and", "to", "in", "a", "is", "that", "it", "on", "for", "with",
];
const XX_STOPWORDS: [&str; 8] = ["ie", "ua", "oi", "eu", "ai", "ou", "ei", "ue"];
const POS_CHOICES: [(Pos, u32); 4] = [(Pos::Noun, 5), (Pos::Verb, 3), (Pos::Adj, 2), (Pos::Adv, 1)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub seed: u64,
    pub english_words: usize,
    /// Concepts beyond the one primary concept per English word.
    pub extra_concepts: usize,
    pub max_senses: usize,
    /// Probability that the sense a word is used in is also its most
    /// frequent one.
    pub top_sense_prob: f64,
    /// Share of concepts whose target-language lemma the thesaurus lacks.
    pub target_gap: f64,
    /// Probability that the translation table knows an English word.
    pub translation_coverage: f64,
    pub target_lang: String,
    /// Inclusive range of content words per sentence.
    pub sentence_words: (usize, usize),
    /// Probability that a content word has no counterpart in the
    /// translation.
    pub drop_prob: f64,
    /// Probability that a content word is translated through a random sense
    /// instead of the one it is used in.
    pub sense_noise: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            seed: 1,
            english_words: 800,
            extra_concepts: 500,
            max_senses: 5,
            top_sense_prob: 0.8,
            target_gap: 0.45,
            translation_coverage: 0.9,
            target_lang: "xx".into(),
            sentence_words: (4, 10),
            drop_prob: 0.15,
            sense_noise: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
struct Concept {
    id: String,
    pos: Pos,
    target: String,
    in_thesaurus: bool,
}

#[derive(Debug, Clone)]
struct Word {
    lemma: String,
    pos: Pos,
    /// Concept indices in frequency order, most frequent first.
    senses: Vec<usize>,
    used: usize,
    translated: bool,
}

#[derive(Debug, Clone)]
pub struct World {
    cfg: WorldConfig,
    concepts: Vec<Concept>,
    words: Vec<Word>,
    usage: WeightedIndex<f64>,
}

fn pseudo_word(rng: &mut ChaCha8Rng, onsets: &[&str], vowels: &[&str], taken: &mut HashSet<String>) -> String {
    loop {
        let syllables = rng.gen_range(2..=3);
        let w: String = (0..syllables)
            .map(|_| format!("{}{}", onsets.choose(rng).unwrap(), vowels.choose(rng).unwrap()))
            .collect();
        if taken.insert(w.clone()) {
            return w;
        }
    }
}

fn capitalize(words: &[String]) -> String {
    let mut text = words.join(" ");
    if let Some(first) = text.chars().next() {
        let upper: String = first.to_uppercase().collect();
        text.replace_range(..first.len_utf8(), &upper);
    }
    text.push('.');
    text
}

impl World {
    pub fn generate(cfg: WorldConfig) -> World {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut taken: HashSet<String> = EN_STOPWORDS
            .iter()
            .chain(&XX_STOPWORDS)
            .map(|s| s.to_string())
            .collect();
        let en_onsets = [
            "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "br", "pl", "st",
        ];
        let en_vowels = ["a", "e", "i", "o", "u"];
        let xx_onsets = ["h", "j", "kh", "q", "w", "x", "z", "sh", "ch", "ts"];
        let xx_vowels = ["ä", "ö", "ü", "y", "å", "ë"];
        let pos_dist = WeightedIndex::new(POS_CHOICES.iter().map(|p| p.1)).unwrap();

        let n_concepts = cfg.english_words + cfg.extra_concepts;
        let concepts: Vec<Concept> = (0..n_concepts)
            .map(|i| Concept {
                id: format!("c{i:05}"),
                pos: POS_CHOICES[pos_dist.sample(&mut rng)].0,
                target: pseudo_word(&mut rng, &xx_onsets, &xx_vowels, &mut taken),
                in_thesaurus: !rng.gen_bool(cfg.target_gap.clamp(0.0, 1.0)),
            })
            .collect();
        let mut by_pos: std::collections::BTreeMap<Pos, Vec<usize>> = Default::default();
        for (i, c) in concepts.iter().enumerate() {
            by_pos.entry(c.pos).or_default().push(i);
        }

        let mut words = Vec::with_capacity(cfg.english_words);
        for (i, concept) in concepts.iter().enumerate().take(cfg.english_words) {
            let pos = concept.pos;
            let n_senses = rng.gen_range(1..=cfg.max_senses.max(1));
            let mut senses = vec![i];
            let pool = &by_pos[&pos];
            for _ in 1..n_senses {
                let c = *pool.choose(&mut rng).unwrap();
                if !senses.contains(&c) {
                    senses.push(c);
                }
            }
            // the primary concept is listed first unless the frequency data
            // disagrees with actual usage
            if senses.len() > 1 && !rng.gen_bool(cfg.top_sense_prob.clamp(0.0, 1.0)) {
                let j = rng.gen_range(1..senses.len());
                senses.swap(0, j);
            }
            words.push(Word {
                lemma: pseudo_word(&mut rng, &en_onsets, &en_vowels, &mut taken),
                pos,
                senses,
                used: i,
                translated: rng.gen_bool(cfg.translation_coverage.clamp(0.0, 1.0)),
            });
        }
        let usage = WeightedIndex::new((0..words.len()).map(|r| 1.0 / (r as f64 + 1.0))).unwrap();
        World {
            cfg,
            concepts,
            words,
            usage,
        }
    }

    pub fn config(&self) -> &WorldConfig {
        &self.cfg
    }

    pub fn target_lang(&self) -> &str {
        &self.cfg.target_lang
    }

    /// Thesaurus records: every sense of every English word ranked by
    /// frequency, plus target lemmas for concepts outside the gap.
    pub fn sense_records(&self) -> Vec<SenseRecord> {
        let mut out = Vec::new();
        for w in &self.words {
            for (rank, &c) in w.senses.iter().enumerate() {
                out.push(SenseRecord {
                    lemma: w.lemma.clone(),
                    lang: "en".into(),
                    pos: w.pos,
                    concept_id: self.concepts[c].id.clone(),
                    freq_rank: Some(rank as u32 + 1),
                    weight: None,
                });
            }
        }
        for c in self.concepts.iter().filter(|c| c.in_thesaurus) {
            out.push(SenseRecord {
                lemma: c.target.clone(),
                lang: self.cfg.target_lang.clone(),
                pos: c.pos,
                concept_id: c.id.clone(),
                freq_rank: None,
                weight: None,
            });
        }
        out
    }

    pub fn translation_table(&self) -> TranslationTable {
        let rows = self.words.iter().filter(|w| w.translated).map(|w| TranslationRow {
            en_lemma: w.lemma.clone(),
            pos: w.pos,
            target_lang: self.cfg.target_lang.clone(),
            translated_lemma: self.concepts[w.used].target.clone(),
        });
        TranslationTable::new(rows).expect("target language is never English")
    }

    pub fn resources(&self) -> ResourceSet {
        let mut set = ResourceSet::new();
        set.insert(LangResources::new("en").with_stopwords(EN_STOPWORDS));
        set.insert(LangResources::new(&self.cfg.target_lang).with_stopwords(XX_STOPWORDS));
        set
    }

    fn sentence_pair(&self, rng: &mut ChaCha8Rng) -> ParallelPair {
        let (lo, hi) = self.cfg.sentence_words;
        let n = rng.gen_range(lo.max(1)..=hi.max(lo.max(1)));
        let (mut en, mut xx) = (Vec::new(), Vec::new());
        for i in 0..n {
            if rng.gen_bool(0.3) {
                en.push(EN_STOPWORDS.choose(rng).unwrap().to_string());
                xx.push(XX_STOPWORDS.choose(rng).unwrap().to_string());
            }
            if i > 0 && rng.gen_bool(0.03) {
                let year = rng.gen_range(1800..2030).to_string();
                en.push(year.clone());
                xx.push(year);
            }
            let w = &self.words[self.usage.sample(rng)];
            en.push(w.lemma.clone());
            if rng.gen_bool(self.cfg.drop_prob.clamp(0.0, 1.0)) {
                continue;
            }
            let concept = if rng.gen_bool(self.cfg.sense_noise.clamp(0.0, 1.0)) {
                *w.senses.choose(rng).unwrap()
            } else {
                w.used
            };
            xx.push(self.concepts[concept].target.clone());
        }
        if xx.is_empty() {
            xx.push(self.concepts[self.words[0].used].target.clone());
        }
        // the target language prefers a slightly different word order
        for pair in xx.chunks_mut(2) {
            pair.reverse();
        }
        ParallelPair::new(capitalize(&en), capitalize(&xx))
    }

    /// `n` English/target sentence pairs.
    pub fn parallel_corpus(&self, n: usize, seed: u64) -> Vec<ParallelPair> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.sentence_pair(&mut rng)).collect()
    }

    /// Target-language documents of `paragraphs` paragraphs with two to five
    /// sentences each.
    pub fn host_documents(&self, n: usize, paragraphs: usize, seed: u64) -> Vec<Document> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|d| {
                let text = (0..paragraphs)
                    .map(|_| {
                        let k = rng.gen_range(2..=5);
                        (0..k)
                            .map(|_| self.sentence_pair(&mut rng).l2)
                            .collect::<Vec<_>>()
                            .join(" ")
                    })
                    .collect::<Vec<_>>()
                    .join("\n\n");
                Document::new(format!("host-{d:04}"), self.cfg.target_lang.clone(), text)
            })
            .collect()
    }
}

/// Everything needed to run and score the pipeline on a synthetic world.
#[derive(Debug, Clone)]
pub struct SyntheticBenchmark {
    pub world: World,
    pub parallel: Vec<ParallelPair>,
    pub dataset: super::Dataset,
}

impl SyntheticBenchmark {
    pub fn build(world_cfg: WorldConfig, parallel_pairs: usize, gen: &super::GenConfig) -> Result<Self> {
        let world = World::generate(world_cfg);
        let seed = world.cfg.seed;
        let parallel = world.parallel_corpus(parallel_pairs, seed.wrapping_add(1));
        let hosts = world.host_documents(gen.suspicious_docs, 3, seed.wrapping_add(2));
        let dataset = super::generate_dataset(&hosts, &parallel, gen)?;
        Ok(SyntheticBenchmark {
            world,
            parallel,
            dataset,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textproc::{segment, FragmentKind};
    use crate::thesaurus::{build_clusters, MergeMode};

    fn small() -> World {
        World::generate(WorldConfig {
            english_words: 60,
            extra_concepts: 30,
            ..Default::default()
        })
    }

    #[test]
    fn deterministic() {
        let a = small();
        let b = small();
        assert_eq!(a.sense_records(), b.sense_records());
        assert_eq!(a.parallel_corpus(5, 3), b.parallel_corpus(5, 3));
    }

    #[test]
    fn sentences_segment_as_written() {
        let w = small();
        for d in w.host_documents(3, 4, 9) {
            let paragraphs = segment(&d, FragmentKind::Paragraph);
            assert_eq!(paragraphs.len(), 4);
            for s in segment(&d, FragmentKind::Sentence) {
                assert!(s.text.ends_with('.'));
                assert_eq!(s.text.matches('.').count(), 1, "{}", s.text);
            }
        }
    }

    #[test]
    fn translations_fill_the_gap() {
        let w = small();
        let (dict, _) = build_clusters(&w.sense_records(), MergeMode::Top1);
        let before = w
            .words
            .iter()
            .filter(|x| dict.is_mapped("xx", &w.concepts[x.used].target))
            .count();
        let (dict, report) = crate::thesaurus::augment_clusters(dict, &w.translation_table());
        let after = w
            .words
            .iter()
            .filter(|x| dict.is_mapped("xx", &w.concepts[x.used].target))
            .count();
        assert!(report.added > 0);
        assert!(after > before);
    }
}
