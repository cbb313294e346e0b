//! End-to-end acceptance checks. Prints one PASS/FAIL line per check and
//! exits non-zero when any check fails.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::time::Instant;

use clpd::analysis::{calibrate, OverlapScorer, Threshold};
use clpd::evalkit::synth::{SyntheticBenchmark, World, WorldConfig};
use clpd::evalkit::{
    char_pr, read_jsonl, recall_table, retrieval_lists, write_jsonl, Dataset, GenConfig, GoldAnnotation,
};
use clpd::index::{FragmentMeta, InvertedIndex, RetrievalConfig};
use clpd::pipeline::{index_reference, Detection, Detector};
use clpd::textproc::{
    normalize_text, read_corpus, segment, write_corpus, CharSpan, FragmentKind, ResourceSet, TermSequence,
};
use clpd::thesaurus::{augment_clusters, build_clusters, coverage, ClusterDictionary, MergeMode, SenseRecord};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------- BM25 oracle

fn oracle_bm25(docs: &[Vec<String>], query: &[String], k1: f64, b: f64) -> Vec<f64> {
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let mut q: Vec<&String> = query.iter().collect();
    q.sort();
    q.dedup();
    docs.iter()
        .map(|d| {
            let mut s = 0.0;
            for t in &q {
                let tf = d.iter().filter(|x| x == t).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let df = docs.iter().filter(|x| x.contains(t)).count() as f64;
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                let dl = d.len() as f64;
                s += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl));
            }
            s
        })
        .collect()
}

fn bm25_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20_241);
    let mut max_dev = 0.0f64;
    let mut order_errors = 0usize;
    let mut queries = 0usize;
    for _ in 0..100 {
        let vocab: Vec<String> = (0..rng.gen_range(1..=50)).map(|i| format!("t{i}")).collect();
        let n_docs = rng.gen_range(1..=200);
        let docs: Vec<Vec<String>> = (0..n_docs)
            .map(|_| {
                (0..rng.gen_range(0..=30))
                    .map(|_| vocab.choose(&mut rng).unwrap().clone())
                    .collect()
            })
            .collect();
        let mut index = InvertedIndex::new();
        for (i, d) in docs.iter().enumerate() {
            let meta = FragmentMeta {
                doc_id: format!("d{i}"),
                lang: "en".into(),
                ordinal: 0,
                span: CharSpan::new(0, 0),
                text: String::new(),
            };
            index.add_fragment(meta, &TermSequence { terms: d.clone() }).unwrap();
        }
        index.seal().unwrap();
        let k1 = rng.gen_range(0.1..3.0);
        let b = rng.gen_range(0.0..=1.0);
        for _ in 0..10 {
            queries += 1;
            let query: Vec<String> = (0..rng.gen_range(1..=8))
                .map(|_| vocab.choose(&mut rng).unwrap().clone())
                .collect();
            let expected = oracle_bm25(&docs, &query, k1, b);
            let k = rng.gen_range(1..=n_docs + 5);
            let cfg = RetrievalConfig {
                k1,
                b,
                k,
                ..Default::default()
            };
            let got = index.search(&query, &cfg).unwrap();
            let mut want: Vec<(usize, f64)> = expected.iter().copied().enumerate().filter(|(_, s)| *s > 0.0).collect();
            want.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            want.truncate(k);
            if got.len() != want.len() {
                order_errors += 1;
                continue;
            }
            for (g, w) in got.iter().zip(&want) {
                max_dev = max_dev.max((g.score - expected[g.fragment.index()]).abs());
                // the same position may hold a different fragment only on a tie
                if g.fragment.index() != w.0 && (g.score - w.1).abs() > 1e-9 {
                    order_errors += 1;
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        max_dev < 1e-9 && order_errors == 0 && secs < 10.0,
        format!("{queries} queries, max deviation {max_dev:.2e}, ranking errors {order_errors}, {secs:.2}s"),
    )
}

// ------------------------------------------------------- synthetic benchmark

struct Bench {
    bench: SyntheticBenchmark,
    resources: ResourceSet,
    build_secs: f64,
}

fn benchmark() -> Bench {
    let start = Instant::now();
    let gen = GenConfig {
        seed: 5,
        suspicious_docs: 30,
        reference_docs: 150,
        ..Default::default()
    };
    let bench = SyntheticBenchmark::build(WorldConfig::default(), 1500, &gen).expect("benchmark");
    let resources = bench.world.resources();
    Bench {
        bench,
        resources,
        build_secs: start.elapsed().as_secs_f64(),
    }
}

fn dictionary(b: &Bench, mode: MergeMode, augmented: bool) -> ClusterDictionary {
    let (dict, _) = build_clusters(&b.bench.world.sense_records(), mode);
    if augmented {
        augment_clusters(dict, &b.bench.world.translation_table()).0
    } else {
        dict
    }
}

fn recall_run(b: &Bench, dict: &ClusterDictionary) -> (BTreeMap<usize, f64>, usize) {
    let ds = &b.bench.dataset;
    let cfg = RetrievalConfig::default();
    let index = index_reference(&ds.reference, dict, &b.resources, cfg).unwrap();
    let scorer = OverlapScorer::new(dict, &b.resources);
    let detector = Detector::new(&index, dict, &b.resources, &scorer, cfg, Threshold::new(0.5)).unwrap();
    let mut trace = Vec::new();
    for d in &ds.suspicious {
        trace.extend(detector.retrieve(d).unwrap());
    }
    let (results, gold) = retrieval_lists(&trace, &ds.gold, &ds.reference).unwrap();
    (recall_table(&results, &gold, &[1, 5, 10, 50]).unwrap(), gold.len())
}

fn suspicious_coverage(b: &Bench, dict: &ClusterDictionary) -> f64 {
    let lang = b.bench.world.target_lang().to_string();
    let res = b.resources.get(&lang);
    let lemmas: Vec<String> = b
        .bench
        .dataset
        .suspicious
        .iter()
        .flat_map(|d| normalize_text(&d.text, res))
        .collect();
    coverage(dict, lemmas.iter().map(|l| (lang.as_str(), l.as_str())))
}

fn fmt_recall(r: &BTreeMap<usize, f64>) -> String {
    r.iter()
        .map(|(k, v)| format!("R@{k}={v:.3}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn recall_monotone(b: &Bench) -> Outcome {
    let (r, queries) = recall_run(b, &dictionary(b, MergeMode::Top1, true));
    let v: Vec<f64> = r.values().copied().collect();
    outcome(
        queries > 0 && v.windows(2).all(|w| w[0] <= w[1]),
        format!("{queries} queries, {}", fmt_recall(&r)),
    )
}

fn augmentation_gain(b: &Bench) -> Outcome {
    let start = Instant::now();
    let paragraphs: usize = b
        .bench
        .dataset
        .reference
        .iter()
        .map(|d| segment(d, FragmentKind::Paragraph).len())
        .sum();
    let plain = dictionary(b, MergeMode::Top1, false);
    let augmented = dictionary(b, MergeMode::Top1, true);
    let (cov_plain, cov_aug) = (suspicious_coverage(b, &plain), suspicious_coverage(b, &augmented));
    let (r_plain, queries) = recall_run(b, &plain);
    let (r_aug, _) = recall_run(b, &augmented);
    let secs = b.build_secs + start.elapsed().as_secs_f64();
    let gain = cov_aug - cov_plain;
    let valid = paragraphs >= 500 && queries >= 100 && gain >= 0.20;
    outcome(
        valid && r_aug[&50] > r_plain[&50] && secs < 120.0,
        format!(
            "{paragraphs} paragraphs, {queries} sentences, coverage {cov_plain:.3} -> {cov_aug:.3}, \
             R@50 {:.3} -> {:.3}, {secs:.1}s",
            r_plain[&50], r_aug[&50]
        ),
    )
}

fn top1_vs_all(b: &Bench) -> Outcome {
    let (top1, _) = recall_run(b, &dictionary(b, MergeMode::Top1, true));
    let (all, _) = recall_run(b, &dictionary(b, MergeMode::All, true));
    let (t, a) = (top1[&10], all[&10]);
    let note = if t >= a {
        ""
    } else {
        " (TOP1 below ALL, within tolerance)"
    };
    outcome(t >= a - 0.05, format!("TOP1 R@10={t:.3}, ALL R@10={a:.3}{note}"))
}

// -------------------------------------------------------------- dictionaries

fn top1_determinism() -> Outcome {
    let world = World::generate(WorldConfig {
        seed: 77,
        english_words: 400,
        extra_concepts: 200,
        ..Default::default()
    });
    let records = world.sense_records();
    let (dict, _) = build_clusters(&records, MergeMode::Top1);

    // independent choice of the single concept per English key
    let mut best: BTreeMap<(String, clpd::thesaurus::Pos), (u32, String)> = BTreeMap::new();
    let mut foreign: HashMap<&str, BTreeSet<(String, String)>> = HashMap::new();
    for r in &records {
        if r.lang == "en" {
            let cand = (r.freq_rank.unwrap_or(u32::MAX), r.concept_id.clone());
            let slot = best
                .entry((r.lemma.to_lowercase(), r.pos))
                .or_insert_with(|| cand.clone());
            *slot = slot.clone().min(cand);
        } else {
            foreign
                .entry(&r.concept_id)
                .or_default()
                .insert((r.lang.clone(), r.lemma.to_lowercase()));
        }
    }
    let mut wrong = 0;
    for ((lemma, pos), (_, concept)) in &best {
        let clusters = dict.clusters_of("en", lemma, *pos);
        let non_english: Option<BTreeSet<(String, String)>> = dict
            .members()
            .get(concept)
            .map(|m| m.iter().filter(|(l, _)| l != "en").cloned().collect());
        let expected = foreign.get(concept.as_str()).cloned().unwrap_or_default();
        if clusters != [concept.as_str()] || non_english != Some(expected) {
            wrong += 1;
        }
    }

    let reference = dict.to_tsv();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut differing = 0;
    for _ in 0..20 {
        let mut shuffled: Vec<SenseRecord> = records.clone();
        shuffled.shuffle(&mut rng);
        if build_clusters(&shuffled, MergeMode::Top1).0.to_tsv() != reference {
            differing += 1;
        }
    }
    outcome(
        wrong == 0 && differing == 0,
        format!(
            "{} English keys, {wrong} with a cluster other than one concept, {differing}/20 permutations changed the TSV",
            best.len()
        ),
    )
}

// ---------------------------------------------------------------- calibration

fn brute_f(scores: &[(f64, bool)], t: f64, beta: f64) -> f64 {
    let tp = scores.iter().filter(|(s, l)| *s >= t && *l).count() as f64;
    let fp = scores.iter().filter(|(s, l)| *s >= t && !*l).count() as f64;
    let fn_ = scores.iter().filter(|(s, l)| *s < t && *l).count() as f64;
    let p = if tp + fp == 0.0 { 0.0 } else { tp / (tp + fp) };
    let r = if tp + fn_ == 0.0 { 0.0 } else { tp / (tp + fn_) };
    let b2 = beta * beta;
    if p + r == 0.0 {
        0.0
    } else {
        (1.0 + b2) * p * r / (b2 * p + r)
    }
}

fn calibration_optimal() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let beta = 0.25;
    let mut worse = 0;
    let mut mismatched = 0;
    for i in 0..1000 {
        let n = rng.gen_range(2..80);
        let coarse = i % 2 == 0;
        let mut set: Vec<(f64, bool)> = (0..n)
            .map(|_| {
                let s = if coarse {
                    f64::from(rng.gen_range(0..=10u8)) / 10.0
                } else {
                    rng.gen::<f64>()
                };
                (s, rng.gen_bool(0.4))
            })
            .collect();
        set[0].1 = true;
        set[1].1 = false;
        let cal = calibrate(&set, beta).unwrap();
        let mut distinct: Vec<f64> = set.iter().map(|x| x.0).collect();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        let best = distinct
            .windows(2)
            .map(|w| brute_f(&set, (w[0] + w[1]) / 2.0, beta))
            .fold(0.0f64, f64::max);
        if cal.f_beta < best {
            worse += 1;
        }
        if (brute_f(&set, cal.threshold.value, beta) - cal.f_beta).abs() > 1e-12 {
            mismatched += 1;
        }
    }
    outcome(
        worse == 0 && mismatched == 0,
        format!("1000 sets, {worse} below a midpoint optimum, {mismatched} with a misreported F"),
    )
}

// ------------------------------------------------------------ forced matches

fn forced_match_end_to_end() -> Outcome {
    let world_cfg = WorldConfig {
        seed: 11,
        english_words: 500,
        extra_concepts: 100,
        max_senses: 1,
        drop_prob: 0.0,
        sense_noise: 0.0,
        target_gap: 0.0,
        ..Default::default()
    };
    let gen = GenConfig {
        seed: 12,
        suspicious_docs: 6,
        reference_docs: 20,
        ..Default::default()
    };
    let bench = SyntheticBenchmark::build(world_cfg, 300, &gen).unwrap();
    let resources = bench.world.resources();
    let (dict, _) = build_clusters(&bench.world.sense_records(), MergeMode::Top1);
    let cfg = RetrievalConfig::default();
    let ds = &bench.dataset;
    let index = index_reference(&ds.reference, &dict, &resources, cfg).unwrap();
    let scorer = OverlapScorer::new(&dict, &resources);
    let detector = Detector::new(&index, &dict, &resources, &scorer, cfg, Threshold::new(0.99)).unwrap();
    let (report, _) = detector.detect_all(&ds.suspicious).unwrap();
    let lengths: HashMap<String, usize> = ds.suspicious.iter().map(|d| (d.id.clone(), d.char_len())).collect();
    let m = char_pr(&report.detections, &ds.gold, &lengths).unwrap();
    outcome(
        m.precision == 1.0 && m.recall == 1.0 && m.f1 == 1.0,
        format!(
            "{} gold spans, {} detections, P={} R={} F1={}",
            ds.gold.len(),
            report.detections.len(),
            m.precision,
            m.recall,
            m.f1
        ),
    )
}

fn char_overlap_half() -> Outcome {
    let det = Detection {
        susp_doc: "s".into(),
        susp_span: CharSpan::new(0, 100),
        src_doc: "r".into(),
        src_span: CharSpan::new(0, 10),
        score: 1.0,
    };
    let gold = GoldAnnotation {
        susp_doc: "s".into(),
        susp_span: CharSpan::new(50, 150),
        src_doc: "r".into(),
        src_span: CharSpan::new(0, 10),
    };
    let lengths = HashMap::from([("s".to_string(), 200)]);
    let m = char_pr(&[det], &[gold], &lengths).unwrap();
    outcome(
        (m.precision - 0.5).abs() <= 1e-12 && (m.recall - 0.5).abs() <= 1e-12,
        format!("P={} R={}", m.precision, m.recall),
    )
}

// ----------------------------------------------------------------- generator

fn serialize(ds: &Dataset) -> (Vec<u8>, Vec<u8>, Vec<u8>) {
    let (mut s, mut r, mut g) = (Vec::new(), Vec::new(), Vec::new());
    write_corpus(&mut s, &ds.suspicious).unwrap();
    write_corpus(&mut r, &ds.reference).unwrap();
    write_jsonl(&mut g, &ds.gold).unwrap();
    (s, r, g)
}

fn generator_contract() -> Outcome {
    let world = World::generate(WorldConfig::default());
    let parallel = world.parallel_corpus(2000, 4);
    let hosts = world.host_documents(40, 4, 5);
    let mut problems = Vec::new();
    for (seed, fraction) in [(1u64, (0.2, 0.8)), (2, (0.5, 0.5)), (3, (0.1, 0.3)), (4, (0.9, 1.0))] {
        let cfg = GenConfig {
            seed,
            fraction,
            suspicious_docs: 40,
            reference_docs: 60,
            ..Default::default()
        };
        let ds = clpd::evalkit::generate_dataset(&hosts, &parallel, &cfg).unwrap();
        let again = clpd::evalkit::generate_dataset(&hosts, &parallel, &cfg).unwrap();
        let bytes = serialize(&ds);
        if bytes != serialize(&again) {
            problems.push(format!("seed {seed} not reproducible"));
        }
        let other = clpd::evalkit::generate_dataset(
            &hosts,
            &parallel,
            &GenConfig {
                seed: seed + 100,
                ..cfg.clone()
            },
        )
        .unwrap();
        if serialize(&other) == bytes {
            problems.push(format!("seed {seed} and {} gave identical output", seed + 100));
        }
        let back = Dataset {
            suspicious: read_corpus(bytes.0.as_slice(), "s").unwrap(),
            reference: read_corpus(bytes.1.as_slice(), "r").unwrap(),
            gold: read_jsonl(bytes.2.as_slice(), "g").unwrap(),
        };
        if back != ds || serialize(&back) != bytes {
            problems.push(format!("seed {seed} round trip differs"));
        }
        for doc in &ds.suspicious {
            let total = segment(doc, FragmentKind::Sentence).len() as f64;
            let planted = ds.gold.iter().filter(|g| g.susp_doc == doc.id).count() as f64;
            if planted < fraction.0 * total - 1.0 || planted > fraction.1 * total + 1.0 {
                problems.push(format!("{}: {planted}/{total} outside {fraction:?}", doc.id));
            }
        }
        let unique: HashSet<(&str, CharSpan)> = ds.gold.iter().map(|g| (g.src_doc.as_str(), g.src_span)).collect();
        if unique.len() != ds.gold.len() {
            problems.push(format!("seed {seed} reuses a source sentence"));
        }
    }
    let detail = if problems.is_empty() {
        "4 configurations: byte-exact round trip, fractions within one sentence, seeds reproducible".to_string()
    } else {
        problems.join("; ")
    };
    outcome(problems.is_empty(), detail)
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut run = |id: u32, name: &'static str, f: &dyn Fn() -> Outcome| {
        let o = f();
        println!("{} [{id}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((id, name, o));
    };
    run(1, "bm25 oracle equivalence", &bm25_oracle_equivalence);
    let bench = benchmark();
    run(2, "recall monotone in K", &|| recall_monotone(&bench));
    run(3, "augmentation improves recall@50", &|| augmentation_gain(&bench));
    run(4, "TOP1 recall@10 vs ALL", &|| top1_vs_all(&bench));
    run(5, "TOP1 single concept and order independence", &top1_determinism);
    run(6, "calibration optimal over midpoints", &calibration_optimal);
    run(7, "forced-match end to end", &forced_match_end_to_end);
    run(8, "char precision/recall on half overlap", &char_overlap_half);
    run(9, "generator round trip, fraction, seeds", &generator_contract);
    let failed = results.iter().filter(|r| !r.2.pass).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
