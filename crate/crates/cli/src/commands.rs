use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use clap::Parser;
use clpd::analysis::{calibrate, OverlapScorer, RemoteScorer, Scorer, Threshold};
use clpd::evalkit::synth::{World, WorldConfig};
use clpd::evalkit::{
    build_pair_dataset, char_pr, generate_dataset, pair_metrics, read_jsonl, read_parallel_tsv, recall_table,
    retrieval_lists, write_jsonl, GenConfig, GoldAnnotation, PairExample,
};
use clpd::index::{IdfVariant, InvertedIndex, RetrievalConfig};
use clpd::pipeline::{index_reference, write_trace, DetectOptions, Detector, Report, SentenceTrace};
use clpd::textproc::{read_corpus, write_corpus, ResourceSet};
use clpd::thesaurus::{build_clusters, load_senses, write_senses, ClusterDictionary, MergeMode, TranslationTable};
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::json;

use crate::manifest::{beside, RunManifest};
use crate::*;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl From<clpd::Error> for CliError {
    fn from(e: clpd::Error) -> Self {
        let code = if matches!(e, clpd::Error::Usage(_)) { 2 } else { 1 };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> CliError {
    CliError {
        code: 2,
        message: message.into(),
    }
}

fn failure(message: impl Into<String>) -> CliError {
    CliError {
        code: 1,
        message: message.into(),
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| failure(format!("cannot open {}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| failure(format!("cannot create {}: {e}", path.display())))
}

fn write_json(path: Option<&Path>, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| failure(e.to_string()))?;
    text.push('\n');
    match path {
        Some(p) => fs::write(p, text).map_err(|e| failure(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn finish<W: Write>(mut w: W, path: &Path) -> Result<()> {
    w.flush()
        .map_err(|e| failure(format!("cannot write {}: {e}", path.display())))
}

fn name(path: &Path) -> String {
    path.display().to_string()
}

fn load_resources(args: &ResourceArgs) -> Result<ResourceSet> {
    let mut set = ResourceSet::new();
    for s in &args.stopwords {
        set.entry(&s.lang).load_stopwords(open(&s.path)?)?;
    }
    for l in &args.lemmas {
        set.entry(&l.lang).load_lemma_map(open(&l.path)?, &name(&l.path))?;
    }
    Ok(set)
}

fn load_dictionary(path: &Path) -> Result<ClusterDictionary> {
    Ok(ClusterDictionary::read_tsv(open(path)?, &name(path))?)
}

fn retrieval_config(args: &RetrievalArgs) -> Result<RetrievalConfig> {
    let cfg = RetrievalConfig {
        k1: args.k1,
        b: args.b,
        k: args.k,
        idf: match args.idf {
            IdfArg::NonNegative => IdfVariant::NonNegative,
            IdfArg::Classic => IdfVariant::Classic,
        },
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn make_scorer<'a>(
    choice: &str,
    dict: Option<&'a ClusterDictionary>,
    resources: &'a ResourceSet,
) -> Result<Box<dyn Scorer + 'a>> {
    if choice == "overlap" {
        let dict = dict.ok_or_else(|| usage("the overlap scorer needs --dictionary"))?;
        return Ok(Box::new(OverlapScorer::new(dict, resources)));
    }
    match choice.strip_prefix("remote:") {
        Some(addr) if !addr.is_empty() => Ok(Box::new(RemoteScorer::new(addr))),
        _ => Err(usage(format!(
            "unknown scorer {choice:?}; expected overlap or remote:<host:port>"
        ))),
    }
}

fn check_threshold(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(usage(format!("threshold must lie in [0, 1], got {t}")))
    }
}

fn progress(enabled: bool, event: serde_json::Value) {
    if enabled {
        eprintln!("{event}");
    }
}

pub fn run(command: &Command, args: &[String]) -> Result<()> {
    let manifest_path = match command {
        Command::BuildClusters(a) => {
            build_clusters_cmd(a)?;
            Some(beside(&a.out))
        }
        Command::Index(a) => {
            index_cmd(a)?;
            Some(beside(&a.out))
        }
        Command::Detect(a) => {
            detect_cmd(a)?;
            Some(beside(&a.out))
        }
        Command::Eval(a) => {
            eval_cmd(a)?;
            a.out.as_deref().map(beside)
        }
        Command::Gen(a) => {
            gen_cmd(a)?;
            Some(a.out_dir.join("manifest.json"))
        }
        Command::Pairs(a) => {
            pairs_cmd(a)?;
            Some(beside(&a.out))
        }
        Command::Calibrate(a) => {
            calibrate_cmd(a)?;
            Some(beside(&a.out))
        }
        Command::Synth(a) => {
            synth_cmd(a)?;
            Some(a.out_dir.join("manifest.json"))
        }
        Command::Replay(a) => return replay_cmd(a),
    };
    if let Some(path) = manifest_path {
        RunManifest::new(command, args)
            .write(&path)
            .map_err(|e| failure(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

fn build_clusters_cmd(a: &BuildClustersArgs) -> Result<()> {
    let mut records = Vec::new();
    let mut unknown_pos = 0;
    for path in &a.senses {
        let load = load_senses(open(path)?, &name(path))?;
        unknown_pos += load.unknown_pos;
        records.extend(load.records);
    }
    if unknown_pos > 0 {
        eprintln!("warning: {unknown_pos} sense lines had an unknown part of speech and were mapped to OTHER");
    }
    let mode = match a.mode {
        ModeArg::Top1 => MergeMode::Top1,
        ModeArg::All => MergeMode::All,
    };
    let (mut dict, report) = build_clusters(&records, mode);
    let augment = match &a.translations {
        Some(path) => {
            let table = TranslationTable::load(open(path)?, &name(path))?;
            Some(dict.augment(&table))
        }
        None => None,
    };
    let mut out = create(&a.out)?;
    dict.write_tsv(&mut out)?;
    finish(out, &a.out)?;
    write_json(
        None,
        &json!({
            "records": records.len(),
            "build": report,
            "augment": augment,
            "fingerprint": dict.fingerprint(),
        }),
    )
}

fn index_cmd(a: &IndexArgs) -> Result<()> {
    let dict = load_dictionary(&a.dictionary)?;
    let resources = load_resources(&a.resources)?;
    let cfg = retrieval_config(&a.retrieval)?;
    let docs = read_corpus(open(&a.reference)?, &name(&a.reference))?;
    let index = index_reference(&docs, &dict, &resources, cfg)?;
    let mut out = create(&a.out)?;
    index.write_to(&mut out)?;
    finish(out, &a.out)?;
    write_json(
        None,
        &json!({
            "documents": docs.len(),
            "fragments": index.len(),
            "vocabulary": index.vocabulary_size(),
            "dictionary": index.dictionary(),
        }),
    )
}

fn detect_cmd(a: &DetectArgs) -> Result<()> {
    check_threshold(a.threshold)?;
    if a.beta.is_nan() || a.beta <= 0.0 {
        return Err(usage(format!("beta must be positive, got {}", a.beta)));
    }
    let cfg = retrieval_config(&a.retrieval)?;
    let dict = load_dictionary(&a.dictionary)?;
    let resources = load_resources(&a.resources)?;
    let index = InvertedIndex::read_from(open(&a.index)?, &name(&a.index))?;
    let docs = read_corpus(open(&a.suspicious)?, &name(&a.suspicious))?;
    let scorer = make_scorer(&a.scorer, Some(&dict), &resources)?;
    let threshold = Threshold {
        value: a.threshold,
        beta: a.beta,
    };
    let detector =
        Detector::new(&index, &dict, &resources, scorer.as_ref(), cfg, threshold)?.with_options(DetectOptions {
            merge_adjacent: a.merge_adjacent,
            trace: a.trace.is_some(),
        });

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs.unwrap_or(0))
        .build()
        .map_err(|e| failure(e.to_string()))?;
    progress(a.progress, json!({"event": "start", "documents": docs.len()}));
    let done = AtomicUsize::new(0);
    let results: Vec<_> = pool.install(|| {
        docs.par_iter()
            .map(|d| {
                let r = detector.detect_document(d);
                let n = done.fetch_add(1, Ordering::Relaxed) + 1;
                progress(
                    a.progress,
                    json!({"event": "document", "id": d.id, "done": n, "total": docs.len(), "ok": r.is_ok()}),
                );
                r
            })
            .collect()
    });
    let mut detections = Vec::new();
    let mut trace: Vec<SentenceTrace> = Vec::new();
    for r in results {
        let r = r?;
        detections.extend(r.detections);
        trace.extend(r.trace);
    }
    let report = Report {
        config: detector.config(),
        detections,
    };
    fs::write(&a.out, report.to_json_pretty()? + "\n")
        .map_err(|e| failure(format!("cannot write {}: {e}", a.out.display())))?;
    if let Some(path) = &a.trace {
        let mut out = create(path)?;
        write_trace(&mut out, &trace)?;
        finish(out, path)?;
    }
    progress(
        a.progress,
        json!({"event": "done", "detections": report.detections.len()}),
    );
    Ok(())
}

fn required<'a, T>(value: &'a Option<T>, flag: &str) -> Result<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| usage(format!("{flag} is required for this mode")))
}

fn eval_cmd(a: &EvalArgs) -> Result<()> {
    match a.mode {
        EvalMode::Chars => {
            let report_path = required(&a.report, "--report")?;
            let report: Report = serde_json::from_reader(open(report_path)?)
                .map_err(|e| failure(format!("{}: {e}", name(report_path))))?;
            let gold_path = required(&a.gold, "--gold")?;
            let gold: Vec<GoldAnnotation> = read_jsonl(open(gold_path)?, &name(gold_path))?;
            let susp_path = required(&a.suspicious, "--suspicious")?;
            let lengths: HashMap<String, usize> = read_corpus(open(susp_path)?, &name(susp_path))?
                .into_iter()
                .map(|d| (d.id.clone(), d.char_len()))
                .collect();
            let m = char_pr(&report.detections, &gold, &lengths)?;
            write_json(a.out.as_deref(), &m)
        }
        EvalMode::Retrieval => {
            let trace_path = required(&a.trace, "--trace")?;
            let trace: Vec<SentenceTrace> = read_jsonl(open(trace_path)?, &name(trace_path))?;
            let gold_path = required(&a.gold, "--gold")?;
            let gold: Vec<GoldAnnotation> = read_jsonl(open(gold_path)?, &name(gold_path))?;
            let ref_path = required(&a.reference, "--reference")?;
            let reference = read_corpus(open(ref_path)?, &name(ref_path))?;
            let (results, relevant) = retrieval_lists(&trace, &gold, &reference)?;
            let table = recall_table(&results, &relevant, &[1, 5, 10, 50])?;
            let recall_at: BTreeMap<String, f64> = table.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
            write_json(a.out.as_deref(), &json!({ "recall_at": recall_at }))
        }
        EvalMode::Pairs => {
            let pairs_path = required(&a.pairs, "--pairs")?;
            let threshold = *required(&a.threshold, "--threshold")?;
            check_threshold(threshold)?;
            let examples: Vec<PairExample> = read_jsonl(open(pairs_path)?, &name(pairs_path))?;
            let dict = a.dictionary.as_deref().map(load_dictionary).transpose()?;
            let resources = load_resources(&a.resources)?;
            let scorer = make_scorer(&a.scorer, dict.as_ref(), &resources)?;
            let m = pair_metrics(&examples, scorer.as_ref(), threshold)?;
            write_json(a.out.as_deref(), &m)
        }
    }
}

fn gen_cmd(a: &GenArgs) -> Result<()> {
    let hosts = read_corpus(open(&a.hosts)?, &name(&a.hosts))?;
    let parallel = read_parallel_tsv(open(&a.parallel)?, &name(&a.parallel))?;
    let cfg = GenConfig {
        seed: a.seed,
        fraction: (a.fraction_min, a.fraction_max),
        sources: (a.sources_min, a.sources_max),
        suspicious_docs: a.suspicious_docs,
        reference_docs: a.reference_docs,
        paragraph_sentences: (a.paragraph_min, a.paragraph_max),
        max_fillers: a.max_fillers,
        reference_lang: a.reference_lang.clone(),
    };
    let ds = generate_dataset(&hosts, &parallel, &cfg).map_err(|e| match e {
        clpd::Error::Invalid(m) => usage(m),
        other => other.into(),
    })?;
    fs::create_dir_all(&a.out_dir).map_err(|e| failure(format!("cannot create {}: {e}", a.out_dir.display())))?;
    let path = a.out_dir.join("suspicious.jsonl");
    let mut out = create(&path)?;
    write_corpus(&mut out, &ds.suspicious)?;
    finish(out, &path)?;
    let path = a.out_dir.join("reference.jsonl");
    let mut out = create(&path)?;
    write_corpus(&mut out, &ds.reference)?;
    finish(out, &path)?;
    let path = a.out_dir.join("gold.jsonl");
    let mut out = create(&path)?;
    write_jsonl(&mut out, &ds.gold)?;
    finish(out, &path)?;
    write_json(
        None,
        &json!({
            "suspicious": ds.suspicious.len(),
            "reference": ds.reference.len(),
            "gold": ds.gold.len(),
        }),
    )
}

fn pairs_cmd(a: &PairsArgs) -> Result<()> {
    let parallel = read_parallel_tsv(open(&a.parallel)?, &name(&a.parallel))?;
    let examples = build_pair_dataset(&parallel, &a.l1, &a.l2, a.negatives, a.seed)?;
    let mut out = create(&a.out)?;
    write_jsonl(&mut out, &examples)?;
    finish(out, &a.out)
}

#[derive(Deserialize)]
struct ScoredPair {
    #[serde(flatten)]
    example: PairExample,
    score: Option<f64>,
}

fn calibrate_cmd(a: &CalibrateArgs) -> Result<()> {
    let rows: Vec<ScoredPair> = read_jsonl(open(&a.pairs)?, &name(&a.pairs))?;
    let with_scores = rows.iter().filter(|r| r.score.is_some()).count();
    let scores: Vec<f64> = if with_scores == rows.len() && !rows.is_empty() {
        rows.iter().map(|r| r.score.unwrap_or_default()).collect()
    } else if with_scores == 0 {
        let dict = a.dictionary.as_deref().map(load_dictionary).transpose()?;
        let resources = load_resources(&a.resources)?;
        let scorer = make_scorer(&a.scorer, dict.as_ref(), &resources)?;
        let inputs: Vec<_> = rows.iter().map(|r| r.example.input()).collect();
        clpd::analysis::score_pairs(scorer.as_ref(), &inputs)?
    } else {
        return Err(usage(format!(
            "{with_scores} of {} pairs carry a score; need all or none",
            rows.len()
        )));
    };
    let dev: Vec<(f64, bool)> = scores.into_iter().zip(rows.iter().map(|r| r.example.label)).collect();
    let cal = calibrate(&dev, a.beta)?;
    write_json(
        Some(&a.out),
        &json!({
            "threshold": cal.threshold.value,
            "beta": cal.threshold.beta,
            "f_beta": cal.f_beta,
            "precision": cal.precision,
            "recall": cal.recall,
            "pairs": dev.len(),
        }),
    )
}

fn synth_cmd(a: &SynthArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.gap) {
        return Err(usage(format!("--gap must lie in [0, 1], got {}", a.gap)));
    }
    if a.words == 0 {
        return Err(usage("--words must be positive"));
    }
    let world = World::generate(WorldConfig {
        seed: a.seed,
        english_words: a.words,
        extra_concepts: a.extra_concepts,
        target_gap: a.gap,
        ..Default::default()
    });
    fs::create_dir_all(&a.out_dir).map_err(|e| failure(format!("cannot create {}: {e}", a.out_dir.display())))?;

    let path = a.out_dir.join("senses.tsv");
    let mut out = create(&path)?;
    write_senses(&mut out, &world.sense_records())?;
    finish(out, &path)?;

    let path = a.out_dir.join("translations.tsv");
    let mut out = create(&path)?;
    world.translation_table().write_tsv(&mut out)?;
    finish(out, &path)?;

    let path = a.out_dir.join("parallel.tsv");
    let mut out = create(&path)?;
    for p in world.parallel_corpus(a.parallel_pairs, a.seed.wrapping_add(1)) {
        writeln!(out, "{}\t{}", p.l1, p.l2).map_err(|e| failure(e.to_string()))?;
    }
    finish(out, &path)?;

    let path = a.out_dir.join("hosts.jsonl");
    let mut out = create(&path)?;
    write_corpus(
        &mut out,
        &world.host_documents(a.hosts, a.host_paragraphs, a.seed.wrapping_add(2)),
    )?;
    finish(out, &path)?;

    let resources = world.resources();
    for lang in ["en", world.target_lang()] {
        let mut words: Vec<&String> = resources.get(lang).stopwords.iter().collect();
        words.sort();
        let path = a.out_dir.join(format!("stopwords-{lang}.txt"));
        let mut out = create(&path)?;
        for w in words {
            writeln!(out, "{w}").map_err(|e| failure(e.to_string()))?;
        }
        finish(out, &path)?;
    }
    Ok(())
}

fn replay_cmd(a: &ReplayArgs) -> Result<()> {
    let manifest =
        RunManifest::read(&a.manifest).map_err(|e| failure(format!("cannot read {}: {e}", a.manifest.display())))?;
    let argv = std::iter::once("clpd".to_string()).chain(manifest.args.iter().cloned());
    let cli = Cli::try_parse_from(argv).map_err(|e| usage(format!("manifest arguments do not parse: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(usage("a manifest cannot replay another replay"));
    }
    let paths = outputs(&cli.command);
    let before: Vec<Option<Vec<u8>>> = paths.iter().map(|p| fs::read(p).ok()).collect();
    run(&cli.command, &manifest.args)?;
    let mut changed = Vec::new();
    let mut checked = Vec::new();
    for (path, old) in paths.iter().zip(before) {
        let Some(old) = old else { continue };
        let same = fs::read(path).map(|new| new == old).unwrap_or(false);
        checked.push(json!({"path": name(path), "identical": same}));
        if !same {
            changed.push(name(path));
        }
    }
    write_json(None, &json!({ "outputs": checked }))?;
    if changed.is_empty() {
        Ok(())
    } else {
        Err(failure(format!(
            "replay produced different output in {}",
            changed.join(", ")
        )))
    }
}

fn outputs(command: &Command) -> Vec<PathBuf> {
    match command {
        Command::BuildClusters(a) => vec![a.out.clone()],
        Command::Index(a) => vec![a.out.clone()],
        Command::Detect(a) => std::iter::once(a.out.clone()).chain(a.trace.clone()).collect(),
        Command::Eval(a) => a.out.iter().cloned().collect(),
        Command::Gen(a) => ["suspicious.jsonl", "reference.jsonl", "gold.jsonl"]
            .iter()
            .map(|f| a.out_dir.join(f))
            .collect(),
        Command::Pairs(a) => vec![a.out.clone()],
        Command::Calibrate(a) => vec![a.out.clone()],
        Command::Synth(a) => {
            let mut files: Vec<PathBuf> = ["senses.tsv", "translations.tsv", "parallel.tsv", "hosts.jsonl"]
                .iter()
                .map(|f| a.out_dir.join(f))
                .collect();
            if let Ok(entries) = fs::read_dir(&a.out_dir) {
                let mut stop: Vec<PathBuf> = entries
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| {
                        p.file_name()
                            .and_then(|n| n.to_str())
                            .is_some_and(|n| n.starts_with("stopwords-"))
                    })
                    .collect();
                stop.sort();
                files.extend(stop);
            }
            files
        }
        Command::Replay(_) => Vec::new(),
    }
}
