use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

mod commands;
mod manifest;

/// Cross-lingual plagiarism detection with multilingual concept clusters.
#[derive(Debug, Parser)]
#[command(name = "clpd", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Command {
    /// Compile sense inventories into a cluster dictionary.
    BuildClusters(BuildClustersArgs),
    /// Index reference paragraphs for candidate retrieval.
    Index(IndexArgs),
    /// Detect translated sentences in suspicious documents.
    Detect(DetectArgs),
    /// Score a report, a retrieval trace or a pair scorer against gold data.
    Eval(EvalArgs),
    /// Generate a benchmark from host documents and a parallel corpus.
    Gen(GenArgs),
    /// Build labelled translation pairs from a parallel corpus.
    Pairs(PairsArgs),
    /// Choose the decision threshold that maximizes F-beta on labelled pairs.
    Calibrate(CalibrateArgs),
    /// Write a synthetic bilingual world: senses, translations, parallel text, hosts.
    Synth(SynthArgs),
    /// Re-run the command recorded in a run manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Top1,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IdfArg {
    NonNegative,
    Classic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Chars,
    Retrieval,
    Pairs,
}

/// `LANG=PATH` pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LangPath {
    pub lang: String,
    pub path: PathBuf,
}

fn parse_lang_path(s: &str) -> Result<LangPath, String> {
    let (lang, path) = s
        .split_once('=')
        .ok_or_else(|| format!("expected LANG=PATH, got {s:?}"))?;
    if lang.is_empty() || path.is_empty() {
        return Err(format!("expected LANG=PATH, got {s:?}"));
    }
    Ok(LangPath {
        lang: lang.to_ascii_lowercase(),
        path: path.into(),
    })
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ResourceArgs {
    /// Stopword list for a language, one word per line.
    #[arg(long = "stopwords", value_name = "LANG=PATH", value_parser = parse_lang_path)]
    pub stopwords: Vec<LangPath>,
    /// Lemma map for a language, `surface<TAB>lemma` per line.
    #[arg(long = "lemmas", value_name = "LANG=PATH", value_parser = parse_lang_path)]
    pub lemmas: Vec<LangPath>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct RetrievalArgs {
    /// Candidates retrieved per suspicious sentence.
    #[arg(long, default_value_t = 50)]
    pub k: usize,
    #[arg(long, default_value_t = 1.2)]
    pub k1: f64,
    #[arg(long, default_value_t = 0.75)]
    pub b: f64,
    #[arg(long, value_enum, default_value_t = IdfArg::NonNegative)]
    pub idf: IdfArg,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BuildClustersArgs {
    /// Sense TSV files: concept, lang, lemma, pos[, freq_rank[, weight]].
    #[arg(long, required = true, num_args = 1..)]
    pub senses: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = ModeArg::Top1)]
    pub mode: ModeArg,
    /// Word translations of English lemmas used to augment the clusters.
    #[arg(long)]
    pub translations: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct IndexArgs {
    /// Reference corpus, JSON lines of {"id", "lang", "text"}.
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long)]
    pub dictionary: PathBuf,
    #[command(flatten)]
    pub resources: ResourceArgs,
    #[command(flatten)]
    pub retrieval: RetrievalArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DetectArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub dictionary: PathBuf,
    #[arg(long)]
    pub suspicious: PathBuf,
    /// `overlap` or `remote:<host:port>`.
    #[arg(long, default_value = "overlap")]
    pub scorer: String,
    /// Pairs scoring at or above this value count as translations.
    #[arg(long)]
    pub threshold: f64,
    #[arg(long, default_value_t = 0.25)]
    pub beta: f64,
    #[command(flatten)]
    pub retrieval: RetrievalArgs,
    #[command(flatten)]
    pub resources: ResourceArgs,
    /// Join detections of consecutive sentences with the same source paragraph.
    #[arg(long)]
    pub merge_adjacent: bool,
    /// Write per-sentence retrieval and scoring details as JSON lines.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    #[serde(skip)]
    pub jobs: Option<usize>,
    /// Print JSON progress events on stderr.
    #[arg(long)]
    #[serde(skip)]
    pub progress: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long, value_enum)]
    pub mode: EvalMode,
    /// Detection report (chars).
    #[arg(long, required_if_eq("mode", "chars"))]
    pub report: Option<PathBuf>,
    /// Gold annotations (chars, retrieval).
    #[arg(long, required_if_eq_any([("mode", "chars"), ("mode", "retrieval")]))]
    pub gold: Option<PathBuf>,
    /// Suspicious corpus, for document lengths (chars).
    #[arg(long, required_if_eq("mode", "chars"))]
    pub suspicious: Option<PathBuf>,
    /// Retrieval trace written by `detect --trace` (retrieval).
    #[arg(long, required_if_eq("mode", "retrieval"))]
    pub trace: Option<PathBuf>,
    /// Reference corpus (retrieval).
    #[arg(long, required_if_eq("mode", "retrieval"))]
    pub reference: Option<PathBuf>,
    /// Labelled pairs (pairs).
    #[arg(long, required_if_eq("mode", "pairs"))]
    pub pairs: Option<PathBuf>,
    #[arg(long, required_if_eq("mode", "pairs"))]
    pub threshold: Option<f64>,
    #[arg(long, default_value = "overlap")]
    pub scorer: String,
    /// Dictionary for the overlap scorer (pairs).
    #[arg(long)]
    pub dictionary: Option<PathBuf>,
    #[command(flatten)]
    pub resources: ResourceArgs,
    /// Metrics file; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GenArgs {
    /// Host documents in the suspicious language.
    #[arg(long)]
    pub hosts: PathBuf,
    /// Parallel corpus, `reference_text<TAB>suspicious_text` per line.
    #[arg(long)]
    pub parallel: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.2)]
    pub fraction_min: f64,
    #[arg(long, default_value_t = 0.8)]
    pub fraction_max: f64,
    #[arg(long, default_value_t = 1)]
    pub sources_min: usize,
    #[arg(long, default_value_t = 10)]
    pub sources_max: usize,
    #[arg(long, default_value_t = 10)]
    pub suspicious_docs: usize,
    #[arg(long, default_value_t = 40)]
    pub reference_docs: usize,
    #[arg(long, default_value_t = 1)]
    pub paragraph_min: usize,
    #[arg(long, default_value_t = 3)]
    pub paragraph_max: usize,
    /// Limit on unused parallel sentences added as reference filler.
    #[arg(long)]
    pub max_fillers: Option<usize>,
    #[arg(long, default_value = "en")]
    pub reference_lang: String,
    /// Directory receiving suspicious.jsonl, reference.jsonl and gold.jsonl.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PairsArgs {
    #[arg(long)]
    pub parallel: PathBuf,
    #[arg(long, default_value = "en")]
    pub l1: String,
    #[arg(long)]
    pub l2: String,
    /// Negative pairs per positive pair.
    #[arg(long, default_value_t = 1)]
    pub negatives: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CalibrateArgs {
    /// Labelled pairs; a numeric "score" field on every line skips scoring.
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long, default_value_t = 0.25)]
    pub beta: f64,
    #[arg(long, default_value = "overlap")]
    pub scorer: String,
    #[arg(long)]
    pub dictionary: Option<PathBuf>,
    #[command(flatten)]
    pub resources: ResourceArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 800)]
    pub words: usize,
    #[arg(long, default_value_t = 500)]
    pub extra_concepts: usize,
    #[arg(long, default_value_t = 1500)]
    pub parallel_pairs: usize,
    #[arg(long, default_value_t = 30)]
    pub hosts: usize,
    #[arg(long, default_value_t = 3)]
    pub host_paragraphs: usize,
    /// Share of concepts without a target-language lemma in the thesaurus.
    #[arg(long, default_value_t = 0.45)]
    pub gap: f64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let args: Vec<String> = std::env::args().skip(1).collect();
    match commands::run(&cli.command, &args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
