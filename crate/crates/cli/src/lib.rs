//! `phonem` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or model error.

mod config;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use phonem::audio_io::read_wav;
use phonem::corpus::{load_manifest, split, stats, synth_corpus_with, AcousticTable, Corpus, SplitMode};
use phonem::fuzzy::from_posterior;
use phonem::recognizer::{
    classify_posterior, compare_splits, evaluate_with, extract_corpus, load_bank, run_split, save_bank, train_with,
    EvalReport, ModelBank, PriorMode,
};
use phonem::Exec;
use serde::Serialize;

pub use config::{CliConfig, Paths, RecognizerSettings};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "error: {m}"),
        }
    }
}

fn data<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "phonem", version, about = "Emotion recognition from children's speech with per-emotion HMMs")]
pub struct Cli {
    /// Seed for every random choice (generation, splits).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON configuration file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus (WAV files plus manifest.jsonl).
    Synth(SynthArgs),
    /// Valence proportions per therapy step, as JSON.
    Stats(StatsArgs),
    /// Dump the feature matrix of one WAV file as CSV.
    Features(FeaturesArgs),
    /// Train one HMM per emotion anchor and save the model bank.
    Train(TrainArgs),
    /// Posterior and fuzzy emotion state for one WAV file, as JSON.
    Classify(ClassifyArgs),
    /// Evaluate on a corpus; without --bank, trains on the train side of the split.
    Eval(EvalArgs),
    /// Speaker-dependent against speaker-independent accuracy over several split seeds.
    Compare(CompareArgs),
    /// Render an evaluation report as a table plus gnuplot and CSV data.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of utterances.
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of speakers.
    #[arg(long)]
    pub subjects: Option<usize>,
    /// Multiplier table preset: standard or boosted.
    #[arg(long)]
    pub acoustics: Option<String>,
    /// Probability that an expert labels an adjacent anchor.
    #[arg(long)]
    pub p_disagree: Option<f64>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Manifest path (alternative to --manifest).
    pub manifest_pos: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Write the JSON here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub wav: Option<PathBuf>,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Skip per-utterance mean and variance normalization.
    #[arg(long)]
    pub raw: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Model bank output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// HMM states per anchor.
    #[arg(long)]
    pub states: Option<usize>,
    /// Maximum Baum-Welch iterations.
    #[arg(long)]
    pub iters: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub bank: Option<PathBuf>,
    #[arg(long)]
    pub wav: Option<PathBuf>,
    /// uniform or empirical.
    #[arg(long)]
    pub prior: Option<PriorMode>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Trained bank; evaluated on the test side when --split is given, else on the whole corpus.
    #[arg(long)]
    pub bank: Option<PathBuf>,
    /// sd (speaker dependent) or si (speaker independent).
    #[arg(long)]
    pub split: Option<SplitMode>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub prior: Option<PriorMode>,
    /// Similarity threshold for the fuzzy match rate.
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub states: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    /// Write the report JSON here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Number of split seeds, starting at --seed.
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub prior: Option<PriorMode>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub states: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    /// Write the comparison JSON here; the table always goes to standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// EvalReport JSON (alternative to --report).
    pub report_pos: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Directory for confusion.dat and confusion.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// JSON emitted by `classify`.
#[derive(Debug, Serialize)]
pub struct ClassifyOutput {
    pub fuzzy: [f64; 3],
    pub crisp: String,
    pub posterior: [f64; 5],
}

/// Parse `argv`, run the subcommand, print errors, return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

/// Run a parsed command and return what it prints on standard output.
pub fn execute(cli: Cli) -> Result<String, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => CliConfig::load(p)?,
        None => CliConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    apply_flags(&mut cfg, &cli.command)?;
    cfg.validate()?;
    match &cli.command {
        Command::Synth(_) => cmd_synth(&cfg),
        Command::Stats(_) => cmd_stats(&cfg),
        Command::Features(a) => cmd_features(&cfg, a.raw),
        Command::Train(_) => cmd_train(&cfg),
        Command::Classify(_) => cmd_classify(&cfg),
        Command::Eval(a) => cmd_eval(&cfg, a.split.is_some()),
        Command::Compare(_) => cmd_compare(&cfg),
        Command::Report(_) => cmd_report(&cfg),
    }
}

fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
    if let Some(v) = v {
        *slot = v.clone();
    }
}

fn set_opt<T: Clone>(slot: &mut Option<T>, v: &Option<T>) {
    if v.is_some() {
        *slot = v.clone();
    }
}

fn apply_flags(cfg: &mut CliConfig, cmd: &Command) -> Result<(), CliError> {
    let r = &mut cfg.recognizer;
    let p = &mut cfg.paths;
    match cmd {
        Command::Synth(a) => {
            set_opt(&mut p.out, &a.out);
            set(&mut cfg.generator.n_utterances, &a.n);
            set(&mut cfg.generator.n_subjects, &a.subjects);
            set(&mut cfg.generator.p_disagree, &a.p_disagree);
            if let Some(name) = &a.acoustics {
                cfg.generator.acoustics = AcousticTable::preset(name)
                    .ok_or_else(|| CliError::Usage(format!("--acoustics {name:?}: expected standard or boosted")))?;
            }
        }
        Command::Stats(a) => {
            set_opt(&mut p.manifest, &a.manifest_pos);
            set_opt(&mut p.manifest, &a.manifest);
            set_opt(&mut p.out, &a.out);
        }
        Command::Features(a) => {
            set_opt(&mut p.wav, &a.wav);
            set_opt(&mut p.out, &a.out);
        }
        Command::Train(a) => {
            set_opt(&mut p.manifest, &a.manifest);
            set_opt(&mut p.out, &a.out);
            set(&mut cfg.hmm.n_states, &a.states);
            set(&mut cfg.hmm.max_iters, &a.iters);
        }
        Command::Classify(a) => {
            set_opt(&mut p.bank, &a.bank);
            set_opt(&mut p.wav, &a.wav);
            set(&mut r.prior, &a.prior);
        }
        Command::Eval(a) => {
            set_opt(&mut p.manifest, &a.manifest);
            set_opt(&mut p.bank, &a.bank);
            set_opt(&mut p.out, &a.out);
            set(&mut r.split, &a.split);
            set(&mut r.test_fraction, &a.test_fraction);
            set(&mut r.prior, &a.prior);
            set(&mut r.theta, &a.theta);
            set(&mut cfg.hmm.n_states, &a.states);
            set(&mut cfg.hmm.max_iters, &a.iters);
        }
        Command::Compare(a) => {
            set_opt(&mut p.manifest, &a.manifest);
            set_opt(&mut p.out, &a.out);
            set(&mut r.test_fraction, &a.test_fraction);
            set(&mut r.compare_seeds, &a.seeds);
            set(&mut r.prior, &a.prior);
            set(&mut r.theta, &a.theta);
            set(&mut cfg.hmm.n_states, &a.states);
            set(&mut cfg.hmm.max_iters, &a.iters);
        }
        Command::Report(a) => {
            set_opt(&mut p.report, &a.report_pos);
            set_opt(&mut p.report, &a.report);
            set_opt(&mut p.out, &a.out);
        }
    }
    Ok(())
}

fn require<'a>(v: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    v.as_deref().ok_or_else(|| CliError::Usage(format!("missing {flag}")))
}

fn write_or_return(out: &Option<PathBuf>, text: String) -> Result<String, CliError> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
            }
            fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            Ok(String::new())
        }
        None => Ok(text),
    }
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("plain data serializes");
    s.push('\n');
    s
}

fn load_corpus(cfg: &CliConfig) -> Result<Corpus, CliError> {
    load_manifest(require(&cfg.paths.manifest, "--manifest")?).map_err(data)
}

fn load_model(cfg: &CliConfig) -> Result<ModelBank, CliError> {
    load_bank(require(&cfg.paths.bank, "--bank")?).map_err(data)
}

fn cmd_synth(cfg: &CliConfig) -> Result<String, CliError> {
    let out = require(&cfg.paths.out, "--out")?;
    let corpus = synth_corpus_with(&cfg.generator, out, Exec::default()).map_err(data)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        manifest: String,
        records: usize,
        subjects: usize,
        seed: u64,
        content_hash: &'a str,
    }
    let hash = corpus.content_hash();
    Ok(json(&Summary {
        manifest: out.join("manifest.jsonl").display().to_string(),
        records: corpus.len(),
        subjects: corpus.subjects().len(),
        seed: cfg.seed,
        content_hash: &hash,
    }))
}

fn cmd_stats(cfg: &CliConfig) -> Result<String, CliError> {
    let s = stats(&load_corpus(cfg)?).map_err(data)?;
    write_or_return(&cfg.paths.out, json(&s))
}

/// Shortest decimal that round-trips the value rounded to 9 significant digits.
fn sig9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("scientific literal parses");
    format!("{rounded}")
}

fn cmd_features(cfg: &CliConfig, raw: bool) -> Result<String, CliError> {
    let u = read_wav(require(&cfg.paths.wav, "--wav")?).map_err(data)?;
    let ex = phonem::features::FeatureExtractor::new(cfg.frame.clone(), u.sample_rate()).map_err(data)?;
    let m = if raw { ex.extract_raw(u.samples()) } else { ex.extract(u.samples()) }.map_err(data)?;
    let mut csv = String::from("frame,");
    csv.push_str(&cfg.frame.column_names().join(","));
    csv.push('\n');
    for (t, row) in m.rows().enumerate() {
        let _ = write!(csv, "{t}");
        for v in row {
            let _ = write!(csv, ",{}", sig9(*v));
        }
        csv.push('\n');
    }
    write_or_return(&cfg.paths.out, csv)
}

fn cmd_train(cfg: &CliConfig) -> Result<String, CliError> {
    let out = require(&cfg.paths.out, "--out")?;
    let corpus = load_corpus(cfg)?;
    let bank = train_with(&corpus, &cfg.train_config(), &[cfg.seed], Exec::default()).map_err(data)?;
    save_bank(&bank, out).map_err(data)?;
    let meta = bank.metadata();
    #[derive(Serialize)]
    struct AnchorSummary {
        anchor: &'static str,
        records: usize,
        iterations: usize,
        final_loglik: Option<f64>,
    }
    #[derive(Serialize)]
    struct Summary {
        bank: String,
        corpus_hash: String,
        excluded_ambiguous: usize,
        anchors: Vec<AnchorSummary>,
    }
    let anchors = phonem::fuzzy::EmotionAnchor::ALL
        .iter()
        .map(|&a| {
            let t = meta.anchors.get(a);
            AnchorSummary {
                anchor: a.name(),
                records: t.records,
                iterations: t.iterations,
                final_loglik: t.loglik_history.last().copied(),
            }
        })
        .collect();
    Ok(json(&Summary {
        bank: out.display().to_string(),
        corpus_hash: meta.corpus_hash.clone(),
        excluded_ambiguous: meta.excluded_ambiguous,
        anchors,
    }))
}

fn cmd_classify(cfg: &CliConfig) -> Result<String, CliError> {
    let bank = load_model(cfg)?;
    let u = read_wav(require(&cfg.paths.wav, "--wav")?).map_err(data)?;
    let posterior = classify_posterior(&bank, &u, cfg.recognizer.prior).map_err(data)?;
    let fuzzy = from_posterior(&posterior).map_err(data)?;
    Ok(json(&ClassifyOutput {
        fuzzy: fuzzy.triple(),
        crisp: fuzzy.crisp_label().name().to_string(),
        posterior,
    }))
}

fn cmd_eval(cfg: &CliConfig, split_given: bool) -> Result<String, CliError> {
    let corpus = load_corpus(cfg)?;
    let r = &cfg.recognizer;
    let report: EvalReport = match &cfg.paths.bank {
        Some(_) => {
            let bank = load_model(cfg)?;
            if split_given {
                let (_, test) = split(&corpus, r.split, r.test_fraction, cfg.seed).map_err(data)?;
                let mut rep = evaluate_with(&bank, &test, r.theta, r.prior, Exec::default()).map_err(data)?;
                rep.split = Some(phonem::recognizer::SplitDescriptor {
                    mode: r.split,
                    test_fraction: r.test_fraction,
                    seed: cfg.seed,
                    n_train: corpus.len() - test.len(),
                    n_test: test.len(),
                });
                rep.seeds = vec![cfg.seed];
                rep
            } else {
                let mut rep = evaluate_with(&bank, &corpus, r.theta, r.prior, Exec::default()).map_err(data)?;
                rep.seeds = vec![cfg.seed];
                rep
            }
        }
        None => {
            let tc = cfg.train_config();
            let feats = extract_corpus(&corpus, &tc.frame, Exec::default()).map_err(data)?;
            run_split(&corpus, &feats, &tc, r.split, r.test_fraction, cfg.seed, r.theta, r.prior, Exec::default())
                .map_err(data)?
        }
    };
    let mut text = report.to_json();
    text.push('\n');
    write_or_return(&cfg.paths.out, text)
}

fn cmd_compare(cfg: &CliConfig) -> Result<String, CliError> {
    let corpus = load_corpus(cfg)?;
    let r = &cfg.recognizer;
    let seeds: Vec<u64> = (0..r.compare_seeds as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
    let cmp = compare_splits(&corpus, &cfg.train_config(), r.test_fraction, &seeds, r.theta, r.prior, Exec::default())
        .map_err(data)?;
    if cfg.paths.out.is_some() {
        write_or_return(&cfg.paths.out, json(&cmp))?;
    }
    Ok(cmp.render_table())
}

fn cmd_report(cfg: &CliConfig) -> Result<String, CliError> {
    let path = require(&cfg.paths.report, "--report")?;
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let report: EvalReport =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if let Some(dir) = &cfg.paths.out {
        fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
        for (name, body) in [("confusion.dat", report.gnuplot_dat()), ("confusion.csv", report.confusion_csv())] {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
        }
    }
    Ok(report.render_table())
}
