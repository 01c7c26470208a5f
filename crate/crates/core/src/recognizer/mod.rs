//! Per-anchor HMM training, posterior classification, fuzzy recognition,
//! evaluation and model-bank persistence.

mod eval;
mod persist;

pub use eval::{
    compare_splits, evaluate, evaluate_features, evaluate_with, run_split, EvalReport, ModeSummary, PerAnchor,
    SplitComparison, SplitDescriptor,
};
pub use persist::{bank_from_json, bank_to_json, load_bank, save_bank, BANK_FORMAT_VERSION};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio_io::{AudioError, Utterance};
use crate::corpus::{Corpus, CorpusError, UtteranceRecord};
use crate::exec::Exec;
use crate::features::{FeatureError, FeatureExtractor, FeatureMatrix, FrameConfig};
use crate::fuzzy::{from_posterior, EmotionAnchor, FuzzyEmotionState};
use crate::hmm::{avg_loglik, baum_welch_with, flat_start, Hmm, HmmConfig, HmmError};

#[derive(Debug, Error)]
pub enum RecognizerError {
    #[error("insufficient training data for {anchor}: {found} unambiguous records, need {needed}")]
    InsufficientData {
        anchor: EmotionAnchor,
        found: usize,
        needed: usize,
    },
    #[error("utterance too short to score: {0}")]
    TooShort(String),
    #[error("model for {anchor}: {source}")]
    Model {
        anchor: EmotionAnchor,
        #[source]
        source: HmmError,
    },
    #[error("record {id}: {source}")]
    Record {
        id: String,
        #[source]
        source: Box<RecognizerError>,
    },
    #[error("model bank format version {found} is not supported (expected {supported})")]
    VersionMismatch { found: u64, supported: u64 },
    #[error("malformed model bank: {0}")]
    MalformedModel(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("I/O failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

impl RecognizerError {
    fn for_record(id: &str, e: RecognizerError) -> Self {
        RecognizerError::Record {
            id: id.to_string(),
            source: Box::new(e),
        }
    }
}

/// How class priors enter the posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorMode {
    /// Priors ignored; the default, since the corpus is mostly positive.
    #[default]
    Uniform,
    /// Training-set class proportions.
    Empirical,
}

impl std::str::FromStr for PriorMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(PriorMode::Uniform),
            "empirical" => Ok(PriorMode::Empirical),
            _ => Err(format!("unknown prior mode {s:?} (expected uniform or empirical)")),
        }
    }
}

impl PriorMode {
    pub fn name(self) -> &'static str {
        match self {
            PriorMode::Uniform => "uniform",
            PriorMode::Empirical => "empirical",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub frame: FrameConfig,
    pub hmm: HmmConfig,
    pub min_per_class: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            frame: FrameConfig::default(),
            hmm: HmmConfig::default(),
            min_per_class: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), RecognizerError> {
        self.frame.validate(crate::audio_io::CANONICAL_RATE)?;
        let bad = |m: &str| Err(RecognizerError::InvalidConfig(m.into()));
        if self.hmm.n_states == 0 {
            return bad("n_states must be at least 1");
        }
        if !(self.hmm.rel_tol.is_finite() && self.hmm.rel_tol >= 0.0) {
            return bad("rel_tol must be a non-negative number");
        }
        if self.min_per_class == 0 {
            return bad("min_per_class must be at least 1");
        }
        Ok(())
    }
}

/// Per-anchor training summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorTraining {
    pub records: usize,
    pub frames: usize,
    pub iterations: usize,
    pub loglik_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainMetadata {
    /// SHA-256 of the training manifest.
    pub corpus_hash: String,
    /// Caller-supplied seeds that produced the training data.
    pub seeds: Vec<u64>,
    pub hmm: HmmConfig,
    /// Records left out because their labels disagree on the anchor.
    pub excluded_ambiguous: usize,
    pub anchors: PerAnchor<AnchorTraining>,
}

/// One trained HMM per emotion anchor plus everything needed to score.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBank {
    frame: FrameConfig,
    models: [Hmm; 5],
    log_priors: [f64; 5],
    metadata: TrainMetadata,
}

impl ModelBank {
    pub fn new(
        frame: FrameConfig,
        models: [Hmm; 5],
        log_priors: [f64; 5],
        metadata: TrainMetadata,
    ) -> Result<Self, RecognizerError> {
        frame.validate(crate::audio_io::CANONICAL_RATE)?;
        let dim = frame.dim();
        for (anchor, m) in EmotionAnchor::ALL.iter().zip(&models) {
            m.validate().map_err(|source| RecognizerError::Model { anchor: *anchor, source })?;
            if m.dim() != dim {
                return Err(RecognizerError::MalformedModel(format!(
                    "{anchor} model has dimension {}, features have {dim}",
                    m.dim()
                )));
            }
        }
        let total: f64 = log_priors.iter().map(|l| l.exp()).sum();
        if log_priors.iter().any(|l| l.is_nan() || *l > 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(RecognizerError::MalformedModel("priors must sum to 1".into()));
        }
        Ok(Self {
            frame,
            models,
            log_priors,
            metadata,
        })
    }

    pub fn frame_config(&self) -> &FrameConfig {
        &self.frame
    }

    pub fn model(&self, anchor: EmotionAnchor) -> &Hmm {
        &self.models[anchor.index()]
    }

    pub fn models(&self) -> &[Hmm; 5] {
        &self.models
    }

    pub fn log_priors(&self) -> &[f64; 5] {
        &self.log_priors
    }

    pub fn metadata(&self) -> &TrainMetadata {
        &self.metadata
    }

    pub fn extractor(&self) -> FeatureExtractor {
        FeatureExtractor::new(self.frame.clone(), crate::audio_io::CANONICAL_RATE).expect("validated on construction")
    }
}

/// Features for every record of `corpus`, in record order.
pub fn extract_corpus(corpus: &Corpus, frame: &FrameConfig, exec: Exec) -> Result<Vec<FeatureMatrix>, RecognizerError> {
    let fx = FeatureExtractor::new(frame.clone(), crate::audio_io::CANONICAL_RATE)?;
    exec.try_map(corpus.records(), |r| {
        let run = || -> Result<FeatureMatrix, RecognizerError> {
            let u = corpus.load_audio(r)?;
            Ok(fx.extract(u.samples())?)
        };
        run().map_err(|e| RecognizerError::for_record(&r.id, e))
    })
}

pub fn train(corpus: &Corpus, cfg: &TrainConfig) -> Result<ModelBank, RecognizerError> {
    train_with(corpus, cfg, &[], Exec::default())
}

/// Train with explicit provenance seeds and execution strategy.
pub fn train_with(corpus: &Corpus, cfg: &TrainConfig, seeds: &[u64], exec: Exec) -> Result<ModelBank, RecognizerError> {
    cfg.validate()?;
    let features = extract_corpus(corpus, &cfg.frame, exec)?;
    train_from_features(corpus, &features, cfg, seeds, exec)
}

/// Train on pre-extracted features; `features[i]` belongs to record `i`.
pub fn train_from_features(
    corpus: &Corpus,
    features: &[FeatureMatrix],
    cfg: &TrainConfig,
    seeds: &[u64],
    exec: Exec,
) -> Result<ModelBank, RecognizerError> {
    cfg.validate()?;
    assert_eq!(corpus.len(), features.len(), "one feature matrix per record");
    let mut per_anchor: [Vec<&FeatureMatrix>; 5] = Default::default();
    let mut excluded = 0;
    for (r, f) in corpus.records().iter().zip(features) {
        match r.labels.unanimous_anchor() {
            Some(a) => per_anchor[a.index()].push(f),
            None => excluded += 1,
        }
    }
    for anchor in EmotionAnchor::ALL {
        let found = per_anchor[anchor.index()].len();
        if found < cfg.min_per_class {
            return Err(RecognizerError::InsufficientData {
                anchor,
                found,
                needed: cfg.min_per_class,
            });
        }
    }

    let outcomes = exec.try_map(&EmotionAnchor::ALL, |&anchor| {
        let seqs = &per_anchor[anchor.index()];
        let run = || -> Result<_, HmmError> {
            let init = flat_start(seqs, cfg.hmm.n_states)?;
            baum_welch_with(&init, seqs, &cfg.hmm, exec)
        };
        let out = run().map_err(|source| RecognizerError::Model { anchor, source })?;
        let summary = AnchorTraining {
            records: seqs.len(),
            frames: seqs.iter().map(|f| f.frame_count()).sum(),
            iterations: out.iterations(),
            loglik_history: out.loglik_history.clone(),
        };
        Ok::<_, RecognizerError>((out.model, summary))
    })?;

    let total: usize = per_anchor.iter().map(Vec::len).sum();
    let log_priors = std::array::from_fn(|k| (per_anchor[k].len() as f64 / total as f64).ln());
    let mut models = Vec::with_capacity(5);
    let mut summaries = Vec::with_capacity(5);
    for (m, s) in outcomes {
        models.push(m);
        summaries.push(s);
    }
    let metadata = TrainMetadata {
        corpus_hash: corpus.content_hash(),
        seeds: seeds.to_vec(),
        hmm: cfg.hmm.clone(),
        excluded_ambiguous: excluded,
        anchors: PerAnchor(summaries.try_into().expect("five anchors")),
    };
    ModelBank::new(
        cfg.frame.clone(),
        models.try_into().expect("five anchors"),
        log_priors,
        metadata,
    )
}

fn softmax(scores: &[f64; 5]) -> [f64; 5] {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = scores.map(|s| (s - max).exp());
    let sum: f64 = e.iter().sum();
    e.map(|x| x / sum)
}

/// Posterior over the five anchors for already extracted features.
pub fn posterior_from_features(
    bank: &ModelBank,
    features: &FeatureMatrix,
    prior: PriorMode,
) -> Result<[f64; 5], RecognizerError> {
    let mut scores = [0.0; 5];
    for (k, anchor) in EmotionAnchor::ALL.iter().enumerate() {
        let ll = avg_loglik(&bank.models[k], features).map_err(|source| RecognizerError::Model { anchor: *anchor, source })?;
        scores[k] = ll + if prior == PriorMode::Empirical { bank.log_priors[k] } else { 0.0 };
    }
    if scores.iter().all(|s| *s == f64::NEG_INFINITY) {
        return Err(RecognizerError::TooShort(format!(
            "{} frames admit no state path through any model",
            features.frame_count()
        )));
    }
    Ok(softmax(&scores))
}

/// Softmax over length-normalized log-likelihoods (plus log priors in
/// empirical mode). A convenient score, not a calibrated probability.
pub fn classify_posterior(bank: &ModelBank, u: &Utterance, prior: PriorMode) -> Result<[f64; 5], RecognizerError> {
    let features = bank.extractor().extract(u.samples())?;
    posterior_from_features(bank, &features, prior)
}

pub fn recognize(bank: &ModelBank, u: &Utterance) -> Result<FuzzyEmotionState, RecognizerError> {
    recognize_with(bank, u, PriorMode::Uniform)
}

pub fn recognize_with(bank: &ModelBank, u: &Utterance, prior: PriorMode) -> Result<FuzzyEmotionState, RecognizerError> {
    let p = classify_posterior(bank, u, prior)?;
    Ok(from_posterior(&p).expect("softmax output is a distribution"))
}

/// Records whose labels agree on a single anchor.
pub fn unambiguous(records: &[UtteranceRecord]) -> impl Iterator<Item = (&UtteranceRecord, EmotionAnchor)> {
    records.iter().filter_map(|r| r.labels.unanimous_anchor().map(|a| (r, a)))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::corpus::{synth_corpus, AcousticTable, DistributionTargets, GeneratorConfig};
    use crate::hmm::GaussianState;

    pub(crate) fn flat_bank(dim: usize) -> ModelBank {
        let cfg = FrameConfig::default();
        assert_eq!(cfg.dim(), dim);
        let state = GaussianState::new(vec![0.0; dim], vec![1.0; dim]).unwrap();
        let h = Hmm::left_to_right(vec![state; 3], &[0.9, 0.9]).unwrap();
        let meta = TrainMetadata {
            corpus_hash: String::new(),
            seeds: vec![],
            hmm: HmmConfig::default(),
            excluded_ambiguous: 0,
            anchors: PerAnchor(std::array::from_fn(|_| AnchorTraining {
                records: 0,
                frames: 0,
                iterations: 0,
                loglik_history: vec![],
            })),
        };
        ModelBank::new(cfg, std::array::from_fn(|_| h.clone()), [0.2f64.ln(); 5], meta).unwrap()
    }

    /// Separation-boosted corpus with all five anchors equally likely.
    pub(crate) fn boosted_corpus(dir: &std::path::Path, n: usize, seed: u64) -> Corpus {
        let row = [0.4, 0.2, 0.4];
        let cfg = GeneratorConfig {
            targets: DistributionTargets::new(row, row, row, row).unwrap(),
            n_utterances: n,
            seed,
            p_disagree: 0.0,
            acoustics: AcousticTable::boosted(),
            ..Default::default()
        };
        synth_corpus(&cfg, dir).unwrap()
    }

    #[test]
    fn identical_models_give_uniform_posterior() {
        let bank = flat_bank(29);
        let u = crate::corpus::synthesize_vowel(|_| 250.0, 0.8);
        let p = classify_posterior(&bank, &u, PriorMode::Uniform).unwrap();
        for x in p {
            assert!((x - 0.2).abs() < 1e-12);
        }
        let f = recognize(&bank, &u).unwrap();
        assert!(f.b().abs() < 1e-12);
    }

    #[test]
    fn too_short_utterance_rejected() {
        let bank = flat_bank(29);
        let u = Utterance::new("x", vec![0.1; 100], 16000).unwrap();
        assert!(matches!(
            classify_posterior(&bank, &u, PriorMode::Uniform),
            Err(RecognizerError::Features(FeatureError::TooShort { .. }))
        ));
    }

    #[test]
    fn starving_anchor_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = boosted_corpus(dir.path(), 40, 5);
        let keep: Vec<_> = {
            let mut seen = 0;
            corpus
                .records()
                .iter()
                .filter(|r| {
                    if r.labels.unanimous_anchor() == Some(EmotionAnchor::Nervousness) {
                        seen += 1;
                        seen <= 4
                    } else {
                        true
                    }
                })
                .cloned()
                .collect()
        };
        let trimmed = corpus.with_records(keep);
        match train(&trimmed, &TrainConfig::default()) {
            Err(RecognizerError::InsufficientData { anchor, found: 4, needed: 5 }) => {
                assert_eq!(anchor, EmotionAnchor::Nervousness);
                assert!(RecognizerError::InsufficientData { anchor, found: 4, needed: 5 }
                    .to_string()
                    .contains("Nervousness"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn boosted_training_is_clean_and_monotone() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = boosted_corpus(dir.path(), 120, 11);
        let bank = train(&corpus, &TrainConfig::default()).unwrap();
        assert_eq!(bank.metadata().excluded_ambiguous, 0);
        assert_eq!(bank.metadata().corpus_hash, corpus.content_hash());
        for s in &bank.metadata().anchors.0 {
            assert!(s.loglik_history.windows(2).all(|w| w[1] >= w[0] - 1e-6 * w[0].abs()));
        }
        let total: f64 = bank.log_priors().iter().map(|l| l.exp()).sum();
        assert!((total - 1.0).abs() < 1e-9);

        let probe = corpus.load_audio(&corpus.records()[0]).unwrap();
        for mode in [PriorMode::Uniform, PriorMode::Empirical] {
            let p = classify_posterior(&bank, &probe, mode).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let f = recognize(&bank, &probe).unwrap();
        assert!(-2.0 <= f.a() && f.a() <= f.b() && f.b() <= f.c() && f.c() <= 2.0);
    }

    #[test]
    fn sequential_and_parallel_training_agree() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = boosted_corpus(dir.path(), 60, 2);
        let cfg = TrainConfig::default();
        let a = train_with(&corpus, &cfg, &[2], Exec::Sequential).unwrap();
        let b = train_with(&corpus, &cfg, &[2], Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }
}
