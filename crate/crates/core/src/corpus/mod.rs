//! Corpus schema, JSONL manifest persistence, distribution statistics,
//! train/test splits and the synthetic corpus generator.

mod split;
mod stats;
mod synth;

pub use split::{split, SplitMode};
pub use stats::{stats, CorpusStats, GroupProportions};
pub use synth::{
    render_utterance, simulate_annotators, synth_corpus, synth_corpus_with, synthesize_vowel, AcousticTable,
    DistributionTargets, GeneratorConfig, SamplingScheme, SpeakerVariation, SubjectProfile,
};

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::audio_io::{read_wav, AudioError, Utterance};
use crate::fuzzy::LabelSet;

pub const MIN_AGE: u8 = 5;
pub const MAX_AGE: u8 = 9;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed manifest at line {line}: {reason}")]
    MalformedManifest { line: usize, reason: String },
    #[error("manifest line {line}: audio file {path} not found")]
    MissingAudio { line: usize, path: PathBuf },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("speaker-independent split needs at least 2 subjects, found {0}")]
    TooFewSubjects(usize),
    #[error("test fraction {0} must lie strictly between 0 and 1")]
    InvalidFraction(f64),
    #[error("split leaves an empty {0} set")]
    EmptySplit(&'static str),
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("I/O failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Audio(#[from] AudioError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::IoFailure {
        path: path.to_path_buf(),
        source,
    }
}

/// Therapy stage an utterance was recorded in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TherapeuticStep {
    #[serde(rename = "evaluation_exercises")]
    EvaluationExercises,
    #[serde(rename = "phonematic_hearing")]
    PhonematicHearing,
    #[serde(rename = "pronunciation_3d")]
    Pronunciation3d,
}

impl TherapeuticStep {
    pub const ALL: [TherapeuticStep; 3] = [
        TherapeuticStep::EvaluationExercises,
        TherapeuticStep::PhonematicHearing,
        TherapeuticStep::Pronunciation3d,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            TherapeuticStep::EvaluationExercises => "evaluation_exercises",
            TherapeuticStep::PhonematicHearing => "phonematic_hearing",
            TherapeuticStep::Pronunciation3d => "pronunciation_3d",
        }
    }

    /// Therapy-system module that produces utterances for this step.
    pub fn source(self) -> SourceModule {
        SOURCE_TABLE
            .iter()
            .find(|(_, step)| *step == self)
            .map(|(src, _)| *src)
            .unwrap()
    }
}

impl fmt::Display for TherapeuticStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Module of the therapy system an utterance was captured by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceModule {
    /// Speech assessment in the monitor program.
    MonitorProgram,
    /// Exercises played on the portable device.
    PortableDevice,
    /// Sessions with the 3D articulator model.
    ArticulatorModel,
}

/// The single place where source modules are joined to therapy steps.
pub const SOURCE_TABLE: [(SourceModule, TherapeuticStep); 3] = [
    (SourceModule::MonitorProgram, TherapeuticStep::EvaluationExercises),
    (SourceModule::PortableDevice, TherapeuticStep::PhonematicHearing),
    (SourceModule::ArticulatorModel, TherapeuticStep::Pronunciation3d),
];

impl SourceModule {
    pub fn step(self) -> TherapeuticStep {
        SOURCE_TABLE.iter().find(|(src, _)| *src == self).map(|(_, s)| *s).unwrap()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtteranceRecord {
    pub id: String,
    pub subject_id: String,
    pub subject_age: u8,
    pub step: TherapeuticStep,
    /// Relative to the manifest directory, `/`-separated.
    pub audio_path: String,
    pub duration_s: f64,
    pub labels: LabelSet,
}

impl UtteranceRecord {
    fn check(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if self.subject_id.is_empty() {
            return Err("empty subject_id".into());
        }
        if !(MIN_AGE..=MAX_AGE).contains(&self.subject_age) {
            return Err(format!("subject_age {} outside {MIN_AGE}..={MAX_AGE}", self.subject_age));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(format!("duration_s {} must be positive", self.duration_s));
        }
        if self.audio_path.is_empty() || Path::new(&self.audio_path).is_absolute() {
            return Err("audio_path must be a non-empty relative path".into());
        }
        Ok(())
    }
}

/// Records plus the directory their audio paths are relative to.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    root: PathBuf,
    records: Vec<UtteranceRecord>,
}

impl Corpus {
    pub fn new(root: impl Into<PathBuf>, records: Vec<UtteranceRecord>) -> Self {
        Self {
            root: root.into(),
            records,
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn records(&self) -> &[UtteranceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Same root, different records.
    pub fn with_records(&self, records: Vec<UtteranceRecord>) -> Self {
        Self {
            root: self.root.clone(),
            records,
        }
    }

    pub fn audio_path(&self, record: &UtteranceRecord) -> PathBuf {
        self.root.join(&record.audio_path)
    }

    pub fn load_audio(&self, record: &UtteranceRecord) -> Result<Utterance, AudioError> {
        read_wav(self.audio_path(record))
    }

    /// Sorted distinct subject ids.
    pub fn subjects(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.records.iter().map(|r| r.subject_id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    /// JSONL body exactly as [`save_manifest`] writes it.
    pub fn manifest_text(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records always serialize"));
            out.push('\n');
        }
        out
    }

    /// SHA-256 of the manifest body, hex encoded.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.manifest_text().as_bytes()))
    }
}

pub fn save_manifest(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    w.write_all(corpus.manifest_text().as_bytes()).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

/// Parse a manifest without touching the audio files.
pub fn parse_manifest(text: &str, root: impl Into<PathBuf>) -> Result<Corpus, CorpusError> {
    let mut records = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| CorpusError::MalformedManifest { line: line_no, reason };
        let rec: UtteranceRecord = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        rec.check().map_err(malformed)?;
        if !seen.insert(rec.id.clone()) {
            return Err(malformed(format!("duplicate id {:?}", rec.id)));
        }
        records.push(rec);
    }
    Ok(Corpus::new(root, records))
}

/// Load a manifest; audio paths resolve against the manifest's directory
/// and must exist.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut text = String::new();
    for line in BufReader::new(file).lines() {
        text.push_str(&line.map_err(io_err(path))?);
        text.push('\n');
    }
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let corpus = parse_manifest(&text, root)?;
    // line numbers skip blank lines the same way parse_manifest does
    let line_numbers = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, _)| i + 1);
    for (rec, line) in corpus.records.iter().zip(line_numbers) {
        let audio = corpus.audio_path(rec);
        if !audio.is_file() {
            return Err(CorpusError::MissingAudio { line, path: audio });
        }
    }
    Ok(corpus)
}
