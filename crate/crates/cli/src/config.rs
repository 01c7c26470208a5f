use std::fs;
use std::path::{Path, PathBuf};

use phonem::corpus::{GeneratorConfig, SplitMode};
use phonem::features::FrameConfig;
use phonem::hmm::HmmConfig;
use phonem::recognizer::{PriorMode, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Everything a subcommand may need, read from `--config` and then
/// overridden by flags.
///
/// The top-level `seed` drives generation, splitting and training metadata;
/// it overwrites `generator.seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub seed: u64,
    pub generator: GeneratorConfig,
    pub frame: FrameConfig,
    pub hmm: HmmConfig,
    pub recognizer: RecognizerSettings,
    pub paths: Paths,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecognizerSettings {
    pub min_per_class: usize,
    pub prior: PriorMode,
    pub theta: f64,
    pub split: SplitMode,
    pub test_fraction: f64,
    /// Number of consecutive split seeds used by `compare`.
    pub compare_seeds: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub out: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub bank: Option<PathBuf>,
    pub wav: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            generator: GeneratorConfig::default(),
            frame: FrameConfig::default(),
            hmm: HmmConfig::default(),
            recognizer: RecognizerSettings::default(),
            paths: Paths::default(),
        }
    }
}

impl Default for RecognizerSettings {
    fn default() -> Self {
        Self {
            min_per_class: TrainConfig::default().min_per_class,
            prior: PriorMode::Uniform,
            theta: 0.4,
            split: SplitMode::SpeakerDependent,
            test_fraction: 0.2,
            compare_seeds: 5,
        }
    }
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("--config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("--config {}: {e}", path.display())))
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            frame: self.frame.clone(),
            hmm: self.hmm.clone(),
            min_per_class: self.recognizer.min_per_class,
        }
    }

    /// Reject inconsistent settings before any work starts.
    pub fn validate(&mut self) -> Result<(), CliError> {
        self.generator.seed = self.seed;
        self.generator.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        self.train_config().validate().map_err(|e| CliError::Usage(e.to_string()))?;
        let r = &self.recognizer;
        if !(r.theta > 0.0 && r.theta <= 1.0) {
            return Err(CliError::Usage(format!("--theta {} must be in (0, 1]", r.theta)));
        }
        if !(r.test_fraction > 0.0 && r.test_fraction < 1.0) {
            return Err(CliError::Usage(format!("--test-fraction {} must be in (0, 1)", r.test_fraction)));
        }
        if r.compare_seeds == 0 {
            return Err(CliError::Usage("compare_seeds must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = CliConfig::default();
        let back: CliConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<CliConfig>(r#"{"sed": 1}"#).is_err());
        assert!(serde_json::from_str::<CliConfig>(r#"{"recognizer": {"thetta": 0.3}}"#).is_err());
        assert!(serde_json::from_str::<CliConfig>(r#"{"hmm": {"states": 3}}"#).is_err());
    }

    #[test]
    fn partial_sections_fill_defaults() {
        let c: CliConfig = serde_json::from_str(r#"{"hmm": {"n_states": 5}, "recognizer": {"split": "si"}}"#).unwrap();
        assert_eq!(c.hmm.n_states, 5);
        assert_eq!(c.hmm.max_iters, HmmConfig::default().max_iters);
        assert_eq!(c.recognizer.split, SplitMode::SpeakerIndependent);
    }

    #[test]
    fn validation_catches_bad_theta() {
        let mut c = CliConfig::default();
        c.recognizer.theta = 0.0;
        assert!(matches!(c.validate(), Err(CliError::Usage(_))));
    }
}
