use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelBank, PerAnchor, RecognizerError, TrainMetadata};
use crate::features::FrameConfig;
use crate::fuzzy::EmotionAnchor;
use crate::hmm::{GaussianState, Hmm};

pub const BANK_FORMAT_VERSION: u64 = 1;

/// Log-probabilities with `null` standing for minus infinity.
type LogProb = Option<f64>;

fn to_json_lp(x: f64) -> LogProb {
    (x != f64::NEG_INFINITY).then_some(x)
}

fn from_json_lp(x: LogProb) -> f64 {
    x.unwrap_or(f64::NEG_INFINITY)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HmmDoc {
    left_to_right: bool,
    log_init: Vec<LogProb>,
    log_trans: Vec<Vec<LogProb>>,
    states: Vec<StateDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateDoc {
    mean: Vec<f64>,
    var: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BankDoc {
    format_version: u64,
    frame_config: FrameConfig,
    log_priors: PerAnchor<f64>,
    models: PerAnchor<HmmDoc>,
    metadata: TrainMetadata,
}

impl HmmDoc {
    fn from_hmm(h: &Hmm) -> Self {
        Self {
            left_to_right: h.is_left_to_right(),
            log_init: h.log_init().iter().map(|x| to_json_lp(*x)).collect(),
            log_trans: h.log_trans().iter().map(|r| r.iter().map(|x| to_json_lp(*x)).collect()).collect(),
            states: h
                .states()
                .iter()
                .map(|s| StateDoc {
                    mean: s.mean.clone(),
                    var: s.var.clone(),
                })
                .collect(),
        }
    }

    fn into_hmm(self, anchor: EmotionAnchor) -> Result<Hmm, RecognizerError> {
        let bad = |e: crate::hmm::HmmError| RecognizerError::MalformedModel(format!("{anchor}: {e}"));
        let states = self
            .states
            .into_iter()
            .map(|s| GaussianState::new(s.mean, s.var))
            .collect::<Result<Vec<_>, _>>()
            .map_err(bad)?;
        Hmm::new(
            self.log_init.into_iter().map(from_json_lp).collect(),
            self.log_trans.into_iter().map(|r| r.into_iter().map(from_json_lp).collect()).collect(),
            states,
            self.left_to_right,
        )
        .map_err(bad)
    }
}

pub fn bank_to_json(bank: &ModelBank) -> String {
    let doc = BankDoc {
        format_version: BANK_FORMAT_VERSION,
        frame_config: bank.frame_config().clone(),
        log_priors: PerAnchor(*bank.log_priors()),
        models: PerAnchor(bank.models().each_ref().map(HmmDoc::from_hmm)),
        metadata: bank.metadata().clone(),
    };
    serde_json::to_string_pretty(&doc).expect("banks serialize") + "\n"
}

pub fn bank_from_json(text: &str) -> Result<ModelBank, RecognizerError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| RecognizerError::MalformedModel(e.to_string()))?;
    match value.get("format_version").and_then(serde_json::Value::as_u64) {
        Some(BANK_FORMAT_VERSION) => {}
        Some(found) => {
            return Err(RecognizerError::VersionMismatch {
                found,
                supported: BANK_FORMAT_VERSION,
            })
        }
        None => return Err(RecognizerError::MalformedModel("missing format_version".into())),
    }
    let doc: BankDoc = serde_json::from_value(value).map_err(|e| RecognizerError::MalformedModel(e.to_string()))?;
    let mut models = Vec::with_capacity(5);
    for (anchor, m) in EmotionAnchor::ALL.into_iter().zip(doc.models.0) {
        models.push(m.into_hmm(anchor)?);
    }
    ModelBank::new(
        doc.frame_config,
        models.try_into().unwrap_or_else(|_| unreachable!("five anchors")),
        doc.log_priors.0,
        doc.metadata,
    )
    .map_err(|e| match e {
        RecognizerError::MalformedModel(_) => e,
        other => RecognizerError::MalformedModel(other.to_string()),
    })
}

pub fn save_bank(bank: &ModelBank, path: impl AsRef<Path>) -> Result<(), RecognizerError> {
    let path = path.as_ref();
    fs::write(path, bank_to_json(bank)).map_err(|source| RecognizerError::IoFailure {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_bank(path: impl AsRef<Path>) -> Result<ModelBank, RecognizerError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| RecognizerError::IoFailure {
        path: path.to_path_buf(),
        source,
    })?;
    bank_from_json(&text)
}
