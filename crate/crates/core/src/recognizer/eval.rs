use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::de::Error as _;
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{extract_corpus, posterior_from_features, train_from_features, ModelBank, PriorMode, RecognizerError, TrainConfig};
use crate::corpus::{split, Corpus, SplitMode};
use crate::exec::Exec;
use crate::features::FeatureMatrix;
use crate::fuzzy::{from_posterior, label_match, EmotionAnchor};

/// One value per emotion anchor, serialized as an object keyed by anchor
/// name in valence order.
#[derive(Debug, Clone, PartialEq)]
pub struct PerAnchor<T>(pub [T; 5]);

impl<T> PerAnchor<T> {
    pub fn get(&self, anchor: EmotionAnchor) -> &T {
        &self.0[anchor.index()]
    }
}

impl<T: Serialize> Serialize for PerAnchor<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(5))?;
        for (a, v) in EmotionAnchor::ALL.iter().zip(&self.0) {
            map.serialize_entry(a.name(), v)?;
        }
        map.end()
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for PerAnchor<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let mut map = BTreeMap::<String, T>::deserialize(d)?;
        let mut out = Vec::with_capacity(5);
        for a in EmotionAnchor::ALL {
            out.push(map.remove(a.name()).ok_or_else(|| D::Error::custom(format!("missing anchor {}", a.name())))?);
        }
        if let Some(k) = map.keys().next() {
            return Err(D::Error::custom(format!("unknown anchor {k:?}")));
        }
        Ok(PerAnchor(out.try_into().ok().expect("five entries")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitDescriptor {
    pub mode: SplitMode,
    pub test_fraction: f64,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    /// Rows: true anchor of the first label; columns: predicted anchor.
    pub confusion: [[usize; 5]; 5],
    /// Crisp label of the recognized fuzzy state against the first label.
    pub accuracy_5: f64,
    pub accuracy_valence: f64,
    pub accuracy_within_one: f64,
    /// Share of records whose prediction matches any stored label.
    pub fuzzy_match_rate: f64,
    /// Posterior argmax against the first label.
    pub accuracy_argmax: f64,
    pub per_class_counts: PerAnchor<usize>,
    pub split: Option<SplitDescriptor>,
    pub theta: f64,
    pub prior: PriorMode,
    pub seeds: Vec<u64>,
}

pub fn evaluate(bank: &ModelBank, test: &Corpus, theta: f64) -> Result<EvalReport, RecognizerError> {
    evaluate_with(bank, test, theta, PriorMode::Uniform, Exec::default())
}

pub fn evaluate_with(
    bank: &ModelBank,
    test: &Corpus,
    theta: f64,
    prior: PriorMode,
    exec: Exec,
) -> Result<EvalReport, RecognizerError> {
    if test.is_empty() {
        return Err(crate::corpus::CorpusError::EmptyCorpus.into());
    }
    let features = extract_corpus(test, bank.frame_config(), exec)?;
    evaluate_features(bank, test, &features, theta, prior, exec)
}

/// Evaluate on pre-extracted features; `features[i]` belongs to record `i`.
pub fn evaluate_features(
    bank: &ModelBank,
    test: &Corpus,
    features: &[FeatureMatrix],
    theta: f64,
    prior: PriorMode,
    exec: Exec,
) -> Result<EvalReport, RecognizerError> {
    if test.is_empty() {
        return Err(crate::corpus::CorpusError::EmptyCorpus.into());
    }
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(RecognizerError::InvalidConfig(format!("theta {theta} must be in (0, 1]")));
    }
    assert_eq!(test.len(), features.len(), "one feature matrix per record");
    let idx: Vec<usize> = (0..test.len()).collect();
    let outcomes = exec.try_map(&idx, |&i| {
        let r = &test.records()[i];
        let p = posterior_from_features(bank, &features[i], prior).map_err(|e| RecognizerError::for_record(&r.id, e))?;
        let fuzzy = from_posterior(&p).expect("softmax output is a distribution");
        let argmax = (0..5).fold(0, |best, k| if p[k] > p[best] { k } else { best });
        let matched = label_match(&fuzzy, r.labels.labels(), theta).expect("theta and labels validated");
        Ok::<_, RecognizerError>((fuzzy.crisp_label(), EmotionAnchor::ALL[argmax], matched))
    })?;

    let mut confusion = [[0usize; 5]; 5];
    let (mut valence, mut within, mut fuzzy, mut argmax_hits) = (0usize, 0usize, 0usize, 0usize);
    for (r, (pred, argmax, matched)) in test.records().iter().zip(&outcomes) {
        let truth = r.labels.first().crisp_label();
        confusion[truth.index()][pred.index()] += 1;
        valence += usize::from(truth.group() == pred.group());
        within += usize::from((truth.coordinate() - pred.coordinate()).abs() <= 1.0);
        fuzzy += usize::from(*matched);
        argmax_hits += usize::from(truth == *argmax);
    }
    let n = test.len() as f64;
    let correct: usize = (0..5).map(|k| confusion[k][k]).sum();
    Ok(EvalReport {
        per_class_counts: PerAnchor(confusion.map(|row| row.iter().sum())),
        confusion,
        accuracy_5: correct as f64 / n,
        accuracy_valence: valence as f64 / n,
        accuracy_within_one: within as f64 / n,
        fuzzy_match_rate: fuzzy as f64 / n,
        accuracy_argmax: argmax_hits as f64 / n,
        split: None,
        theta,
        prior,
        seeds: Vec::new(),
    })
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize") + "\n"
    }

    /// Confusion matrix as CSV with a header row of predicted anchors.
    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for a in EmotionAnchor::ALL {
            let _ = write!(out, ",{}", a.name());
        }
        out.push('\n');
        for (a, row) in EmotionAnchor::ALL.iter().zip(&self.confusion) {
            out.push_str(a.name());
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    /// Row-normalized confusion in gnuplot's `x y z` grid layout, one block
    /// per true class, suitable for `plot ... with image`.
    pub fn gnuplot_dat(&self) -> String {
        let mut out = String::from("# true_coord predicted_coord share count\n");
        for (i, row) in self.confusion.iter().enumerate() {
            let total: usize = row.iter().sum();
            for (j, &v) in row.iter().enumerate() {
                let share = if total == 0 { 0.0 } else { v as f64 / total as f64 };
                let _ = writeln!(out, "{} {} {share:.6} {v}", i as i32 - 2, j as i32 - 2);
            }
            out.push('\n');
        }
        out
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let w = EmotionAnchor::ALL.iter().map(|a| a.name().len()).max().unwrap_or(0);
        let _ = write!(out, "{:>w$} |", "true \\ pred");
        let w = w.max("true \\ pred".len());
        out.clear();
        let _ = write!(out, "{:<w$} |", "true \\ pred");
        for a in EmotionAnchor::ALL {
            let _ = write!(out, " {:>11}", a.name());
        }
        let _ = writeln!(out, " | {:>5}", "n");
        let _ = writeln!(out, "{}", "-".repeat(w + 2 + 12 * 5 + 8));
        for (a, row) in EmotionAnchor::ALL.iter().zip(&self.confusion) {
            let _ = write!(out, "{:<w$} |", a.name());
            for v in row {
                let _ = write!(out, " {v:>11}");
            }
            let _ = writeln!(out, " | {:>5}", row.iter().sum::<usize>());
        }
        out.push('\n');
        let lines = [
            ("accuracy (5 classes)", self.accuracy_5),
            ("accuracy (valence)", self.accuracy_valence),
            ("accuracy (within one)", self.accuracy_within_one),
            ("accuracy (argmax)", self.accuracy_argmax),
            ("fuzzy match rate", self.fuzzy_match_rate),
        ];
        for (name, v) in lines {
            let _ = writeln!(out, "{name:<22} {v:.4}");
        }
        let _ = writeln!(out, "{:<22} {}", "theta", self.theta);
        let _ = writeln!(out, "{:<22} {}", "prior", self.prior.name());
        if let Some(s) = &self.split {
            let _ = writeln!(
                out,
                "{:<22} {} fraction {} seed {} ({} train / {} test)",
                "split",
                s.mode.name(),
                s.test_fraction,
                s.seed,
                s.n_train,
                s.n_test
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: SplitMode,
    pub reports: Vec<EvalReport>,
    pub mean_accuracy_5: f64,
    pub mean_accuracy_valence: f64,
    pub mean_accuracy_within_one: f64,
    pub mean_fuzzy_match_rate: f64,
}

/// Speaker-dependent against speaker-independent evaluation of one corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitComparison {
    pub test_fraction: f64,
    pub seeds: Vec<u64>,
    pub speaker_dependent: ModeSummary,
    pub speaker_independent: ModeSummary,
}

impl SplitComparison {
    /// Whether SD scored at least as well as SI on mean 5-class accuracy.
    pub fn sd_at_least_si(&self) -> bool {
        self.speaker_dependent.mean_accuracy_5 >= self.speaker_independent.mean_accuracy_5
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<6} {:>6} {:>10} {:>10} {:>10} {:>10}",
            "split", "runs", "acc5", "valence", "within1", "fuzzy"
        );
        for m in [&self.speaker_dependent, &self.speaker_independent] {
            let _ = writeln!(
                out,
                "{:<6} {:>6} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
                m.mode.name(),
                m.reports.len(),
                m.mean_accuracy_5,
                m.mean_accuracy_valence,
                m.mean_accuracy_within_one,
                m.mean_fuzzy_match_rate
            );
        }
        let _ = writeln!(
            out,
            "sd >= si on mean 5-class accuracy: {}",
            if self.sd_at_least_si() { "yes" } else { "no" }
        );
        out
    }
}

/// Train and evaluate once per (mode, seed). Features are extracted once.
#[allow(clippy::too_many_arguments)]
pub fn compare_splits(
    corpus: &Corpus,
    cfg: &TrainConfig,
    test_fraction: f64,
    seeds: &[u64],
    theta: f64,
    prior: PriorMode,
    exec: Exec,
) -> Result<SplitComparison, RecognizerError> {
    let features = extract_corpus(corpus, &cfg.frame, exec)?;
    let summary = |mode| -> Result<ModeSummary, RecognizerError> {
        let reports = seeds
            .iter()
            .map(|&seed| run_split(corpus, &features, cfg, mode, test_fraction, seed, theta, prior, exec))
            .collect::<Result<Vec<_>, _>>()?;
        let mean = |f: fn(&EvalReport) -> f64| reports.iter().map(f).sum::<f64>() / reports.len().max(1) as f64;
        Ok(ModeSummary {
            mode,
            mean_accuracy_5: mean(|r| r.accuracy_5),
            mean_accuracy_valence: mean(|r| r.accuracy_valence),
            mean_accuracy_within_one: mean(|r| r.accuracy_within_one),
            mean_fuzzy_match_rate: mean(|r| r.fuzzy_match_rate),
            reports,
        })
    };
    Ok(SplitComparison {
        test_fraction,
        seeds: seeds.to_vec(),
        speaker_dependent: summary(SplitMode::SpeakerDependent)?,
        speaker_independent: summary(SplitMode::SpeakerIndependent)?,
    })
}

/// Split, train on the train side and evaluate on the test side, reusing
/// features computed for the whole corpus.
#[allow(clippy::too_many_arguments)]
pub fn run_split(
    corpus: &Corpus,
    features: &[FeatureMatrix],
    cfg: &TrainConfig,
    mode: SplitMode,
    test_fraction: f64,
    seed: u64,
    theta: f64,
    prior: PriorMode,
    exec: Exec,
) -> Result<EvalReport, RecognizerError> {
    let (train, test) = split(corpus, mode, test_fraction, seed)?;
    let by_id: HashMap<&str, usize> = corpus.records().iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();
    let pick = |c: &Corpus| -> Vec<FeatureMatrix> {
        c.records().iter().map(|r| features[by_id[r.id.as_str()]].clone()).collect()
    };
    let bank = train_from_features(&train, &pick(&train), cfg, &[seed], exec)?;
    let mut report = evaluate_features(&bank, &test, &pick(&test), theta, prior, exec)?;
    report.split = Some(SplitDescriptor {
        mode,
        test_fraction,
        seed,
        n_train: train.len(),
        n_test: test.len(),
    });
    report.seeds = vec![seed];
    Ok(report)
}
