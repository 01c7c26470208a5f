use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError, TherapeuticStep};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitMode {
    /// Records of every speaker appear on both sides; stratified by step.
    #[serde(rename = "sd")]
    SpeakerDependent,
    /// Whole speakers are held out.
    #[serde(rename = "si")]
    SpeakerIndependent,
}

impl SplitMode {
    pub fn name(self) -> &'static str {
        match self {
            SplitMode::SpeakerDependent => "sd",
            SplitMode::SpeakerIndependent => "si",
        }
    }
}

impl std::str::FromStr for SplitMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sd" | "speaker_dependent" => Ok(SplitMode::SpeakerDependent),
            "si" | "speaker_independent" => Ok(SplitMode::SpeakerIndependent),
            _ => Err(format!("unknown split mode {s:?} (expected sd or si)")),
        }
    }
}

/// Partition `corpus` into (train, test). Both sides keep the original
/// record order.
pub fn split(corpus: &Corpus, mode: SplitMode, test_fraction: f64, seed: u64) -> Result<(Corpus, Corpus), CorpusError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(CorpusError::InvalidFraction(test_fraction));
    }
    if corpus.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = corpus.len();
    let mut in_test = vec![false; n];
    match mode {
        SplitMode::SpeakerDependent => {
            for step in TherapeuticStep::ALL {
                let mut idx: Vec<usize> = (0..n).filter(|&i| corpus.records()[i].step == step).collect();
                idx.shuffle(&mut rng);
                let k = (test_fraction * idx.len() as f64).round() as usize;
                for &i in &idx[..k] {
                    in_test[i] = true;
                }
            }
        }
        SplitMode::SpeakerIndependent => {
            let mut subjects = corpus.subjects();
            if subjects.len() < 2 {
                return Err(CorpusError::TooFewSubjects(subjects.len()));
            }
            subjects.shuffle(&mut rng);
            let k = ((test_fraction * subjects.len() as f64).round() as usize).clamp(1, subjects.len() - 1);
            let held: std::collections::HashSet<&str> = subjects[..k].iter().map(String::as_str).collect();
            for (i, r) in corpus.records().iter().enumerate() {
                in_test[i] = held.contains(r.subject_id.as_str());
            }
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (r, &t) in corpus.records().iter().zip(&in_test) {
        if t { test.push(r.clone()) } else { train.push(r.clone()) }
    }
    if train.is_empty() {
        return Err(CorpusError::EmptySplit("train"));
    }
    if test.is_empty() {
        return Err(CorpusError::EmptySplit("test"));
    }
    Ok((corpus.with_records(train), corpus.with_records(test)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::UtteranceRecord;
    use crate::fuzzy::{EmotionAnchor, LabelSet};
    use std::collections::HashSet;

    fn corpus(n: usize, subjects: usize) -> Corpus {
        let records = (0..n)
            .map(|i| UtteranceRecord {
                id: format!("r{i}"),
                subject_id: format!("s{}", i % subjects),
                subject_age: 6,
                step: TherapeuticStep::ALL[(i / 7) % 3],
                audio_path: format!("r{i}.wav"),
                duration_s: 1.0,
                labels: LabelSet::single(EmotionAnchor::ALL[i % 5].point()),
            })
            .collect();
        Corpus::new(".", records)
    }

    fn ids(c: &Corpus) -> HashSet<String> {
        c.records().iter().map(|r| r.id.clone()).collect()
    }

    #[test]
    fn si_holds_out_two_of_ten() {
        let c = corpus(200, 10);
        let (train, test) = split(&c, SplitMode::SpeakerIndependent, 0.2, 1).unwrap();
        let a: HashSet<_> = train.subjects().into_iter().collect();
        let b: HashSet<_> = test.subjects().into_iter().collect();
        assert_eq!(b.len(), 2);
        assert!(a.is_disjoint(&b));
        assert_eq!(train.len() + test.len(), 200);
    }

    #[test]
    fn sd_partitions_and_stratifies() {
        let c = corpus(300, 4);
        let (train, test) = split(&c, SplitMode::SpeakerDependent, 0.2, 3).unwrap();
        let (a, b) = (ids(&train), ids(&test));
        assert!(a.is_disjoint(&b));
        assert_eq!(a.union(&b).count(), 300);
        for step in TherapeuticStep::ALL {
            let total = c.records().iter().filter(|r| r.step == step).count();
            let held = test.records().iter().filter(|r| r.step == step).count();
            assert_eq!(held, (0.2 * total as f64).round() as usize);
        }
    }

    #[test]
    fn fraction_must_be_open_interval() {
        let c = corpus(10, 2);
        for f in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(matches!(
                split(&c, SplitMode::SpeakerDependent, f, 0),
                Err(CorpusError::InvalidFraction(_))
            ));
        }
    }

    #[test]
    fn si_needs_two_subjects() {
        let c = corpus(10, 1);
        assert!(matches!(
            split(&c, SplitMode::SpeakerIndependent, 0.5, 0),
            Err(CorpusError::TooFewSubjects(1))
        ));
    }

    #[test]
    fn seeded_determinism() {
        let c = corpus(150, 10);
        for mode in [SplitMode::SpeakerDependent, SplitMode::SpeakerIndependent] {
            let first = split(&c, mode, 0.2, 42).unwrap();
            assert_eq!(first, split(&c, mode, 0.2, 42).unwrap());
            let distinct: HashSet<Vec<String>> = (0..20)
                .map(|s| split(&c, mode, 0.2, s).unwrap().1.records().iter().map(|r| r.id.clone()).collect())
                .collect();
            assert!(distinct.len() > 1, "{mode:?}");
        }
    }
}
