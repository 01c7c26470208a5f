use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError, TherapeuticStep};
use crate::fuzzy::ValenceGroup;

/// (negative, neutral, positive) proportions with the count behind them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupProportions {
    pub negative: f64,
    pub neutral: f64,
    pub positive: f64,
    pub count: usize,
}

impl GroupProportions {
    fn from_counts(c: [usize; 3]) -> Self {
        let n: usize = c.iter().sum();
        let p = |k: usize| if n == 0 { 0.0 } else { c[k] as f64 / n as f64 };
        Self {
            negative: p(0),
            neutral: p(1),
            positive: p(2),
            count: n,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.negative, self.neutral, self.positive]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub overall: GroupProportions,
    pub evaluation_exercises: GroupProportions,
    pub phonematic_hearing: GroupProportions,
    pub pronunciation_3d: GroupProportions,
}

impl CorpusStats {
    pub fn step(&self, step: TherapeuticStep) -> &GroupProportions {
        match step {
            TherapeuticStep::EvaluationExercises => &self.evaluation_exercises,
            TherapeuticStep::PhonematicHearing => &self.phonematic_hearing,
            TherapeuticStep::Pronunciation3d => &self.pronunciation_3d,
        }
    }
}

/// Valence proportions per step and overall, counting each record once by
/// its first stored label.
pub fn stats(corpus: &Corpus) -> Result<CorpusStats, CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut per_step = [[0usize; 3]; 3];
    for r in corpus.records() {
        per_step[r.step.index()][r.labels.first().valence_group().index()] += 1;
    }
    let mut overall = [0usize; 3];
    for row in &per_step {
        for g in 0..3 {
            overall[g] += row[g];
        }
    }
    debug_assert_eq!(ValenceGroup::ALL.len(), 3);
    Ok(CorpusStats {
        overall: GroupProportions::from_counts(overall),
        evaluation_exercises: GroupProportions::from_counts(per_step[0]),
        phonematic_hearing: GroupProportions::from_counts(per_step[1]),
        pronunciation_3d: GroupProportions::from_counts(per_step[2]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::UtteranceRecord;
    use crate::fuzzy::{EmotionAnchor, LabelSet};

    fn rec(i: usize, step: TherapeuticStep, anchor: EmotionAnchor) -> UtteranceRecord {
        UtteranceRecord {
            id: format!("r{i}"),
            subject_id: "s".into(),
            subject_age: 7,
            step,
            audio_path: format!("r{i}.wav"),
            duration_s: 1.0,
            labels: LabelSet::single(anchor.point()),
        }
    }

    #[test]
    fn evaluation_row_reproduced() {
        let mut records = Vec::new();
        let plan = [(EmotionAnchor::Tenseness, 11), (EmotionAnchor::Neutral, 26), (EmotionAnchor::Happiness, 63)];
        for (anchor, n) in plan {
            for _ in 0..n {
                records.push(rec(records.len(), TherapeuticStep::EvaluationExercises, anchor));
            }
        }
        let s = stats(&Corpus::new(".", records)).unwrap();
        let row = s.evaluation_exercises.as_array();
        for (got, want) in row.iter().zip([0.11, 0.26, 0.63]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert_eq!(s.evaluation_exercises.count, 100);
        assert_eq!(s.phonematic_hearing.count, 0);
        assert_eq!(s.overall.as_array(), row);
    }

    #[test]
    fn all_neutral() {
        let records = (0..100)
            .map(|i| rec(i, TherapeuticStep::ALL[i % 3], EmotionAnchor::Neutral))
            .collect();
        let s = stats(&Corpus::new(".", records)).unwrap();
        assert_eq!(s.overall.as_array(), [0.0, 1.0, 0.0]);
    }

    #[test]
    fn first_label_decides() {
        let mut r = rec(0, TherapeuticStep::PhonematicHearing, EmotionAnchor::Neutral);
        r.labels = LabelSet::new(vec![EmotionAnchor::Nervousness.point(), EmotionAnchor::Happiness.point()]).unwrap();
        let s = stats(&Corpus::new(".", vec![r])).unwrap();
        assert_eq!(s.phonematic_hearing.as_array(), [1.0, 0.0, 0.0]);
    }

    #[test]
    fn empty_rejected() {
        assert!(matches!(stats(&Corpus::new(".", vec![])), Err(CorpusError::EmptyCorpus)));
    }
}
