//! Fuzzy model of emotional state on a single ordered valence axis.
//!
//! Five anchors sit at integer coordinates -2..=2. A state is a triangular
//! fuzzy number `(a, b, c)` with feet `a`, `c` and peak `b`, all inside
//! `[-2, 2]`. An utterance may carry several such numbers ([`LabelSet`]);
//! they are never merged.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub const VALENCE_MIN: f64 = -2.0;
pub const VALENCE_MAX: f64 = 2.0;

/// Smallest half-width produced by [`from_posterior`].
pub const MIN_SPREAD: f64 = 0.25;

/// Default similarity threshold for [`label_match`].
pub const DEFAULT_THETA: f64 = 0.4;

/// Trapezoidal step used by [`similarity`].
pub const SIMILARITY_STEP: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FuzzyError {
    #[error("invalid fuzzy number ({0}, {1}, {2}): need -2 <= a <= b <= c <= 2")]
    InvalidTriangle(f64, f64, f64),
    #[error("posterior is not a probability vector (sum {0})")]
    NotNormalized(f64),
    #[error("label set is empty")]
    EmptyLabelSet,
    #[error("unknown emotion anchor {0:?}")]
    UnknownAnchor(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EmotionAnchor {
    Nervousness,
    Tenseness,
    Neutral,
    Contentment,
    Happiness,
}

impl EmotionAnchor {
    /// All anchors in increasing valence order.
    pub const ALL: [EmotionAnchor; 5] = [
        EmotionAnchor::Nervousness,
        EmotionAnchor::Tenseness,
        EmotionAnchor::Neutral,
        EmotionAnchor::Contentment,
        EmotionAnchor::Happiness,
    ];

    pub fn coordinate(self) -> f64 {
        self.index() as f64 - 2.0
    }

    /// Position in [`EmotionAnchor::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            EmotionAnchor::Nervousness => "Nervousness",
            EmotionAnchor::Tenseness => "Tenseness",
            EmotionAnchor::Neutral => "Neutral",
            EmotionAnchor::Contentment => "Contentment",
            EmotionAnchor::Happiness => "Happiness",
        }
    }

    pub fn group(self) -> ValenceGroup {
        match self {
            EmotionAnchor::Nervousness | EmotionAnchor::Tenseness => ValenceGroup::Negative,
            EmotionAnchor::Neutral => ValenceGroup::Neutral,
            EmotionAnchor::Contentment | EmotionAnchor::Happiness => ValenceGroup::Positive,
        }
    }

    /// Anchors one step away on the valence axis.
    pub fn neighbours(self) -> Vec<EmotionAnchor> {
        let i = self.index();
        [i.checked_sub(1), Some(i + 1)]
            .into_iter()
            .flatten()
            .filter_map(Self::from_index)
            .collect()
    }

    /// Fuzzy number of the anchor as a point.
    pub fn point(self) -> FuzzyEmotionState {
        let x = self.coordinate();
        FuzzyEmotionState { a: x, b: x, c: x }
    }
}

impl fmt::Display for EmotionAnchor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EmotionAnchor {
    type Err = FuzzyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| FuzzyError::UnknownAnchor(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValenceGroup {
    Negative,
    Neutral,
    Positive,
}

impl ValenceGroup {
    pub const ALL: [ValenceGroup; 3] = [ValenceGroup::Negative, ValenceGroup::Neutral, ValenceGroup::Positive];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn anchors(self) -> &'static [EmotionAnchor] {
        match self {
            ValenceGroup::Negative => &[EmotionAnchor::Nervousness, EmotionAnchor::Tenseness],
            ValenceGroup::Neutral => &[EmotionAnchor::Neutral],
            ValenceGroup::Positive => &[EmotionAnchor::Contentment, EmotionAnchor::Happiness],
        }
    }
}

/// Triangular fuzzy number on the valence axis. Serializes as `[a, b, c]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FuzzyEmotionState {
    a: f64,
    b: f64,
    c: f64,
}

impl FuzzyEmotionState {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self, FuzzyError> {
        let ok = [a, b, c].iter().all(|v| v.is_finite())
            && VALENCE_MIN <= a
            && a <= b
            && b <= c
            && c <= VALENCE_MAX;
        if ok {
            Ok(Self { a, b, c })
        } else {
            Err(FuzzyError::InvalidTriangle(a, b, c))
        }
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn triple(&self) -> [f64; 3] {
        [self.a, self.b, self.c]
    }

    pub fn is_point(&self) -> bool {
        self.a == self.c
    }

    pub fn membership(&self, x: f64) -> f64 {
        membership(self, x)
    }

    pub fn centroid(&self) -> f64 {
        centroid(self)
    }

    pub fn crisp_label(&self) -> EmotionAnchor {
        crisp_label(self)
    }

    pub fn valence_group(&self) -> ValenceGroup {
        valence_group_of(self)
    }
}

impl Serialize for FuzzyEmotionState {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.triple().serialize(s)
    }
}

impl<'de> Deserialize<'de> for FuzzyEmotionState {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [a, b, c] = <[f64; 3]>::deserialize(d)?;
        FuzzyEmotionState::new(a, b, c).map_err(serde::de::Error::custom)
    }
}

/// Degree of membership of `x`. Degenerate spreads act as vertical edges.
pub fn membership(s: &FuzzyEmotionState, x: f64) -> f64 {
    let FuzzyEmotionState { a, b, c } = *s;
    if x == b {
        1.0
    } else if x < a || x > c {
        0.0
    } else if x < b {
        (x - a) / (b - a)
    } else {
        (c - x) / (c - b)
    }
}

/// `(a + b + c) / 3`, the center of gravity of the triangle.
pub fn centroid(s: &FuzzyEmotionState) -> f64 {
    if s.is_point() {
        s.b
    } else {
        (s.a + s.b + s.c) / 3.0
    }
}

/// Anchor nearest to `x`; exact ties go toward Neutral, then toward the lower coordinate.
pub fn nearest_anchor(x: f64) -> EmotionAnchor {
    let key = |a: &EmotionAnchor| {
        let c = a.coordinate();
        ((x - c).abs(), c.abs(), c)
    };
    EmotionAnchor::ALL
        .into_iter()
        .min_by(|p, q| key(p).partial_cmp(&key(q)).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap()
}

pub fn crisp_label(s: &FuzzyEmotionState) -> EmotionAnchor {
    nearest_anchor(centroid(s))
}

pub fn valence_group_of(s: &FuzzyEmotionState) -> ValenceGroup {
    crisp_label(s).group()
}

/// Map a 5-class posterior onto a fuzzy number: peak at the expected
/// coordinate, half-width `max(0.25, 2 * std)`, feet clamped to `[-2, 2]`.
pub fn from_posterior(p: &[f64; 5]) -> Result<FuzzyEmotionState, FuzzyError> {
    let sum: f64 = p.iter().sum();
    if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(FuzzyError::NotNormalized(sum));
    }
    let coords = EmotionAnchor::ALL.map(EmotionAnchor::coordinate);
    let b = p.iter().zip(&coords).map(|(w, x)| w * x).sum::<f64>().clamp(VALENCE_MIN, VALENCE_MAX);
    let std = p
        .iter()
        .zip(&coords)
        .map(|(w, x)| w * (x - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let spread = MIN_SPREAD.max(2.0 * std);
    FuzzyEmotionState::new(
        (b - spread).clamp(VALENCE_MIN, VALENCE_MAX),
        b,
        (b + spread).clamp(VALENCE_MIN, VALENCE_MAX),
    )
}

fn trapezoid_area<F: Fn(f64) -> f64>(f: F, step: f64) -> f64 {
    let n = ((VALENCE_MAX - VALENCE_MIN) / step).round() as usize;
    let h = (VALENCE_MAX - VALENCE_MIN) / n as f64;
    let mut acc = 0.5 * (f(VALENCE_MIN) + f(VALENCE_MAX));
    for i in 1..n {
        acc += f(VALENCE_MIN + i as f64 * h);
    }
    acc * h
}

/// Jaccard ratio of membership areas, `integral(min) / integral(max)`,
/// by trapezoidal integration over `[-2, 2]` at the given step.
pub fn similarity_with_step(s1: &FuzzyEmotionState, s2: &FuzzyEmotionState, step: f64) -> f64 {
    let union = trapezoid_area(|x| membership(s1, x).max(membership(s2, x)), step);
    if union <= 0.0 {
        // both are points
        return if s1 == s2 { 1.0 } else { 0.0 };
    }
    let inter = trapezoid_area(|x| membership(s1, x).min(membership(s2, x)), step);
    (inter / union).clamp(0.0, 1.0)
}

pub fn similarity(s1: &FuzzyEmotionState, s2: &FuzzyEmotionState) -> f64 {
    similarity_with_step(s1, s2, SIMILARITY_STEP)
}

/// Non-empty collection of expert labels for one utterance, stored as given.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct LabelSet(Vec<FuzzyEmotionState>);

impl LabelSet {
    pub fn new(labels: Vec<FuzzyEmotionState>) -> Result<Self, FuzzyError> {
        if labels.is_empty() {
            Err(FuzzyError::EmptyLabelSet)
        } else {
            Ok(Self(labels))
        }
    }

    pub fn single(label: FuzzyEmotionState) -> Self {
        Self(vec![label])
    }

    pub fn labels(&self) -> &[FuzzyEmotionState] {
        &self.0
    }

    pub fn first(&self) -> &FuzzyEmotionState {
        &self.0[0]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The common crisp anchor when every label agrees, else `None`.
    pub fn unanimous_anchor(&self) -> Option<EmotionAnchor> {
        let first = self.first().crisp_label();
        self.0.iter().all(|l| l.crisp_label() == first).then_some(first)
    }
}

impl<'de> Deserialize<'de> for LabelSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let labels = Vec::<FuzzyEmotionState>::deserialize(d)?;
        LabelSet::new(labels).map_err(serde::de::Error::custom)
    }
}

/// True iff some stored label is at least `theta`-similar to the prediction.
pub fn label_match(pred: &FuzzyEmotionState, labels: &[FuzzyEmotionState], theta: f64) -> Result<bool, FuzzyError> {
    if labels.is_empty() {
        return Err(FuzzyError::EmptyLabelSet);
    }
    if theta <= 0.0 {
        return Ok(true);
    }
    Ok(labels.iter().any(|l| similarity(pred, l) >= theta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri(a: f64, b: f64, c: f64) -> FuzzyEmotionState {
        FuzzyEmotionState::new(a, b, c).unwrap()
    }

    #[test]
    fn anchors_are_ordered() {
        let coords: Vec<f64> = EmotionAnchor::ALL.iter().map(|a| a.coordinate()).collect();
        assert_eq!(coords, vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
        assert!(EmotionAnchor::Nervousness < EmotionAnchor::Happiness);
        assert_eq!("happiness".parse::<EmotionAnchor>().unwrap(), EmotionAnchor::Happiness);
        assert!("joy".parse::<EmotionAnchor>().is_err());
        assert_eq!(EmotionAnchor::Happiness.neighbours(), vec![EmotionAnchor::Contentment]);
        assert_eq!(
            EmotionAnchor::Neutral.neighbours(),
            vec![EmotionAnchor::Tenseness, EmotionAnchor::Contentment]
        );
    }

    #[test]
    fn triangle_validation() {
        assert!(FuzzyEmotionState::new(0.0, -1.0, 1.0).is_err());
        assert!(FuzzyEmotionState::new(-2.5, 0.0, 1.0).is_err());
        assert!(FuzzyEmotionState::new(f64::NAN, 0.0, 1.0).is_err());
        assert!(FuzzyEmotionState::new(1.0, 1.0, 1.0).is_ok());
    }

    #[test]
    fn membership_cases() {
        let s = tri(-1.0, 0.0, 2.0);
        assert_eq!(s.membership(0.0), 1.0);
        assert_eq!(s.membership(-0.5), 0.5);
        assert_eq!(s.membership(1.0), 0.5);
        assert_eq!(s.membership(-1.5), 0.0);
        assert_eq!(s.membership(2.5), 0.0);
        let left_vertical = tri(1.0, 1.0, 2.0);
        assert_eq!(left_vertical.membership(1.0), 1.0);
        assert_eq!(left_vertical.membership(0.999), 0.0);
        assert_eq!(left_vertical.membership(1.5), 0.5);
        let point = tri(0.5, 0.5, 0.5);
        assert_eq!(point.membership(0.5), 1.0);
        assert_eq!(point.membership(0.6), 0.0);
    }

    #[test]
    fn centroid_cases() {
        assert_eq!(tri(-1.0, 0.0, 1.0).centroid(), 0.0);
        assert!((tri(-1.0, 0.0, 2.0).centroid() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(tri(1.0, 1.0, 1.0).centroid(), 1.0);
    }

    #[test]
    fn crisp_label_boundaries() {
        assert_eq!(nearest_anchor(0.0), EmotionAnchor::Neutral);
        assert_eq!(nearest_anchor(1.49), EmotionAnchor::Contentment);
        assert_eq!(nearest_anchor(1.51), EmotionAnchor::Happiness);
        assert_eq!(nearest_anchor(0.5), EmotionAnchor::Neutral);
        assert_eq!(nearest_anchor(-0.5), EmotionAnchor::Neutral);
        assert_eq!(nearest_anchor(1.5), EmotionAnchor::Contentment);
        assert_eq!(nearest_anchor(-1.5), EmotionAnchor::Tenseness);
        assert_eq!(tri(0.0, 0.5, 1.0).crisp_label(), EmotionAnchor::Neutral);
    }

    #[test]
    fn valence_groups() {
        assert_eq!(tri(1.8, 2.0, 2.0).valence_group(), ValenceGroup::Positive);
        assert_eq!(tri(0.0, 0.0, 0.0).valence_group(), ValenceGroup::Neutral);
        assert_eq!(tri(-2.0, -2.0, -1.5).valence_group(), ValenceGroup::Negative);
    }

    #[test]
    fn posterior_mapping() {
        let s = from_posterior(&[0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(s.triple(), [-0.25, 0.0, 0.25]);
        let s = from_posterior(&[0.2; 5]).unwrap();
        assert!(s.b().abs() < 1e-15);
        assert_eq!((s.a(), s.c()), (-2.0, 2.0));
        let s = from_posterior(&[0.0, 0.0, 0.0, 0.5, 0.5]).unwrap();
        assert_eq!(s.triple(), [0.5, 1.5, 2.0]);
        assert!(matches!(
            from_posterior(&[0.5, 0.0, 0.0, 0.0, 0.0]),
            Err(FuzzyError::NotNormalized(_))
        ));
        assert!(from_posterior(&[1.5, -0.5, 0.0, 0.0, 0.0]).is_err());
        for a in EmotionAnchor::ALL {
            let mut p = [0.0; 5];
            p[a.index()] = 1.0;
            assert_eq!(from_posterior(&p).unwrap().crisp_label(), a);
        }
    }

    #[test]
    fn similarity_cases() {
        let s = tri(-1.0, 0.0, 1.0);
        assert!((similarity(&s, &s) - 1.0).abs() < 1e-6);
        assert_eq!(similarity(&tri(-2.0, -1.5, -1.0), &tri(1.0, 1.5, 2.0)), 0.0);
        let p = tri(1.0, 1.0, 1.0);
        assert_eq!(similarity(&p, &p), 1.0);
        assert_eq!(similarity(&p, &tri(0.0, 0.0, 0.0)), 0.0);
    }

    #[test]
    fn adjacent_default_spread_does_not_match() {
        let label = tri(-0.25, 0.0, 0.25);
        let pred = tri(0.75, 1.0, 1.25);
        assert!(!label_match(&pred, &[label], DEFAULT_THETA).unwrap());
        assert!(label_match(&pred, &[label, pred], DEFAULT_THETA).unwrap());
        assert!(label_match(&pred, &[label], 0.0).unwrap());
        assert_eq!(label_match(&pred, &[], 0.4), Err(FuzzyError::EmptyLabelSet));
    }

    #[test]
    fn label_set_serde() {
        let set = LabelSet::new(vec![tri(-0.5, 0.0, 0.5), tri(0.5, 1.0, 1.5)]).unwrap();
        let json = serde_json::to_string(&set).unwrap();
        assert_eq!(json, "[[-0.5,0.0,0.5],[0.5,1.0,1.5]]");
        assert_eq!(serde_json::from_str::<LabelSet>(&json).unwrap(), set);
        assert!(serde_json::from_str::<LabelSet>("[]").is_err());
        assert!(serde_json::from_str::<LabelSet>("[[1,0,2]]").is_err());
        assert_eq!(set.unanimous_anchor(), None);
        assert_eq!(LabelSet::single(tri(0.5, 1.0, 1.5)).unanimous_anchor(), Some(EmotionAnchor::Contentment));
    }
}
