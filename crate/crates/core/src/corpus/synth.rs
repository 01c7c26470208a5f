//! Synthetic corpus: subject profiles, source-filter rendering, simulated
//! expert annotation and the corpus generator.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize};

use super::{save_manifest, Corpus, CorpusError, TherapeuticStep, UtteranceRecord, MAX_AGE, MIN_AGE};
use crate::audio_io::{write_wav, Utterance, CANONICAL_RATE};
use crate::exec::Exec;
use crate::fuzzy::{EmotionAnchor, FuzzyEmotionState, LabelSet, ValenceGroup, VALENCE_MAX, VALENCE_MIN};

pub const BASE_F0_MIN: f64 = 250.0;
pub const BASE_F0_MAX: f64 = 400.0;
pub const DURATION_MIN_S: f64 = 0.5;
pub const DURATION_MAX_S: f64 = 2.0;

const RATE: f64 = CANONICAL_RATE as f64;
const F1: (f64, f64) = (950.0, 90.0);
const F2: (f64, f64) = (1800.0, 140.0);
/// RMS of the voiced portion at 0 dB.
const REF_RMS: f64 = 0.05;
/// Noise sits this far below the speaker's neutral voiced level.
const SNR_DB: f64 = 20.0;
/// Peak-to-peak phrase intonation at range multiplier 1, in semitones.
const PHRASE_ST: f64 = 3.0;
/// Peak-to-peak per-syllable accent, in semitones.
const ACCENT_ST: f64 = 1.0;
/// Relative jitter of syllable lengths.
const SYLLABLE_SPREAD: f64 = 0.05;
const ATTACK_S: f64 = 0.03;
/// Decay constant of the vowel offset into the following pause.
const TAIL_S: f64 = 0.02;
/// Pause-to-vowel length ratio at tempo multiplier 1. Faster speech
/// squeezes pauses harder than vowels: the ratio scales as
/// `tempo_mult^-PAUSE_EXPONENT`.
const PAUSE_RATIO: f64 = 0.4;
const PAUSE_EXPONENT: f64 = 5.5;
const FADE_S: f64 = 0.005;
const ANNOTATOR_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

pub const JITTER_HIGH: f64 = 0.03;
pub const JITTER_MED: f64 = 0.015;
pub const JITTER_LOW: f64 = 0.005;

fn check_rows5(name: &str, v: &[f64; 5], positive: bool) -> Result<(), CorpusError> {
    if v.iter().any(|x| !x.is_finite() || (positive && *x <= 0.0)) {
        return Err(CorpusError::InvalidConfig(format!("{name} entries must be finite{}", if positive { " and positive" } else { "" })));
    }
    Ok(())
}

/// Emotion-to-acoustics table, indexed Nervousness..Happiness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcousticTable {
    pub f0_mult: [f64; 5],
    pub f0_range_mult: [f64; 5],
    pub energy_db: [f64; 5],
    pub tempo_mult: [f64; 5],
    /// Relative standard deviation of the glottal period.
    pub jitter: [f64; 5],
}

impl Default for AcousticTable {
    fn default() -> Self {
        Self::standard()
    }
}

impl AcousticTable {
    pub fn standard() -> Self {
        Self {
            f0_mult: [0.95, 0.97, 1.0, 1.06, 1.12],
            f0_range_mult: [0.8, 0.9, 1.0, 1.3, 1.6],
            energy_db: [-2.0, -1.0, 0.0, 1.5, 3.0],
            tempo_mult: [0.9, 0.95, 1.0, 1.1, 1.2],
            jitter: [JITTER_HIGH, JITTER_MED, JITTER_LOW, JITTER_LOW, JITTER_LOW],
        }
    }

    /// Widely separated classes. Happiness sits far out on every axis
    /// because an extreme anchor is only predicted from a confident posterior.
    pub fn boosted() -> Self {
        Self {
            f0_mult: [0.7, 0.85, 1.0, 1.05, 1.2],
            f0_range_mult: [0.3, 0.6, 1.0, 1.2, 2.0],
            energy_db: [-12.0, -6.0, 0.0, 3.0, 16.0],
            tempo_mult: [0.5, 0.75, 1.0, 1.1, 2.4],
            jitter: [0.06, 0.03, 0.01, 0.003, 0.0],
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "standard" => Some(Self::standard()),
            "boosted" => Some(Self::boosted()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        check_rows5("f0_mult", &self.f0_mult, true)?;
        check_rows5("f0_range_mult", &self.f0_range_mult, false)?;
        check_rows5("energy_db", &self.energy_db, false)?;
        check_rows5("tempo_mult", &self.tempo_mult, true)?;
        check_rows5("jitter", &self.jitter, false)?;
        if self.f0_range_mult.iter().chain(&self.jitter).any(|x| *x < 0.0) {
            return Err(CorpusError::InvalidConfig("f0_range_mult and jitter must be non-negative".into()));
        }
        if self.jitter.iter().any(|j| *j >= 0.2) {
            return Err(CorpusError::InvalidConfig("jitter must stay below 0.2".into()));
        }
        Ok(())
    }
}

/// Accepts either a preset name or an explicit table.
fn acoustics_from_json<'de, D: Deserializer<'de>>(d: D) -> Result<AcousticTable, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Spec {
        Preset(String),
        Table(AcousticTable),
    }
    match Spec::deserialize(d)? {
        Spec::Preset(name) => AcousticTable::preset(&name)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown acoustics preset {name:?} (standard, boosted)"))),
        Spec::Table(t) => Ok(t),
    }
}

/// Target (negative, neutral, positive) proportions per therapy step, each
/// row normalized to sum 1.
///
/// Raw values as published, before normalization:
///   overall              0.12 0.22 0.66
///   evaluation_exercises 0.11 0.26 0.63
///   phonematic_hearing   0.14 0.17 0.70   (sums to 1.01)
///   pronunciation_3d     0.12 0.20 0.68
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTargets")]
pub struct DistributionTargets {
    pub overall: [f64; 3],
    pub evaluation_exercises: [f64; 3],
    pub phonematic_hearing: [f64; 3],
    pub pronunciation_3d: [f64; 3],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTargets {
    overall: [f64; 3],
    evaluation_exercises: [f64; 3],
    phonematic_hearing: [f64; 3],
    pronunciation_3d: [f64; 3],
}

impl TryFrom<RawTargets> for DistributionTargets {
    type Error = String;

    fn try_from(r: RawTargets) -> Result<Self, String> {
        DistributionTargets::new(r.overall, r.evaluation_exercises, r.phonematic_hearing, r.pronunciation_3d)
            .map_err(|e| e.to_string())
    }
}

fn normalize_row(name: &str, row: [f64; 3]) -> Result<[f64; 3], CorpusError> {
    let sum: f64 = row.iter().sum();
    if row.iter().any(|x| !x.is_finite() || *x < 0.0) || !(sum > 0.0) {
        return Err(CorpusError::InvalidConfig(format!("{name} must be non-negative with a positive sum")));
    }
    Ok(row.map(|x| x / sum))
}

impl DistributionTargets {
    pub fn new(
        overall: [f64; 3],
        evaluation_exercises: [f64; 3],
        phonematic_hearing: [f64; 3],
        pronunciation_3d: [f64; 3],
    ) -> Result<Self, CorpusError> {
        Ok(Self {
            overall: normalize_row("overall", overall)?,
            evaluation_exercises: normalize_row("evaluation_exercises", evaluation_exercises)?,
            phonematic_hearing: normalize_row("phonematic_hearing", phonematic_hearing)?,
            pronunciation_3d: normalize_row("pronunciation_3d", pronunciation_3d)?,
        })
    }

    pub fn step(&self, step: TherapeuticStep) -> &[f64; 3] {
        match step {
            TherapeuticStep::EvaluationExercises => &self.evaluation_exercises,
            TherapeuticStep::PhonematicHearing => &self.phonematic_hearing,
            TherapeuticStep::Pronunciation3d => &self.pronunciation_3d,
        }
    }
}

impl Default for DistributionTargets {
    fn default() -> Self {
        Self::new([0.12, 0.22, 0.66], [0.11, 0.26, 0.63], [0.14, 0.17, 0.70], [0.12, 0.20, 0.68])
            .expect("published rows are valid")
    }
}

/// How step and valence group are assigned to records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingScheme {
    /// Largest-remainder quotas, then a seeded shuffle: proportions match the
    /// targets to within one record per cell.
    #[default]
    Quota,
    /// Independent categorical draws per record.
    Iid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n_utterances: usize,
    pub n_subjects: usize,
    pub targets: DistributionTargets,
    /// Weights of (evaluation_exercises, phonematic_hearing, pronunciation_3d).
    pub step_mix: [f64; 3],
    pub k_experts: usize,
    pub p_disagree: f64,
    pub seed: u64,
    pub duration_s: [f64; 2],
    pub sampling: SamplingScheme,
    pub speakers: SpeakerVariation,
    #[serde(deserialize_with = "acoustics_from_json")]
    pub acoustics: AcousticTable,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_utterances: 1500,
            n_subjects: 10,
            targets: DistributionTargets::default(),
            step_mix: [1.0 / 3.0; 3],
            k_experts: 3,
            p_disagree: 0.15,
            seed: 42,
            duration_s: [0.6, 1.4],
            sampling: SamplingScheme::Quota,
            speakers: SpeakerVariation::default(),
            acoustics: AcousticTable::standard(),
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let fail = |m: &str| Err(CorpusError::InvalidConfig(m.into()));
        if self.n_utterances == 0 {
            return fail("n_utterances must be at least 1");
        }
        if self.n_subjects == 0 {
            return fail("n_subjects must be at least 1");
        }
        if self.k_experts == 0 {
            return fail("k_experts must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.p_disagree) {
            return fail("p_disagree must be in [0, 1]");
        }
        let [lo, hi] = self.duration_s;
        if !(DURATION_MIN_S <= lo && lo <= hi && hi <= DURATION_MAX_S) {
            return fail("duration_s must satisfy 0.5 <= min <= max <= 2.0");
        }
        normalize_row("step_mix", self.step_mix)?;
        self.speakers.validate()?;
        self.acoustics.validate()
    }
}

/// Spread of per-speaker traits around the age-driven F0 baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpeakerVariation {
    /// Half-width of the uniform personal F0 offset, Hz.
    pub f0_offset_hz: f64,
    /// Range of the uniform base tempo draw, syllables per second.
    pub tempo: [f64; 2],
    /// Half-width of the uniform base energy offset, dB.
    pub energy_db: f64,
}

impl Default for SpeakerVariation {
    fn default() -> Self {
        Self {
            f0_offset_hz: 25.0,
            tempo: [3.6, 3.9],
            energy_db: 3.0,
        }
    }
}

impl SpeakerVariation {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let [lo, hi] = self.tempo;
        let ok = self.f0_offset_hz >= 0.0
            && self.energy_db >= 0.0
            && self.f0_offset_hz.is_finite()
            && self.energy_db.is_finite()
            && lo > 0.0
            && lo <= hi
            && hi.is_finite();
        if ok {
            Ok(())
        } else {
            Err(CorpusError::InvalidConfig("speaker variation must be non-negative with 0 < tempo min <= max".into()))
        }
    }
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectProfile {
    pub subject_id: String,
    pub age: u8,
    pub base_f0: f64,
    /// Syllables per second.
    pub base_tempo: f64,
    pub base_energy: f64,
}

impl SubjectProfile {
    /// Younger children speak higher: about 25 Hz per year plus a personal
    /// offset, kept inside the generator bounds.
    pub fn draw(subject_id: impl Into<String>, rng: &mut impl Rng) -> Self {
        Self::draw_with(subject_id, &SpeakerVariation::default(), rng)
    }

    pub fn draw_with(subject_id: impl Into<String>, var: &SpeakerVariation, rng: &mut impl Rng) -> Self {
        let age = rng.random_range(MIN_AGE..=MAX_AGE);
        let offset = uniform(rng, -var.f0_offset_hz, var.f0_offset_hz);
        let base_f0 =
            (BASE_F0_MAX - 10.0 - 25.0 * f64::from(age - MIN_AGE) + offset).clamp(BASE_F0_MIN, BASE_F0_MAX);
        Self {
            subject_id: subject_id.into(),
            age,
            base_f0,
            base_tempo: uniform(rng, var.tempo[0], var.tempo[1]),
            base_energy: uniform(rng, -var.energy_db, var.energy_db),
        }
    }

    pub fn is_valid(&self) -> bool {
        (MIN_AGE..=MAX_AGE).contains(&self.age)
            && (BASE_F0_MIN..=BASE_F0_MAX).contains(&self.base_f0)
            && self.base_tempo > 0.0
            && self.base_energy.is_finite()
    }
}

/// Two-pole resonator with unity gain at DC.
struct Resonator {
    a: f64,
    b: f64,
    c: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn new(freq: f64, bw: f64) -> Self {
        let c = -(-2.0 * PI * bw / RATE).exp();
        let b = 2.0 * (-PI * bw / RATE).exp() * (2.0 * PI * freq / RATE).cos();
        Self { a: 1.0 - b - c, b, c, y1: 0.0, y2: 0.0 }
    }

    fn tick(&mut self, x: f64) -> f64 {
        let y = self.a * x + self.b * self.y1 + self.c * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

fn poly_blep(t: f64, dt: f64) -> f64 {
    if t < dt {
        let x = t / dt;
        2.0 * x - x * x - 1.0
    } else if t > 1.0 - dt {
        let x = (t - 1.0) / dt;
        x * x + 2.0 * x + 1.0
    } else {
        0.0
    }
}

/// Band-limited sawtooth following `f0_hz` per sample, scaled by `envelope`
/// and passed through the two formant resonators. Each glottal cycle gets
/// its own period perturbation of relative size `jitter`.
fn source_filter(f0_hz: &[f64], envelope: &[f64], jitter: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut r1 = Resonator::new(F1.0, F1.1);
    let mut r2 = Resonator::new(F2.0, F2.1);
    let mut phase = 0.0;
    let mut cycle_scale = 1.0;
    let mut out = Vec::with_capacity(f0_hz.len());
    for (&f, &env) in f0_hz.iter().zip(envelope) {
        let dt = (f * cycle_scale / RATE).min(0.5);
        let saw = 2.0 * phase - 1.0 - poly_blep(phase, dt);
        out.push(r2.tick(r1.tick(env * saw)));
        phase += dt;
        if phase >= 1.0 {
            phase -= 1.0;
            if jitter > 0.0 {
                let z: f64 = StandardNormal.sample(rng);
                cycle_scale = 1.0 / (1.0 + jitter * z.clamp(-3.0, 3.0));
            }
        }
    }
    out
}

/// A clean sustained vowel following `f0_hz(t)`, peak-normalized to 0.5.
/// No jitter, no noise, no syllable structure.
pub fn synthesize_vowel(f0_hz: impl Fn(f64) -> f64, duration_s: f64) -> Utterance {
    let n = ((duration_s * RATE).round() as usize).max(1);
    let f0: Vec<f64> = (0..n).map(|i| f0_hz(i as f64 / RATE)).collect();
    let env = vec![1.0; n];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut y = source_filter(&f0, &env, 0.0, &mut rng);
    let peak = y.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if peak > 0.0 {
        y.iter_mut().for_each(|x| *x *= 0.5 / peak);
    }
    Utterance::new("vowel", y, CANONICAL_RATE).expect("normalized samples are in range")
}

/// Phrase-level intonation in [-1, 1]: rise, plateau, final fall.
fn phrase_shape(x: f64) -> f64 {
    if x < 0.25 {
        -1.0 + 2.0 * (0.5 - 0.5 * (PI * x / 0.25).cos())
    } else if x < 0.7 {
        1.0
    } else {
        1.0 - 2.0 * (0.5 - 0.5 * (PI * (x - 0.7) / 0.3).cos())
    }
}

/// Render one synthetic utterance of `subject` expressing `anchor`.
/// Deterministic in all arguments.
pub fn render_utterance(
    subject: &SubjectProfile,
    anchor: EmotionAnchor,
    duration_s: f64,
    seed: u64,
    table: &AcousticTable,
) -> Utterance {
    let k = anchor.index();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = ((duration_s.clamp(DURATION_MIN_S, DURATION_MAX_S) * RATE).round()) as usize;
    let dur = n as f64 / RATE;

    let syl_len = 1.0 / (subject.base_tempo * table.tempo_mult[k]);
    let mut bounds = vec![0.0];
    while *bounds.last().unwrap() < dur {
        let last = *bounds.last().unwrap();
        bounds.push(last + syl_len * rng.random_range(1.0 - SYLLABLE_SPREAD..1.0 + SYLLABLE_SPREAD));
    }
    let accents: Vec<f64> = (1..bounds.len()).map(|_| rng.random_range(-1.0..1.0)).collect();

    let mean_f0 = subject.base_f0 * table.f0_mult[k];
    let phrase = 0.5 * PHRASE_ST * table.f0_range_mult[k];
    let mut f0 = Vec::with_capacity(n);
    let mut env = Vec::with_capacity(n);
    let mut syl = 0;
    for i in 0..n {
        let t = i as f64 / RATE;
        while t >= bounds[syl + 1] {
            syl += 1;
        }
        let len = bounds[syl + 1] - bounds[syl];
        let vowel = len / (1.0 + PAUSE_RATIO * table.tempo_mult[k].powf(-PAUSE_EXPONENT));
        let dt = t - bounds[syl];
        let x = (dt / vowel).min(1.0);
        let st = phrase * phrase_shape(t / dur) + 0.5 * ACCENT_ST * accents[syl] * (PI * x).sin();
        f0.push(mean_f0 * 2f64.powf(st / 12.0));
        let attack = ATTACK_S.min(vowel / 3.0);
        env.push(if dt < attack {
            0.5 - 0.5 * (PI * dt / attack).cos()
        } else if dt < vowel {
            1.0
        } else {
            (-(dt - vowel) / TAIL_S).exp()
        });
    }

    let mut y = source_filter(&f0, &env, table.jitter[k], &mut rng);
    let (sum_sq, count) = y
        .iter()
        .zip(&env)
        .filter(|(_, e)| **e > 0.5)
        .fold((0.0, 0usize), |(s, c), (v, _)| (s + v * v, c + 1));
    let voiced_rms = if count > 0 { (sum_sq / count as f64).sqrt() } else { 0.0 };
    let neutral_level = REF_RMS * 10f64.powf(subject.base_energy / 20.0);
    let gain = if voiced_rms > 0.0 {
        neutral_level * 10f64.powf(table.energy_db[k] / 20.0) / voiced_rms
    } else {
        0.0
    };
    let noise_sd = neutral_level * 10f64.powf(-SNR_DB / 20.0);
    let fade = (FADE_S * RATE) as usize;
    for (i, v) in y.iter_mut().enumerate() {
        let z: f64 = StandardNormal.sample(&mut rng);
        let ramp = (i.min(n - 1 - i) as f64 / fade as f64).min(1.0);
        *v = ((*v * gain + noise_sd * z) * ramp).clamp(-1.0, 1.0);
    }
    let id = format!("{}_{}_{seed}", subject.subject_id, anchor.name());
    Utterance::new(id, y, CANONICAL_RATE).expect("clamped samples are in range")
}

/// Triangle with centroid `m` and left spread `half`, kept inside the
/// valence axis by pinning a foot to the boundary and shifting the peak.
/// Needs `|m| <= VALENCE_MAX - half / 3`.
fn triangle_with_centroid(m: f64, half: f64) -> FuzzyEmotionState {
    let mirror = m < 0.0;
    let m = m.abs();
    let (a, b, c) = if m + half <= VALENCE_MAX {
        (m - half, m, m + half)
    } else {
        let b = ((3.0 * m + half - VALENCE_MAX) / 2.0).min(VALENCE_MAX);
        (b - half, b, VALENCE_MAX)
    };
    let (a, b, c) = if mirror { (-c, -b, -a) } else { (a, b, c) };
    FuzzyEmotionState::new(a.max(VALENCE_MIN), b, c.min(VALENCE_MAX)).expect("ordered triangle")
}

/// `k` independent expert labels for an utterance of `anchor`. Each expert
/// aims at the true anchor, or with probability `p_disagree` at a random
/// adjacent one, then adds centre noise in [-0.3, 0.3] and a half-width in
/// [0.25, 0.75].
pub fn simulate_annotators(anchor: EmotionAnchor, k: usize, p_disagree: f64, seed: u64) -> LabelSet {
    assert!(k >= 1, "at least one expert");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = (0..k)
        .map(|_| {
            let target = if rng.random::<f64>() < p_disagree {
                *anchor.neighbours().choose(&mut rng).expect("every anchor has a neighbour")
            } else {
                anchor
            };
            let half = rng.random_range(0.25..=0.75);
            // the clamp only ever pulls the centre back towards the anchor
            let edge = VALENCE_MAX - half / 3.0;
            let m = (target.coordinate() + rng.random_range(-0.3..=0.3)).clamp(-edge, edge);
            triangle_with_centroid(m, half)
        })
        .collect();
    LabelSet::new(labels).expect("k >= 1")
}

/// Split `n` items proportionally to `weights` by largest remainder.
fn apportion(n: usize, weights: &[f64]) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| n as f64 * w / total).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&i, &j| (exact[j] - exact[j].floor()).total_cmp(&(exact[i] - exact[i].floor())).then(i.cmp(&j)));
    let missing = n - counts.iter().sum::<usize>();
    for &i in order.iter().take(missing) {
        counts[i] += 1;
    }
    counts
}

fn categorical(rng: &mut impl Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

struct Plan {
    index: usize,
    subject: usize,
    step: TherapeuticStep,
    anchor: EmotionAnchor,
    duration_s: f64,
}

fn plan(cfg: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Vec<(TherapeuticStep, ValenceGroup, usize)> {
    let n = cfg.n_utterances;
    let mut cells = Vec::with_capacity(n);
    match cfg.sampling {
        SamplingScheme::Quota => {
            let per_step = apportion(n, &cfg.step_mix);
            for (step, &m) in TherapeuticStep::ALL.iter().zip(&per_step) {
                let per_group = apportion(m, cfg.targets.step(*step));
                for (group, &g) in ValenceGroup::ALL.iter().zip(&per_group) {
                    cells.extend(std::iter::repeat_n((*step, *group), g));
                }
            }
            cells.shuffle(rng);
            let mut subjects: Vec<usize> = (0..n).map(|i| i % cfg.n_subjects).collect();
            subjects.shuffle(rng);
            cells.into_iter().zip(subjects).map(|((s, g), p)| (s, g, p)).collect()
        }
        SamplingScheme::Iid => (0..n)
            .map(|_| {
                let step = TherapeuticStep::ALL[categorical(rng, &cfg.step_mix)];
                let group = ValenceGroup::ALL[categorical(rng, cfg.targets.step(step))];
                (step, group, rng.random_range(0..cfg.n_subjects))
            })
            .collect(),
    }
}

pub fn synth_corpus(cfg: &GeneratorConfig, out_dir: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    synth_corpus_with(cfg, out_dir, Exec::default())
}

/// Generate a corpus under `out_dir`: `audio/*.wav`, `manifest.jsonl` and
/// the effective `generator.json`.
pub fn synth_corpus_with(cfg: &GeneratorConfig, out_dir: impl AsRef<Path>, exec: Exec) -> Result<Corpus, CorpusError> {
    cfg.validate()?;
    let out_dir = out_dir.as_ref();
    let audio_dir = out_dir.join("audio");
    fs::create_dir_all(&audio_dir).map_err(super::io_err(&audio_dir))?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let width = ((cfg.n_subjects - 1).max(1) as f64).log10().floor() as usize + 1;
    let subjects: Vec<SubjectProfile> = (0..cfg.n_subjects)
        .map(|s| SubjectProfile::draw_with(format!("subj_{s:0width$}"), &cfg.speakers, &mut rng))
        .collect();
    let plans: Vec<Plan> = plan(cfg, &mut rng)
        .into_iter()
        .enumerate()
        .map(|(index, (step, group, subject))| {
            let anchors = group.anchors();
            let anchor = anchors[rng.random_range(0..anchors.len())];
            let [lo, hi] = cfg.duration_s;
            let duration_s = if hi > lo { rng.random_range(lo..hi) } else { lo };
            Plan { index, subject, step, anchor, duration_s }
        })
        .collect();

    let records = exec.try_map(&plans, |p| {
        let seed = cfg.seed.wrapping_add(p.index as u64);
        let subject = &subjects[p.subject];
        let id = format!("utt_{:05}", p.index);
        let audio_path = format!("audio/{id}.wav");
        let u = render_utterance(subject, p.anchor, p.duration_s, seed, &cfg.acoustics);
        write_wav(&u, out_dir.join(&audio_path))?;
        Ok::<_, CorpusError>(UtteranceRecord {
            id,
            subject_id: subject.subject_id.clone(),
            subject_age: subject.age,
            step: p.step,
            audio_path,
            duration_s: u.duration_s(),
            labels: simulate_annotators(p.anchor, cfg.k_experts, cfg.p_disagree, seed ^ ANNOTATOR_SALT),
        })
    })?;

    let corpus = Corpus::new(out_dir, records);
    save_manifest(&corpus, out_dir.join("manifest.jsonl"))?;
    let cfg_path = out_dir.join("generator.json");
    let json = serde_json::to_string_pretty(cfg).expect("config serializes");
    fs::write(&cfg_path, json + "\n").map_err(super::io_err(&cfg_path))?;
    Ok(corpus)
}
