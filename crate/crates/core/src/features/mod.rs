//! Spectral and prosodic feature extraction.
//!
//! Each frame yields `[MFCC | delta-MFCC | log-energy | f0 semitones | voiced]`,
//! i.e. `2 * n_mfcc + 3` columns (29 with the defaults). Every column but the
//! voicing flag is mean/variance normalized per utterance.

mod dsp;
mod pitch;

pub use dsp::{
    deltas, frame_and_window, frame_count, hamming, hz_to_mel, log_energy, mel_filterbank, mel_to_hz,
    mfcc_frame, power_spectrum, pre_emphasis, Dct, MelFilterbank, PowerSpectrum, ENERGY_FLOOR,
};
pub use pitch::{hz_to_semitones, lag_range, normalized_autocorrelation, pitch_f0, PitchEstimate};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio_io::Utterance;

/// Regression half-width for delta features.
pub const DELTA_WINDOW: usize = 2;

/// Standard deviations below this are treated as zero and the column is
/// only mean-centred.
const CMVN_MIN_STD: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("signal of {len} samples is shorter than one frame ({frame_len})")]
    TooShort { len: usize, frame_len: usize },
    #[error("invalid frame config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameConfig {
    pub frame_len: usize,
    pub hop: usize,
    pub preemph: f64,
    pub n_fft: usize,
    pub n_mels: usize,
    pub n_mfcc: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub pitch_fmin: f64,
    pub pitch_fmax: f64,
    pub voicing_threshold: f64,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            frame_len: 400,
            hop: 160,
            preemph: 0.97,
            n_fft: 512,
            n_mels: 26,
            n_mfcc: 13,
            fmin: 0.0,
            fmax: 8000.0,
            pitch_fmin: 100.0,
            pitch_fmax: 600.0,
            voicing_threshold: 0.3,
        }
    }
}

impl FrameConfig {
    pub fn validate(&self, sample_rate: u32) -> Result<(), FeatureError> {
        let fail = |m: String| Err(FeatureError::InvalidConfig(m));
        let nyquist = sample_rate as f64 / 2.0;
        if self.frame_len == 0 || self.frame_len > self.n_fft {
            return fail(format!("frame_len {} must be in 1..=n_fft ({})", self.frame_len, self.n_fft));
        }
        if self.hop == 0 || self.hop > self.frame_len {
            return fail(format!("hop {} must be in 1..=frame_len", self.hop));
        }
        if !(0.0..1.0).contains(&self.preemph) {
            return fail(format!("preemph {} must be in [0, 1)", self.preemph));
        }
        if !(self.fmin >= 0.0 && self.fmin < self.fmax && self.fmax <= nyquist) {
            return fail(format!("need 0 <= fmin < fmax <= {nyquist}"));
        }
        if self.n_mels < 2 || self.n_mfcc == 0 || self.n_mfcc > self.n_mels {
            return fail("need n_mels >= 2 and 1 <= n_mfcc <= n_mels".to_string());
        }
        if !(self.pitch_fmin > 0.0 && self.pitch_fmin < self.pitch_fmax) {
            return fail("need 0 < pitch_fmin < pitch_fmax".into());
        }
        if !(self.voicing_threshold > 0.0 && self.voicing_threshold <= 1.0) {
            return fail("voicing_threshold must be in (0, 1]".into());
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        2 * self.n_mfcc + 3
    }

    pub fn energy_col(&self) -> usize {
        2 * self.n_mfcc
    }

    pub fn f0_col(&self) -> usize {
        2 * self.n_mfcc + 1
    }

    pub fn voiced_col(&self) -> usize {
        2 * self.n_mfcc + 2
    }

    /// CSV header matching the column layout.
    pub fn column_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (0..self.n_mfcc).map(|i| format!("c{i}")).collect();
        names.extend((0..self.n_mfcc).map(|i| format!("d{i}")));
        names.extend(["loge", "f0", "voiced"].map(String::from));
        names
    }
}

/// Row-major frames x dim matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    dim: usize,
    config: FrameConfig,
}

impl FeatureMatrix {
    /// Build from explicit rows; all rows must share one length.
    pub fn from_rows(rows: &[Vec<f64>], config: FrameConfig) -> Self {
        let dim = rows.first().map_or(config.dim(), Vec::len);
        assert!(rows.iter().all(|r| r.len() == dim), "ragged feature rows");
        Self {
            data: rows.concat(),
            dim,
            config,
        }
    }

    pub fn frame_count(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn config(&self) -> &FrameConfig {
        &self.config
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Per-utterance mean/variance normalization of columns `0..n_cols`.
    pub fn normalize_columns(&mut self, n_cols: usize) {
        let frames = self.frame_count();
        if frames == 0 {
            return;
        }
        for j in 0..n_cols.min(self.dim) {
            let mean = self.rows().map(|r| r[j]).sum::<f64>() / frames as f64;
            let var = self.rows().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / frames as f64;
            let std = var.sqrt();
            let divisor = if std < CMVN_MIN_STD { 1.0 } else { std };
            for t in 0..frames {
                let v = &mut self.data[t * self.dim + j];
                *v = (*v - mean) / divisor;
            }
        }
    }
}

/// Reusable extractor: FFT plan, filterbank and DCT basis are built once.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    config: FrameConfig,
    sample_rate: u32,
    window: Vec<f64>,
    spectrum: PowerSpectrum,
    filterbank: MelFilterbank,
    dct: Dct,
}

impl FeatureExtractor {
    pub fn new(config: FrameConfig, sample_rate: u32) -> Result<Self, FeatureError> {
        config.validate(sample_rate)?;
        Ok(Self {
            window: hamming(config.frame_len),
            spectrum: PowerSpectrum::new(config.n_fft),
            filterbank: MelFilterbank::new(&config, sample_rate),
            dct: Dct::new(config.n_mels, config.n_mfcc),
            config,
            sample_rate,
        })
    }

    pub fn config(&self) -> &FrameConfig {
        &self.config
    }

    /// Features before normalization. Here `f0 == 0` exactly on unvoiced frames.
    pub fn extract_raw(&self, samples: &[f64]) -> Result<FeatureMatrix, FeatureError> {
        let cfg = &self.config;
        let count = frame_count(samples.len(), cfg.frame_len, cfg.hop)?;
        let emphasized = pre_emphasis(samples, cfg.preemph);

        let mut cepstra = Vec::with_capacity(count);
        let mut prosody = Vec::with_capacity(count);
        for k in 0..count {
            let span = k * cfg.hop..k * cfg.hop + cfg.frame_len;
            let windowed: Vec<f64> = emphasized[span.clone()]
                .iter()
                .zip(&self.window)
                .map(|(x, w)| x * w)
                .collect();
            let log_mels = self.filterbank.log_energies(&self.spectrum.compute(&windowed));
            cepstra.push(self.dct.apply(&log_mels));

            let raw = &samples[span];
            let est = pitch_f0(raw, cfg, self.sample_rate);
            let f0 = est.f0_hz.map_or(0.0, hz_to_semitones);
            prosody.push([log_energy(raw), f0, if est.voiced { 1.0 } else { 0.0 }]);
        }
        let dynamics = deltas(&cepstra, DELTA_WINDOW);

        let dim = cfg.dim();
        let mut data = Vec::with_capacity(count * dim);
        for ((c, d), p) in cepstra.iter().zip(&dynamics).zip(&prosody) {
            data.extend_from_slice(c);
            data.extend_from_slice(d);
            data.extend_from_slice(p);
        }
        Ok(FeatureMatrix {
            data,
            dim,
            config: cfg.clone(),
        })
    }

    pub fn extract(&self, samples: &[f64]) -> Result<FeatureMatrix, FeatureError> {
        let mut m = self.extract_raw(samples)?;
        m.normalize_columns(self.config.voiced_col());
        Ok(m)
    }
}

pub fn extract_features(u: &Utterance, cfg: &FrameConfig) -> Result<FeatureMatrix, FeatureError> {
    FeatureExtractor::new(cfg.clone(), u.sample_rate())?.extract(u.samples())
}
