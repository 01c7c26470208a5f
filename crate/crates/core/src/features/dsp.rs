//! Frame-level DSP primitives: pre-emphasis, Hamming framing, power
//! spectrum, mel filterbank, orthonormal DCT-II, deltas and log-energy.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{FeatureError, FrameConfig};

/// Floor applied wherever a logarithm of an energy is taken.
pub const ENERGY_FLOOR: f64 = 1e-10;

/// `y[0] = x[0]`, `y[n] = x[n] - alpha * x[n-1]`.
pub fn pre_emphasis(signal: &[f64], alpha: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(signal.len());
    let mut prev = None;
    for &x in signal {
        out.push(match prev {
            None => x,
            Some(p) => x - alpha * p,
        });
        prev = Some(x);
    }
    out
}

pub fn hamming(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let denom = (len - 1) as f64;
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / denom).cos())
        .collect()
}

pub fn frame_count(len: usize, frame_len: usize, hop: usize) -> Result<usize, FeatureError> {
    if len < frame_len {
        return Err(FeatureError::TooShort { len, frame_len });
    }
    Ok((len - frame_len) / hop + 1)
}

/// Split into overlapping frames, each multiplied by a Hamming window.
pub fn frame_and_window(signal: &[f64], cfg: &FrameConfig) -> Result<Vec<Vec<f64>>, FeatureError> {
    let count = frame_count(signal.len(), cfg.frame_len, cfg.hop)?;
    let window = hamming(cfg.frame_len);
    Ok((0..count)
        .map(|k| {
            let start = k * cfg.hop;
            signal[start..start + cfg.frame_len]
                .iter()
                .zip(&window)
                .map(|(x, w)| x * w)
                .collect()
        })
        .collect())
}

/// Reusable one-sided power spectrum, `P[k] = |X[k]|^2 / n_fft`.
#[derive(Clone)]
pub struct PowerSpectrum {
    n_fft: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for PowerSpectrum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PowerSpectrum").field("n_fft", &self.n_fft).finish()
    }
}

impl PowerSpectrum {
    pub fn new(n_fft: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(n_fft);
        Self { n_fft, fft }
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Zero-pads `frame` to `n_fft` points. Frames longer than `n_fft` are truncated.
    pub fn compute(&self, frame: &[f64]) -> Vec<f64> {
        let mut buf = vec![Complex::new(0.0, 0.0); self.n_fft];
        for (b, &x) in buf.iter_mut().zip(frame) {
            b.re = x;
        }
        self.fft.process(&mut buf);
        let scale = 1.0 / self.n_fft as f64;
        buf[..self.n_bins()].iter().map(|c| c.norm_sqr() * scale).collect()
    }
}

pub fn power_spectrum(frame: &[f64], n_fft: usize) -> Vec<f64> {
    PowerSpectrum::new(n_fft).compute(frame)
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters, linear on the mel axis, with centers spaced
/// uniformly from `mel(fmin)` to `mel(fmax)` inclusive. Each filter's feet
/// sit on its neighbours' centers, so the unnormalized weights sum to one
/// at every bin in `[fmin, fmax]`.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    weights: Vec<Vec<f64>>,
}

impl MelFilterbank {
    pub fn new(cfg: &FrameConfig, sample_rate: u32) -> Self {
        let n_bins = cfg.n_fft / 2 + 1;
        let lo = hz_to_mel(cfg.fmin);
        let hi = hz_to_mel(cfg.fmax);
        let spacing = (hi - lo) / (cfg.n_mels - 1) as f64;
        let bin_mel: Vec<f64> = (0..n_bins)
            .map(|k| hz_to_mel(k as f64 * sample_rate as f64 / cfg.n_fft as f64))
            .collect();
        let weights = (0..cfg.n_mels)
            .map(|i| {
                let center = lo + i as f64 * spacing;
                bin_mel
                    .iter()
                    .map(|&m| {
                        if m < lo || m > hi {
                            0.0
                        } else {
                            (1.0 - (m - center).abs() / spacing).max(0.0)
                        }
                    })
                    .collect()
            })
            .collect();
        Self { weights }
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    /// `ln(max(w . P, 1e-10))` for every filter.
    pub fn log_energies(&self, power: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|w| {
                let e: f64 = w.iter().zip(power).map(|(a, b)| a * b).sum();
                e.max(ENERGY_FLOOR).ln()
            })
            .collect()
    }
}

pub fn mel_filterbank(power: &[f64], cfg: &FrameConfig, sample_rate: u32) -> Vec<f64> {
    MelFilterbank::new(cfg, sample_rate).log_energies(power)
}

/// Orthonormal DCT-II basis, `n_out` rows by `n_in` columns.
#[derive(Debug, Clone)]
pub struct Dct {
    basis: Vec<Vec<f64>>,
}

impl Dct {
    pub fn new(n_in: usize, n_out: usize) -> Self {
        let n = n_in as f64;
        let basis = (0..n_out)
            .map(|k| {
                let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
                (0..n_in)
                    .map(|i| scale * (PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n)).cos())
                    .collect()
            })
            .collect();
        Self { basis }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.basis
            .iter()
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Coefficients `0..n_mfcc` of the orthonormal DCT-II of `log_mels`; no liftering.
pub fn mfcc_frame(log_mels: &[f64], n_mfcc: usize) -> Vec<f64> {
    Dct::new(log_mels.len(), n_mfcc).apply(log_mels)
}

/// Regression deltas over time with replicated edges.
pub fn deltas(rows: &[Vec<f64>], window: usize) -> Vec<Vec<f64>> {
    let t_len = rows.len();
    if t_len == 0 {
        return Vec::new();
    }
    let dim = rows[0].len();
    let norm = 2.0 * (1..=window).map(|k| (k * k) as f64).sum::<f64>();
    let at = |t: isize| &rows[t.clamp(0, t_len as isize - 1) as usize];
    (0..t_len as isize)
        .map(|t| {
            let mut d = vec![0.0; dim];
            for k in 1..=window as isize {
                let (fwd, back) = (at(t + k), at(t - k));
                for j in 0..dim {
                    d[j] += k as f64 * (fwd[j] - back[j]);
                }
            }
            d.iter_mut().for_each(|v| *v /= norm);
            d
        })
        .collect()
}

pub fn log_energy(frame: &[f64]) -> f64 {
    frame.iter().map(|x| x * x).sum::<f64>().max(ENERGY_FLOOR).ln()
}
