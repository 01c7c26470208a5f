//! Canonical audio: RIFF/WAVE, PCM 16-bit, mono, 16 kHz, little-endian.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// The only sample rate accepted by corpus operations.
pub const CANONICAL_RATE: u32 = 16_000;

const QUANT_SCALE: f64 = 32767.0;
const WAVE_FORMAT_PCM: u16 = 1;
const WAVE_FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("malformed WAV: {0}")]
    MalformedWav(String),
    #[error("unsupported WAV format: {0}")]
    UnsupportedFormat(String),
    #[error("unsupported sample rate {0} Hz (expected {CANONICAL_RATE})")]
    UnsupportedRate(u32),
    #[error("invalid utterance: {0}")]
    InvalidUtterance(String),
    #[error("I/O failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// A mono utterance at the canonical rate with samples in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    id: String,
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Utterance {
    pub fn new(id: impl Into<String>, samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate != CANONICAL_RATE {
            return Err(AudioError::UnsupportedRate(sample_rate));
        }
        if samples.is_empty() {
            return Err(AudioError::InvalidUtterance("no samples".into()));
        }
        if let Some((i, x)) = samples
            .iter()
            .enumerate()
            .find(|(_, x)| !x.is_finite() || x.abs() > 1.0)
        {
            return Err(AudioError::InvalidUtterance(format!(
                "sample {i} = {x} is not a finite value in [-1, 1]"
            )));
        }
        Ok(Self {
            id: id.into(),
            samples,
            sample_rate,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Symmetric quantizer: `round(x * 32767)` clamped to the i16 range.
pub fn quantize(x: f64) -> i16 {
    (x * QUANT_SCALE).round().clamp(-32768.0, 32767.0) as i16
}

/// Inverse of [`quantize`]; -32768 (never produced by the writer) clamps to -1.
pub fn dequantize(q: i16) -> f64 {
    (q as f64 / QUANT_SCALE).max(-1.0)
}

fn u16_at(b: &[u8], off: usize) -> u16 {
    u16::from_le_bytes([b[off], b[off + 1]])
}

fn u32_at(b: &[u8], off: usize) -> u32 {
    u32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

/// Decode an in-memory WAV image. Unknown chunks (LIST, INFO, fact...) are skipped.
pub fn decode_wav(bytes: &[u8], id: impl Into<String>) -> Result<Utterance, AudioError> {
    let bad = |m: &str| AudioError::MalformedWav(m.to_string());
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(bad("missing RIFF/WAVE header"));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let tag = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad("chunk extends past end of file"))?;
        let body = &bytes[body_start..body_end];
        match tag {
            b"fmt " => {
                if size < 16 {
                    return Err(bad("fmt chunk shorter than 16 bytes"));
                }
                let mut tag = u16_at(body, 0);
                if tag == WAVE_FORMAT_EXTENSIBLE {
                    if size < 40 {
                        return Err(bad("truncated WAVE_FORMAT_EXTENSIBLE fmt chunk"));
                    }
                    tag = u16_at(body, 24);
                }
                fmt = Some((tag, u16_at(body, 2), u32_at(body, 4), u16_at(body, 14)));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // chunks are word aligned
        pos = body_end + (size & 1);
    }

    let (format_tag, channels, rate, bits) = fmt.ok_or_else(|| bad("no fmt chunk"))?;
    let data = data.ok_or_else(|| bad("no data chunk"))?;
    if format_tag != WAVE_FORMAT_PCM {
        return Err(AudioError::UnsupportedFormat(format!("format tag {format_tag:#06x} is not PCM")));
    }
    if channels != 1 {
        return Err(AudioError::UnsupportedFormat(format!("{channels} channels, expected mono")));
    }
    if bits != 16 {
        return Err(AudioError::UnsupportedFormat(format!("{bits}-bit samples, expected 16")));
    }
    if rate != CANONICAL_RATE {
        return Err(AudioError::UnsupportedRate(rate));
    }
    if data.len() % 2 != 0 {
        return Err(bad("data chunk length is not a whole number of samples"));
    }

    let samples = data
        .chunks_exact(2)
        .map(|c| dequantize(i16::from_le_bytes([c[0], c[1]])))
        .collect();
    Utterance::new(id, samples, rate)
}

/// Encode an utterance as a canonical 44-byte-header WAV image.
pub fn encode_wav(u: &Utterance) -> Vec<u8> {
    let data_len = (u.samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&WAVE_FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&u.sample_rate.to_le_bytes());
    out.extend_from_slice(&(u.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &x in &u.samples {
        out.extend_from_slice(&quantize(x).to_le_bytes());
    }
    out
}

/// Read a canonical WAV file. The utterance id is the file stem.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Utterance, AudioError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| AudioError::IoFailure {
        path: path.to_path_buf(),
        source,
    })?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_wav(&bytes, id)
}

pub fn write_wav(u: &Utterance, path: impl AsRef<Path>) -> Result<(), AudioError> {
    let path = path.as_ref();
    fs::write(path, encode_wav(u)).map_err(|source| AudioError::IoFailure {
        path: path.to_path_buf(),
        source,
    })
}
