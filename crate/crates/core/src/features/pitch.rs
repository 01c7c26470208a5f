//! Normalized-autocorrelation F0 tracker with a voicing decision.

use super::FrameConfig;

/// The shortest-lag autocorrelation lobe whose peak reaches this fraction of
/// the global maximum wins. Guards against picking a multiple of the period.
const OCTAVE_TOLERANCE: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchEstimate {
    pub f0_hz: Option<f64>,
    pub voiced: bool,
    /// Peak normalized autocorrelation (0 for silent frames).
    pub strength: f64,
}

/// Lag search range `[ceil(rate/pitch_fmax), floor(rate/pitch_fmin)]`,
/// truncated so at least two samples overlap.
pub fn lag_range(cfg: &FrameConfig, frame_len: usize, sample_rate: u32) -> (usize, usize) {
    let rate = sample_rate as f64;
    let lo = (rate / cfg.pitch_fmax).ceil().max(1.0) as usize;
    let hi = ((rate / cfg.pitch_fmin).floor() as usize).min(frame_len.saturating_sub(2));
    (lo, hi)
}

/// `r(tau) = sum x[n]x[n+tau] / sqrt(sum x[n]^2 * sum x[n+tau]^2)` over the overlap.
pub fn normalized_autocorrelation(frame: &[f64], lo: usize, hi: usize) -> Vec<f64> {
    let n = frame.len();
    // prefix sums of squares give both energy terms in O(1) per lag
    let mut cum = Vec::with_capacity(n + 1);
    cum.push(0.0);
    for &x in frame {
        cum.push(cum.last().unwrap() + x * x);
    }
    (lo..=hi)
        .map(|tau| {
            if tau >= n {
                return 0.0;
            }
            let cross: f64 = frame[..n - tau].iter().zip(&frame[tau..]).map(|(a, b)| a * b).sum();
            let e_head = cum[n - tau];
            let e_tail = cum[n] - cum[tau];
            let denom = (e_head * e_tail).sqrt();
            if denom < 1e-20 {
                0.0
            } else {
                cross / denom
            }
        })
        .collect()
}

/// Index of the highest point of the first positive lobe whose peak reaches
/// `floor`. Lobes are maximal runs of positive correlation.
fn first_key_maximum(r: &[f64], floor: f64) -> Option<usize> {
    let mut i = 0;
    while i < r.len() {
        if r[i] <= 0.0 {
            i += 1;
            continue;
        }
        let start = i;
        while i < r.len() && r[i] > 0.0 {
            i += 1;
        }
        let (peak, &v) = r[start..i]
            .iter()
            .enumerate()
            .fold((0, &f64::NEG_INFINITY), |acc, (k, v)| if *v > *acc.1 { (k, v) } else { acc });
        if v >= floor {
            return Some(start + peak);
        }
    }
    None
}

/// Estimate F0 on an unwindowed frame.
pub fn pitch_f0(frame: &[f64], cfg: &FrameConfig, sample_rate: u32) -> PitchEstimate {
    let unvoiced = |strength| PitchEstimate {
        f0_hz: None,
        voiced: false,
        strength,
    };
    let (lo, hi) = lag_range(cfg, frame.len(), sample_rate);
    if hi <= lo {
        return unvoiced(0.0);
    }
    let r = normalized_autocorrelation(frame, lo, hi);
    let (best, &max) = r
        .iter()
        .enumerate()
        .fold((0, &f64::NEG_INFINITY), |acc, (i, v)| if *v > *acc.1 { (i, v) } else { acc });
    if !(max >= cfg.voicing_threshold) {
        return unvoiced(max.max(0.0));
    }

    let chosen = first_key_maximum(&r, OCTAVE_TOLERANCE * max).unwrap_or(best);

    let mut lag = (lo + chosen) as f64;
    if chosen > 0 && chosen + 1 < r.len() {
        let (a, b, c) = (r[chosen - 1], r[chosen], r[chosen + 1]);
        let curvature = a - 2.0 * b + c;
        if curvature < 0.0 {
            lag += (0.5 * (a - c) / curvature).clamp(-0.5, 0.5);
        }
    }
    PitchEstimate {
        f0_hz: Some(sample_rate as f64 / lag),
        voiced: true,
        strength: max,
    }
}

/// Semitones relative to 440 Hz.
pub fn hz_to_semitones(f0: f64) -> f64 {
    12.0 * (f0 / 440.0).log2()
}
