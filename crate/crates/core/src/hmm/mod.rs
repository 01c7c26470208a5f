//! Diagonal-Gaussian hidden Markov models in the log domain.

mod inference;
mod train;

pub use inference::{avg_loglik, emission_log_probs, log_backward, log_forward, viterbi};
pub use train::{baum_welch, baum_welch_with, flat_start, TrainOutcome};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureMatrix;

/// Lower bound on every per-dimension emission variance.
pub const VARIANCE_FLOOR: f64 = 1e-3;

const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HmmError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("observation sequence is empty")]
    EmptySequence,
    #[error("no sequence has at least {needed} frames")]
    TooShort { needed: usize },
    #[error("no training sequences")]
    NoSequences,
    #[error("state {state} received zero total occupancy")]
    Degenerate { state: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

/// Anything that can be read as a sequence of equal-length frames.
pub trait Observations {
    fn n_frames(&self) -> usize;
    fn frame(&self, t: usize) -> &[f64];
}

impl Observations for FeatureMatrix {
    fn n_frames(&self) -> usize {
        self.frame_count()
    }

    fn frame(&self, t: usize) -> &[f64] {
        self.row(t)
    }
}

impl<T: Observations + ?Sized> Observations for &T {
    fn n_frames(&self) -> usize {
        (**self).n_frames()
    }

    fn frame(&self, t: usize) -> &[f64] {
        (**self).frame(t)
    }
}

impl Observations for [Vec<f64>] {
    fn n_frames(&self) -> usize {
        self.len()
    }

    fn frame(&self, t: usize) -> &[f64] {
        &self[t]
    }
}

impl Observations for Vec<Vec<f64>> {
    fn n_frames(&self) -> usize {
        self.len()
    }

    fn frame(&self, t: usize) -> &[f64] {
        &self[t]
    }
}

/// `log(sum(exp(xs)))`, returning `-inf` for empty or all `-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianState {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl GaussianState {
    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> Result<Self, HmmError> {
        if mean.len() != var.len() {
            return Err(HmmError::DimensionMismatch {
                expected: mean.len(),
                found: var.len(),
            });
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(HmmError::InvalidModel("non-finite mean".into()));
        }
        if var.iter().any(|v| !(v.is_finite() && *v >= VARIANCE_FLOOR)) {
            return Err(HmmError::InvalidModel(format!("variances must be finite and >= {VARIANCE_FLOOR}")));
        }
        Ok(Self { mean, var })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `-0.5 * sum_d [ ln(2 pi var_d) + (x_d - mean_d)^2 / var_d ]`
    pub fn logpdf(&self, x: &[f64]) -> Result<f64, HmmError> {
        if x.len() != self.dim() {
            return Err(HmmError::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(self.logpdf_unchecked(x))
    }

    pub(crate) fn logpdf_unchecked(&self, x: &[f64]) -> f64 {
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        let mut acc = 0.0;
        for ((xd, m), v) in x.iter().zip(&self.mean).zip(&self.var) {
            let d = xd - m;
            acc += ln_2pi + v.ln() + d * d / v;
        }
        -0.5 * acc
    }
}

pub fn gaussian_logpdf(x: &[f64], s: &GaussianState) -> Result<f64, HmmError> {
    s.logpdf(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmmConfig {
    pub n_states: usize,
    pub max_iters: usize,
    pub rel_tol: f64,
}

impl Default for HmmConfig {
    fn default() -> Self {
        Self {
            n_states: 3,
            max_iters: 20,
            rel_tol: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hmm {
    log_init: Vec<f64>,
    log_trans: Vec<Vec<f64>>,
    states: Vec<GaussianState>,
    left_to_right: bool,
}

impl Hmm {
    pub fn new(
        log_init: Vec<f64>,
        log_trans: Vec<Vec<f64>>,
        states: Vec<GaussianState>,
        left_to_right: bool,
    ) -> Result<Self, HmmError> {
        let h = Self {
            log_init,
            log_trans,
            states,
            left_to_right,
        };
        h.validate()?;
        Ok(h)
    }

    /// Left-to-right chain where state `i` stays with probability `self_loop[i]`.
    /// The final state always loops with probability 1.
    pub fn left_to_right(states: Vec<GaussianState>, self_loop: &[f64]) -> Result<Self, HmmError> {
        let n = states.len();
        let mut log_trans = vec![vec![f64::NEG_INFINITY; n]; n];
        for i in 0..n {
            if i + 1 == n {
                log_trans[i][i] = 0.0;
            } else {
                let p = self_loop.get(i).copied().unwrap_or(0.5).clamp(0.0, 1.0);
                log_trans[i][i] = p.ln();
                log_trans[i][i + 1] = (1.0 - p).ln();
            }
        }
        let mut log_init = vec![f64::NEG_INFINITY; n];
        if n > 0 {
            log_init[0] = 0.0;
        }
        Self::new(log_init, log_trans, states, true)
    }

    pub fn validate(&self) -> Result<(), HmmError> {
        let n = self.states.len();
        let bad = |m: String| Err(HmmError::InvalidModel(m));
        if n == 0 {
            return bad("no states".into());
        }
        if self.log_init.len() != n || self.log_trans.len() != n || self.log_trans.iter().any(|r| r.len() != n) {
            return bad(format!("probability tables do not match {n} states"));
        }
        let dim = self.states[0].dim();
        if let Some(s) = self.states.iter().find(|s| s.dim() != dim) {
            return Err(HmmError::DimensionMismatch {
                expected: dim,
                found: s.dim(),
            });
        }
        for s in &self.states {
            if s.var.iter().any(|v| !(*v >= VARIANCE_FLOOR && v.is_finite())) || s.mean.iter().any(|m| !m.is_finite()) {
                return bad("emission parameters violate the variance floor or are non-finite".into());
            }
        }
        let sums_to_one = |row: &[f64]| {
            row.iter().all(|v| !v.is_nan() && *v <= 1e-12)
                && (row.iter().map(|v| v.exp()).sum::<f64>() - 1.0).abs() <= ROW_SUM_TOL
        };
        if !sums_to_one(&self.log_init) {
            return bad("initial distribution does not sum to 1".into());
        }
        for (i, row) in self.log_trans.iter().enumerate() {
            if !sums_to_one(row) {
                return bad(format!("transition row {i} does not sum to 1"));
            }
        }
        if self.left_to_right {
            if self.log_init[0] != 0.0 {
                return bad("left-to-right model must start in state 0".into());
            }
            for (i, row) in self.log_trans.iter().enumerate() {
                if row.iter().enumerate().any(|(j, v)| (j < i || j > i + 1) && *v != f64::NEG_INFINITY) {
                    return bad(format!("row {i} allows a non left-to-right transition"));
                }
            }
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn dim(&self) -> usize {
        self.states[0].dim()
    }

    pub fn log_init(&self) -> &[f64] {
        &self.log_init
    }

    pub fn log_trans(&self) -> &[Vec<f64>] {
        &self.log_trans
    }

    pub fn states(&self) -> &[GaussianState] {
        &self.states
    }

    pub fn is_left_to_right(&self) -> bool {
        self.left_to_right
    }

    pub(crate) fn check_obs<O: Observations + ?Sized>(&self, obs: &O) -> Result<usize, HmmError> {
        let t = obs.n_frames();
        if t == 0 {
            return Err(HmmError::EmptySequence);
        }
        let dim = self.dim();
        for i in 0..t {
            let found = obs.frame(i).len();
            if found != dim {
                return Err(HmmError::DimensionMismatch { expected: dim, found });
            }
        }
        Ok(t)
    }
}
