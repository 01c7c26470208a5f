use super::inference::{backward_from_emissions, emission_log_probs, forward_from_emissions};
use super::{GaussianState, Hmm, HmmConfig, HmmError, Observations, VARIANCE_FLOOR};
use crate::exec::Exec;

/// Occupancy below this counts as zero.
const MIN_OCCUPANCY: f64 = 1e-10;

/// Uniform segmentation initialisation of a left-to-right model.
///
/// Sequences shorter than `n_states` frames are skipped.
pub fn flat_start<O: Observations>(sequences: &[O], n_states: usize) -> Result<Hmm, HmmError> {
    if n_states == 0 {
        return Err(HmmError::InvalidModel("n_states must be positive".into()));
    }
    let usable: Vec<&O> = sequences.iter().filter(|s| s.n_frames() >= n_states).collect();
    if usable.is_empty() {
        return Err(HmmError::TooShort { needed: n_states });
    }
    let dim = usable[0].frame(0).len();
    for s in &usable {
        for t in 0..s.n_frames() {
            if s.frame(t).len() != dim {
                return Err(HmmError::DimensionMismatch {
                    expected: dim,
                    found: s.frame(t).len(),
                });
            }
        }
    }

    let segment = |t_len: usize, i: usize| (i * t_len / n_states)..((i + 1) * t_len / n_states);
    let mut states = Vec::with_capacity(n_states);
    for i in 0..n_states {
        let mut count = 0usize;
        let mut sum = vec![0.0; dim];
        for s in &usable {
            for t in segment(s.n_frames(), i) {
                count += 1;
                for (acc, x) in sum.iter_mut().zip(s.frame(t)) {
                    *acc += x;
                }
            }
        }
        let mean: Vec<f64> = sum.iter().map(|v| v / count as f64).collect();
        let mut var = vec![0.0; dim];
        for s in &usable {
            for t in segment(s.n_frames(), i) {
                for ((acc, x), m) in var.iter_mut().zip(s.frame(t)).zip(&mean) {
                    *acc += (x - m).powi(2);
                }
            }
        }
        let var = var.iter().map(|v| (v / count as f64).max(VARIANCE_FLOOR)).collect();
        states.push(GaussianState::new(mean, var)?);
    }

    let total: usize = usable.iter().map(|s| s.n_frames()).sum();
    let avg_segment = total as f64 / (n_states * usable.len()) as f64;
    let self_loop = 1.0 - 1.0 / avg_segment;
    Hmm::left_to_right(states, &vec![self_loop; n_states])
}

/// Result of Baum-Welch re-estimation.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Hmm,
    /// Total log-likelihood of the initial model followed by the model
    /// after each update; the last entry belongs to `model`.
    pub loglik_history: Vec<f64>,
}

impl TrainOutcome {
    pub fn iterations(&self) -> usize {
        self.loglik_history.len().saturating_sub(1)
    }
}

struct SequenceStats {
    loglik: f64,
    /// Linear-domain state posteriors, T x N.
    gamma: Vec<Vec<f64>>,
    /// Expected transition counts, N x N.
    xi: Vec<Vec<f64>>,
}

fn expectations<O: Observations>(h: &Hmm, obs: &O) -> Result<SequenceStats, HmmError> {
    let b = emission_log_probs(h, obs)?;
    let (ll, alpha) = forward_from_emissions(h, &b);
    if !ll.is_finite() {
        return Err(HmmError::InvalidModel("sequence has zero likelihood under the model".into()));
    }
    let beta = backward_from_emissions(h, &b);
    let n = h.n_states();
    let t_len = b.len();
    let trans = h.log_trans();

    let gamma = (0..t_len)
        .map(|t| (0..n).map(|i| (alpha[t][i] + beta[t][i] - ll).exp()).collect())
        .collect();
    let mut xi = vec![vec![0.0; n]; n];
    for t in 0..t_len.saturating_sub(1) {
        for i in 0..n {
            if alpha[t][i] == f64::NEG_INFINITY {
                continue;
            }
            for j in 0..n {
                if trans[i][j] == f64::NEG_INFINITY {
                    continue;
                }
                xi[i][j] += (alpha[t][i] + trans[i][j] + b[t + 1][j] + beta[t + 1][j] - ll).exp();
            }
        }
    }
    Ok(SequenceStats { loglik: ll, gamma, xi })
}

fn e_step<O: Observations + Sync>(h: &Hmm, sequences: &[O], exec: Exec) -> Result<Vec<SequenceStats>, HmmError> {
    exec.try_map(sequences, |s| expectations(h, s))
}

fn m_step<O: Observations>(h: &Hmm, sequences: &[O], stats: &[SequenceStats]) -> Result<Hmm, HmmError> {
    let n = h.n_states();
    let dim = h.dim();

    let mut occupancy = vec![0.0; n];
    let mut sums = vec![vec![0.0; dim]; n];
    for (seq, st) in sequences.iter().zip(stats) {
        for (t, g) in st.gamma.iter().enumerate() {
            let x = seq.frame(t);
            for i in 0..n {
                occupancy[i] += g[i];
                for d in 0..dim {
                    sums[i][d] += g[i] * x[d];
                }
            }
        }
    }
    if let Some(state) = occupancy.iter().position(|&o| !(o >= MIN_OCCUPANCY)) {
        return Err(HmmError::Degenerate { state });
    }
    let means: Vec<Vec<f64>> = sums
        .iter()
        .zip(&occupancy)
        .map(|(s, o)| s.iter().map(|v| v / o).collect())
        .collect();

    let mut sq = vec![vec![0.0; dim]; n];
    for (seq, st) in sequences.iter().zip(stats) {
        for (t, g) in st.gamma.iter().enumerate() {
            let x = seq.frame(t);
            for i in 0..n {
                for d in 0..dim {
                    sq[i][d] += g[i] * (x[d] - means[i][d]).powi(2);
                }
            }
        }
    }
    let states = means
        .into_iter()
        .zip(sq)
        .zip(&occupancy)
        .map(|((mean, s), o)| GaussianState::new(mean, s.iter().map(|v| (v / o).max(VARIANCE_FLOOR)).collect()))
        .collect::<Result<Vec<_>, _>>()?;

    let mut log_trans = h.log_trans().to_vec();
    for (i, row) in log_trans.iter_mut().enumerate() {
        let counts: Vec<f64> = (0..n).map(|j| stats.iter().map(|s| s.xi[i][j]).sum()).collect();
        let total: f64 = counts.iter().sum();
        if total > 0.0 {
            for (cell, c) in row.iter_mut().zip(&counts) {
                // structural zeros stay zero
                if *cell != f64::NEG_INFINITY {
                    *cell = (c / total).ln();
                }
            }
        }
    }

    let log_init = if h.is_left_to_right() {
        h.log_init().to_vec()
    } else {
        let mut init = vec![0.0; n];
        for st in stats {
            for (acc, g) in init.iter_mut().zip(&st.gamma[0]) {
                *acc += g;
            }
        }
        let total: f64 = init.iter().sum();
        init.iter().map(|v| (v / total).ln()).collect()
    };

    Hmm::new(log_init, log_trans, states, h.is_left_to_right())
}

/// EM re-estimation of all parameters with per-dimension variance flooring.
///
/// Stops after `cfg.max_iters` updates or once the relative log-likelihood
/// improvement drops below `cfg.rel_tol`. Structural zeros in the transition
/// matrix are preserved.
pub fn baum_welch<O: Observations + Sync>(h: &Hmm, sequences: &[O], cfg: &HmmConfig) -> Result<TrainOutcome, HmmError> {
    baum_welch_with(h, sequences, cfg, Exec::default())
}

pub fn baum_welch_with<O: Observations + Sync>(
    h: &Hmm,
    sequences: &[O],
    cfg: &HmmConfig,
    exec: Exec,
) -> Result<TrainOutcome, HmmError> {
    if sequences.is_empty() {
        return Err(HmmError::NoSequences);
    }
    let mut model = h.clone();
    let mut stats = e_step(&model, sequences, exec)?;
    let total = |st: &[SequenceStats]| st.iter().map(|s| s.loglik).sum::<f64>();
    let mut history = vec![total(&stats)];

    for _ in 0..cfg.max_iters {
        model = m_step(&model, sequences, &stats)?;
        stats = e_step(&model, sequences, exec)?;
        let prev = *history.last().unwrap();
        let ll = total(&stats);
        history.push(ll);
        if (ll - prev) / prev.abs().max(f64::MIN_POSITIVE) < cfg.rel_tol {
            break;
        }
    }
    Ok(TrainOutcome {
        model,
        loglik_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn flat_start_single_state_is_sample_fit() {
        let seq: Vec<Vec<f64>> = [1.0, 2.0, 4.0, 5.0].iter().map(|&x| vec![x, 0.0]).collect();
        let h = flat_start(&[seq], 1).unwrap();
        assert_eq!(h.states()[0].mean, vec![3.0, 0.0]);
        assert_eq!(h.states()[0].var, vec![2.5, VARIANCE_FLOOR]);
        assert_eq!(h.log_trans()[0][0], 0.0);
    }

    #[test]
    fn flat_start_identical_frames_floor() {
        let seq = vec![vec![0.7, -0.2]; 9];
        let h = flat_start(&[seq], 3).unwrap();
        for s in h.states() {
            assert_eq!(s.var, vec![VARIANCE_FLOOR; 2]);
        }
        // avg segment 3 frames -> self loop 2/3
        assert!((h.log_trans()[0][0].exp() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn flat_start_pools_segments() {
        // two sequences, N = 2: segment 0 = first half of each
        let a: Vec<Vec<f64>> = [0.0, 2.0, 10.0, 12.0].iter().map(|&x| vec![x]).collect();
        let b: Vec<Vec<f64>> = [4.0, 20.0].iter().map(|&x| vec![x]).collect();
        let h = flat_start(&[a, b], 2).unwrap();
        // state 0: {0, 2, 4}; state 1: {10, 12, 20}
        assert!((h.states()[0].mean[0] - 2.0).abs() < 1e-12);
        assert!((h.states()[0].var[0] - 8.0 / 3.0).abs() < 1e-12);
        assert!((h.states()[1].mean[0] - 14.0).abs() < 1e-12);
        assert!((h.states()[1].var[0] - 56.0 / 3.0).abs() < 1e-12);
        // 6 frames over 2 states x 2 sequences -> avg segment 1.5
        assert!((h.log_trans()[0][0].exp() - (1.0 - 1.0 / 1.5)).abs() < 1e-12);
    }

    #[test]
    fn flat_start_too_short() {
        let seq = vec![vec![0.0]; 2];
        assert_eq!(flat_start(&[seq], 3).unwrap_err(), HmmError::TooShort { needed: 3 });
    }

    #[test]
    fn single_state_em_is_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let normal = Normal::new(1.5, 0.7).unwrap();
        let seqs: Vec<Vec<Vec<f64>>> = (0..3)
            .map(|_| (0..40).map(|_| vec![normal.sample(&mut rng), 2.0]).collect())
            .collect();
        let init = Hmm::new(
            vec![0.0],
            vec![vec![0.0]],
            vec![GaussianState::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap()],
            true,
        )
        .unwrap();
        let cfg = HmmConfig {
            n_states: 1,
            max_iters: 1,
            rel_tol: 0.0,
        };
        let out = baum_welch(&init, &seqs, &cfg).unwrap();
        let all: Vec<f64> = seqs.iter().flatten().map(|r| r[0]).collect();
        let mean = all.iter().sum::<f64>() / all.len() as f64;
        let var = all.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / all.len() as f64;
        let s = &out.model.states()[0];
        assert!((s.mean[0] - mean).abs() < 1e-9);
        assert!((s.var[0] - var).abs() < 1e-9);
        assert_eq!(s.var[1], VARIANCE_FLOOR);
        assert_eq!(out.iterations(), 1);
    }

    #[test]
    fn degenerate_state_reported() {
        // state 1 is unreachable: self-loop 1 in state 0
        let st = |m| GaussianState::new(vec![m], vec![1.0]).unwrap();
        let h = Hmm::left_to_right(vec![st(0.0), st(1.0)], &[1.0]).unwrap();
        let seq = vec![vec![0.1], vec![0.2], vec![0.3]];
        assert_eq!(
            baum_welch(&h, &[seq], &HmmConfig::default()).unwrap_err(),
            HmmError::Degenerate { state: 1 }
        );
    }

    #[test]
    fn empty_training_set() {
        let h = Hmm::left_to_right(vec![GaussianState::new(vec![0.0], vec![1.0]).unwrap()], &[]).unwrap();
        let none: Vec<Vec<Vec<f64>>> = vec![];
        assert_eq!(baum_welch(&h, &none, &HmmConfig::default()).unwrap_err(), HmmError::NoSequences);
    }
}
