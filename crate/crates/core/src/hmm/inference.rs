use super::{log_sum_exp, Hmm, HmmError, Observations};

/// `B[t][i] = log p(obs[t] | state i)`.
pub fn emission_log_probs<O: Observations + ?Sized>(h: &Hmm, obs: &O) -> Result<Vec<Vec<f64>>, HmmError> {
    let t_len = h.check_obs(obs)?;
    Ok((0..t_len)
        .map(|t| {
            let x = obs.frame(t);
            h.states().iter().map(|s| s.logpdf_unchecked(x)).collect()
        })
        .collect())
}

pub(crate) fn forward_from_emissions(h: &Hmm, b: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>) {
    let n = h.n_states();
    let trans = h.log_trans();
    let mut alpha: Vec<Vec<f64>> = Vec::with_capacity(b.len());
    alpha.push((0..n).map(|i| h.log_init()[i] + b[0][i]).collect());
    let mut scratch = vec![0.0; n];
    for bt in &b[1..] {
        let prev = alpha.last().unwrap();
        let row = (0..n)
            .map(|j| {
                for i in 0..n {
                    scratch[i] = prev[i] + trans[i][j];
                }
                log_sum_exp(&scratch) + bt[j]
            })
            .collect();
        alpha.push(row);
    }
    (log_sum_exp(alpha.last().unwrap()), alpha)
}

pub(crate) fn backward_from_emissions(h: &Hmm, b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = h.n_states();
    let t_len = b.len();
    let trans = h.log_trans();
    let mut beta = vec![vec![0.0; n]; t_len];
    let mut scratch = vec![0.0; n];
    for t in (0..t_len - 1).rev() {
        for i in 0..n {
            for j in 0..n {
                scratch[j] = trans[i][j] + b[t + 1][j] + beta[t + 1][j];
            }
            beta[t][i] = log_sum_exp(&scratch);
        }
    }
    beta
}

/// Log-domain forward pass: `(log p(obs), alpha)`.
pub fn log_forward<O: Observations + ?Sized>(h: &Hmm, obs: &O) -> Result<(f64, Vec<Vec<f64>>), HmmError> {
    let b = emission_log_probs(h, obs)?;
    Ok(forward_from_emissions(h, &b))
}

/// Log-domain backward pass; `beta[T-1]` is all zeros.
pub fn log_backward<O: Observations + ?Sized>(h: &Hmm, obs: &O) -> Result<Vec<Vec<f64>>, HmmError> {
    let b = emission_log_probs(h, obs)?;
    Ok(backward_from_emissions(h, &b))
}

/// Most likely state path and its joint log-probability. Ties go to the
/// lower state index.
pub fn viterbi<O: Observations + ?Sized>(h: &Hmm, obs: &O) -> Result<(Vec<usize>, f64), HmmError> {
    let b = emission_log_probs(h, obs)?;
    let n = h.n_states();
    let t_len = b.len();
    let trans = h.log_trans();

    let mut delta: Vec<f64> = (0..n).map(|i| h.log_init()[i] + b[0][i]).collect();
    let mut back = vec![vec![0usize; n]; t_len];
    for t in 1..t_len {
        let mut next = vec![f64::NEG_INFINITY; n];
        for j in 0..n {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for i in 0..n {
                let v = delta[i] + trans[i][j];
                if v > best {
                    best = v;
                    arg = i;
                }
            }
            next[j] = best + b[t][j];
            back[t][j] = arg;
        }
        delta = next;
    }

    let mut last = 0;
    for i in 1..n {
        if delta[i] > delta[last] {
            last = i;
        }
    }
    let score = delta[last];
    let mut path = vec![0; t_len];
    path[t_len - 1] = last;
    for t in (1..t_len).rev() {
        path[t - 1] = back[t][path[t]];
    }
    Ok((path, score))
}

/// Length-normalized log-likelihood, `log p(obs) / T`.
pub fn avg_loglik<O: Observations + ?Sized>(h: &Hmm, obs: &O) -> Result<f64, HmmError> {
    let (ll, _) = log_forward(h, obs)?;
    Ok(ll / obs.n_frames() as f64)
}
