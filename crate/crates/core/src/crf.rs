//! Linear-chain CRF over per-sentence class scores.
//!
//! A label sequence `y` over `N` positions scores
//! `start[y0] + Σ emissions[t][yt] + Σ transitions[y(t-1)][yt] + end[y(N-1)]`.
//! All recursions run in log space.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{contract, Result};

/// Largest number of sequences the enumeration oracle will visit.
pub const BRUTE_FORCE_LIMIT: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct CrfParams {
    /// `transitions[[i, j]]` scores label `j` directly after label `i`.
    pub transitions: Array2<f64>,
    pub start: Array1<f64>,
    pub end: Array1<f64>,
}

impl CrfParams {
    /// All-zero scores: decoding then reduces to per-position argmax.
    pub fn zeros(num_labels: usize) -> Self {
        Self {
            transitions: Array2::zeros((num_labels, num_labels)),
            start: Array1::zeros(num_labels),
            end: Array1::zeros(num_labels),
        }
    }

    pub fn num_labels(&self) -> usize {
        self.start.len()
    }

    fn check(&self, emissions: &ArrayView2<f64>) -> Result<()> {
        let c = self.num_labels();
        if emissions.nrows() == 0 {
            return contract("emission matrix has no positions");
        }
        if emissions.ncols() != c || self.transitions.dim() != (c, c) || self.end.len() != c {
            return contract(format!(
                "emission width {} does not match CRF with {c} labels",
                emissions.ncols()
            ));
        }
        Ok(())
    }

    /// Score of one label sequence.
    pub fn path_score(&self, emissions: ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
        self.check(&emissions)?;
        check_labels(labels, emissions.nrows(), self.num_labels())?;
        Ok(self.path_score_unchecked(&emissions, labels))
    }

    fn path_score_unchecked(&self, emissions: &ArrayView2<f64>, labels: &[usize]) -> f64 {
        let mut score = self.start[labels[0]];
        for (t, &y) in labels.iter().enumerate() {
            score += emissions[[t, y]];
            if t > 0 {
                score += self.transitions[[labels[t - 1], y]];
            }
        }
        score + self.end[labels[labels.len() - 1]]
    }
}

fn check_labels(labels: &[usize], len: usize, num_labels: usize) -> Result<()> {
    if labels.len() != len {
        return contract(format!("{} labels given for {len} positions", labels.len()));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= num_labels) {
        return contract(format!(
            "label index {bad} out of range for {num_labels} labels"
        ));
    }
    Ok(())
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Forward log-scores: `alpha[[t, j]]` is the log-sum over prefixes ending in `j` at `t`.
fn forward_scores(emissions: &ArrayView2<f64>, crf: &CrfParams) -> Array2<f64> {
    let (n, c) = emissions.dim();
    let mut alpha = Array2::zeros((n, c));
    for j in 0..c {
        alpha[[0, j]] = crf.start[j] + emissions[[0, j]];
    }
    for t in 1..n {
        for j in 0..c {
            let prev = alpha.row(t - 1);
            alpha[[t, j]] =
                log_sum_exp((0..c).map(|i| prev[i] + crf.transitions[[i, j]])) + emissions[[t, j]];
        }
    }
    alpha
}

/// Backward log-scores: `beta[[t, i]]` is the log-sum over suffixes after `i` at `t`.
fn backward_scores(emissions: &ArrayView2<f64>, crf: &CrfParams) -> Array2<f64> {
    let (n, c) = emissions.dim();
    let mut beta = Array2::zeros((n, c));
    for i in 0..c {
        beta[[n - 1, i]] = crf.end[i];
    }
    for t in (0..n - 1).rev() {
        for i in 0..c {
            let next = beta.row(t + 1);
            beta[[t, i]] = log_sum_exp(
                (0..c).map(|j| crf.transitions[[i, j]] + emissions[[t + 1, j]] + next[j]),
            );
        }
    }
    beta
}

fn final_log_sum(alpha: &Array2<f64>, end: &ArrayView1<f64>) -> f64 {
    let last = alpha.row(alpha.nrows() - 1);
    log_sum_exp((0..end.len()).map(|j| last[j] + end[j]))
}

/// Log of the sum of exponentiated scores over all label sequences.
pub fn log_partition(emissions: ArrayView2<f64>, crf: &CrfParams) -> Result<f64> {
    crf.check(&emissions)?;
    let alpha = forward_scores(&emissions, crf);
    Ok(final_log_sum(&alpha, &crf.end.view()))
}

/// Log-probability of `labels` under the CRF; never positive.
pub fn sequence_log_likelihood(
    emissions: ArrayView2<f64>,
    crf: &CrfParams,
    labels: &[usize],
) -> Result<f64> {
    let gold = crf.path_score(emissions, labels)?;
    Ok((gold - log_partition(emissions, crf)?).min(0.0))
}

/// Highest-scoring label sequence and its score.
///
/// Among equal-scoring sequences the one with the smaller label at the latest
/// position where they differ wins.
pub fn viterbi_decode(emissions: ArrayView2<f64>, crf: &CrfParams) -> Result<(Vec<usize>, f64)> {
    crf.check(&emissions)?;
    let (n, c) = emissions.dim();
    let mut delta = Array1::from_shape_fn(c, |j| crf.start[j] + emissions[[0, j]]);
    let mut back = Array2::<usize>::zeros((n, c));
    for t in 1..n {
        let mut next = Array1::zeros(c);
        for j in 0..c {
            let mut best = 0;
            let mut best_score = delta[0] + crf.transitions[[0, j]];
            for i in 1..c {
                let s = delta[i] + crf.transitions[[i, j]];
                if s > best_score {
                    best = i;
                    best_score = s;
                }
            }
            back[[t, j]] = best;
            next[j] = best_score + emissions[[t, j]];
        }
        delta = next;
    }
    let mut last = 0;
    let mut best_score = delta[0] + crf.end[0];
    for j in 1..c {
        let s = delta[j] + crf.end[j];
        if s > best_score {
            last = j;
            best_score = s;
        }
    }
    let mut labels = vec![0; n];
    labels[n - 1] = last;
    for t in (1..n).rev() {
        labels[t - 1] = back[[t, labels[t]]];
    }
    Ok((labels, best_score))
}

/// Gradients of the negative log-likelihood of a gold sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfGradients {
    pub nll: f64,
    pub emissions: Array2<f64>,
    pub transitions: Array2<f64>,
    pub start: Array1<f64>,
    pub end: Array1<f64>,
}

/// Negative log-likelihood and its gradients via forward-backward.
///
/// Emission gradients are posterior marginals minus gold indicators.
pub fn crf_gradients(
    emissions: ArrayView2<f64>,
    crf: &CrfParams,
    labels: &[usize],
) -> Result<CrfGradients> {
    crf.check(&emissions)?;
    let (n, c) = emissions.dim();
    check_labels(labels, n, c)?;

    let alpha = forward_scores(&emissions, crf);
    let beta = backward_scores(&emissions, crf);
    let log_z = final_log_sum(&alpha, &crf.end.view());
    let gold = crf.path_score_unchecked(&emissions, labels);

    let mut d_emissions = Array2::zeros((n, c));
    for t in 0..n {
        for j in 0..c {
            d_emissions[[t, j]] = (alpha[[t, j]] + beta[[t, j]] - log_z).exp();
        }
        d_emissions[[t, labels[t]]] -= 1.0;
    }

    // start/end enter every path exactly like the first/last emission row
    let d_start = d_emissions.row(0).to_owned();
    let d_end = d_emissions.row(n - 1).to_owned();

    let mut d_transitions = Array2::zeros((c, c));
    for t in 1..n {
        for i in 0..c {
            for j in 0..c {
                d_transitions[[i, j]] += (alpha[[t - 1, i]]
                    + crf.transitions[[i, j]]
                    + emissions[[t, j]]
                    + beta[[t, j]]
                    - log_z)
                    .exp();
            }
        }
        d_transitions[[labels[t - 1], labels[t]]] -= 1.0;
    }

    Ok(CrfGradients {
        nll: (log_z - gold).max(0.0),
        emissions: d_emissions,
        transitions: d_transitions,
        start: d_start,
        end: d_end,
    })
}

fn sequence_count(n: usize, c: usize) -> Option<usize> {
    let mut count: usize = 1;
    for _ in 0..n {
        count = count.checked_mul(c)?;
        if count > BRUTE_FORCE_LIMIT {
            return None;
        }
    }
    Some(count)
}

/// Calls `visit` on every label sequence of length `n` over `c` labels, in
/// lexicographic order.
fn enumerate_sequences(n: usize, c: usize, mut visit: impl FnMut(&[usize])) {
    let mut labels = vec![0; n];
    loop {
        visit(&labels);
        let mut t = n;
        loop {
            if t == 0 {
                return;
            }
            t -= 1;
            labels[t] += 1;
            if labels[t] < c {
                break;
            }
            labels[t] = 0;
        }
    }
}

fn brute_force_guard(emissions: &ArrayView2<f64>, crf: &CrfParams) -> Result<usize> {
    crf.check(emissions)?;
    let (n, c) = emissions.dim();
    sequence_count(n, c).ok_or_else(|| {
        crate::error::Error::Contract(format!(
            "{c}^{n} sequences exceed the enumeration limit of {BRUTE_FORCE_LIMIT}"
        ))
    })
}

/// Reference log-partition by enumerating every sequence.
pub fn brute_force_log_partition(emissions: ArrayView2<f64>, crf: &CrfParams) -> Result<f64> {
    brute_force_guard(&emissions, crf)?;
    let (n, c) = emissions.dim();
    let mut scores = Vec::new();
    enumerate_sequences(n, c, |y| {
        scores.push(crf.path_score_unchecked(&emissions, y))
    });
    Ok(log_sum_exp(scores.into_iter()))
}

/// Reference decoder by enumerating every sequence, with the same tie rule as
/// [`viterbi_decode`].
pub fn brute_force_decode(
    emissions: ArrayView2<f64>,
    crf: &CrfParams,
) -> Result<(Vec<usize>, f64)> {
    brute_force_guard(&emissions, crf)?;
    let (n, c) = emissions.dim();
    let mut best: Option<(Vec<usize>, f64)> = None;
    enumerate_sequences(n, c, |y| {
        let score = crf.path_score_unchecked(&emissions, y);
        let better = match &best {
            None => true,
            Some((labels, s)) => {
                score > *s || (score == *s && y.iter().rev().lt(labels.iter().rev()))
            }
        };
        if better {
            best = Some((y.to_vec(), score));
        }
    });
    Ok(best.expect("at least one sequence"))
}

/// Number of sequences the oracle would enumerate, if within the limit.
pub fn brute_force_size(n: usize, c: usize) -> Option<usize> {
    sequence_count(n, c)
}
