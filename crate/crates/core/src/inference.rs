//! Log-space forward-backward, posteriors and Viterbi decoding.
//!
//! All tables are indexed by `t - p*`, so row 0 is time `p*` and the last row
//! is time `T`. The first `p*` observations only enter as lag context.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::{emission_table, Model};

/// `ln(sum(exp(xs)))`, returning `-inf` for an empty or all `-inf` input.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

#[inline]
fn ln_matrix(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    m.iter().map(|r| r.iter().map(|v| v.ln()).collect()).collect()
}

/// Forward and backward log-variables plus the window log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct TrellisTables {
    pub log_alpha: Vec<Vec<f64>>,
    pub log_beta: Vec<Vec<f64>>,
    pub loglik: f64,
}

/// State marginals `gamma[t][i]` and pairwise marginals `xi[t][i][j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorTables {
    pub gamma: Vec<Vec<f64>>,
    pub xi: Vec<Vec<Vec<f64>>>,
    pub loglik: f64,
}

impl PosteriorTables {
    pub fn n_steps(&self) -> usize {
        self.gamma.len()
    }

    /// Posterior weights of state `i` over the window.
    pub fn gamma_column(&self, i: usize) -> Vec<f64> {
        self.gamma.iter().map(|g| g[i]).collect()
    }
}

/// Forward pass on a precomputed emission table.
pub fn forward_from_emissions(model: &Model, log_b: &[Vec<f64>]) -> (Vec<Vec<f64>>, f64) {
    let n = model.n_states;
    let log_a = ln_matrix(&model.transition);
    let mut alpha: Vec<Vec<f64>> = Vec::with_capacity(log_b.len());
    alpha.push((0..n).map(|i| model.initial[i].ln() + log_b[0][i]).collect());
    let mut scratch = vec![0.0; n];
    for b in &log_b[1..] {
        let prev = alpha.last().expect("non-empty");
        let next = (0..n)
            .map(|i| {
                for j in 0..n {
                    scratch[j] = prev[j] + log_a[j][i];
                }
                logsumexp(&scratch) + b[i]
            })
            .collect();
        alpha.push(next);
    }
    let loglik = logsumexp(alpha.last().expect("non-empty"));
    (alpha, loglik)
}

/// Backward pass on a precomputed emission table.
pub fn backward_from_emissions(model: &Model, log_b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = model.n_states;
    let len = log_b.len();
    let log_a = ln_matrix(&model.transition);
    let mut beta = vec![vec![0.0; n]; len];
    let mut scratch = vec![0.0; n];
    for k in (0..len.saturating_sub(1)).rev() {
        for i in 0..n {
            for j in 0..n {
                scratch[j] = log_a[i][j] + log_b[k + 1][j] + beta[k + 1][j];
            }
            beta[k][i] = logsumexp(&scratch);
        }
    }
    beta
}

/// Forward log-variables and log-likelihood `ln P(x^{p*:T} | x^{0:p*-1})`.
pub fn forward(model: &Model, data: &Dataset) -> Result<(Vec<Vec<f64>>, f64)> {
    let log_b = emission_table(model, data)?;
    Ok(forward_from_emissions(model, &log_b))
}

pub fn backward(model: &Model, data: &Dataset) -> Result<Vec<Vec<f64>>> {
    let log_b = emission_table(model, data)?;
    Ok(backward_from_emissions(model, &log_b))
}

pub fn trellis(model: &Model, data: &Dataset) -> Result<TrellisTables> {
    let log_b = emission_table(model, data)?;
    let (log_alpha, loglik) = forward_from_emissions(model, &log_b);
    let log_beta = backward_from_emissions(model, &log_b);
    Ok(TrellisTables {
        log_alpha,
        log_beta,
        loglik,
    })
}

pub fn loglikelihood(model: &Model, data: &Dataset) -> Result<f64> {
    forward(model, data).map(|(_, ll)| ll)
}

/// Posterior tables from a precomputed emission table.
pub fn posteriors_from_emissions(model: &Model, log_b: &[Vec<f64>]) -> PosteriorTables {
    let n = model.n_states;
    let (alpha, loglik) = forward_from_emissions(model, log_b);
    let beta = backward_from_emissions(model, log_b);
    let log_a = ln_matrix(&model.transition);

    let gamma = alpha
        .iter()
        .zip(&beta)
        .map(|(a, b)| {
            let s: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + y).collect();
            let z = logsumexp(&s);
            s.iter().map(|v| (v - z).exp()).collect()
        })
        .collect();

    let mut xi = Vec::with_capacity(log_b.len().saturating_sub(1));
    let mut flat = vec![0.0; n * n];
    for k in 0..log_b.len().saturating_sub(1) {
        for i in 0..n {
            for j in 0..n {
                flat[i * n + j] = alpha[k][i] + log_a[i][j] + log_b[k + 1][j] + beta[k + 1][j];
            }
        }
        let z = logsumexp(&flat);
        xi.push(
            (0..n)
                .map(|i| (0..n).map(|j| (flat[i * n + j] - z).exp()).collect())
                .collect(),
        );
    }
    PosteriorTables { gamma, xi, loglik }
}

pub fn posteriors(model: &Model, data: &Dataset) -> Result<PosteriorTables> {
    let log_b = emission_table(model, data)?;
    Ok(posteriors_from_emissions(model, &log_b))
}

/// Most probable state path over the window and its joint log-probability.
#[derive(Debug, Clone, PartialEq)]
pub struct ViterbiPath {
    pub states: Vec<usize>,
    pub log_score: f64,
}

/// Viterbi decoding on a precomputed emission table. Ties go to the lowest
/// state index, both in the recursion and in the final argmax. `offset` is
/// the time of row 0 and only labels errors.
pub fn viterbi_from_emissions(model: &Model, log_b: &[Vec<f64>], offset: usize) -> Result<ViterbiPath> {
    let n = model.n_states;
    let log_a = ln_matrix(&model.transition);
    let mut delta: Vec<f64> = (0..n).map(|i| model.initial[i].ln() + log_b[0][i]).collect();
    let mut psi: Vec<Vec<usize>> = Vec::with_capacity(log_b.len());
    check_column(&delta, offset)?;
    for (k, b) in log_b.iter().enumerate().skip(1) {
        let mut back = vec![0usize; n];
        let next: Vec<f64> = (0..n)
            .map(|i| {
                let (arg, best) = argmax((0..n).map(|j| delta[j] + log_a[j][i]));
                back[i] = arg;
                best + b[i]
            })
            .collect();
        check_column(&next, offset + k)?;
        psi.push(back);
        delta = next;
    }
    let (last, log_score) = argmax(delta.iter().copied());
    let mut states = vec![last; log_b.len()];
    for k in (0..psi.len()).rev() {
        states[k] = psi[k][states[k + 1]];
    }
    Ok(ViterbiPath { states, log_score })
}

pub fn viterbi(model: &Model, data: &Dataset) -> Result<ViterbiPath> {
    let log_b = emission_table(model, data)?;
    viterbi_from_emissions(model, &log_b, model.max_lag)
}

fn check_column(col: &[f64], t: usize) -> Result<()> {
    if col.iter().all(|v| *v == f64::NEG_INFINITY || v.is_nan()) {
        return Err(Error::DecodingFailure { t });
    }
    Ok(())
}

/// First index of the maximum; NaN never wins.
fn argmax(values: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (k, v) in values.enumerate() {
        if v > best.1 {
            best = (k, v);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{emission_logpdf, LinearGaussian};

    fn two_state() -> (Model, Dataset) {
        let model = Model::new(
            0,
            vec![vec![0.8, 0.2], vec![0.3, 0.7]],
            vec![0.6, 0.4],
            vec![
                vec![LinearGaussian::constant(0.0, 1.0)],
                vec![LinearGaussian::constant(3.0, 2.0)],
            ],
        )
        .unwrap();
        let data = Dataset::from_rows(vec![vec![0.1], vec![2.5], vec![3.3], vec![-0.4]]).unwrap();
        (model, data)
    }

    #[test]
    fn logsumexp_edge_cases() {
        assert_eq!(logsumexp(&[]), f64::NEG_INFINITY);
        assert_eq!(logsumexp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
        assert!((logsumexp(&[0.0, 0.0]) - 2f64.ln()).abs() < 1e-15);
        assert!((logsumexp(&[-1000.0, -1000.0]) - (-1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn single_state_loglik_is_emission_sum() {
        let model = Model::new(
            1,
            vec![vec![1.0]],
            vec![1.0],
            vec![vec![LinearGaussian {
                parents: vec![],
                lags: 1,
                coefficients: vec![0.5, 0.4],
                variance: 1.5,
            }]],
        )
        .unwrap();
        let data = Dataset::from_rows(vec![vec![1.0], vec![0.2], vec![0.9], vec![1.7]]).unwrap();
        let ll = loglikelihood(&model, &data).unwrap();
        let direct: f64 = (1..4).map(|t| emission_logpdf(&model, 0, &data, t).unwrap()).sum();
        assert!((ll - direct).abs() < 1e-12);

        let beta = backward(&model, &data).unwrap();
        let tail: f64 = (3..4).map(|t| emission_logpdf(&model, 0, &data, t).unwrap()).sum();
        assert!((beta[1][0] - tail).abs() < 1e-12);
        assert_eq!(beta[2][0], 0.0);

        let post = posteriors(&model, &data).unwrap();
        assert!(post.gamma.iter().flatten().all(|g| (g - 1.0).abs() < 1e-15));
        assert!(post.xi.iter().flatten().flatten().all(|x| (x - 1.0).abs() < 1e-15));
    }

    #[test]
    fn single_step_loglik() {
        let (model, data) = two_state();
        let data = data.slice(0, 1).unwrap();
        let ll = loglikelihood(&model, &data).unwrap();
        let terms: Vec<f64> = (0..2)
            .map(|i| model.initial[i].ln() + emission_logpdf(&model, i, &data, 0).unwrap())
            .collect();
        assert!((ll - logsumexp(&terms)).abs() < 1e-14);
    }

    #[test]
    fn trellis_is_time_consistent() {
        let (model, data) = two_state();
        let tr = trellis(&model, &data).unwrap();
        assert!(tr.log_beta.last().unwrap().iter().all(|&b| b == 0.0));
        for (a, b) in tr.log_alpha.iter().zip(&tr.log_beta) {
            let s: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + y).collect();
            assert!((logsumexp(&s) - tr.loglik).abs() < 1e-10);
        }
    }

    #[test]
    fn xi_marginalises_to_gamma() {
        let (model, data) = two_state();
        let post = posteriors(&model, &data).unwrap();
        for (k, x) in post.xi.iter().enumerate() {
            for i in 0..2 {
                let s: f64 = x[i].iter().sum();
                assert!((s - post.gamma[k][i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn symmetric_model_has_uniform_posteriors() {
        let model = Model::new(
            0,
            vec![vec![1.0 / 3.0; 3]; 3],
            vec![1.0 / 3.0; 3],
            vec![vec![LinearGaussian::constant(1.0, 2.0)]; 3],
        )
        .unwrap();
        let data = Dataset::from_rows(vec![vec![0.0], vec![5.0], vec![-2.0]]).unwrap();
        let post = posteriors(&model, &data).unwrap();
        for g in post.gamma.iter().flatten() {
            assert!((g - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn absorbing_start_decodes_constant_path() {
        let model = Model::new(
            0,
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![1.0, 0.0],
            vec![
                vec![LinearGaussian::constant(0.0, 1.0)],
                vec![LinearGaussian::constant(10.0, 1.0)],
            ],
        )
        .unwrap();
        let data = Dataset::from_rows(vec![vec![10.0], vec![10.0], vec![9.0]]).unwrap();
        let path = viterbi(&model, &data).unwrap();
        assert_eq!(path.states, vec![0, 0, 0]);
    }

    #[test]
    fn viterbi_score_bounded_by_loglik() {
        let (model, data) = two_state();
        let path = viterbi(&model, &data).unwrap();
        assert!(path.log_score <= loglikelihood(&model, &data).unwrap());
    }

    #[test]
    fn decoding_failure_names_time() {
        let model = Model::new(
            2,
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![1.0, 0.0],
            vec![
                vec![LinearGaussian::constant(0.0, 1.0)],
                vec![LinearGaussian::constant(0.0, 1.0)],
            ],
        )
        .unwrap();
        let data = Dataset::from_rows(vec![vec![0.0]; 5]).unwrap();
        let log_b = vec![vec![0.0, 0.0], vec![f64::NEG_INFINITY, 0.0], vec![f64::NEG_INFINITY, 0.0]];
        // t = 3: only state 1 reachable, t = 4: only state 0 reachable but it has zero density.
        match viterbi_from_emissions(&model, &log_b, model.max_lag) {
            Err(Error::DecodingFailure { t }) => assert_eq!(t, 4),
            other => panic!("unexpected {other:?}"),
        }
        assert!(viterbi(&model, &data).is_ok());
    }

    #[test]
    fn empty_window_is_an_error() {
        let (mut model, data) = two_state();
        model.max_lag = 4;
        assert!(matches!(loglikelihood(&model, &data), Err(Error::EmptyWindow { .. })));
    }
}
