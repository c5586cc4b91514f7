//! Expectation-maximisation for fixed structures.
//!
//! The M-step has closed forms for the initial distribution and the
//! transition matrix. For each `(state, variable)` the intercept, parent
//! weights and AR weights solve a weighted least-squares problem whose
//! weights are the state posteriors, and the variance is the weighted mean
//! squared residual.

use log::warn;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::inference::{posteriors, PosteriorTables};
use crate::linalg::{solve_normal_equations, RidgeSolution};
use crate::model::{variance_floors, LinearGaussian, Model};

/// A state whose total posterior mass falls below this is treated as starved.
pub const STARVED_MASS: f64 = 1e-10;

/// Slack allowed on the monotone log-likelihood trace, relative to `|LL|`.
pub const MONOTONE_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmConfig {
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            max_iter: 200,
        }
    }
}

/// Diagnostics from one or more M-steps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MStepInfo {
    /// `(state, variable)` pairs whose normal equations needed a ridge.
    pub ridged: Vec<(usize, usize)>,
    /// States with no posterior mass; their emission parameters were kept.
    pub starved: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmReport {
    /// `LL` of the starting model followed by `LL` after each step.
    pub ll_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Set when a step produced a non-finite likelihood; the returned model is
    /// the last one with a finite likelihood.
    pub aborted: Option<String>,
    pub info: MStepInfo,
}

impl EmReport {
    pub fn final_loglik(&self) -> f64 {
        self.ll_trace.last().copied().unwrap_or(f64::NAN)
    }

    /// True if no step lowered the likelihood by more than the relative slack.
    pub fn is_monotone(&self, slack: f64) -> bool {
        self.ll_trace
            .windows(2)
            .all(|w| w[1] >= w[0] - slack * w[0].abs())
    }
}

/// `pi*_i = gamma[p*][i]`.
pub fn update_initial(post: &PosteriorTables) -> Vec<f64> {
    let g = &post.gamma[0];
    let s: f64 = g.iter().sum();
    g.iter().map(|v| v / s).collect()
}

/// `a*_ij = sum_t xi[t][i][j] / sum_t gamma[t][i]` over `t = p* .. T-1`.
/// Returns the matrix and the starved rows, which are reset to uniform.
pub fn update_transition(post: &PosteriorTables) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    if post.xi.is_empty() {
        return Err(Error::InvalidArgument(
            "transition update needs at least two window steps".into(),
        ));
    }
    let n = post.gamma[0].len();
    let mut starved = Vec::new();
    let rows = (0..n)
        .map(|i| {
            let denom: f64 = post.gamma[..post.xi.len()].iter().map(|g| g[i]).sum();
            if denom < STARVED_MASS {
                warn!("state {i} has no transition mass; resetting its row to uniform");
                starved.push(i);
                return vec![1.0 / n as f64; n];
            }
            let row: Vec<f64> = (0..n)
                .map(|j| post.xi.iter().map(|x| x[i][j]).sum::<f64>() / denom)
                .collect();
            // Remove rounding drift so the row is stochastic to machine precision.
            let s: f64 = row.iter().sum();
            row.into_iter().map(|v| v / s).collect()
        })
        .collect();
    Ok((rows, starved))
}

/// Responses `x_m^t` and regressor rows `[1, parents.., x_m^{t-1} .. x_m^{t-lags}]`
/// for `t = max_lag .. T`.
pub fn design(
    data: &Dataset,
    m: usize,
    parents: &[usize],
    lags: usize,
    max_lag: usize,
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut responses = Vec::with_capacity(data.n_rows() - max_lag);
    let mut rows = Vec::with_capacity(data.n_rows() - max_lag);
    for t in max_lag..data.n_rows() {
        let row = data.row(t);
        responses.push(row[m]);
        let mut r = Vec::with_capacity(1 + parents.len() + lags);
        r.push(1.0);
        r.extend(parents.iter().map(|&u| row[u]));
        r.extend((1..=lags).map(|l| data.value(t - l, m)));
        rows.push(r);
    }
    (responses, rows)
}

/// Weighted normal equations `X' W X c = X' W y`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalEquations {
    pub gram: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

impl NormalEquations {
    pub fn assemble(weights: &[f64], responses: &[f64], regressors: &[Vec<f64>]) -> Self {
        let k = regressors.first().map_or(0, Vec::len);
        let mut gram = vec![vec![0.0; k]; k];
        let mut rhs = vec![0.0; k];
        for ((&w, &y), x) in weights.iter().zip(responses).zip(regressors) {
            if w == 0.0 {
                continue;
            }
            for a in 0..k {
                let wx = w * x[a];
                rhs[a] += wx * y;
                for b in a..k {
                    gram[a][b] += wx * x[b];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                gram[a][b] = gram[b][a];
            }
        }
        Self { gram, rhs }
    }

    /// Largest absolute entry of the system, used to scale residuals.
    pub fn scale(&self) -> f64 {
        self.gram
            .iter()
            .flatten()
            .chain(&self.rhs)
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    /// Largest absolute equation residual `|(X'WX c - X'Wy)_a|`.
    pub fn residual(&self, coefficients: &[f64]) -> f64 {
        self.gram
            .iter()
            .zip(&self.rhs)
            .map(|(row, b)| {
                (row.iter().zip(coefficients).map(|(g, c)| g * c).sum::<f64>() - b).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Solves the weighted least-squares problem, adding a small ridge when the
/// normal equations are numerically singular.
pub fn solve_weighted_normal_equations(
    weights: &[f64],
    responses: &[f64],
    regressors: &[Vec<f64>],
) -> Option<RidgeSolution> {
    let eq = NormalEquations::assemble(weights, responses, regressors);
    let sol = solve_normal_equations(&eq.gram, &eq.rhs).ok()?;
    sol.x.iter().all(|v| v.is_finite()).then_some(sol)
}

/// `sum_t w_t (y_t - f_t)^2 / sum_t w_t`, floored at `floor`.
pub fn update_variance(weights: &[f64], responses: &[f64], fitted: &[f64], floor: f64) -> f64 {
    let (num, den) = weights
        .iter()
        .zip(responses)
        .zip(fitted)
        .fold((0.0, 0.0), |(n, d), ((&w, &y), &f)| {
            (n + w * (y - f) * (y - f), d + w)
        });
    let v = num / den;
    if v.is_finite() {
        v.max(floor)
    } else {
        floor
    }
}

pub(crate) fn predict(coefficients: &[f64], regressors: &[Vec<f64>]) -> Vec<f64> {
    regressors
        .iter()
        .map(|x| x.iter().zip(coefficients).map(|(a, b)| a * b).sum())
        .collect()
}

/// Weighted maximum-likelihood fit of one linear Gaussian density with the
/// given parents and AR order. Returns the density and whether a ridge was used.
pub fn fit_density(
    data: &Dataset,
    weights: &[f64],
    m: usize,
    parents: &[usize],
    lags: usize,
    max_lag: usize,
    floor: f64,
) -> Option<(LinearGaussian, bool)> {
    let (y, x) = design(data, m, parents, lags, max_lag);
    let sol = solve_weighted_normal_equations(weights, &y, &x)?;
    let fitted = predict(&sol.x, &x);
    let variance = update_variance(weights, &y, &fitted, floor);
    Some((
        LinearGaussian {
            parents: parents.to_vec(),
            lags,
            coefficients: sol.x,
            variance,
        },
        sol.ridged,
    ))
}

/// M-step for a fixed structure given posterior tables.
pub fn m_step(
    model: &Model,
    data: &Dataset,
    post: &PosteriorTables,
    floors: &[f64],
) -> Result<(Model, MStepInfo)> {
    let mut info = MStepInfo::default();
    let mut next = model.clone();
    next.initial = update_initial(post);
    if !post.xi.is_empty() {
        let (a, _) = update_transition(post)?;
        next.transition = a;
    }
    for i in 0..model.n_states {
        let weights = post.gamma_column(i);
        let mass: f64 = weights.iter().sum();
        if mass < STARVED_MASS {
            warn!("state {i} is starved; keeping its emission parameters");
            info.starved.push(i);
            continue;
        }
        for m in 0..model.n_vars {
            let cur = &model.emissions[i][m];
            let (fit, ridged) = fit_density(
                data,
                &weights,
                m,
                &cur.parents,
                cur.lags,
                model.max_lag,
                floors[m],
            )
            .ok_or(Error::Solver { state: i, var: m })?;
            if ridged {
                info.ridged.push((i, m));
            }
            next.emissions[i][m] = fit;
        }
    }
    Ok((next, info))
}

/// One full EM iteration.
pub fn em_step(model: &Model, data: &Dataset) -> Result<Model> {
    let post = posteriors(model, data)?;
    let floors = variance_floors(data);
    m_step(model, data, &post, &floors).map(|(m, _)| m)
}

/// Runs EM until the relative change in log-likelihood drops below
/// `config.rel_tol` or `config.max_iter` steps have been taken.
pub fn fit_em(model: &Model, data: &Dataset, config: EmConfig) -> Result<(Model, EmReport)> {
    if !(config.rel_tol > 0.0) {
        return Err(Error::InvalidArgument("rel_tol must be positive".into()));
    }
    let floors = variance_floors(data);
    let mut current = model.clone();
    let mut post = posteriors(&current, data)?;
    if !post.loglik.is_finite() {
        return Err(Error::InvalidModel(format!(
            "starting log-likelihood is {}",
            post.loglik
        )));
    }
    let mut report = EmReport {
        ll_trace: vec![post.loglik],
        ..EmReport::default()
    };
    for iter in 1..=config.max_iter {
        let (next, info) = m_step(&current, data, &post, &floors)?;
        let next_post = posteriors(&next, data)?;
        if !next_post.loglik.is_finite() {
            let msg = format!("log-likelihood became {} at iteration {iter}", next_post.loglik);
            warn!("{msg}; returning last finite model");
            report.aborted = Some(msg);
            break;
        }
        let prev = post.loglik;
        merge_info(&mut report.info, info);
        report.ll_trace.push(next_post.loglik);
        report.iterations = iter;
        current = next;
        post = next_post;
        if (post.loglik - prev).abs() < config.rel_tol * prev.abs() {
            report.converged = true;
            break;
        }
    }
    Ok((current, report))
}

fn merge_info(acc: &mut MStepInfo, step: MStepInfo) {
    for p in step.ridged {
        if !acc.ridged.contains(&p) {
            acc.ridged.push(p);
        }
    }
    for s in step.starved {
        if !acc.starved.contains(&s) {
            acc.starved.push(s);
        }
    }
}
