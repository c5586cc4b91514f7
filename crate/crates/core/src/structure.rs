//! Structural EM: alternate parameter EM with a forward greedy search over
//! per-state AR orders and parent arcs.
//!
//! Candidate structures are compared on the posterior-weighted Gaussian
//! log-likelihood of a single `(state, variable)` pair, with the posteriors
//! held fixed. A candidate that adds one parameter must beat the incumbent by
//! more than `0.5 * ln(T_eff)`, the per-parameter BIC penalty.

use std::fmt::Write as _;
use std::str::FromStr;

use log::{debug, info, warn};

use crate::dataset::Dataset;
use crate::em::{design, fit_density, fit_em, predict, EmConfig, EmReport, STARVED_MASS};
use crate::error::{Error, Result};
use crate::inference::{loglikelihood, posteriors, PosteriorTables};
use crate::init::{init_from_segments, init_model};
use crate::lags::{select_model_max_lag, DEFAULT_ALPHA, DEFAULT_KMAX};
use crate::model::{count_parameters, gaussian_logpdf, variance_floors, LinearGaussian, Model};

/// Which structures the search may explore.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMode {
    /// AR orders and parent arcs.
    ArAslg,
    /// Parent arcs only; all AR orders stay zero.
    Aslg,
    /// No search: empty graphs, no AR terms.
    Naive,
}

impl FromStr for SearchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ar-aslg" => Ok(Self::ArAslg),
            "aslg" => Ok(Self::Aslg),
            "naive" => Ok(Self::Naive),
            _ => Err(Error::InvalidArgument(format!(
                "unknown mode '{s}' (expected ar-aslg, aslg or naive)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaxLagPolicy {
    Fixed(usize),
    /// Largest significant partial autocorrelation lag over all columns.
    Auto { kmax: usize, alpha: f64 },
}

impl Default for MaxLagPolicy {
    fn default() -> Self {
        Self::Auto {
            kmax: DEFAULT_KMAX,
            alpha: DEFAULT_ALPHA,
        }
    }
}

impl MaxLagPolicy {
    pub fn resolve(&self, data: &Dataset) -> Result<usize> {
        match *self {
            Self::Fixed(p) => Ok(p),
            Self::Auto { kmax, alpha } => select_model_max_lag(data, kmax, alpha),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemConfig {
    pub n_states: usize,
    pub mode: SearchMode,
    pub max_lag: MaxLagPolicy,
    pub em: EmConfig,
    /// Stop when the penalized objective improves by less than `tol * |objective|`.
    pub tol: f64,
    pub max_rounds: usize,
    /// Extra runs started from random segmentations, on top of the standard
    /// initialization. The run with the best penalized objective is kept.
    pub restarts: usize,
    /// Seed of the first restart; restart `r` uses `seed + r`.
    pub seed: u64,
}

impl SemConfig {
    pub fn new(n_states: usize, mode: SearchMode) -> Self {
        Self {
            n_states,
            mode,
            max_lag: MaxLagPolicy::default(),
            em: EmConfig::default(),
            tol: 1e-6,
            max_rounds: 20,
            restarts: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SemReport {
    pub max_lag: usize,
    /// Penalized objective after the initial EM and after each accepted round.
    pub objective_trace: Vec<f64>,
    pub em_reports: Vec<EmReport>,
    /// Structure changes accepted in each search round.
    pub moves: Vec<usize>,
    pub converged: bool,
    /// Which restart produced the model; `None` for the standard start.
    pub restart: Option<usize>,
}

impl SemReport {
    pub fn final_objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(f64::NEG_INFINITY)
    }
}

/// Number of emission terms, `T - p* + 1`.
pub fn effective_len(model: &Model, data: &Dataset) -> Result<usize> {
    model.effective_len(data)
}

fn weighted_loglik(weights: &[f64], y: &[f64], fitted: &[f64], variance: f64) -> f64 {
    weights
        .iter()
        .zip(y)
        .zip(fitted)
        .filter(|((w, _), _)| **w != 0.0)
        .map(|((w, &yv), &f)| w * gaussian_logpdf(yv, f, variance))
        .sum()
}

fn density_score(data: &Dataset, weights: &[f64], m: usize, e: &LinearGaussian, max_lag: usize) -> f64 {
    let (y, x) = design(data, m, &e.parents, e.lags, max_lag);
    let fitted = predict(&e.coefficients, &x);
    weighted_loglik(weights, &y, &fitted, e.variance)
}

/// `score_im = sum_t gamma_t(i) ln N(x_m^t | f_im^t, sigma^2_im)` over the window.
pub fn local_score(model: &Model, data: &Dataset, post: &PosteriorTables, i: usize, m: usize) -> Result<f64> {
    model.check_data(data)?;
    if i >= model.n_states || m >= model.n_vars {
        return Err(Error::InvalidArgument(format!("no density ({i}, {m})")));
    }
    let weights = post.gamma_column(i);
    Ok(density_score(data, &weights, m, &model.emissions[i][m], model.max_lag))
}

/// Sum of all local scores; the emission part of the expected complete-data
/// log-likelihood.
pub fn total_score(model: &Model, data: &Dataset, post: &PosteriorTables) -> Result<f64> {
    let mut s = 0.0;
    for i in 0..model.n_states {
        for m in 0..model.n_vars {
            s += local_score(model, data, post, i, m)?;
        }
    }
    Ok(s)
}

fn penalty_unit(t_eff: usize) -> f64 {
    (t_eff as f64).ln()
}

/// `LL - 0.5 * #params * ln(T_eff)`.
pub fn penalized_objective(model: &Model, data: &Dataset) -> Result<f64> {
    let ll = loglikelihood(model, data)?;
    let k = count_parameters(model) as f64;
    let t_eff = model.effective_len(data)?;
    Ok(ll - 0.5 * (k * penalty_unit(t_eff)))
}

/// `-2 LL + #params * ln(T_eff)`, the scale used for reporting.
pub fn report_bic(model: &Model, data: &Dataset) -> Result<f64> {
    let ll = loglikelihood(model, data)?;
    let k = count_parameters(model) as f64;
    let t_eff = model.effective_len(data)?;
    Ok(-2.0 * ll + k * penalty_unit(t_eff))
}

struct Incumbent {
    density: LinearGaussian,
    score: f64,
}

fn refit(
    data: &Dataset,
    weights: &[f64],
    m: usize,
    parents: &[usize],
    lags: usize,
    max_lag: usize,
    floor: f64,
) -> Option<Incumbent> {
    let (density, _) = fit_density(data, weights, m, parents, lags, max_lag, floor)?;
    let score = density_score(data, weights, m, &density, max_lag);
    score.is_finite().then_some(Incumbent { density, score })
}

/// One pass of the forward greedy search with posteriors held fixed.
///
/// First every `(i, m)` grows its AR order one lag at a time while the
/// penalized local score improves. Then every `(i, m)` tries each arc
/// `u -> m` in ascending `u` that keeps state `i`'s graph acyclic, keeping
/// each one that improves the penalized local score. Returns the updated
/// model and the number of accepted changes.
pub fn greedy_search(
    model: &Model,
    data: &Dataset,
    post: &PosteriorTables,
    mode: SearchMode,
) -> Result<(Model, usize)> {
    let t_eff = model.check_data(data)?;
    let mut next = model.clone();
    if mode == SearchMode::Naive {
        return Ok((next, 0));
    }
    let penalty = 0.5 * penalty_unit(t_eff);
    let floors = variance_floors(data);
    let p_max = model.max_lag;
    let mut moves = 0;

    let weights: Vec<Vec<f64>> = (0..model.n_states).map(|i| post.gamma_column(i)).collect();
    let active: Vec<bool> = weights
        .iter()
        .map(|w| w.iter().sum::<f64>() >= STARVED_MASS)
        .collect();

    let incumbent = |next: &Model, i: usize, m: usize| {
        let e = &next.emissions[i][m];
        refit(data, &weights[i], m, &e.parents, e.lags, p_max, floors[m]).unwrap_or_else(|| Incumbent {
            density: e.clone(),
            score: density_score(data, &weights[i], m, e, p_max),
        })
    };

    if mode == SearchMode::ArAslg {
        for i in (0..model.n_states).filter(|&i| active[i]) {
            for m in 0..model.n_vars {
                let mut best = incumbent(&next, i, m);
                while best.density.lags < p_max {
                    let d = &best.density;
                    let Some(cand) = refit(data, &weights[i], m, &d.parents, d.lags + 1, p_max, floors[m]) else {
                        break;
                    };
                    if cand.score > best.score + penalty {
                        debug!("state {i} var {m}: AR order -> {}", cand.density.lags);
                        best = cand;
                        moves += 1;
                    } else {
                        break;
                    }
                }
                next.emissions[i][m] = best.density;
            }
        }
    }

    for i in (0..model.n_states).filter(|&i| active[i]) {
        for m in 0..model.n_vars {
            let mut best = incumbent(&next, i, m);
            for u in 0..model.n_vars {
                if u == m || best.density.parents.contains(&u) {
                    continue;
                }
                let mut structure = next.structure(i);
                structure.parents[m] = best.density.parents.clone();
                if structure.creates_cycle(u, m) {
                    continue;
                }
                let mut parents = best.density.parents.clone();
                parents.push(u);
                let lags = best.density.lags;
                let Some(cand) = refit(data, &weights[i], m, &parents, lags, p_max, floors[m]) else {
                    continue;
                };
                if cand.score > best.score + penalty {
                    debug!("state {i}: added arc {u} -> {m}");
                    best = cand;
                    moves += 1;
                }
            }
            next.emissions[i][m] = best.density;
        }
    }
    next.validate()?;
    Ok((next, moves))
}

/// Structural EM from the standard initialization, followed by
/// `config.restarts` runs from random segmentations. For a restart the
/// greedy search first runs under the segmentation's posteriors, so lags and
/// arcs can be in place before EM settles on a partition of the data.
/// Returns the run with the highest penalized objective; its objective trace
/// is non-decreasing.
pub fn fit_sem(config: &SemConfig, data: &Dataset) -> Result<(Model, SemReport)> {
    let max_lag = config.max_lag.resolve(data)?;
    info!("max lag p* = {max_lag}");
    let start = init_model(data, config.n_states, max_lag)?;
    let mut best = fit_sem_from(&start, config, data)?;
    for r in 0..config.restarts {
        let seed = config.seed.wrapping_add(r as u64);
        let run = init_from_segments(data, config.n_states, max_lag, seed)
            .and_then(|(m0, post)| greedy_search(&m0, data, &post, config.mode))
            .and_then(|(m0, _)| fit_sem_from(&m0, config, data));
        match run {
            Ok((model, mut report)) => {
                info!("restart {r}: objective {}", report.final_objective());
                if report.final_objective() > best.1.final_objective() {
                    report.restart = Some(r);
                    best = (model, report);
                }
            }
            Err(e) => warn!("restart {r} failed: {e}"),
        }
    }
    Ok(best)
}

/// Structural EM starting from a given model.
pub fn fit_sem_from(start: &Model, config: &SemConfig, data: &Dataset) -> Result<(Model, SemReport)> {
    let (mut model, em_report) = fit_em(start, data, config.em)?;
    let mut objective = penalized_objective(&model, data)?;
    let mut report = SemReport {
        max_lag: model.max_lag,
        objective_trace: vec![objective],
        em_reports: vec![em_report],
        moves: Vec::new(),
        converged: config.mode == SearchMode::Naive,
        restart: None,
    };
    if config.mode == SearchMode::Naive {
        return Ok((model, report));
    }
    for round in 1..=config.max_rounds {
        let post = posteriors(&model, data)?;
        let (candidate, moves) = greedy_search(&model, data, &post, config.mode)?;
        report.moves.push(moves);
        if moves == 0 {
            report.converged = true;
            break;
        }
        let (candidate, em_report) = fit_em(&candidate, data, config.em)?;
        let cand_objective = penalized_objective(&candidate, data)?;
        info!("round {round}: {moves} changes, objective {objective} -> {cand_objective}");
        if !(cand_objective >= objective) {
            warn!("round {round} lowered the penalized objective; keeping the previous model");
            report.converged = true;
            break;
        }
        let gain = cand_objective - objective;
        model = candidate;
        objective = cand_objective;
        report.objective_trace.push(objective);
        report.em_reports.push(em_report);
        if gain < config.tol * objective.abs() {
            report.converged = true;
            break;
        }
    }
    Ok((model, report))
}

/// Graphviz description of state `i`'s graph. Lagged copies of variable `m`
/// appear as nodes `Xm_AR_r`.
pub fn export_dot(model: &Model, i: usize) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "digraph state_{} {{", i + 1);
    for m in 1..=model.n_vars {
        let _ = writeln!(out, "  X{m};");
    }
    for (m, e) in model.emissions[i].iter().enumerate() {
        for &u in &e.parents {
            let _ = writeln!(out, "  X{} -> X{};", u + 1, m + 1);
        }
        for r in 1..=e.lags {
            let _ = writeln!(out, "  X{}_AR_{r} [shape=box];", m + 1);
            let _ = writeln!(out, "  X{}_AR_{r} -> X{};", m + 1, m + 1);
        }
    }
    out.push_str("}\n");
    out
}
