//! Model parameters, per-state structures and emission densities.
//!
//! In hidden state `i`, variable `m` at time `t` is Gaussian with mean
//!
//! ```text
//! f_im(t) = b0 + sum_k b_k * x_{u_k}(t) + sum_r e_r * x_m(t - r)
//! ```
//!
//! where `u_k` are the parents of `m` in state `i`'s DAG and `r = 1..p_im`
//! are its own autoregressive lags. The emission density of the whole
//! observation is the product over variables.


use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Tolerance on row sums of the transition matrix and on the initial distribution.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Absolute lower bound on any variance.
pub const MIN_VARIANCE: f64 = 1e-9;

/// Relative lower bound on a variance, as a fraction of the column's sample variance.
pub const RELATIVE_VARIANCE_FLOOR: f64 = 1e-12;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Log density of `N(mean, variance)` at `x`.
#[inline]
pub fn gaussian_logpdf(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    -HALF_LN_2PI - 0.5 * variance.ln() - d * d / (2.0 * variance)
}

/// Per-column variance floors `max(1e-9, 1e-12 * var(X_m))`.
pub fn variance_floors(data: &Dataset) -> Vec<f64> {
    (0..data.n_vars())
        .map(|m| {
            let col = data.column(m);
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            MIN_VARIANCE.max(RELATIVE_VARIANCE_FLOOR * var)
        })
        .collect()
}

/// The context-specific graph of one hidden state plus its AR orders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateStructure {
    /// `parents[m]` lists the parents of variable `m`, in coefficient order.
    pub parents: Vec<Vec<usize>>,
    /// `lags[m]` is the number of own-lag terms of variable `m`.
    pub lags: Vec<usize>,
}

impl StateStructure {
    /// Empty graph with no AR terms.
    pub fn naive(n_vars: usize) -> Self {
        Self {
            parents: vec![Vec::new(); n_vars],
            lags: vec![0; n_vars],
        }
    }

    pub fn n_vars(&self) -> usize {
        self.parents.len()
    }

    /// Kahn's algorithm with ties broken by lowest variable index. Returns
    /// `None` if the graph has a cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        topological_order(&self.parents)
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_some()
    }

    /// True if adding the arc `from -> to` would close a directed cycle.
    pub fn creates_cycle(&self, from: usize, to: usize) -> bool {
        if from == to {
            return true;
        }
        // A cycle appears iff `from` is already reachable from `to`.
        let n = self.n_vars();
        let mut children = vec![Vec::new(); n];
        for (child, ps) in self.parents.iter().enumerate() {
            for &p in ps {
                children[p].push(child);
            }
        }
        let mut seen = vec![false; n];
        let mut stack = vec![to];
        while let Some(v) = stack.pop() {
            if v == from {
                return true;
            }
            if !seen[v] {
                seen[v] = true;
                stack.extend(children[v].iter().copied());
            }
        }
        false
    }

    pub fn validate(&self, max_lag: usize) -> Result<()> {
        let n = self.n_vars();
        if self.lags.len() != n {
            return Err(Error::InvalidModel(format!(
                "{} lag entries for {n} variables",
                self.lags.len()
            )));
        }
        for (m, ps) in self.parents.iter().enumerate() {
            for (k, &p) in ps.iter().enumerate() {
                if p >= n {
                    return Err(Error::InvalidModel(format!("parent {p} of variable {m} out of range")));
                }
                if p == m {
                    return Err(Error::InvalidModel(format!("variable {m} is its own parent")));
                }
                if ps[..k].contains(&p) {
                    return Err(Error::InvalidModel(format!("duplicate parent {p} of variable {m}")));
                }
            }
            if self.lags[m] > max_lag {
                return Err(Error::InvalidModel(format!(
                    "variable {m} has {} lags, above max lag {max_lag}",
                    self.lags[m]
                )));
            }
        }
        if !self.is_acyclic() {
            return Err(Error::InvalidModel("parent graph has a cycle".into()));
        }
        Ok(())
    }
}

pub(crate) fn topological_order(parents: &[Vec<usize>]) -> Option<Vec<usize>> {
    let n = parents.len();
    let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut children = vec![Vec::new(); n];
    for (child, ps) in parents.iter().enumerate() {
        for &p in ps {
            if p >= n {
                return None;
            }
            children[p].push(child);
        }
    }
    let mut ready: std::collections::BTreeSet<usize> =
        (0..n).filter(|&m| indegree[m] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = ready.pop_first() {
        order.push(v);
        for &c in &children[v] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.insert(c);
            }
        }
    }
    (order.len() == n).then_some(order)
}

/// Linear Gaussian conditional density of one variable in one hidden state.
///
/// `coefficients` is laid out as `[intercept, parent weights.., AR weights..]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussian {
    pub parents: Vec<usize>,
    pub lags: usize,
    pub coefficients: Vec<f64>,
    pub variance: f64,
}

impl LinearGaussian {
    /// Intercept-only density.
    pub fn constant(intercept: f64, variance: f64) -> Self {
        Self {
            parents: Vec::new(),
            lags: 0,
            coefficients: vec![intercept],
            variance,
        }
    }

    pub fn n_coefficients(&self) -> usize {
        1 + self.parents.len() + self.lags
    }

    pub fn intercept(&self) -> f64 {
        self.coefficients[0]
    }

    pub fn parent_weights(&self) -> &[f64] {
        &self.coefficients[1..1 + self.parents.len()]
    }

    pub fn ar_weights(&self) -> &[f64] {
        &self.coefficients[1 + self.parents.len()..]
    }

    /// Conditional mean of variable `m` at time `t`. Requires `t >= lags`.
    #[inline]
    pub fn mean(&self, data: &Dataset, m: usize, t: usize) -> f64 {
        let row = data.row(t);
        let mut f = self.coefficients[0];
        for (w, &u) in self.coefficients[1..].iter().zip(&self.parents) {
            f += w * row[u];
        }
        for (r, w) in self.ar_weights().iter().enumerate() {
            f += w * data.value(t - r - 1, m);
        }
        f
    }

    #[inline]
    pub fn logpdf(&self, data: &Dataset, m: usize, t: usize) -> f64 {
        gaussian_logpdf(data.value(t, m), self.mean(data, m, t), self.variance)
    }
}

/// Full parameter set of an autoregressive asymmetric linear Gaussian HMM.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub n_states: usize,
    pub n_vars: usize,
    /// Maximum admissible lag `p*`; the emission window starts here.
    pub max_lag: usize,
    /// Row-stochastic `N x N` transition matrix.
    pub transition: Vec<Vec<f64>>,
    /// Distribution of the hidden state at time `p*`.
    pub initial: Vec<f64>,
    /// `emissions[i][m]` is the density of variable `m` in state `i`.
    pub emissions: Vec<Vec<LinearGaussian>>,
}

impl Model {
    pub fn new(
        max_lag: usize,
        transition: Vec<Vec<f64>>,
        initial: Vec<f64>,
        emissions: Vec<Vec<LinearGaussian>>,
    ) -> Result<Self> {
        let model = Self {
            n_states: initial.len(),
            n_vars: emissions.first().map_or(0, Vec::len),
            max_lag,
            transition,
            initial,
            emissions,
        };
        model.validate()?;
        Ok(model)
    }

    /// Checks every structural and numerical invariant.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_states;
        if n == 0 || self.n_vars == 0 {
            return Err(Error::InvalidModel("model needs at least one state and one variable".into()));
        }
        if self.initial.len() != n || self.transition.len() != n || self.emissions.len() != n {
            return Err(Error::InvalidModel("state count mismatch".into()));
        }
        check_distribution(&self.initial).map_err(|e| Error::InvalidModel(format!("initial: {e}")))?;
        for (i, row) in self.transition.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidModel(format!("transition row {i} has {} entries", row.len())));
            }
            check_distribution(row).map_err(|e| Error::InvalidModel(format!("transition row {i}: {e}")))?;
        }
        for (i, vars) in self.emissions.iter().enumerate() {
            if vars.len() != self.n_vars {
                return Err(Error::InvalidModel(format!("state {i} has {} variables", vars.len())));
            }
            for (m, e) in vars.iter().enumerate() {
                if e.coefficients.len() != e.n_coefficients() {
                    return Err(Error::InvalidModel(format!(
                        "state {i} variable {m}: {} coefficients, expected {}",
                        e.coefficients.len(),
                        e.n_coefficients()
                    )));
                }
                if e.coefficients.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidModel(format!("state {i} variable {m}: non-finite coefficient")));
                }
                if !(e.variance.is_finite() && e.variance > 0.0) {
                    return Err(Error::InvalidModel(format!(
                        "state {i} variable {m}: variance {} is not positive",
                        e.variance
                    )));
                }
            }
            self.structure(i)
                .validate(self.max_lag)
                .map_err(|e| Error::InvalidModel(format!("state {i}: {e}")))?;
        }
        Ok(())
    }

    /// Graph and AR orders of hidden state `i`.
    pub fn structure(&self, i: usize) -> StateStructure {
        StateStructure {
            parents: self.emissions[i].iter().map(|e| e.parents.clone()).collect(),
            lags: self.emissions[i].iter().map(|e| e.lags).collect(),
        }
    }

    /// Number of emission terms for a dataset, `T - p* + 1`.
    pub fn effective_len(&self, data: &Dataset) -> Result<usize> {
        if data.n_rows() <= self.max_lag {
            return Err(Error::EmptyWindow {
                rows: data.n_rows(),
                max_lag: self.max_lag,
            });
        }
        Ok(data.n_rows() - self.max_lag)
    }

    pub(crate) fn check_data(&self, data: &Dataset) -> Result<usize> {
        if data.n_vars() != self.n_vars {
            return Err(Error::InvalidDataset(format!(
                "dataset has {} columns, model expects {}",
                data.n_vars(),
                self.n_vars
            )));
        }
        self.effective_len(data)
    }
}

fn check_distribution(p: &[f64]) -> std::result::Result<(), String> {
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err("entries must be finite and non-negative".into());
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > SIMPLEX_TOL {
        return Err(format!("sums to {s}"));
    }
    Ok(())
}

/// `ln b_i(x^t) = sum_m ln N(x^t_m | f_im(t), sigma^2_im)`.
pub fn emission_logpdf(model: &Model, state: usize, data: &Dataset, t: usize) -> Result<f64> {
    model.check_data(data)?;
    if t < model.max_lag || t > data.last_index() {
        return Err(Error::OutOfWindow {
            t,
            max_lag: model.max_lag,
            last: data.last_index(),
        });
    }
    if state >= model.n_states {
        return Err(Error::InvalidArgument(format!("state {state} out of range")));
    }
    Ok(state_logpdf(model, state, data, t))
}

#[inline]
fn state_logpdf(model: &Model, state: usize, data: &Dataset, t: usize) -> f64 {
    model.emissions[state]
        .iter()
        .enumerate()
        .map(|(m, e)| e.logpdf(data, m, t))
        .sum()
}

/// Log emission densities for every window time and state; row `t - p*`.
pub fn emission_table(model: &Model, data: &Dataset) -> Result<Vec<Vec<f64>>> {
    model.check_data(data)?;
    Ok((model.max_lag..data.n_rows())
        .map(|t| {
            (0..model.n_states)
                .map(|i| state_logpdf(model, i, data, t))
                .collect()
        })
        .collect())
}

/// `N^2 + N + sum_{i,m} (1 + k_im + p_im + 1)`: full transition matrix, full
/// initial distribution, and per density the intercept, parent weights, AR
/// weights and variance.
pub fn count_parameters(model: &Model) -> usize {
    let n = model.n_states;
    let emission: usize = model
        .emissions
        .iter()
        .flatten()
        .map(|e| e.n_coefficients() + 1)
        .sum();
    n * n + n + emission
}

/// Joint log density of the observations over the window and a given state path.
/// Zero-probability transitions yield `-inf`.
pub fn complete_data_loglik(model: &Model, data: &Dataset, path: &[usize]) -> Result<f64> {
    let len = model.check_data(data)?;
    if path.len() != len {
        return Err(Error::InvalidArgument(format!(
            "path has {} states, window has {len} steps",
            path.len()
        )));
    }
    if let Some(&s) = path.iter().find(|&&s| s >= model.n_states) {
        return Err(Error::InvalidArgument(format!("state {s} out of range")));
    }
    let p = model.max_lag;
    let mut ll = model.initial[path[0]].ln();
    for w in path.windows(2) {
        ll += model.transition[w[0]][w[1]].ln();
    }
    for (k, &s) in path.iter().enumerate() {
        ll += state_logpdf(model, s, data, p + k);
    }
    Ok(ll)
}
