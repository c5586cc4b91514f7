//! Synthetic regime-switching signals.
//!
//! Two built-in scenarios with three hidden states each: one over three
//! variables and one over six. Each state has its own structural equations
//! `x_m = intercept + sum parents + sum AR terms + sigma * eps`. A signal is a
//! sequence of blocks `(state, length)`; lag context carries across block
//! boundaries and a burn-in under the first block's state is discarded.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::{LinearGaussian, Model, StateStructure};

pub const DEFAULT_BLOCK_LEN: usize = 300;
pub const DEFAULT_BURN_IN: usize = 100;

/// One structural equation. `sigma` is a standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct Equation {
    pub intercept: f64,
    /// `(parent variable, weight)`.
    pub parents: Vec<(usize, f64)>,
    /// `ar[r]` multiplies `x_m(t - r - 1)`.
    pub ar: Vec<f64>,
    pub sigma: f64,
}

impl Equation {
    pub fn new(intercept: f64, parents: &[(usize, f64)], ar: &[f64], sigma: f64) -> Self {
        Self {
            intercept,
            parents: parents.to_vec(),
            ar: ar.to_vec(),
            sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub n_vars: usize,
    pub max_lag: usize,
    /// `states[i][m]` generates variable `m` in state `i`.
    pub states: Vec<Vec<Equation>>,
    /// `(state, length)` pairs, states 0-based.
    pub blocks: Vec<(usize, usize)>,
    pub seed: u64,
    pub burn_in: usize,
}

impl ScenarioSpec {
    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn with_blocks(mut self, blocks: Vec<(usize, usize)>) -> Self {
        self.blocks = blocks;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn structure(&self, i: usize) -> StateStructure {
        StateStructure {
            parents: self.states[i]
                .iter()
                .map(|e| e.parents.iter().map(|p| p.0).collect())
                .collect(),
            lags: self.states[i].iter().map(|e| e.ar.len()).collect(),
        }
    }

    pub fn total_len(&self) -> usize {
        self.blocks.iter().map(|b| b.1).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.states.is_empty() || self.n_vars == 0 {
            return Err(Error::InvalidArgument("scenario needs states and variables".into()));
        }
        for (i, eqs) in self.states.iter().enumerate() {
            if eqs.len() != self.n_vars {
                return Err(Error::InvalidArgument(format!("state {i} has {} equations", eqs.len())));
            }
            if eqs.iter().any(|e| !(e.sigma >= 0.0)) {
                return Err(Error::InvalidArgument(format!("state {i} has a negative sigma")));
            }
            self.structure(i).validate(self.max_lag)?;
        }
        if self.blocks.is_empty() {
            return Err(Error::InvalidArgument("no blocks".into()));
        }
        if let Some(b) = self.blocks.iter().find(|b| b.0 >= self.n_states() || b.1 == 0) {
            return Err(Error::InvalidArgument(format!("bad block {b:?}")));
        }
        Ok(())
    }

    /// The generating parameters as a model with uniform transition and
    /// initial distributions.
    pub fn generating_model(&self) -> Result<Model> {
        let n = self.n_states();
        let emissions = self
            .states
            .iter()
            .map(|eqs| {
                eqs.iter()
                    .map(|e| {
                        let mut coefficients = vec![e.intercept];
                        coefficients.extend(e.parents.iter().map(|p| p.1));
                        coefficients.extend(&e.ar);
                        LinearGaussian {
                            parents: e.parents.iter().map(|p| p.0).collect(),
                            lags: e.ar.len(),
                            coefficients,
                            variance: e.sigma * e.sigma,
                        }
                    })
                    .collect()
            })
            .collect();
        Model::new(
            self.max_lag,
            vec![vec![1.0 / n as f64; n]; n],
            vec![1.0 / n as f64; n],
            emissions,
        )
    }
}

/// Draws the signal and returns it with the true state of every row.
pub fn sample(spec: &ScenarioSpec) -> Result<(Dataset, Vec<usize>)> {
    spec.validate()?;
    let orders: Vec<Vec<usize>> = (0..spec.n_states())
        .map(|i| spec.structure(i).topological_order().expect("validated acyclic"))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let total = spec.burn_in + spec.total_len();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(total);
    let mut path = Vec::with_capacity(total);
    let first = spec.blocks[0].0;
    let schedule = std::iter::repeat_n(first, spec.burn_in)
        .chain(spec.blocks.iter().flat_map(|&(s, len)| std::iter::repeat_n(s, len)));
    for state in schedule {
        let t = rows.len();
        let mut x = vec![0.0; spec.n_vars];
        for &m in &orders[state] {
            let e = &spec.states[state][m];
            let mut f = e.intercept;
            for &(u, w) in &e.parents {
                f += w * x[u];
            }
            for (r, w) in e.ar.iter().enumerate() {
                if let Some(prev) = t.checked_sub(r + 1) {
                    f += w * rows[prev][m];
                }
            }
            let eps: f64 = rng.sample(StandardNormal);
            x[m] = f + e.sigma * eps;
        }
        rows.push(x);
        path.push(state);
    }
    rows.drain(..spec.burn_in);
    path.drain(..spec.burn_in);
    Ok((Dataset::from_rows(rows)?, path))
}

/// Simulates `n_rows` observations from a model: the hidden chain starts from
/// `initial` at row 0 and lags before row 0 are taken as zero.
pub fn sample_from_model(model: &Model, n_rows: usize, seed: u64) -> Result<(Dataset, Vec<usize>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let orders: Vec<Vec<usize>> = (0..model.n_states)
        .map(|i| model.structure(i).topological_order().expect("validated model"))
        .collect();
    let draw = |p: &[f64], rng: &mut ChaCha8Rng| {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (k, w) in p.iter().enumerate() {
            acc += w;
            if u < acc {
                return k;
            }
        }
        p.len() - 1
    };
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n_rows);
    let mut path = Vec::with_capacity(n_rows);
    let mut state = draw(&model.initial, &mut rng);
    for t in 0..n_rows {
        if t > 0 {
            state = draw(&model.transition[state], &mut rng);
        }
        let mut x = vec![0.0; model.n_vars];
        for &m in &orders[state] {
            let e = &model.emissions[state][m];
            let mut f = e.intercept();
            for (w, &u) in e.parent_weights().iter().zip(&e.parents) {
                f += w * x[u];
            }
            for (r, w) in e.ar_weights().iter().enumerate() {
                if let Some(prev) = t.checked_sub(r + 1) {
                    f += w * rows[prev][m];
                }
            }
            let eps: f64 = rng.sample(StandardNormal);
            x[m] = f + e.variance.sqrt() * eps;
        }
        rows.push(x);
        path.push(state);
    }
    Ok((Dataset::from_rows(rows)?, path))
}

fn blocks_of(states: &[usize], len: usize) -> Vec<(usize, usize)> {
    states.iter().map(|&s| (s, len)).collect()
}

/// Default training layout: six blocks of 300 rows, each state twice.
pub fn training_blocks() -> Vec<(usize, usize)> {
    blocks_of(&[0, 1, 2, 0, 2, 1], DEFAULT_BLOCK_LEN)
}

/// Default layouts for the four held-out test sequences (`which` in 1..=4).
pub fn test_blocks(which: usize) -> Result<Vec<(usize, usize)>> {
    let states: &[usize] = match which {
        1 => &[0, 1, 2, 0, 1, 2],
        2 => &[2, 1, 0, 2, 1, 0],
        3 => &[0, 2, 1, 2, 0, 1],
        4 => &[0, 1, 2, 1, 0, 2, 0, 2, 1, 0],
        _ => return Err(Error::InvalidArgument(format!("test sequence {which} not in 1..=4"))),
    };
    Ok(blocks_of(states, DEFAULT_BLOCK_LEN))
}

/// Parses `"1:300,2:300,3:150"` with 1-based states.
pub fn parse_blocks(text: &str) -> Result<Vec<(usize, usize)>> {
    text.split(',')
        .map(|part| {
            let bad = || Error::InvalidArgument(format!("bad block '{part}', expected STATE:LENGTH"));
            let (s, l) = part.trim().split_once(':').ok_or_else(bad)?;
            let s: usize = s.trim().parse().map_err(|_| bad())?;
            let l: usize = l.trim().parse().map_err(|_| bad())?;
            if s == 0 {
                return Err(bad());
            }
            Ok((s - 1, l))
        })
        .collect()
}

/// Three variables, maximum lag 1.
pub fn scenario_1() -> ScenarioSpec {
    let c = |v: f64, s: f64| Equation::new(v, &[], &[], s);
    ScenarioSpec {
        n_vars: 3,
        max_lag: 1,
        states: vec![
            vec![c(1.0, 1.0), c(2.0, 1.0), c(3.0, 1.0)],
            vec![
                c(2.0, 3.0),
                Equation::new(1.0, &[(2, 2.0)], &[], 5.0),
                c(4.0, 4.0),
            ],
            vec![
                Equation::new(1.0, &[], &[0.1], 2.0),
                Equation::new(0.0, &[(0, 5.0), (2, 4.0)], &[0.7], 3.0),
                Equation::new(4.0, &[(0, 2.0)], &[0.99], 1.0),
            ],
        ],
        blocks: training_blocks(),
        seed: 0,
        burn_in: DEFAULT_BURN_IN,
    }
}

/// Six variables, maximum lag 2.
pub fn scenario_2() -> ScenarioSpec {
    let c = |v: f64, s: f64| Equation::new(v, &[], &[], s);
    ScenarioSpec {
        n_vars: 6,
        max_lag: 2,
        states: vec![
            vec![
                c(1.5, 1.5),
                c(2.5, 2.0),
                c(4.5, 3.0),
                c(3.5, 8.0),
                c(6.5, 6.0),
                c(1.5, 0.5),
            ],
            vec![
                Equation::new(1.5, &[], &[0.2], 3.5),
                Equation::new(0.0, &[(2, 2.5)], &[], 2.0),
                Equation::new(0.0, &[(4, 3.0)], &[0.99], 4.0),
                Equation::new(1.5, &[(0, 9.5)], &[], 2.0),
                Equation::new(6.5, &[], &[0.99], 5.5),
                Equation::new(0.5, &[(4, 6.8)], &[], 2.0),
            ],
            vec![
                Equation::new(1.5, &[], &[0.999], 3.0),
                Equation::new(2.5, &[(0, 5.0), (3, 8.0)], &[0.888, 0.111], 3.5),
                Equation::new(4.5, &[(0, 1.5)], &[0.999], 4.0),
                Equation::new(3.5, &[(0, 1.5), (2, 2.0)], &[0.1], 6.5),
                Equation::new(0.0, &[(2, 5.0)], &[], 5.5),
                Equation::new(1.0, &[(2, 3.5), (4, -4.5)], &[0.8], 7.0),
            ],
        ],
        blocks: training_blocks(),
        seed: 0,
        burn_in: DEFAULT_BURN_IN,
    }
}

pub fn builtin_scenarios() -> [ScenarioSpec; 2] {
    [scenario_1(), scenario_2()]
}
