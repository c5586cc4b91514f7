#![allow(dead_code)]

use arhmm::{Dataset, LinearGaussian, Model};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn random_simplex(rng: &mut ChaCha8Rng, n: usize, allow_zero: bool) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n).map(|_| 0.05 + rng.random::<f64>()).collect();
    if allow_zero && n > 1 && rng.random::<f64>() < 0.2 {
        let k = rng.random_range(0..n);
        w[k] = 0.0;
    }
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

/// Random acyclic structures, AR orders up to `max_lag`, stable AR weights.
/// With `allow_zero`, some transition entries are exactly zero.
pub fn random_model(rng: &mut ChaCha8Rng, n_states: usize, n_vars: usize, max_lag: usize, allow_zero: bool) -> Model {
    let transition = (0..n_states).map(|_| random_simplex(rng, n_states, allow_zero)).collect();
    let initial = random_simplex(rng, n_states, false);
    let emissions = (0..n_states)
        .map(|_| {
            let mut order: Vec<usize> = (0..n_vars).collect();
            order.shuffle(rng);
            let mut vars = vec![LinearGaussian::constant(0.0, 1.0); n_vars];
            for (pos, &m) in order.iter().enumerate() {
                let mut parents: Vec<usize> = order[..pos].iter().copied().filter(|_| rng.random::<f64>() < 0.5).collect();
                parents.sort_unstable();
                let lags = rng.random_range(0..=max_lag);
                let mut coefficients = vec![rng.random_range(-2.0..2.0)];
                coefficients.extend(parents.iter().map(|_| rng.random_range(-1.0..1.0)));
                coefficients.extend((0..lags).map(|_| rng.random_range(-0.4..0.4)));
                vars[m] = LinearGaussian {
                    parents,
                    lags,
                    coefficients,
                    variance: rng.random_range(0.3..2.0),
                };
            }
            vars
        })
        .collect();
    Model::new(max_lag, transition, initial, emissions).expect("random model is valid")
}

pub fn random_data(rng: &mut ChaCha8Rng, n_rows: usize, n_vars: usize) -> Dataset {
    Dataset::from_rows((0..n_rows).map(|_| (0..n_vars).map(|_| 1.5 * normal(rng)).collect()).collect()).unwrap()
}

/// Every state sequence of length `len`, in lexicographic order.
pub fn all_paths(n_states: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..n_states).map(move |s| {
                    let mut q = p.clone();
                    q.push(s);
                    q
                })
            })
            .collect();
    }
    out
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    permutations(n - 1)
        .into_iter()
        .flat_map(|p| {
            (0..n).map(move |k| {
                let mut q = p.clone();
                q.insert(k, n - 1);
                q
            })
        })
        .collect()
}

/// Best accuracy over relabelings `learned state s -> perm[s]`, with the
/// permutation achieving it.
pub fn matched_accuracy(predicted: &[usize], truth: &[usize], n_states: usize) -> (f64, Vec<usize>) {
    let mut best = (-1.0, Vec::new());
    for perm in permutations(n_states) {
        let hits = predicted.iter().zip(truth).filter(|(p, t)| perm[**p] == **t).count();
        let acc = hits as f64 / predicted.len() as f64;
        if acc > best.0 {
            best = (acc, perm);
        }
    }
    best
}

/// Regressor row `[1, parents.., lags..]` built straight from the data.
pub fn regressors(data: &Dataset, e: &LinearGaussian, m: usize, t: usize) -> Vec<f64> {
    let mut x = vec![1.0];
    x.extend(e.parents.iter().map(|&u| data.rows()[t][u]));
    x.extend((1..=e.lags).map(|r| data.rows()[t - r][m]));
    x
}

pub fn model_bits(model: &Model) -> Vec<u64> {
    let mut bits: Vec<u64> = model.transition.iter().flatten().chain(&model.initial).map(|v| v.to_bits()).collect();
    for e in model.emissions.iter().flatten() {
        bits.extend(e.coefficients.iter().map(|v| v.to_bits()));
        bits.push(e.variance.to_bits());
    }
    bits
}

fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (x - mean).powi(2) / (2.0 * var)
}

/// Joint log density of the window observations and `path`, written out
/// directly from the model definition.
pub fn path_loglik(model: &Model, data: &Dataset, path: &[usize]) -> f64 {
    let p = model.max_lag;
    let mut ll = model.initial[path[0]].ln();
    for w in path.windows(2) {
        ll += model.transition[w[0]][w[1]].ln();
    }
    for (k, &s) in path.iter().enumerate() {
        let t = p + k;
        for (m, e) in model.emissions[s].iter().enumerate() {
            let x = regressors(data, e, m, t);
            let f: f64 = x.iter().zip(&e.coefficients).map(|(a, b)| a * b).sum();
            ll += normal_logpdf(data.rows()[t][m], f, e.variance);
        }
    }
    ll
}
