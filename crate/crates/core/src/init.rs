//! Starting models for EM.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::em::m_step;
use crate::error::{Error, Result};
use crate::inference::PosteriorTables;
use crate::model::{variance_floors, LinearGaussian, Model};

fn column_ranges(data: &Dataset) -> Vec<(f64, f64)> {
    (0..data.n_vars())
        .map(|m| {
            data.rows()
                .iter()
                .map(|r| r[m])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
        })
        .collect()
}

fn initial_variance(lo: f64, hi: f64, floor: f64, m: usize) -> f64 {
    let v = 2.0 * (hi - lo);
    if v < floor {
        warn!("column {m} is constant; initial variance set to the floor");
        floor
    } else {
        v
    }
}

/// Uniform transition and initial distributions, empty graphs with no AR
/// terms, intercepts `b_im0 = i (max - min) / (N + 1) + min` for `i = 1..N`
/// and variances `2 (max - min)`.
pub fn init_model(data: &Dataset, n_states: usize, max_lag: usize) -> Result<Model> {
    if n_states == 0 {
        return Err(Error::InvalidArgument("need at least one hidden state".into()));
    }
    if data.n_rows() <= max_lag {
        return Err(Error::EmptyWindow {
            rows: data.n_rows(),
            max_lag,
        });
    }
    let ranges = column_ranges(data);
    let floors = variance_floors(data);
    let n = n_states as f64;
    let emissions = (1..=n_states)
        .map(|i| {
            ranges
                .iter()
                .enumerate()
                .map(|(m, &(lo, hi))| {
                    let intercept = i as f64 * (hi - lo) / (n + 1.0) + lo;
                    LinearGaussian::constant(intercept, initial_variance(lo, hi, floors[m], m))
                })
                .collect()
        })
        .collect();
    Model::new(
        max_lag,
        vec![vec![1.0 / n; n_states]; n_states],
        vec![1.0 / n; n_states],
        emissions,
    )
}

/// Posteriors of a random segmentation of `n_steps` emission terms: the
/// window is cut at `3N..=6N` random points, the first `N` pieces take
/// states `0..N` and later pieces a random state. Each row puts 0.95 on its
/// segment's state.
pub fn segment_posteriors(n_steps: usize, n_states: usize, seed: u64) -> PosteriorTables {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cuts = vec![0, n_steps];
    if n_steps > 1 {
        let k = rng.random_range(3 * n_states..=6 * n_states);
        cuts.extend((0..k).map(|_| rng.random_range(1..n_steps)));
    }
    cuts.sort_unstable();
    cuts.dedup();
    let mut labels = Vec::with_capacity(n_steps);
    for (s, w) in cuts.windows(2).enumerate() {
        let state = if s < n_states { s } else { rng.random_range(0..n_states) };
        labels.extend(std::iter::repeat_n(state, w[1] - w[0]));
    }
    let (on, off) = if n_states == 1 {
        (1.0, 0.0)
    } else {
        (1.0 - SEGMENT_SPREAD, SEGMENT_SPREAD / (n_states - 1) as f64)
    };
    let gamma: Vec<Vec<f64>> = labels
        .iter()
        .map(|&l| (0..n_states).map(|i| if i == l { on } else { off }).collect())
        .collect();
    let xi = gamma
        .windows(2)
        .map(|w| w[0].iter().map(|a| w[1].iter().map(|b| a * b).collect()).collect())
        .collect();
    PosteriorTables {
        gamma,
        xi,
        loglik: f64::NAN,
    }
}

const SEGMENT_SPREAD: f64 = 0.05;

/// A restart point: [`init_model`] refit by one M-step under
/// [`segment_posteriors`]. Returns the model with the posteriors used.
pub fn init_from_segments(
    data: &Dataset,
    n_states: usize,
    max_lag: usize,
    seed: u64,
) -> Result<(Model, PosteriorTables)> {
    let base = init_model(data, n_states, max_lag)?;
    let post = segment_posteriors(base.effective_len(data)?, n_states, seed);
    let (model, _) = m_step(&base, data, &post, &variance_floors(data))?;
    Ok((model, post))
}
