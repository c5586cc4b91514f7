//! Numeric labels for hidden states from their implied stationary means.

use log::warn;

use crate::error::{Error, Result};
use crate::model::Model;

/// Denominators `|1 - sum(eta)|` at or below this are treated as unit roots.
pub const UNIT_ROOT_TOL: f64 = 1e-9;

/// Air-quality limits for SO2, NO2, CO, O3, PM10 and PM2.5 (ug/m3).
pub const AIR_QUALITY_KAPPA: [f64; 6] = [500.0, 200.0, 10000.0, 200.0, 150.0, 75.0];

/// Reciprocals of [`AIR_QUALITY_KAPPA`].
pub fn air_quality_weights() -> [f64; 6] {
    AIR_QUALITY_KAPPA.map(|k| 1.0 / k)
}

/// Implied means `nu_i1 .. nu_iM` of state `i`, visiting variables in
/// topological order so that parents are resolved first:
/// `nu_im = (b0 + sum_k b_k nu_{parent_k}) / (1 - sum_r eta_r)`.
pub fn state_means(model: &Model, i: usize) -> Result<Vec<f64>> {
    let structure = model.structure(i);
    let order = structure
        .topological_order()
        .ok_or_else(|| Error::InvalidModel(format!("state {i} has a cyclic graph")))?;
    let mut nu = vec![0.0; model.n_vars];
    for m in order {
        let e = &model.emissions[i][m];
        let ar_sum: f64 = e.ar_weights().iter().sum();
        let denom = 1.0 - ar_sum;
        if denom.abs() <= UNIT_ROOT_TOL {
            return Err(Error::UnitRoot {
                state: i,
                var: m,
                sum: ar_sum,
            });
        }
        if denom < 0.0 {
            warn!("state {i} variable {m} is non-stationary (AR sum {ar_sum}); mean reported as-is");
        }
        let num = e.intercept()
            + e.parent_weights()
                .iter()
                .zip(&e.parents)
                .map(|(w, &u)| w * nu[u])
                .sum::<f64>();
        nu[m] = num / denom;
    }
    Ok(nu)
}

/// Implied means for every state; row `i` is [`state_means`] of state `i`.
pub fn mean_table(model: &Model) -> Result<Vec<Vec<f64>>> {
    (0..model.n_states).map(|i| state_means(model, i)).collect()
}

fn check_lengths(model: &Model, v: &[f64], kappa: &[f64]) -> Result<()> {
    if v.len() != model.n_vars || kappa.len() != model.n_vars {
        return Err(Error::InvalidArgument(format!(
            "v and kappa need {} entries, got {} and {}",
            model.n_vars,
            v.len(),
            kappa.len()
        )));
    }
    Ok(())
}

/// `g1(i) = sum_m v_m (nu_im - kappa_m)`.
pub fn label_g1(model: &Model, v: &[f64], kappa: &[f64]) -> Result<Vec<f64>> {
    check_lengths(model, v, kappa)?;
    mean_table(model).map(|t| {
        t.iter()
            .map(|nu| (0..nu.len()).map(|m| v[m] * (nu[m] - kappa[m])).sum())
            .collect()
    })
}

/// `g2(i) = max_m v_m (nu_im - kappa_m)`.
pub fn label_g2(model: &Model, v: &[f64], kappa: &[f64]) -> Result<Vec<f64>> {
    check_lengths(model, v, kappa)?;
    mean_table(model).map(|t| {
        t.iter()
            .map(|nu| {
                (0..nu.len())
                    .map(|m| v[m] * (nu[m] - kappa[m]))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    })
}
