//! AR order selection from sample partial autocorrelations.
//!
//! Under a white-noise null the lag-`k` partial autocorrelation is roughly
//! `N(0, 1/T)`, so a lag is significant when `|PACF(k)| > z_{1-alpha/2} / sqrt(T)`.
//! The selected order is the largest significant lag.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::solve_yule_walker;

pub const DEFAULT_KMAX: usize = 5;
pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct PacfReport {
    /// `rho[k-1]` is the lag-`k` autocorrelation.
    pub rho: Vec<f64>,
    /// `phi_kk[k-1]` is the lag-`k` partial autocorrelation.
    pub phi_kk: Vec<f64>,
    pub critical: f64,
    pub order: usize,
}

impl PacfReport {
    pub fn is_significant(&self, k: usize) -> bool {
        self.phi_kk[k - 1].abs() > self.critical
    }
}

fn centered(series: &[f64]) -> Result<Vec<f64>> {
    if series.is_empty() {
        return Err(Error::SeriesTooShort { len: 0, k: 0 });
    }
    if series.iter().all(|&v| v == series[0]) {
        return Err(Error::ConstantSeries);
    }
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    Ok(series.iter().map(|v| v - mean).collect())
}

/// Autocovariances `zeta_0 .. zeta_kmax` with divisor `n`.
fn autocovariances(dev: &[f64], kmax: usize) -> Vec<f64> {
    let n = dev.len() as f64;
    (0..=kmax)
        .map(|k| dev[k..].iter().zip(dev).map(|(a, b)| a * b).sum::<f64>() / n)
        .collect()
}

fn autocorrelations(series: &[f64], kmax: usize) -> Result<Vec<f64>> {
    if series.len() <= kmax {
        return Err(Error::SeriesTooShort {
            len: series.len(),
            k: kmax,
        });
    }
    let dev = centered(series)?;
    let zeta = autocovariances(&dev, kmax);
    if !(zeta[0] > 0.0) {
        return Err(Error::ConstantSeries);
    }
    Ok(zeta[1..].iter().map(|z| z / zeta[0]).collect())
}

/// Mean-centred lag-`k` sample autocorrelation `zeta_k / zeta_0`.
pub fn autocorrelation(series: &[f64], k: usize) -> Result<f64> {
    if k == 0 {
        centered(series)?;
        return Ok(1.0);
    }
    autocorrelations(series, k).map(|r| r[k - 1])
}

/// Partial autocorrelations `Phi(1) .. Phi(kmax)`, each the last coefficient of
/// the order-`k` Yule-Walker system.
pub fn pacf(series: &[f64], kmax: usize) -> Result<Vec<f64>> {
    if kmax == 0 {
        return Err(Error::InvalidArgument("kmax must be at least 1".into()));
    }
    let rho = autocorrelations(series, kmax)?;
    pacf_from_rho(&rho)
}

fn pacf_from_rho(rho: &[f64]) -> Result<Vec<f64>> {
    (1..=rho.len())
        .map(|k| {
            solve_yule_walker(rho, k)
                .map(|phi| phi[k - 1])
                .map_err(|_| Error::SingularToeplitz { k })
        })
        .collect()
}

/// `z_{1-alpha/2} / sqrt(n)`.
pub fn critical_value(n: usize, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} not in (0, 1)")));
    }
    let z = Normal::standard().inverse_cdf(1.0 - alpha / 2.0);
    Ok(z / (n as f64).sqrt())
}

/// Full correlogram report and the selected order for one series.
pub fn pacf_report(series: &[f64], kmax: usize, alpha: f64) -> Result<PacfReport> {
    let critical = critical_value(series.len(), alpha)?;
    if kmax == 0 {
        return Err(Error::InvalidArgument("kmax must be at least 1".into()));
    }
    let rho = autocorrelations(series, kmax)?;
    let phi_kk = pacf_from_rho(&rho)?;
    let order = phi_kk
        .iter()
        .rposition(|p| p.abs() > critical)
        .map_or(0, |k| k + 1);
    Ok(PacfReport {
        rho,
        phi_kk,
        critical,
        order,
    })
}

/// Largest lag whose partial autocorrelation is significant at level `alpha`.
pub fn select_order(series: &[f64], kmax: usize, alpha: f64) -> Result<usize> {
    pacf_report(series, kmax, alpha).map(|r| r.order)
}

/// `p* = max_m p*_m` over the dataset's columns.
pub fn select_model_max_lag(data: &Dataset, kmax: usize, alpha: f64) -> Result<usize> {
    (0..data.n_vars())
        .map(|m| select_order(&data.column(m), kmax, alpha))
        .try_fold(0, |acc, r| r.map(|p| acc.max(p)))
}
