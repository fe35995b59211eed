//! Autoregressive modelling via the Yule-Walker equations.
//!
//! Coefficients follow the convention `x(n) = −Σ a_k x(n−k) + u(n)`, so a
//! process `x(n) = 0.9 x(n−1) + u(n)` has `a_1 = −0.9`.

use serde::{Deserialize, Serialize};

use super::{FeatureVector, Method};
use crate::data::Trial;
use crate::error::{Error, Result};

pub const DEFAULT_ORDER: usize = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArCoefficients {
    pub a: Vec<f64>,
    /// Innovation variance σ².
    pub noise_variance: f64,
}

impl ArCoefficients {
    pub fn order(&self) -> usize {
        self.a.len()
    }
}

/// Biased (1/N) autocovariances of the mean-removed series for lags `0..=max_lag`.
pub fn autocovariance(series: &[f64], max_lag: usize) -> Vec<f64> {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|v| v - mean).collect();
    (0..=max_lag)
        .map(|lag| {
            if lag >= n {
                return 0.0;
            }
            centered[..n - lag]
                .iter()
                .zip(&centered[lag..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / n as f64
        })
        .collect()
}

/// Solves the order-p Yule-Walker system for autocovariances `r[0..=p]` with
/// the Levinson-Durbin recursion.
pub fn yule_walker(r: &[f64], p: usize) -> Result<ArCoefficients> {
    if p == 0 {
        return Err(Error::config("ar_order", "AR order must be >= 1"));
    }
    if r.len() < p + 1 {
        return Err(Error::invalid(format!(
            "need {} autocovariance lags, got {}",
            p + 1,
            r.len()
        )));
    }
    if !(r[0] > 0.0) {
        return Err(Error::Singular("zero-lag autocovariance is not positive".into()));
    }
    // phi holds the predictor x(n) ≈ Σ phi_k x(n−k).
    let mut phi = vec![0.0; p];
    let mut prev = vec![0.0; p];
    let mut err = r[0];
    for i in 0..p {
        let acc: f64 = (0..i).map(|j| phi[j] * r[i - j]).sum();
        let k = (r[i + 1] - acc) / err;
        if !k.is_finite() || k.abs() >= 1.0 {
            return Err(Error::Singular(format!(
                "autocovariance matrix not positive definite at order {}",
                i + 1
            )));
        }
        prev[..i].copy_from_slice(&phi[..i]);
        for j in 0..i {
            phi[j] = prev[j] - k * prev[i - 1 - j];
        }
        phi[i] = k;
        err *= 1.0 - k * k;
        if !(err > r[0] * 1e-14) {
            return Err(Error::Singular(format!(
                "prediction error vanished at order {}",
                i + 1
            )));
        }
    }
    Ok(ArCoefficients {
        a: phi.into_iter().map(|v| -v).collect(),
        noise_variance: err,
    })
}

/// Fits an order-`p` AR model to `series`.
pub fn fit_ar(series: &[f64], p: usize) -> Result<ArCoefficients> {
    if p == 0 {
        return Err(Error::config("ar_order", "AR order must be >= 1"));
    }
    if series.len() <= 10 * p {
        return Err(Error::invalid(format!(
            "series of length {} too short for AR({p}); need more than {}",
            series.len(),
            10 * p
        )));
    }
    let r = autocovariance(series, p);
    if !(r[0] > 0.0) {
        return Err(Error::Degenerate("constant series has no AR model".into()));
    }
    yule_walker(&r, p)
}

/// Concatenated `[a_1 … a_p, σ²]` blocks, one per listed channel.
pub fn ar_feature(trial: &Trial, channels: &[usize], p: usize) -> Result<FeatureVector> {
    let mut values = Vec::with_capacity(channels.len() * (p + 1));
    for &c in channels {
        if c >= trial.n_channels() {
            return Err(Error::invalid(format!(
                "channel index {c} out of range ({} channels)",
                trial.n_channels()
            )));
        }
        let row: Vec<f64> = trial.data.row(c).iter().copied().collect();
        let coef = fit_ar(&row, p).map_err(|e| Error::Channel {
            channel: c,
            source: Box::new(e),
        })?;
        values.extend_from_slice(&coef.a);
        values.push(coef.noise_variance);
    }
    Ok(FeatureVector::new(values, Method::Ar))
}
