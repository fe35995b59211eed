//! Common spatial patterns by simultaneous diagonalization of the two class
//! covariance matrices.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{FeatureVector, Method};
use crate::data::Trial;
use crate::error::{Error, Result};

/// Eigenvalues of the composite covariance below this fraction of the largest
/// one make the whitening transform ill-defined.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CspModel {
    /// 2m x channels. Rows `0..m` maximize class −1 variance, rows `m..2m`
    /// maximize class +1 variance.
    pub filters: DMatrix<f64>,
    /// Class −1 share of the variance captured by each filter row.
    pub eigenvalues: Vec<f64>,
    pub m: usize,
}

/// X·Xᵀ / trace(X·Xᵀ).
pub fn normalized_covariance(data: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let c = data * data.transpose();
    let tr = c.trace();
    if !(tr > 0.0) {
        return Err(Error::Degenerate("trial has zero energy".into()));
    }
    Ok(c / tr)
}

/// Mean of the trace-normalized covariances of `trials`.
pub fn class_covariance<'a, I>(trials: I, n_channels: usize) -> Result<DMatrix<f64>>
where
    I: IntoIterator<Item = &'a DMatrix<f64>>,
{
    let mut acc = DMatrix::zeros(n_channels, n_channels);
    let mut n = 0usize;
    for x in trials {
        if x.nrows() != n_channels {
            return Err(Error::DimensionMismatch {
                expected: n_channels,
                actual: x.nrows(),
            });
        }
        acc += normalized_covariance(x)?;
        n += 1;
    }
    if n == 0 {
        return Err(Error::invalid("class has no trials"));
    }
    Ok(acc / n as f64)
}

impl CspModel {
    /// Fits from per-class trial lists.
    pub fn fit(class_neg: &[&Trial], class_pos: &[&Trial], m: usize) -> Result<CspModel> {
        let nc = class_neg
            .first()
            .or(class_pos.first())
            .map(|t| t.n_channels())
            .ok_or_else(|| Error::invalid("no trials"))?;
        if class_neg.is_empty() || class_pos.is_empty() {
            return Err(Error::invalid("both classes need at least one trial"));
        }
        let neg = class_covariance(class_neg.iter().map(|t| &t.data), nc)?;
        let pos = class_covariance(class_pos.iter().map(|t| &t.data), nc)?;
        Self::from_covariances(&neg, &pos, m)
    }

    /// Fits from class-averaged normalized covariances.
    pub fn from_covariances(
        cov_neg: &DMatrix<f64>,
        cov_pos: &DMatrix<f64>,
        m: usize,
    ) -> Result<CspModel> {
        let nc = cov_neg.nrows();
        if cov_neg.shape() != (nc, nc) || cov_pos.shape() != (nc, nc) {
            return Err(Error::DimensionMismatch {
                expected: nc,
                actual: cov_pos.nrows(),
            });
        }
        if m == 0 || 2 * m > nc {
            return Err(Error::config(
                "m",
                format!("need 1 <= m and 2m <= {nc} channels, got m = {m}"),
            ));
        }

        // Whitening of the composite covariance.
        let composite = cov_neg + cov_pos;
        let eig = SymmetricEigen::new(composite);
        let largest = eig.eigenvalues.max();
        let smallest = eig.eigenvalues.min();
        let threshold = RANK_TOLERANCE * largest;
        if !(smallest > threshold) {
            return Err(Error::RankDeficient {
                smallest,
                threshold,
            });
        }
        let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()));
        let whitening = inv_sqrt * eig.eigenvectors.transpose();

        // Rotation diagonalizing the whitened class −1 covariance.
        let mut whitened = &whitening * cov_neg * whitening.transpose();
        whitened = (&whitened + whitened.transpose()) * 0.5;
        let rot = SymmetricEigen::new(whitened);
        let mut order: Vec<usize> = (0..nc).collect();
        order.sort_by(|&a, &b| rot.eigenvalues[b].total_cmp(&rot.eigenvalues[a]));

        let picks: Vec<usize> = order[..m].iter().chain(&order[nc - m..]).copied().collect();
        let mut filters = DMatrix::zeros(2 * m, nc);
        let mut eigenvalues = Vec::with_capacity(2 * m);
        for (row, &k) in picks.iter().enumerate() {
            let mut f = rot.eigenvectors.column(k).transpose() * &whitening;
            let pivot = f.iter().copied().fold(0.0f64, |best, v| {
                if v.abs() > best.abs() {
                    v
                } else {
                    best
                }
            });
            if pivot < 0.0 {
                f.neg_mut();
            }
            filters.row_mut(row).copy_from(&f);
            eigenvalues.push(rot.eigenvalues[k]);
        }
        Ok(CspModel {
            filters,
            eigenvalues,
            m,
        })
    }

    pub fn n_channels(&self) -> usize {
        self.filters.ncols()
    }

    /// Summed per-row sample variances of the class −1 and class +1 filter
    /// outputs for one channels x samples matrix.
    pub fn projected_variances(&self, data: &DMatrix<f64>) -> Result<(f64, f64)> {
        if data.nrows() != self.n_channels() {
            return Err(Error::DimensionMismatch {
                expected: self.n_channels(),
                actual: data.nrows(),
            });
        }
        let proj = &self.filters * data;
        let var_rows = |rows: std::ops::Range<usize>| -> f64 {
            rows.map(|r| sample_variance(proj.row(r).iter().copied())).sum()
        };
        Ok((var_rows(0..self.m), var_rows(self.m..2 * self.m)))
    }

    /// log(var(S_H) / (var(S_H) + var(S_F))): a single value in (−∞, 0].
    pub fn feature(&self, trial: &Trial) -> Result<FeatureVector> {
        let (vh, vf) = self.projected_variances(&trial.data)?;
        Ok(FeatureVector::new(vec![log_variance_ratio(vh, vf)?], Method::Csp))
    }

    /// Same value as [`CspModel::feature`], computed from the trial's sample
    /// covariance instead of its samples.
    pub fn feature_from_covariance(&self, cov: &DMatrix<f64>) -> Result<f64> {
        if cov.nrows() != self.n_channels() {
            return Err(Error::DimensionMismatch {
                expected: self.n_channels(),
                actual: cov.nrows(),
            });
        }
        let quad = |r: usize| {
            let w = self.filters.row(r);
            (w * cov * w.transpose())[(0, 0)]
        };
        let vh: f64 = (0..self.m).map(quad).sum();
        let vf: f64 = (self.m..2 * self.m).map(quad).sum();
        log_variance_ratio(vh, vf)
    }
}

/// log(vh / (vh + vf)).
pub fn log_variance_ratio(var_h: f64, var_f: f64) -> Result<f64> {
    let total = var_h + var_f;
    if !(total > 0.0) {
        return Err(Error::Degenerate("zero total projected variance".into()));
    }
    Ok((var_h / total).ln())
}

pub(crate) fn sample_variance<I: ExactSizeIterator<Item = f64> + Clone>(xs: I) -> f64 {
    let n = xs.len() as f64;
    if n < 2.0 {
        return 0.0;
    }
    let mean = xs.clone().sum::<f64>() / n;
    xs.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}
