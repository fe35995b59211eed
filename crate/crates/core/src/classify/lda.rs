use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Class;
use crate::error::{Error, Result};
use crate::features::FeatureVector;

/// Relative ridge added to the within-class scatter before inversion.
pub const SHRINKAGE: f64 = 1e-6;

/// Separating hyperplane `wᵀx + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub w: Vec<f64>,
    pub b: f64,
}

/// Fisher discriminant on feature vectors.
pub fn fit_lda(features: &[FeatureVector], labels: &[Class]) -> Result<LdaModel> {
    let rows: Vec<&[f64]> = features.iter().map(|f| f.values.as_slice()).collect();
    fit_rows(&rows, labels)
}

/// Fisher discriminant on raw rows.
///
/// `w = (S_w + γ·tr(S_w)/d·I)⁻¹ (μ₊ − μ₋)`, `b = −wᵀ(μ₊ + μ₋)/2`, with `S_w`
/// the pooled within-class scatter.
pub fn fit_rows(rows: &[&[f64]], labels: &[Class]) -> Result<LdaModel> {
    if rows.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: rows.len(),
            actual: labels.len(),
        });
    }
    let d = rows.first().map_or(0, |r| r.len());
    if d == 0 {
        return Err(Error::invalid("features have zero dimension"));
    }
    if let Some(bad) = rows.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: bad.len(),
        });
    }
    if rows.iter().any(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(Error::invalid("non-finite feature value"));
    }

    let mut mean = [DVector::<f64>::zeros(d), DVector::<f64>::zeros(d)];
    let mut count = [0usize; 2];
    for (r, &l) in rows.iter().zip(labels) {
        let k = class_slot(l);
        mean[k] += DVector::from_column_slice(r);
        count[k] += 1;
    }
    if count[0] == 0 || count[1] == 0 {
        return Err(Error::invalid(format!(
            "LDA needs both classes, got {} (−1) and {} (+1)",
            count[0], count[1]
        )));
    }
    for k in 0..2 {
        mean[k] /= count[k] as f64;
    }

    let mut scatter = DMatrix::<f64>::zeros(d, d);
    for (r, &l) in rows.iter().zip(labels) {
        let diff = DVector::from_column_slice(r) - &mean[class_slot(l)];
        scatter.ger(1.0, &diff, &diff, 1.0);
    }
    let tr = scatter.trace();
    let ridge = if tr > 0.0 { SHRINKAGE * tr / d as f64 } else { 1.0 };
    for i in 0..d {
        scatter[(i, i)] += ridge;
    }

    let delta = &mean[1] - &mean[0];
    let w = match scatter.clone().cholesky() {
        Some(ch) => ch.solve(&delta),
        None => scatter
            .lu()
            .solve(&delta)
            .ok_or_else(|| Error::Singular("within-class scatter".into()))?,
    };
    if !w.iter().all(|v| v.is_finite()) || w.iter().all(|&v| v == 0.0) {
        return Err(Error::Degenerate(
            "class means coincide; no separating direction".into(),
        ));
    }
    let b = -w.dot(&(&mean[1] + &mean[0])) / 2.0;
    Ok(LdaModel {
        w: w.iter().copied().collect(),
        b,
    })
}

fn class_slot(c: Class) -> usize {
    match c {
        Class::Neg => 0,
        Class::Pos => 1,
    }
}

impl LdaModel {
    pub fn dim(&self) -> usize {
        self.w.len()
    }

    /// Raw discriminant output `wᵀx + b`.
    pub fn score_values(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.w.len() {
            return Err(Error::DimensionMismatch {
                expected: self.w.len(),
                actual: x.len(),
            });
        }
        Ok(self.w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.b)
    }

    pub fn score(&self, x: &FeatureVector) -> Result<f64> {
        self.score_values(&x.values)
    }

    /// Sign of the score; exactly 0 maps to +1.
    pub fn predict(&self, x: &FeatureVector) -> Result<Class> {
        self.score(x).map(Class::from_score)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Method;
    use Class::{Neg, Pos};

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::new(v.to_vec(), Method::Csp)
    }

    #[test]
    fn symmetric_clusters_give_axis_normal_and_zero_offset() {
        let xs = [
            fv(&[-1.5, 0.5]),
            fv(&[-0.5, -0.5]),
            fv(&[-1.0, 0.0]),
            fv(&[1.5, 0.5]),
            fv(&[0.5, -0.5]),
            fv(&[1.0, 0.0]),
        ];
        let y = [Neg, Neg, Neg, Pos, Pos, Pos];
        let m = fit_lda(&xs, &y).unwrap();
        assert!(m.b.abs() < 1e-12);
        assert!(m.w[0] > 0.0);
        assert!(m.w[1].abs() < 1e-9 * m.w[0].abs());
        assert!(m.score(&fv(&[0.0, 0.3])).unwrap().abs() < 1e-12);
    }

    #[test]
    fn one_dimensional_threshold_at_midpoint() {
        let xs = [fv(&[-1.0]), fv(&[1.0]), fv(&[1.0]), fv(&[3.0])];
        let y = [Neg, Neg, Pos, Pos];
        let m = fit_lda(&xs, &y).unwrap();
        // closed form: S_w = 4, ridge 4e-6, w = 2/(4 + 4e-6), b = -w
        let w = 2.0 / (4.0 + 4e-6);
        assert!((m.w[0] - w).abs() < 1e-15 && (m.b + w).abs() < 1e-15);
        assert_eq!(m.predict(&fv(&[1.0])).unwrap(), Pos);
        assert_eq!(m.predict(&fv(&[0.999])).unwrap(), Neg);
        assert!(m.score(&fv(&[1.0])).unwrap().abs() < 1e-15);
    }

    #[test]
    fn score_is_affine_and_signs_follow_class_means() {
        let xs = [fv(&[0.0, 1.0]), fv(&[0.2, 0.8]), fv(&[2.0, 0.0]), fv(&[2.3, 0.1])];
        let y = [Neg, Neg, Pos, Pos];
        let m = fit_lda(&xs, &y).unwrap();
        let x = fv(&[0.7, -0.4]);
        let x2 = fv(&[1.4, -0.8]);
        let wx: f64 = m.w.iter().zip(&x.values).map(|(a, b)| a * b).sum();
        assert!((m.score(&x2).unwrap() - m.score(&x).unwrap() - wx).abs() < 1e-12);
        assert!(m.score(&fv(&[2.15, 0.05])).unwrap() > 0.0);
        assert!(m.score(&fv(&[0.1, 0.9])).unwrap() < 0.0);
    }

    #[test]
    fn errors() {
        assert!(fit_lda(&[fv(&[1.0]), fv(&[2.0])], &[Pos, Pos]).is_err());
        assert!(fit_lda(&[fv(&[]), fv(&[])], &[Neg, Pos]).is_err());
        assert!(fit_lda(&[fv(&[1.0]), fv(&[2.0, 1.0])], &[Neg, Pos]).is_err());
        assert!(fit_lda(&[fv(&[1.0]), fv(&[1.0])], &[Neg, Pos]).is_err());
        let m = LdaModel { w: vec![1.0, 0.0], b: 0.0 };
        assert!(m.score(&fv(&[1.0])).is_err());
    }

    #[test]
    fn tie_rule_and_signs() {
        let m = LdaModel { w: vec![1.0], b: 0.0 };
        assert_eq!(m.predict(&fv(&[3.2])).unwrap(), Pos);
        assert_eq!(m.predict(&fv(&[-0.1])).unwrap(), Neg);
        assert_eq!(m.predict(&fv(&[0.0])).unwrap(), Pos);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let m = LdaModel { w: vec![0.1 + 0.2, -1e-300, 123456.789], b: -std::f64::consts::PI };
        let s = serde_json::to_string(&m).unwrap();
        let back: LdaModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }
}
