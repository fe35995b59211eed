//! Per-channel Fisher criterion and top-n channel selection.

use crate::data::Class;
use crate::error::{Error, Result};

/// Fisher score of every channel.
///
/// `values[c][i]` is the scalar summary of channel `c` on trial `i`. A channel
/// whose classes have zero pooled variance but different means scores +∞.
pub fn fisher_scores(values: &[Vec<f64>], labels: &[Class]) -> Result<Vec<f64>> {
    let n_neg = labels.iter().filter(|&&l| l == Class::Neg).count();
    let n_pos = labels.len() - n_neg;
    if n_neg < 2 || n_pos < 2 {
        return Err(Error::invalid(format!(
            "Fisher criterion needs >= 2 trials per class, got {n_neg} and {n_pos}"
        )));
    }
    values
        .iter()
        .enumerate()
        .map(|(c, row)| {
            if row.len() != labels.len() {
                return Err(Error::invalid(format!(
                    "channel {c} has {} values for {} labels",
                    row.len(),
                    labels.len()
                )));
            }
            let (mn, vn) = class_moments(row, labels, Class::Neg);
            let (mp, vp) = class_moments(row, labels, Class::Pos);
            let num = (mn - mp).powi(2);
            let den = vn + vp;
            Ok(if den > 0.0 {
                num / den
            } else if num > 0.0 {
                f64::INFINITY
            } else {
                0.0
            })
        })
        .collect()
}

fn class_moments(row: &[f64], labels: &[Class], class: Class) -> (f64, f64) {
    let xs: Vec<f64> = row
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == class)
        .map(|(&v, _)| v)
        .collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Indices of the `n` highest scores, best first; ties go to the lower index.
pub fn select_channels(scores: &[f64], n: usize) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::config("n_channels", "must select at least one channel"));
    }
    if n > scores.len() {
        return Err(Error::config(
            "n_channels",
            format!("cannot select {n} of {} channels", scores.len()),
        ));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(n);
    Ok(idx)
}
