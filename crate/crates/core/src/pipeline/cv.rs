use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::extractor::{Prepared, TrainedPipeline};
use crate::data::{Class, TrialSet};
use crate::error::{Error, Result};

/// Fold index of every trial.
///
/// Each class is shuffled, then dealt round-robin with the dealer position
/// carried over between classes, so fold sizes differ by at most one and each
/// fold's class counts differ from the ideal share by less than one trial.
pub fn stratified_folds(labels: &[Class], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::config("folds", format!("need at least 2 folds, got {k}")));
    }
    if k > labels.len() {
        return Err(Error::config(
            "folds",
            format!("{k} folds but only {} labeled trials", labels.len()),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; labels.len()];
    let mut next = 0;
    for class in [Class::Neg, Class::Pos] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            fold[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(fold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    /// Percent.
    pub mean: f64,
    /// Sample standard deviation of the fold accuracies, percent.
    pub std: f64,
    pub folds: usize,
    pub fold_accuracies: Vec<f64>,
}

/// Stratified k-fold accuracy of the full pipeline. Feature extraction and
/// the classifier are refitted inside every fold.
pub fn cross_validate(train: &TrialSet, config: &PipelineConfig, folds: usize, seed: u64) -> Result<CvSummary> {
    let labels = train
        .known_labels()
        .ok_or_else(|| Error::invalid("cross-validation needs a fully labeled set"))?;
    config.validate(train.sampling_rate_hz(), train.duration_s(), train.n_channels())?;
    let fold_of = stratified_folds(&labels, folds, seed)?;
    for class in [Class::Neg, Class::Pos] {
        let n = labels.iter().filter(|&&l| l == class).count();
        if n < 2 {
            return Err(Error::config(
                "folds",
                format!("class {} has {n} trials; need at least 2", class.as_str()),
            ));
        }
    }
    let prepared = Prepared::new(train, config)?;
    let fold_accuracies = (0..folds)
        .map(|f| {
            let (held, kept): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|&i| fold_of[i] == f);
            let kept_labels: Vec<Class> = kept.iter().map(|&i| labels[i]).collect();
            let model = TrainedPipeline::fit_prepared(&prepared, &kept, &kept_labels, config)?;
            let votes = model.vote_prepared(&prepared, &held)?;
            let correct = votes
                .iter()
                .zip(&held)
                .filter(|(v, &i)| v.decision() == labels[i])
                .count();
            Ok(100.0 * correct as f64 / held.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (mean, std) = mean_std(&fold_accuracies);
    Ok(CvSummary {
        mean,
        std,
        folds,
        fold_accuracies,
    })
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
