use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lda::{fit_rows, LdaModel};
use crate::data::{ceil_fraction, Class};
use crate::error::{Error, Result};
use crate::features::FeatureVector;

pub const DEFAULT_ROUNDS: usize = 50;
pub const DEFAULT_SUBSET_FRACTION: f64 = 0.5;
/// Consecutive single-class bootstrap draws tolerated in one round.
pub const MAX_REDRAWS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaggingEnsemble {
    pub components: Vec<LdaModel>,
    pub subset_fraction: f64,
    pub rounds: usize,
    pub seed: u64,
}

/// Deterministic stream for one round: the seed picks the key, the round picks
/// the stream, so rounds can be fitted in any order.
fn round_rng(seed: u64, round: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(round as u64);
    rng
}

/// Bootstrap sample indices used by `round`, redrawn until both classes appear.
pub fn bootstrap_indices(
    labels: &[Class],
    subset_fraction: f64,
    seed: u64,
    round: usize,
) -> Result<Vec<usize>> {
    let n = labels.len();
    let k = ceil_fraction(subset_fraction, n).max(1);
    let mut rng = round_rng(seed, round);
    for _ in 0..MAX_REDRAWS {
        let idx: Vec<usize> = (0..k).map(|_| rng.random_range(0..n)).collect();
        let first = labels[idx[0]];
        if idx.iter().any(|&i| labels[i] != first) {
            return Ok(idx);
        }
    }
    Err(Error::Degenerate(format!(
        "round {round}: {MAX_REDRAWS} consecutive single-class bootstrap draws"
    )))
}

/// Fits `rounds` Fisher discriminants on bootstrap subsets of size
/// ⌈subset_fraction·n⌉ drawn with replacement.
pub fn fit_bagging(
    features: &[FeatureVector],
    labels: &[Class],
    rounds: usize,
    subset_fraction: f64,
    seed: u64,
) -> Result<BaggingEnsemble> {
    if rounds == 0 {
        return Err(Error::config("rounds", "must be >= 1"));
    }
    if !(subset_fraction > 0.0 && subset_fraction <= 1.0) {
        return Err(Error::config(
            "subset_fraction",
            format!("must lie in (0, 1], got {subset_fraction}"),
        ));
    }
    if features.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: features.len(),
            actual: labels.len(),
        });
    }
    if !(labels.contains(&Class::Neg) && labels.contains(&Class::Pos)) {
        return Err(Error::invalid("bagging needs both classes in the training set"));
    }
    let rows: Vec<&[f64]> = features.iter().map(|f| f.values.as_slice()).collect();
    let components = (0..rounds)
        .into_par_iter()
        .map(|r| {
            let idx = bootstrap_indices(labels, subset_fraction, seed, r)?;
            let sub_rows: Vec<&[f64]> = idx.iter().map(|&i| rows[i]).collect();
            let sub_labels: Vec<Class> = idx.iter().map(|&i| labels[i]).collect();
            fit_rows(&sub_rows, &sub_labels)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BaggingEnsemble {
        components,
        subset_fraction,
        rounds,
        seed,
    })
}

/// Outcome of one ensemble vote.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vote {
    pub pos: usize,
    pub neg: usize,
    pub mean_score: f64,
}

impl Vote {
    /// Majority wins; an exact tie goes to the sign of the mean score (0 → +1).
    pub fn decision(&self) -> Class {
        match self.pos.cmp(&self.neg) {
            std::cmp::Ordering::Greater => Class::Pos,
            std::cmp::Ordering::Less => Class::Neg,
            std::cmp::Ordering::Equal => Class::from_score(self.mean_score),
        }
    }
}

impl BaggingEnsemble {
    pub fn vote(&self, x: &FeatureVector) -> Result<Vote> {
        let mut vote = Vote {
            pos: 0,
            neg: 0,
            mean_score: 0.0,
        };
        for c in &self.components {
            let s = c.score(x)?;
            match Class::from_score(s) {
                Class::Pos => vote.pos += 1,
                Class::Neg => vote.neg += 1,
            }
            vote.mean_score += s;
        }
        vote.mean_score /= self.components.len() as f64;
        Ok(vote)
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<Class> {
        Ok(self.vote(x)?.decision())
    }

    /// Mean component score.
    pub fn score(&self, x: &FeatureVector) -> Result<f64> {
        Ok(self.vote(x)?.mean_score)
    }
}
