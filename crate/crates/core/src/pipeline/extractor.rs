use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use crate::classify::{fit_bagging, BaggingEnsemble, Vote};
use crate::data::{Class, Trial, TrialSet};
use crate::error::{Error, Result};
use crate::features::csp::class_covariance;
use crate::features::{
    ar_feature, fisher_scores, log_band_power, lrp_feature, select_channels, CspModel, FeatureVector,
    Method,
};

/// Preprocessed copies of a trial set, one per feature chain in use.
///
/// Preprocessing is per trial and has no fitted state, so one `Prepared`
/// can serve every fold of a cross-validation.
pub struct Prepared {
    fs: f64,
    n_channels: usize,
    csp: Option<Vec<Trial>>,
    ar: Option<Vec<Trial>>,
    lrp: Option<Vec<Trial>>,
}

impl Prepared {
    pub fn new(set: &TrialSet, config: &PipelineConfig) -> Result<Prepared> {
        let chain = |on: bool, pre: &crate::preprocess::PreprocessConfig| -> Result<Option<Vec<Trial>>> {
            if on {
                Ok(Some(pre.apply(set)?.trials().to_vec()))
            } else {
                Ok(None)
            }
        };
        Ok(Prepared {
            fs: set.sampling_rate_hz(),
            n_channels: set.n_channels(),
            csp: chain(config.uses(Method::Csp), &config.csp.preprocess)?,
            ar: chain(config.uses(Method::Ar), &config.ar.preprocess)?,
            lrp: chain(config.uses(Method::Lrp), &config.lrp.preprocess)?,
        })
    }
}

fn missing(chain: &str) -> Error {
    Error::invalid(format!("{chain} chain was not prepared"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedCsp {
    pub channels: Vec<usize>,
    pub model: CspModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedAr {
    pub channels: Vec<usize>,
    pub order: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedLrp {
    pub channels: Vec<usize>,
    pub window_s: (f64, f64),
}

/// Feature extraction state learned from training trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedExtractor {
    pub method: Method,
    pub csp: Option<FittedCsp>,
    pub ar: Option<FittedAr>,
    pub lrp: Option<FittedLrp>,
}

fn rows_of(data: &DMatrix<f64>, channels: &[usize]) -> DMatrix<f64> {
    data.select_rows(channels)
}

fn ranked_channels(
    summaries: Vec<Vec<f64>>,
    n_channels: usize,
    labels: &[Class],
    n: usize,
) -> Result<Vec<usize>> {
    // summaries arrive per trial; fisher_scores wants them per channel
    let per_channel: Vec<Vec<f64>> = (0..n_channels)
        .map(|c| summaries.iter().map(|s| s[c]).collect())
        .collect();
    select_channels(&fisher_scores(&per_channel, labels)?, n)
}

impl FittedExtractor {
    /// Fits on the prepared trials at `idx`, whose labels are `labels`.
    pub fn fit(
        prepared: &Prepared,
        idx: &[usize],
        labels: &[Class],
        config: &PipelineConfig,
    ) -> Result<FittedExtractor> {
        if idx.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: idx.len(),
                actual: labels.len(),
            });
        }
        let all: Vec<usize> = (0..prepared.n_channels).collect();

        let csp = match &prepared.csp {
            None => None,
            Some(trials) => {
                let channels = config.csp.channels.clone().unwrap_or_else(|| all.clone());
                let class_data = |class: Class| -> Vec<DMatrix<f64>> {
                    idx.iter()
                        .zip(labels)
                        .filter(|(_, &l)| l == class)
                        .map(|(&i, _)| rows_of(&trials[i].data, &channels))
                        .collect()
                };
                let neg = class_covariance(&class_data(Class::Neg), channels.len())?;
                let pos = class_covariance(&class_data(Class::Pos), channels.len())?;
                let model = CspModel::from_covariances(&neg, &pos, config.csp.m)?;
                Some(FittedCsp { channels, model })
            }
        };

        let ar = match &prepared.ar {
            None => None,
            Some(trials) => {
                let channels = match &config.ar.channels {
                    Some(c) => c.clone(),
                    None => ranked_channels(
                        idx.iter().map(|&i| log_band_power(&trials[i])).collect(),
                        prepared.n_channels,
                        labels,
                        config.ar.n_channels,
                    )?,
                };
                Some(FittedAr {
                    channels,
                    order: config.ar.order,
                })
            }
        };

        let lrp = match &prepared.lrp {
            None => None,
            Some(trials) => {
                let window_s = config.lrp.feature_window_s;
                let channels = match &config.lrp.channels {
                    Some(c) => c.clone(),
                    None => ranked_channels(
                        idx.iter()
                            .map(|&i| lrp_feature(&trials[i], prepared.fs, &all, window_s).map(|f| f.values))
                            .collect::<Result<_>>()?,
                        prepared.n_channels,
                        labels,
                        config.lrp.n_channels,
                    )?,
                };
                Some(FittedLrp { channels, window_s })
            }
        };

        Ok(FittedExtractor {
            method: config.method,
            csp,
            ar,
            lrp,
        })
    }

    /// Feature vectors of the prepared trials at `idx`.
    pub fn features(&self, prepared: &Prepared, idx: &[usize]) -> Result<Vec<FeatureVector>> {
        use rayon::prelude::*;
        idx.par_iter()
            .map(|&i| {
                let mut parts = Vec::with_capacity(3);
                if let Some(c) = &self.csp {
                    let trials = prepared.csp.as_ref().ok_or_else(|| missing("csp"))?;
                    let (vh, vf) = c.model.projected_variances(&rows_of(&trials[i].data, &c.channels))?;
                    parts.push(FeatureVector::new(
                        vec![crate::features::csp::log_variance_ratio(vh, vf)?],
                        Method::Csp,
                    ));
                }
                if let Some(a) = &self.ar {
                    let trials = prepared.ar.as_ref().ok_or_else(|| missing("ar"))?;
                    parts.push(ar_feature(&trials[i], &a.channels, a.order)?);
                }
                if let Some(l) = &self.lrp {
                    let trials = prepared.lrp.as_ref().ok_or_else(|| missing("lrp"))?;
                    parts.push(lrp_feature(&trials[i], prepared.fs, &l.channels, l.window_s)?);
                }
                if parts.len() == 1 {
                    Ok(parts.pop().unwrap())
                } else {
                    combine_features(&parts)
                }
            })
            .collect()
    }
}

/// Concatenates feature vectors in order.
pub fn combine_features(parts: &[FeatureVector]) -> Result<FeatureVector> {
    match parts {
        [] => Err(Error::invalid("no feature vectors to combine")),
        [only] => Ok(only.clone()),
        _ => Ok(FeatureVector::new(
            parts.iter().flat_map(|p| p.values.iter().copied()).collect(),
            Method::Combined,
        )),
    }
}

/// Feature extractor plus bagged discriminant, ready to label new trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedPipeline {
    pub config: PipelineConfig,
    pub extractor: FittedExtractor,
    pub ensemble: BaggingEnsemble,
}

impl TrainedPipeline {
    /// Fits on every trial of a fully labeled set.
    pub fn fit(train: &TrialSet, config: &PipelineConfig) -> Result<TrainedPipeline> {
        let labels = train
            .known_labels()
            .ok_or_else(|| Error::invalid("training set has unlabeled trials"))?;
        let prepared = Prepared::new(train, config)?;
        let idx: Vec<usize> = (0..train.len()).collect();
        Self::fit_prepared(&prepared, &idx, &labels, config)
    }

    pub(crate) fn fit_prepared(
        prepared: &Prepared,
        idx: &[usize],
        labels: &[Class],
        config: &PipelineConfig,
    ) -> Result<TrainedPipeline> {
        let extractor = FittedExtractor::fit(prepared, idx, labels, config)?;
        let feats = extractor.features(prepared, idx)?;
        let e = &config.ensemble;
        let ensemble = fit_bagging(&feats, labels, e.rounds, e.subset_fraction, e.seed)?;
        Ok(TrainedPipeline {
            config: config.clone(),
            extractor,
            ensemble,
        })
    }

    /// Ensemble votes for every trial of `set`; labels are ignored.
    pub fn vote(&self, set: &TrialSet) -> Result<Vec<Vote>> {
        let prepared = Prepared::new(set, &self.config)?;
        let idx: Vec<usize> = (0..set.len()).collect();
        self.vote_prepared(&prepared, &idx)
    }

    pub(crate) fn vote_prepared(&self, prepared: &Prepared, idx: &[usize]) -> Result<Vec<Vote>> {
        self.extractor
            .features(prepared, idx)?
            .iter()
            .map(|f| self.ensemble.vote(f))
            .collect()
    }

    pub fn predict(&self, set: &TrialSet) -> Result<Vec<Class>> {
        Ok(self.vote(set)?.iter().map(Vote::decision).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combine_concatenates() {
        let a = FeatureVector::new(vec![1.0], Method::Csp);
        let b = FeatureVector::new((0..16).map(f64::from).collect(), Method::Ar);
        let c = FeatureVector::new(vec![0.5; 5], Method::Lrp);
        let all = combine_features(&[a.clone(), b.clone(), c]).unwrap();
        assert_eq!(all.dim(), 22);
        assert_eq!(all.method, Method::Combined);
        assert_eq!(all.values[0], 1.0);
        assert_eq!(all.values[16], 15.0);
        assert_eq!(combine_features(&[b.clone()]).unwrap(), b);
        let ab = combine_features(&[a.clone(), b.clone()]).unwrap();
        let ba = combine_features(&[b, a]).unwrap();
        assert_eq!(ab.values[0], ba.values[16]);
        assert!(combine_features(&[]).is_err());
    }
}
