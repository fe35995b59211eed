use serde::{Deserialize, Serialize};

use crate::classify::bagging::{DEFAULT_ROUNDS, DEFAULT_SUBSET_FRACTION};
use crate::error::{Error, Result};
use crate::features::{ar, lrp, Method};
use crate::preprocess::{PreprocessConfig, SpatialRef};
use crate::select::SearchSpace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CspParams {
    pub preprocess: PreprocessConfig,
    /// Filters per class.
    pub m: usize,
    /// Channel subset fed to CSP; `None` uses every channel.
    pub channels: Option<Vec<usize>>,
}

impl Default for CspParams {
    fn default() -> Self {
        CspParams {
            preprocess: PreprocessConfig {
                band_hz: Some((12.0, 14.0)),
                window_s: Some((0.5, 4.5)),
                ..Default::default()
            },
            m: 1,
            channels: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArParams {
    pub preprocess: PreprocessConfig,
    pub order: usize,
    /// Channels kept after Fisher ranking (ignored when `channels` is set).
    pub n_channels: usize,
    pub channels: Option<Vec<usize>>,
}

impl Default for ArParams {
    fn default() -> Self {
        ArParams {
            preprocess: PreprocessConfig {
                band_hz: Some((8.0, 35.0)),
                spatial_ref: SpatialRef::Car,
                window_s: Some((0.5, 4.5)),
                ..Default::default()
            },
            order: ar::DEFAULT_ORDER,
            n_channels: 2,
            channels: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrpParams {
    pub preprocess: PreprocessConfig,
    /// Averaging window, relative to the (uncropped) trial start.
    pub feature_window_s: (f64, f64),
    pub n_channels: usize,
    pub channels: Option<Vec<usize>>,
}

impl Default for LrpParams {
    fn default() -> Self {
        LrpParams {
            preprocess: PreprocessConfig {
                lowpass_hz: Some(lrp::DEFAULT_LOWPASS_HZ),
                baseline_window_s: Some(lrp::DEFAULT_BASELINE_S),
                ..Default::default()
            },
            feature_window_s: lrp::DEFAULT_FEATURE_WINDOW_S,
            n_channels: 5,
            channels: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleParams {
    pub rounds: usize,
    pub subset_fraction: f64,
    pub seed: u64,
}

impl Default for EnsembleParams {
    fn default() -> Self {
        EnsembleParams {
            rounds: DEFAULT_ROUNDS,
            subset_fraction: DEFAULT_SUBSET_FRACTION,
            seed: 0,
        }
    }
}

/// Every tunable of the pipeline. Unspecified fields take their defaults when
/// read from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub method: Method,
    pub csp: CspParams,
    pub ar: ArParams,
    pub lrp: LrpParams,
    pub ensemble: EnsembleParams,
    /// Session-by-session semi-supervised adaptation.
    pub adapt: bool,
    /// Transductive parameter search over the CSP chain; `None` disables it.
    pub search: Option<SearchSpace>,
    pub cv_folds: usize,
    /// Seed for fold assignment.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            method: Method::Csp,
            csp: CspParams::default(),
            ar: ArParams::default(),
            lrp: LrpParams::default(),
            ensemble: EnsembleParams::default(),
            adapt: false,
            search: None,
            cv_folds: 10,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn with_method(method: Method) -> Self {
        PipelineConfig {
            method,
            ..Default::default()
        }
    }

    /// Sets every seed the pipeline consumes.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.ensemble.seed = seed;
        self
    }

    pub fn uses(&self, method: Method) -> bool {
        self.method == method || self.method == Method::Combined
    }

    /// Checks every field against the data geometry.
    pub fn validate(&self, fs: f64, duration_s: f64, n_channels: usize) -> Result<()> {
        if self.ensemble.rounds == 0 {
            return Err(Error::config("ensemble.rounds", "must be >= 1"));
        }
        let f = self.ensemble.subset_fraction;
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::config(
                "ensemble.subset_fraction",
                format!("must lie in (0, 1], got {f}"),
            ));
        }
        if self.cv_folds < 2 {
            return Err(Error::config("cv_folds", "must be >= 2"));
        }
        let check_channels = |field: &str, chans: &Option<Vec<usize>>| -> Result<()> {
            if let Some(c) = chans {
                if c.is_empty() {
                    return Err(Error::config(field, "channel list is empty"));
                }
                if let Some(bad) = c.iter().find(|&&i| i >= n_channels) {
                    return Err(Error::config(
                        field,
                        format!("channel {bad} out of range ({n_channels} channels)"),
                    ));
                }
            }
            Ok(())
        };
        if self.uses(Method::Csp) {
            self.csp.preprocess.validate(fs, duration_s)?;
            check_channels("csp.channels", &self.csp.channels)?;
            let nc = self.csp.channels.as_ref().map_or(n_channels, Vec::len);
            if self.csp.m == 0 || 2 * self.csp.m > nc {
                return Err(Error::config(
                    "csp.m",
                    format!("need 1 <= m and 2m <= {nc}, got {}", self.csp.m),
                ));
            }
        }
        if self.uses(Method::Ar) {
            self.ar.preprocess.validate(fs, duration_s)?;
            check_channels("ar.channels", &self.ar.channels)?;
            if self.ar.order == 0 {
                return Err(Error::config("ar.order", "must be >= 1"));
            }
            if self.ar.channels.is_none() && !(1..=n_channels).contains(&self.ar.n_channels) {
                return Err(Error::config(
                    "ar.n_channels",
                    format!("must lie in 1..={n_channels}"),
                ));
            }
        }
        if self.uses(Method::Lrp) {
            self.lrp.preprocess.validate(fs, duration_s)?;
            check_channels("lrp.channels", &self.lrp.channels)?;
            let (a, b) = self.lrp.feature_window_s;
            if !(a >= 0.0 && a < b && b <= duration_s + 1e-9) {
                return Err(Error::config(
                    "lrp.feature_window_s",
                    format!("window ({a}, {b}) must lie within 0..{duration_s} s"),
                ));
            }
            if self.lrp.channels.is_none() && !(1..=n_channels).contains(&self.lrp.n_channels) {
                return Err(Error::config(
                    "lrp.n_channels",
                    format!("must lie in 1..={n_channels}"),
                ));
            }
        }
        if let Some(space) = &self.search {
            space.validate(fs, duration_s, n_channels)?;
        }
        Ok(())
    }
}
