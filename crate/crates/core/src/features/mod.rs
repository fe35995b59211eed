//! Feature extractors: common spatial patterns, autoregressive coefficients,
//! slow-potential means, and Fisher-score channel selection.

pub mod ar;
pub mod csp;
pub mod fisher;
pub mod lrp;

use serde::{Deserialize, Serialize};

use crate::data::Trial;

pub use ar::{ar_feature, fit_ar, yule_walker, ArCoefficients};
pub use csp::CspModel;
pub use fisher::{fisher_scores, select_channels};
pub use lrp::lrp_feature;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Csp,
    Ar,
    Lrp,
    Combined,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Csp => "csp",
            Method::Ar => "ar",
            Method::Lrp => "lrp",
            Method::Combined => "combined",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csp" => Ok(Method::Csp),
            "ar" => Ok(Method::Ar),
            "lrp" => Ok(Method::Lrp),
            "combined" => Ok(Method::Combined),
            other => Err(format!("unknown method `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub method: Method,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>, method: Method) -> Self {
        FeatureVector { values, method }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Log sample variance of every channel: the band-power summary used to rank
/// channels for the AR method.
pub fn log_band_power(trial: &Trial) -> Vec<f64> {
    trial
        .data
        .row_iter()
        .map(|r| csp::sample_variance(r.iter().copied()).max(f64::MIN_POSITIVE).ln())
        .collect()
}
