//! Slow-potential features: per-channel mean amplitude over a time window.

use super::{FeatureVector, Method};
use crate::data::Trial;
use crate::error::{Error, Result};
use crate::preprocess::window_range;

pub const DEFAULT_LOWPASS_HZ: f64 = 1.5;
pub const DEFAULT_BASELINE_S: (f64, f64) = (0.0, 0.5);
pub const DEFAULT_FEATURE_WINDOW_S: (f64, f64) = (0.5, 1.5);

/// Mean of each listed channel over `window_s` (time relative to trial start).
pub fn lrp_feature(
    trial: &Trial,
    fs: f64,
    channels: &[usize],
    window_s: (f64, f64),
) -> Result<FeatureVector> {
    let r = window_range(fs, trial.n_samples(), window_s.0, window_s.1)?;
    let values = channels
        .iter()
        .map(|&c| {
            if c >= trial.n_channels() {
                return Err(Error::invalid(format!(
                    "channel index {c} out of range ({} channels)",
                    trial.n_channels()
                )));
            }
            Ok(trial.data.row(c).columns(r.start, r.len()).sum() / r.len() as f64)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureVector::new(values, Method::Lrp))
}
