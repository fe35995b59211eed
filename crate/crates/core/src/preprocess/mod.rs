//! Temporal filtering, spatial re-referencing, epoch cropping and baseline
//! correction.
//!
//! Sample `k` of a trial sits at time `k / fs`; every window is half-open
//! `[start, end)` and spans `round((end - start) * fs)` samples.

pub mod butterworth;

use std::ops::Range;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Trial, TrialSet};
use crate::error::{Error, Result};

pub use butterworth::Sos;

/// Transfer-function order of every band-pass and low-pass used here.
pub const FILTER_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpatialRef {
    #[default]
    None,
    Car,
}

/// Preprocessing chain, applied in this order: spatial reference, temporal
/// filter, baseline correction, crop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub band_hz: Option<(f64, f64)>,
    pub lowpass_hz: Option<f64>,
    pub spatial_ref: SpatialRef,
    /// Analysis window; `None` keeps the whole trial.
    pub window_s: Option<(f64, f64)>,
    pub baseline_window_s: Option<(f64, f64)>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            band_hz: None,
            lowpass_hz: None,
            spatial_ref: SpatialRef::None,
            window_s: None,
            baseline_window_s: None,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self, fs: f64, duration_s: f64) -> Result<()> {
        let nyquist = fs / 2.0;
        if let Some((lo, hi)) = self.band_hz {
            if !(lo > 0.0 && lo < hi && hi < nyquist) {
                return Err(Error::config(
                    "band_hz",
                    format!("need 0 < low < high < {nyquist}, got ({lo}, {hi})"),
                ));
            }
        }
        if let Some(fc) = self.lowpass_hz {
            if !(fc > 0.0 && fc < nyquist) {
                return Err(Error::config(
                    "lowpass_hz",
                    format!("need 0 < cutoff < {nyquist}, got {fc}"),
                ));
            }
        }
        for (name, w) in [
            ("window_s", self.window_s),
            ("baseline_window_s", self.baseline_window_s),
        ] {
            if let Some((a, b)) = w {
                if !(a >= 0.0 && a < b && b <= duration_s + 1e-9) {
                    return Err(Error::config(
                        name,
                        format!("window ({a}, {b}) must lie within 0..{duration_s} s"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Runs the chain on one trial.
    pub fn apply_trial(&self, trial: &Trial, fs: f64) -> Result<Trial> {
        let mut out = match self.spatial_ref {
            SpatialRef::None => trial.clone(),
            SpatialRef::Car => common_average_reference(trial)?,
        };
        if let Some((lo, hi)) = self.band_hz {
            out = bandpass_zero_phase(&out, fs, lo, hi)?;
        }
        if let Some(fc) = self.lowpass_hz {
            out = lowpass_zero_phase(&out, fs, fc)?;
        }
        if let Some(w) = self.baseline_window_s {
            out = baseline_correct(&out, fs, w)?;
        }
        if let Some((a, b)) = self.window_s {
            out = crop(&out, fs, a, b)?;
        }
        Ok(out)
    }

    /// Runs the chain on every trial of `set` (in parallel, order preserved).
    pub fn apply(&self, set: &TrialSet) -> Result<TrialSet> {
        let fs = set.sampling_rate_hz();
        self.validate(fs, set.duration_s())?;
        let trials = set
            .trials()
            .par_iter()
            .map(|t| self.apply_trial(t, fs))
            .collect::<Result<Vec<_>>>()?;
        TrialSet::new(trials, fs, set.channel_labels().to_vec())
    }
}

fn filter_rows(trial: &Trial, sos: &Sos) -> Result<Trial> {
    let (nc, ns) = trial.data.shape();
    let mut out = DMatrix::zeros(nc, ns);
    for c in 0..nc {
        let row: Vec<f64> = trial.data.row(c).iter().copied().collect();
        let y = sos.filtfilt(&row)?;
        for (s, v) in y.into_iter().enumerate() {
            out[(c, s)] = v;
        }
    }
    Ok(trial.with_data(out))
}

/// Zero-phase Butterworth band-pass applied to every channel.
pub fn bandpass_zero_phase(trial: &Trial, fs: f64, low_hz: f64, high_hz: f64) -> Result<Trial> {
    let sos = butterworth::bandpass(FILTER_ORDER, low_hz, high_hz, fs)?;
    filter_rows(trial, &sos)
}

/// Zero-phase Butterworth low-pass applied to every channel.
pub fn lowpass_zero_phase(trial: &Trial, fs: f64, cutoff_hz: f64) -> Result<Trial> {
    let sos = butterworth::lowpass(FILTER_ORDER, cutoff_hz, fs)?;
    filter_rows(trial, &sos)
}

/// Subtracts the instantaneous channel mean from every channel.
pub fn common_average_reference(trial: &Trial) -> Result<Trial> {
    let nc = trial.n_channels();
    if nc < 2 {
        return Err(Error::invalid("common average reference needs >= 2 channels"));
    }
    let mut out = trial.data.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / nc as f64;
        col.add_scalar_mut(-mean);
    }
    Ok(trial.with_data(out))
}

/// Sample indices covered by the half-open window `[start_s, end_s)`.
pub fn window_range(fs: f64, n_samples: usize, start_s: f64, end_s: f64) -> Result<Range<usize>> {
    let duration = n_samples as f64 / fs;
    if !(start_s >= 0.0 && start_s < end_s && end_s <= duration + 1e-9) {
        return Err(Error::invalid(format!(
            "window [{start_s}, {end_s}) s outside trial of {duration} s"
        )));
    }
    let first = (start_s * fs - 1e-9).ceil().max(0.0) as usize;
    let count = ((end_s - start_s) * fs).round() as usize;
    if count == 0 {
        return Err(Error::invalid(format!(
            "window [{start_s}, {end_s}) s contains no samples"
        )));
    }
    if first + count > n_samples {
        return Err(Error::invalid(format!(
            "window [{start_s}, {end_s}) s runs past the last sample"
        )));
    }
    Ok(first..first + count)
}

pub fn crop(trial: &Trial, fs: f64, start_s: f64, end_s: f64) -> Result<Trial> {
    let r = window_range(fs, trial.n_samples(), start_s, end_s)?;
    let data = trial.data.columns(r.start, r.len()).into_owned();
    Ok(trial.with_data(data))
}

/// Subtracts each channel's mean over `window_s`.
pub fn baseline_correct(trial: &Trial, fs: f64, window_s: (f64, f64)) -> Result<Trial> {
    let r = window_range(fs, trial.n_samples(), window_s.0, window_s.1)?;
    let mut out = trial.data.clone();
    for mut row in out.row_iter_mut() {
        let mean = row.columns(r.start, r.len()).sum() / r.len() as f64;
        row.add_scalar_mut(-mean);
    }
    Ok(trial.with_data(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn trial(data: DMatrix<f64>) -> Trial {
        Trial::new(data, None, 1, 0).unwrap()
    }

    fn sine(freq: f64, fs: f64, secs: f64, phase: f64) -> Vec<f64> {
        let n = (fs * secs).round() as usize;
        (0..n)
            .map(|k| (2.0 * PI * freq * k as f64 / fs + phase).sin())
            .collect()
    }

    fn interior(n: usize) -> Range<usize> {
        n / 10..n - n / 10
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    fn one_channel(x: &[f64]) -> Trial {
        trial(DMatrix::from_row_slice(1, x.len(), x))
    }

    fn row(t: &Trial) -> Vec<f64> {
        t.data.row(0).iter().copied().collect()
    }

    #[test]
    fn bandpass_removes_dc_everywhere() {
        let t = one_channel(&[3.0; 400]);
        let y = row(&bandpass_zero_phase(&t, 100.0, 12.0, 14.0).unwrap());
        let peak = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(peak < 1e-6 * 3.0, "{peak}");
    }

    #[test]
    fn bandpass_center_sine_passes_without_lag() {
        let fs = 100.0;
        for phase in [0.0, 0.7, 2.0] {
            let x = sine(13.0, fs, 4.0, phase);
            let y = row(&bandpass_zero_phase(&one_channel(&x), fs, 12.0, 14.0).unwrap());
            let r = interior(x.len());
            let ratio = rms(&y[r.clone()]) / rms(&x[r.clone()]);
            assert!((0.99..=1.01).contains(&ratio), "phase {phase}: ratio {ratio}");
            // peaks of input and output coincide within one sample
            for k in r.start + 1..r.end - 1 {
                if x[k] > x[k - 1] && x[k] >= x[k + 1] && x[k] > 0.9 {
                    let near = (k - 1..=k + 1).any(|j| y[j] > y[j - 1] && y[j] >= y[j + 1]);
                    assert!(near, "peak at {k} moved (phase {phase})");
                }
            }
        }
    }

    #[test]
    fn bandpass_attenuates_stopband() {
        let fs = 100.0;
        let x = sine(30.0, fs, 4.0, 0.3);
        let y = row(&bandpass_zero_phase(&one_channel(&x), fs, 12.0, 14.0).unwrap());
        let r = interior(x.len());
        assert!(rms(&y[r.clone()]) < 0.05 * rms(&x[r]));
    }

    #[test]
    fn lowpass_dc_gain_is_one() {
        let t = one_channel(&[5.0; 500]);
        let y = row(&lowpass_zero_phase(&t, 100.0, 1.5).unwrap());
        assert!(y.iter().all(|v| (v - 5.0).abs() < 1e-6));
    }

    #[test]
    fn lowpass_passes_slow_and_blocks_fast() {
        let fs = 100.0;
        let slow = sine(0.2, fs, 20.0, 0.4);
        let y = row(&lowpass_zero_phase(&one_channel(&slow), fs, 1.5).unwrap());
        let r = interior(slow.len());
        let ratio = rms(&y[r.clone()]) / rms(&slow[r.clone()]);
        assert!((ratio - 1.0).abs() < 0.02, "{ratio}");

        let fast = sine(10.0, fs, 4.0, 0.4);
        let y = row(&lowpass_zero_phase(&one_channel(&fast), fs, 1.5).unwrap());
        let r = interior(fast.len());
        assert!(rms(&y[r.clone()]) < 0.05 * rms(&fast[r]));
    }

    #[test]
    fn filter_errors() {
        let t = one_channel(&[0.0; 400]);
        assert!(bandpass_zero_phase(&t, 100.0, 14.0, 12.0).is_err());
        assert!(bandpass_zero_phase(&t, 100.0, 12.0, 55.0).is_err());
        assert!(lowpass_zero_phase(&t, 100.0, -1.0).is_err());
        let short = one_channel(&[0.0; 10]);
        assert!(bandpass_zero_phase(&short, 100.0, 12.0, 14.0).is_err());
    }

    #[test]
    fn car_examples() {
        let same = trial(DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]));
        assert!(common_average_reference(&same).unwrap().data.iter().all(|v| *v == 0.0));

        let consts = trial(DMatrix::from_fn(3, 5, |c, _| (c + 1) as f64));
        let out = common_average_reference(&consts).unwrap();
        for s in 0..5 {
            assert_eq!(
                [out.data[(0, s)], out.data[(1, s)], out.data[(2, s)]],
                [-1.0, 0.0, 1.0]
            );
        }
        assert!(common_average_reference(&trial(DMatrix::zeros(1, 4))).is_err());
    }

    #[test]
    fn crop_examples() {
        let t = trial(DMatrix::from_fn(2, 500, |c, s| (c * 1000 + s) as f64));
        let c = crop(&t, 100.0, 0.5, 4.5).unwrap();
        assert_eq!(c.n_samples(), 400);
        assert_eq!(c.data[(0, 0)], 50.0);
        assert_eq!(crop(&t, 100.0, 0.0, 5.0).unwrap(), t);
        assert!(crop(&t, 100.0, 4.0, 5.5).is_err());
        assert!(crop(&t, 100.0, 2.0, 1.0).is_err());

        let twice = crop(&crop(&t, 100.0, 0.0, 4.5).unwrap(), 100.0, 0.5, 4.5).unwrap();
        assert_eq!(twice, c);
        let twice = crop(&c, 100.0, 0.0, 4.0).unwrap();
        assert_eq!(twice, c);
    }

    #[test]
    fn baseline_examples() {
        let t = trial(DMatrix::from_element(2, 100, 3.0));
        let out = baseline_correct(&t, 100.0, (0.2, 0.5)).unwrap();
        assert!(out.data.iter().all(|v| *v == 0.0));

        let ramp = trial(DMatrix::from_fn(1, 10, |_, s| s as f64));
        let out = baseline_correct(&ramp, 10.0, (0.0, 0.5)).unwrap();
        // first-half mean of 0..5 is 2
        for s in 0..10 {
            assert_eq!(out.data[(0, s)], s as f64 - 2.0);
        }
        assert!(baseline_correct(&ramp, 10.0, (0.5, 0.5)).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = PreprocessConfig {
            band_hz: Some((12.0, 14.0)),
            window_s: Some((0.5, 4.5)),
            ..Default::default()
        };
        assert!(cfg.validate(100.0, 5.0).is_ok());
        cfg.band_hz = Some((12.0, 60.0));
        assert!(cfg.validate(100.0, 5.0).is_err());
        cfg.band_hz = None;
        cfg.window_s = Some((0.5, 6.0));
        assert!(cfg.validate(100.0, 5.0).is_err());
    }
}
