//! Deterministic synthetic motor-imagery EEG.
//!
//! Each trial mixes `n_channels` latent sources into `n_channels` electrodes:
//!
//! * sources 0 and 1: narrowband noise in `rhythm_band_hz`, attenuated by
//!   `erd_depth` from the imagery onset on (source 0 for class −1, source 1
//!   for class +1);
//! * source 2: a slow ramp starting at imagery onset whose sign follows the
//!   class;
//! * the remaining sources: class-independent white background.
//!
//! Sensor noise is added after mixing. The mixing matrix is fixed by the seed
//! and rotated by `session_drift · (session − 1)` in later sessions.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Class, Trial, TrialSet};
use crate::error::{Error, Result};
use crate::preprocess::butterworth;

/// Imagery starts this long after trial onset.
pub const IMAGERY_ONSET_S: f64 = 0.5;

/// Number of task-related sources (two rhythms and one slow potential).
const TASK_SOURCES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_channels: usize,
    pub n_sessions: usize,
    pub trials_per_session: usize,
    pub fs_hz: f64,
    pub trial_duration_s: f64,
    /// (center, width) of the task rhythm.
    pub rhythm_band_hz: (f64, f64),
    /// RMS of each rhythm source before attenuation.
    pub rhythm_amplitude_uv: f64,
    /// Log-normal spread of the per-trial rhythm amplitude.
    pub amplitude_jitter: f64,
    pub erd_depth: f64,
    pub lrp_slope_uv_per_s: f64,
    /// RMS of each class-independent background source.
    pub background_uv: f64,
    pub noise_sigma_uv: f64,
    /// Mixing rotation per session, radians.
    pub session_drift: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_channels: 16,
            n_sessions: 4,
            trials_per_session: 70,
            fs_hz: 100.0,
            trial_duration_s: 5.0,
            rhythm_band_hz: (13.0, 2.0),
            rhythm_amplitude_uv: 10.0,
            amplitude_jitter: 0.2,
            erd_depth: 0.6,
            lrp_slope_uv_per_s: 0.0,
            background_uv: 5.0,
            noise_sigma_uv: 5.0,
            session_drift: 0.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::config(field, msg));
        if self.n_channels < TASK_SOURCES {
            return bad("n_channels", format!("need >= {TASK_SOURCES}, got {}", self.n_channels));
        }
        if self.n_sessions < 1 {
            return bad("n_sessions", "need >= 1".into());
        }
        if self.trials_per_session < 2 || self.trials_per_session % 2 != 0 {
            return bad(
                "trials_per_session",
                format!("must be even and >= 2, got {}", self.trials_per_session),
            );
        }
        if !(self.fs_hz > 0.0 && self.fs_hz.is_finite()) {
            return bad("fs_hz", format!("must be positive, got {}", self.fs_hz));
        }
        if !(self.trial_duration_s > IMAGERY_ONSET_S && self.trial_duration_s.is_finite()) {
            return bad(
                "trial_duration_s",
                format!("must exceed {IMAGERY_ONSET_S} s, got {}", self.trial_duration_s),
            );
        }
        let (center, width) = self.rhythm_band_hz;
        let (lo, hi) = (center - width / 2.0, center + width / 2.0);
        if !(width > 0.0 && lo > 0.0 && hi < self.fs_hz / 2.0) {
            return bad(
                "rhythm_band_hz",
                format!("band {lo}..{hi} Hz must lie within (0, Nyquist)"),
            );
        }
        if !(0.0..=1.0).contains(&self.erd_depth) {
            return bad("erd_depth", format!("must lie in [0, 1], got {}", self.erd_depth));
        }
        for (field, v) in [
            ("rhythm_amplitude_uv", self.rhythm_amplitude_uv),
            ("amplitude_jitter", self.amplitude_jitter),
            ("background_uv", self.background_uv),
            ("noise_sigma_uv", self.noise_sigma_uv),
            ("session_drift", self.session_drift),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(field, format!("must be finite and >= 0, got {v}"));
            }
        }
        if !self.lrp_slope_uv_per_s.is_finite() {
            return bad("lrp_slope_uv_per_s", "must be finite".into());
        }
        Ok(())
    }

    fn n_samples(&self) -> usize {
        (self.trial_duration_s * self.fs_hz).round() as usize
    }

    pub fn n_trials(&self) -> usize {
        self.n_sessions * self.trials_per_session
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Seeded full-rank mixing matrix: each source dominates one (shuffled)
/// electrode, plus diffuse spread to all others.
fn base_mixing(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let mut a = DMatrix::from_fn(n, n, |_, _| 0.3 * gaussian(rng));
    for (s, &c) in perm.iter().enumerate() {
        a[(c, s)] += 1.0;
    }
    a
}

/// Orthogonal channel-space rotation by `angle` (product of Givens rotations
/// over a seeded chain of channel pairs). Identity at angle 0.
fn drift_rotation(n: usize, angle: f64, chain: &[usize]) -> DMatrix<f64> {
    let mut r = DMatrix::<f64>::identity(n, n);
    if angle == 0.0 {
        return r;
    }
    let (s, c) = angle.sin_cos();
    for pair in chain.windows(2) {
        let (i, j) = (pair[0], pair[1]);
        let mut g = DMatrix::<f64>::identity(n, n);
        g[(i, i)] = c;
        g[(j, j)] = c;
        g[(i, j)] = -s;
        g[(j, i)] = s;
        r = g * r;
    }
    r
}

/// Narrowband noise with unit RMS over `n` samples.
fn narrowband(rng: &mut ChaCha8Rng, n: usize, sos: &butterworth::Sos, guard: usize) -> Result<Vec<f64>> {
    let raw: Vec<f64> = (0..n + 2 * guard).map(|_| gaussian(rng)).collect();
    let y = sos.filter(&raw);
    let core = &y[2 * guard..];
    let rms = (core.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if !(rms > 0.0) {
        return Err(Error::Degenerate("narrowband source vanished".into()));
    }
    Ok(core.iter().map(|v| v / rms).collect())
}

/// Generates a labeled trial set from `config`.
pub fn generate(config: &SynthConfig) -> Result<TrialSet> {
    config.validate()?;
    let n = config.n_channels;
    let ns = config.n_samples();
    let fs = config.fs_hz;
    let (center, width) = config.rhythm_band_hz;
    let sos = butterworth::bandpass(4, center - width / 2.0, center + width / 2.0, fs)?;
    let guard = (2.0 * fs).ceil() as usize;
    let onset = (IMAGERY_ONSET_S * fs).round() as usize;

    // Stream 0 carries the global draws; stream 1 + i belongs to trial i.
    let mut global = ChaCha8Rng::seed_from_u64(config.seed);
    let mixing = base_mixing(n, &mut global);
    let mut chain: Vec<usize> = (0..n).collect();
    chain.shuffle(&mut global);
    let mut labels = Vec::with_capacity(config.n_trials());
    for _ in 0..config.n_sessions {
        let half = config.trials_per_session / 2;
        let mut session: Vec<Class> = std::iter::repeat_n(Class::Neg, half)
            .chain(std::iter::repeat_n(Class::Pos, half))
            .collect();
        session.shuffle(&mut global);
        labels.extend(session);
    }
    let session_mixing: Vec<DMatrix<f64>> = (0..config.n_sessions)
        .map(|k| drift_rotation(n, config.session_drift * k as f64, &chain) * &mixing)
        .collect();

    let trials = (0..config.n_trials())
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(1 + i as u64);
            let session = i / config.trials_per_session;
            let class = labels[i];

            let mut sources = DMatrix::<f64>::zeros(n, ns);
            for src in 0..2 {
                let gain = config.rhythm_amplitude_uv
                    * (config.amplitude_jitter * gaussian(&mut rng)).exp();
                let attenuated = matches!((src, class), (0, Class::Neg) | (1, Class::Pos));
                let wave = narrowband(&mut rng, ns, &sos, guard)?;
                for (t, v) in wave.into_iter().enumerate() {
                    let erd = if attenuated && t >= onset { 1.0 - config.erd_depth } else { 1.0 };
                    sources[(src, t)] = gain * erd * v;
                }
            }
            let slope = config.lrp_slope_uv_per_s * class.sign() * (1.0 + 0.25 * gaussian(&mut rng));
            for t in onset..ns {
                sources[(2, t)] = slope * (t - onset) as f64 / fs;
            }
            for src in TASK_SOURCES..n {
                for t in 0..ns {
                    sources[(src, t)] = config.background_uv * gaussian(&mut rng);
                }
            }
            let mut data = &session_mixing[session] * sources;
            for v in data.iter_mut() {
                *v += config.noise_sigma_uv * gaussian(&mut rng);
            }
            Trial::new(
                data,
                Some(class),
                session as u32 + 1,
                i % config.trials_per_session,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let channel_labels = (1..=n).map(|c| format!("Ch{c}")).collect();
    TrialSet::new(trials, fs, channel_labels)
}

/// Electrode pattern of each latent source under the session-1 mixing.
pub fn source_patterns(config: &SynthConfig) -> Result<DMatrix<f64>> {
    config.validate()?;
    let mut global = ChaCha8Rng::seed_from_u64(config.seed);
    Ok(base_mixing(config.n_channels, &mut global))
}
