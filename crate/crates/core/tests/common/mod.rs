#![allow(dead_code)]

use mi_bci::data::{Class, TrialSet};
use mi_bci::synth::{generate, SynthConfig};

/// Strong, low-noise rhythm: CSP separates the classes perfectly.
pub fn separable(seed: u64) -> SynthConfig {
    SynthConfig {
        n_channels: 8,
        n_sessions: 2,
        trials_per_session: 40,
        erd_depth: 0.9,
        noise_sigma_uv: 1.0,
        background_uv: 1.0,
        amplitude_jitter: 0.05,
        seed,
        ..Default::default()
    }
}

pub fn synth(config: &SynthConfig) -> TrialSet {
    generate(config).expect("valid synthetic config")
}

/// Open-interval overlap of two bands.
pub fn overlaps(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 < b.1 && b.0 < a.1
}

pub fn accuracy(pred: &[Class], truth: &[Option<Class>]) -> f64 {
    let hits = pred.iter().zip(truth).filter(|(p, t)| Some(**p) == **t).count();
    100.0 * hits as f64 / pred.len() as f64
}
