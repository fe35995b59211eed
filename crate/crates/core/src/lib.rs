//! Motor-imagery EEG classification for small training sets.
//!
//! The crate covers the whole chain: trial archives, zero-phase filtering,
//! CSP / autoregressive / slow-potential features, a bagged Fisher
//! discriminant, transductive parameter search, session-by-session
//! self-training, and a synthetic data generator with known ground truth.

pub mod classify;
pub mod cli;
pub mod data;
pub mod error;
pub mod features;
pub mod pipeline;
pub mod preprocess;
pub mod select;
pub mod synth;

pub use error::{Error, Result};
