//! Fisher linear discriminant and its bootstrap-aggregated ensemble.

pub mod bagging;
pub mod lda;

pub use bagging::{fit_bagging, BaggingEnsemble, Vote};
pub use lda::{fit_lda, LdaModel};
