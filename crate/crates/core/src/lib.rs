//! Radiation-sensitivity (SF2) prediction from transcriptome and proteome
//! expression: cleaning, Lasso frequency-ranked gene selection, linear ε-SVR
//! with repeated cross-validation, and correlation diagnostics.

pub mod analysis;
pub mod error;
pub mod evaluate;
pub mod lasso;
pub mod matrixio;
pub mod preprocess;
pub mod selection;
pub mod stats;
pub mod svr;
pub mod synth;

pub use error::{Error, Result};
pub mod cli;
