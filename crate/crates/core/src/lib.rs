//! Fast Gaussian ANOVA kernel ridge regression built on the non-equispaced FFT.
//!
//! Layers, bottom up: [`nfft`] (transforms), [`fastsum`] (kernel sums), [`anova`]
//! (feature windows and the combined kernel), [`krr`] (CG solver, fitting, grid search).
//! [`oracle`] holds dense reference implementations and [`data`] the CSV/preprocessing side.

pub mod anova;
pub mod bench;
pub mod data;
pub mod error;
pub mod fastsum;
pub mod krr;
pub mod nfft;
pub mod oracle;

pub use error::{Error, ErrorClass, Result};
