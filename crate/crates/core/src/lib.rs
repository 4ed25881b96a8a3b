//! Thresholded debiased Dantzig (TED) estimation of integrated betas in
//! high-dimensional time-varying regressions observed at high frequency.

pub mod baselines;
pub mod error;
pub mod eval;
pub mod l1;
pub mod linalg;
pub mod model;
pub mod sim;
pub mod ted;
pub mod truncation;
pub mod tuning;

pub use error::{Result, TedError};
