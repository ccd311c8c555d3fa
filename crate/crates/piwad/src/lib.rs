//! Interpretable wide-and-deep regression for tabular data with GAN-backed
//! total-effect estimation.
//!
//! The predictor sums four parallel components behind a ReLU head: a piecewise
//! linear part over per-interval ramp encodings, an attention-weighted
//! second-order part over all pairwise feature products, a small MLP for
//! residual nonlinearity, and a learned head over optional per-sample
//! embeddings. A WGAN-GP trained on the same features supplies synthetic
//! samples for Monte-Carlo estimation of each feature's total effect and
//! dynamic total-effect curve, which the reporting layer contrasts with the
//! linear part's main effect.

pub mod autodiff;
pub mod checkpoint;
pub mod data;
pub mod effects;
pub mod encoders;
pub mod error;
pub mod fidelity;
pub mod manifest;
pub mod model;
pub mod synth;
pub mod train;
pub mod util;
pub mod wgan;

pub use error::{PiwadError, Result};
