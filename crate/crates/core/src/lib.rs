//! Iterative Gaussianization as a preprocessing step for small denoising
//! diffusion models.
//!
//! Data drawn from a Gaussian mixture is pushed through alternating ICA and
//! marginal Gaussianization layers until it is close to an independent
//! standard normal. A diffusion model trained on the transformed data starts
//! its reverse chain from a distribution that already matches its target, and
//! generated points are mapped back through the exact inverse of the stack.
//!
//! Modules follow the pipeline: [`gmm`] generates and scores data, [`ica`]
//! and [`marginal`] are the two halves of one Gaussianization layer,
//! [`gaussianizer`] stacks them, [`ddpm`] trains and samples the noise
//! predictor, [`evalkit`] computes the metrics and [`experiment`] wires the
//! baseline and Gaussianized pipelines together.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod ddpm;
pub mod error;
pub mod evalkit;
pub mod experiment;
pub mod gaussianizer;
pub mod gmm;
pub mod ica;
pub mod marginal;
pub mod normal;
pub mod plot;
pub mod rng;

pub use dataset::Dataset;
pub use error::{Error, Result};
pub use evalkit::Pipeline;
pub use gmm::GmmSpec;
