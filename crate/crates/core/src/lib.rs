//! Latent spatio-temporal forecasting.
//!
//! Every series carries a learned latent trajectory `Z_t ∈ R^{n×N}`. A relational tanh
//! dynamics `Z_{t+1} = tanh(Z_t Θ0 + Σ_r M_r Z_t Θ_r)` links consecutive states, and a
//! linear decoder maps latent states to observations. The relation matrices `M_r` are
//! fixed priors, learned refinements of those priors, learned from scratch, or gated by
//! the current latent state, depending on the [`model::ModelVariant`].

pub mod dataset;
pub mod error;
pub mod forecast;
pub mod model;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
