//! Wrapped Cauchy distributed angular softmax (WCDAS).
//!
//! - [`circular`]: SWS circular densities, cosine moments, kernel mixtures.
//! - [`momentfit`]: least-squares WC / WN fits to mixture moments and the
//!   preference map over (μ_ρ, σ_ρ).
//! - [`wcdas`]: the classification head, analytic gradients, margin analysis,
//!   and the angular / von Mises–Fisher baselines.
//! - [`longtail`]: synthetic long-tailed data, samplers, and decoupled training.
//! - [`reference`]: independent numerical oracles used for cross-checks.

pub mod circular;
pub mod error;
pub mod longtail;
pub mod momentfit;
pub mod reference;
pub mod wcdas;

pub use error::{Error, Result};
