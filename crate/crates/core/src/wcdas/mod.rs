//! Wrapped Cauchy distributed angular softmax head and its baselines.
//!
//! The head normalizes features and class weights, takes `cos θ` between them,
//! and turns it into a logit through a per-class wrapped Cauchy density whose
//! concentration `ρ_j = sigmoid(w_ρ[j])` is trained with the rest of the head.

mod analysis;
mod checkpoint;
pub mod gradcheck;
mod head;

pub use analysis::{
    gradient_sign_change, gradient_surface, margin_amplified_fraction, margin_factor,
    margin_lower_bound_check, margin_threshold, theta_pair_grid,
};
pub use checkpoint::{HeadCheckpoint, HEAD_FORMAT_VERSION};
pub use head::{
    argmax_rows, sigmoid, softmax_rows, wc_dcos, wc_drho, wc_logit_density, ForwardCache, Head,
    HeadGradients, HeadKind, LogitScale, MIN_ROW_NORM, RHO_CAP,
};
