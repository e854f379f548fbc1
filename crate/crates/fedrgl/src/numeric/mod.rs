//! Dense-matrix reverse-mode automatic differentiation and SGD.
//!
//! The engine is deliberately small: 64-bit dense tensors, a Wengert tape
//! with the primitive catalog needed by a 2-layer GCN plus contrastive,
//! cross-entropy, and Jensen-Shannon losses, an SGD step, and a central
//! finite-difference oracle for gradient checking.
//!
//! Shape violations are contract bugs and panic with a "dimension error"
//! message; the single numeric guard is the clamping floor applied to
//! logarithm inputs ([`LOG_FLOOR`]).

mod fd;
mod params;
mod tape;
mod tensor;

pub use fd::finite_difference_gradient;
pub use params::{sgd_step, ParamSet};
pub use tape::{Gradients, NodeId, Tape};
pub use tensor::Tensor;

/// Inputs to `log` are clamped to this floor to avoid `-inf` in
/// cross-entropy and divergence terms.
pub const LOG_FLOOR: f64 = 1e-12;
