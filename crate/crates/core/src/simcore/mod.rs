//! Shared numerical building blocks: per-unit system, reference-frame
//! transforms and discrete-time filter primitives.

pub mod filters;
pub mod frames;
pub mod units;

pub use filters::{wrap_angle, FirstOrderLag, PiController, VectorPi};
pub use frames::{
    abc_to_alpha_beta, abc_to_dq, alpha_beta_to_abc, dq_to_abc, AlphaBeta, Dq, ThreePhase,
};
pub use units::{PerUnitBase, QuantityKind};
