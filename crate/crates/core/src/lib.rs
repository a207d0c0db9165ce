//! Hierarchical stochastic model predictive control for urban driving.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod ego;
pub mod error;
pub mod geometry;
pub mod maneuver;
pub mod noise;
pub mod path;
pub mod qp;
pub mod sim;
pub mod trajectory;
pub mod uncertainty;
