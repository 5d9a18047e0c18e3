//! Particle systems of FitzHugh–Nagumo type with mean-field interaction,
//! reflection couplings to their McKean–Vlasov limit, and the constant
//! ledgers that make the coupling contractive.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod distance;
pub mod error;
pub mod lyapunov;
pub mod metrics;
pub mod model;
pub mod numeric;
pub mod pipeline;
pub mod records;
pub mod rng;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};
