//! Exact truncated-Fock-space backend.

pub mod ops;
pub mod sim;
pub mod state;

pub use state::{FockDensity, FockRepr};
