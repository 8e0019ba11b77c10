//! Simulation of nonlinearly squeezed state teleportation through two-mode
//! Gaussian cluster states: an analytic moment-propagation engine, an exact
//! truncated-Fock backend with post-selection, and a bounded random-restart
//! optimizer over all scheme parameters.

pub mod ancilla;
pub mod config;
pub mod error;
pub mod experiments;
pub mod fock;
pub mod gaussian;
pub mod metrics;
pub mod moments;
pub mod optimize;

pub use ancilla::{AncillaMoments, AncillaSpec};
pub use error::{Error, Result};
pub use fock::FockDensity;
pub use gaussian::{ClusterParams, CovarianceState};
pub use metrics::{NativeCubicity, ScanOpts, SqueezingReport};
pub use moments::{OutputMoments, Scheme, SchemeConfig};
