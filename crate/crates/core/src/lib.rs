//! Stacked intelligent metasurfaces with unilateral active unit cells,
//! modelled as multi-port S-parameter networks.
//!
//! The crate offers two routes to the end-to-end channel: [`network`]
//! closes the global multi-port equations with a dense factorization, and
//! [`cascade`] exploits the feed-forward structure of unilateral cells to
//! propagate layer by layer without any inversion. [`optimizer`] tunes the
//! cell phases by factorized-gradient descent, and [`evaluation`] scores the
//! resulting channel.

pub mod cascade;
pub mod coupling;
pub mod error;
pub mod evaluation;
pub mod linalg;
pub mod model;
pub mod network;
pub mod optimizer;
pub mod synthetic;

pub use error::{Result, SimError};
pub use linalg::CMat;
pub use model::{ControlVector, GlobalScattering, ScatteringBlocks, SimTopology};
pub use num_complex::Complex64;
