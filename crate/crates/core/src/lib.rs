//! Inverse optimal control for discrete-time linear-quadratic tracking where
//! each observed trajectory starts at a random time and all trajectories end
//! at a common terminal time.
//!
//! The crate is organised bottom-up:
//!
//! * [`lq`] forward problem: discretisation, Riccati recursion, control law
//!   and trajectory simulation.
//! * [`data`] references, synthetic datasets, noise identification and the
//!   line-delimited dataset file format.
//! * [`conic`] operator-splitting and interior-point solvers for programs over zero,
//!   nonnegative, second-order and PSD cones.
//! * [`ioc`] the convex estimator: objective assembly, lowering to a conic
//!   program, extraction and feasibility reports.
//! * [`oracle`] slow independent references used to check the fast paths.

pub mod conic;
pub mod data;
mod error;
pub mod ioc;
pub mod linalg;
pub mod lq;
pub mod oracle;
pub mod seed;

pub use error::{Error, Result};
