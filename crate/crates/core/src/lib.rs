//! Block sparse canonical correlation analysis.
//!
//! Estimation runs in two stages. [`pattern`] finds which loadings are active
//! by ascending a hinge-squared surrogate over Stiefel manifolds; [`refine`]
//! then fits the active entries by alternating masked polar updates.
//! [`pipeline`] chains both for the two-view, multi-view and accessory-directed
//! problems, [`tune`] picks penalties by permutation testing and [`simgen`]
//! generates planted-support benchmarks.

pub mod cli;
pub mod error;
pub mod linalg;
pub mod model;
pub mod pattern;
pub mod pipeline;
pub mod refine;
pub mod simgen;
pub mod tune;

pub use error::{Error, Result};
