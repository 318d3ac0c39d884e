//! Reliability-and-decision workbench for hybrid continuous/discrete models of
//! structures and infrastructure networks.
//!
//! Continuous parts of a model are reduced to conditional probability tables by
//! structural reliability methods (FORM, Monte Carlo, quadrature); the resulting
//! discrete network answers evidence-conditioned reliability, decision and
//! value-of-information queries by exact variable elimination.

pub mod bn;
pub mod compile;
pub mod decide;
pub mod dists;
pub mod error;
pub mod expr;
pub mod infra;
pub mod model;
pub mod session;
pub mod numeric;
pub mod srm;

pub use error::{Error, Result};
