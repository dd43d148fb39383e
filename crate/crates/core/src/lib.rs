//! Riesz potential theory on discretized compact sets.
//!
//! The crate estimates Riesz `p`-energies and capacities of weighted point
//! clouds, solves for discrete equilibrium measures on the probability
//! simplex, extrapolates the decay rate `cap_p(E)^p / (d - p)` as `p -> d`
//! to recover Hausdorff measure, and estimates first and second order
//! densities of rectifiable sets and self-similar fractals.
//!
//! Hot loops (kernel assembly, per-center densities, pair sums) run on rayon
//! when the `parallel` feature is enabled and fall back to plain iterators
//! otherwise. Results are identical either way: every parallel stage collects
//! into ordered buffers and reductions happen sequentially.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod decay;
pub mod density;
pub mod energy;
mod error;
pub mod exec;
pub mod geometry;
pub mod primitives;
pub mod properties;

pub use error::{Error, Result};
pub use exec::Execution;
