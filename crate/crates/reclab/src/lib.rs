// Validation uses `!(x > 0.0)`-style negated comparisons on purpose: they
// reject NaN along with the out-of-range values, which `x <= 0.0` would not.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Recurrence statistics for suspension semi-flows.
//!
//! A suspension semi-flow moves a point straight up at unit speed above a base
//! map and drops it back to the base when it reaches the roof. This crate
//! builds such flows over a small family of expanding base maps, measures how
//! long they take to hit small metric balls, and compares the results against
//! the limit laws that hold in the small-ball regime: exponential first
//! hitting times, Poisson hit counts, and the three classical extreme value
//! laws obtained by watching a distance-like observable along the flow.
//!
//! The crate is organized around the pipeline:
//!
//! * [`systems`]: base maps, metrics, invariant-measure sampling, ball
//!   measures and measure profiles;
//! * [`suspension`]: roof functions, flow points, flow balls, and the
//!   product-form measure of clean flow boxes;
//! * [`hitting`]: exit/hitting times for flows and maps, the flow-to-base
//!   reconstruction identity, normalized survival curves, Poisson counts,
//!   and the return-time mass identity;
//! * [`extremes`]: distance observables, normalizing levels, running maxima,
//!   empirical extreme value curves, and the max/hitting duality;
//! * [`diagnostics`]: correlation decay, short-return sets, tower tail
//!   exponents, and finite-sample dependence surrogates;
//! * [`stats`], [`config`], [`runner`]: empirical CDFs and reference laws,
//!   experiment configuration, and the file-writing experiment driver used
//!   by the `reclab` binary.
//!
//! Every statistical routine draws from ChaCha streams keyed by a master seed
//! and a work-item index, and reduces per-block results in index order, so
//! outputs are byte-identical across worker counts.

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod extremes;
pub mod hitting;
pub mod runner;
mod seeds;
pub mod stats;
pub mod suspension;
pub mod systems;

pub use error::{Error, Result};
