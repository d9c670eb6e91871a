//! Randomized-sketching iterative solver for weighted least squares, with
//! moving-window tracking of the sketched gradient norm, a credible-interval
//! stopping rule, square-root-free streamed row updates, and a memory-bounded
//! 4D-Var driver for a 1-D shallow water model.
//!
//! The pieces compose bottom-up: [`sketch`] draws the random embeddings,
//! [`wls`] holds the weighted problem and the block update, [`tracker`]
//! maintains the window estimators and the stopping rule, [`solver`] ties the
//! iteration together, [`rowstream`] accumulates least-squares rows one at a
//! time, [`shallow_water`] provides the forward model and its tangent
//! linearization, and [`fourdvar`] runs the streaming assimilation loop.
//! [`gallery`] and [`io`] cover test-problem generation and file formats;
//! [`experiments`] hosts the reproducible study harnesses behind the CLI.

// `!(x > 0.0)` style guards deliberately reject NaN along with non-positive
// values; rewriting them as `x <= 0.0` would silently let NaN through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod streams;

pub mod experiments;
pub mod fourdvar;
pub mod gallery;
pub mod io;
pub mod rowstream;
pub mod shallow_water;
pub mod sketch;
pub mod solver;
pub mod tracker;
pub mod wls;
