//! Conservative solutions of the Camassa–Holm equation with nonvanishing
//! asymptotics, computed in Lagrangian coordinates.
//!
//! The pipeline is `to_lagrangian` → [`evolution::evolve`] → `to_eulerian`.
//! Wave breaking is a regular event in the Lagrangian system: y_ξ touches zero,
//! energy concentrates into an atom of the energy measure, and is released
//! again afterwards.

// NaN must fail every range check, hence the negated comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod grid;
pub mod lagrangian;
pub mod operators;
pub mod oracles;
pub mod partition;
pub mod evolution;
pub mod transforms;
pub mod weak;
pub mod initial_data;
pub mod io;
pub mod verify;

pub use error::{ChError, Result};
pub use grid::Grid1d;
