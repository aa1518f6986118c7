//! Numerical homogenization of the generalized Ladyzhenskaya model with
//! almost-periodic density, viscosities and forcing.
//!
//! The crate solves the oscillating ε-problem on a staggered grid, the cell
//! problem on a periodic torus, and the homogenized problem driven by the
//! tabulated effective law, and compares them across an ε-sweep.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ap_field;
pub mod cell;
pub mod grid;
pub mod micro;
pub mod homogenized;
pub mod harness;
pub mod error;
pub mod tensor;

pub use error::{Error, Result};
