//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records every primitive applied to [`Var`] handles. Values are
//! two-dimensional; vectors are `1 x n` or `n x 1` and scalars are `1 x 1`.
//! Binary elementwise primitives accept an operand with a single row, which
//! is broadcast along the leading (batch) dimension. Nothing else broadcasts.

mod check;
mod ops;
mod tape;

pub use check::{finite_difference_check, FdCoordinate, FdReport};
pub use tape::{Gradients, Tape, Var};
