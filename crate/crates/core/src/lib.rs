//! Data-driven regularisation of linear inverse problems `Au = y`.
//!
//! The forward operator is known only through training pairs `(uⁱ, yⁱ)` with
//! `Auⁱ = yⁱ`. Reconstruction methods:
//!
//! * regularisation by projection onto the span of the outputs ([`projection`]),
//! * dual least squares from adjoint pairs `(A*yⁱ, yⁱ)` ([`dual`]),
//! * Tikhonov and total-variation regularisation of the projected operator
//!   ([`variational`]).
//!
//! [`diagnostics`] checks the structural assumptions behind these methods
//! numerically, and [`operators`] provides forward maps for synthesising data.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod linalg;
pub mod operators;
pub mod projection;
pub mod dual;
pub mod training;
pub mod variational;
pub mod diagnostics;
pub mod persist;
pub mod cli;

pub use error::{Error, Result};
pub use linalg::GridSignal;
pub use operators::LinearOperator;
