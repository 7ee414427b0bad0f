//! Variational computation of constant mean curvature immersions of
//! surfaces into 3-dimensional space forms.
//!
//! A conformal class is represented on a discrete chart ([`geometry`]); the
//! unknowns are a log conformal factor `u` and a `(1,0)` vector field `F`
//! ([`fields`]). Critical points of the functional in [`donaldson`] solve
//! the Gauss–Codazzi system, found with the Newton–Krylov driver in
//! [`solver`] and audited by [`verify`].

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod donaldson;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod solver;
pub mod verify;

pub use error::{CmcError, DivergenceKind, Result};
pub use fields::{BetaClass, Weight, WeightedField};
pub use geometry::{Backend, Chart};
