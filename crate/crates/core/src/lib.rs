//! Numerical certification of common-fixed-point hypotheses in fuzzy metric
//! spaces over compact real intervals.
//!
//! The crate is organised bottom-up:
//!
//! * [`expr`] parses and evaluates the small expression language used for
//!   user-supplied maps, densities and payoffs.
//! * [`metric`] holds t-norms, carriers, fuzzy metrics and the axiom checker.
//! * [`distances`] provides adaptive quadrature, the density class and
//!   altering distance functions.
//! * [`implicit`] builds the implicit relations and checks their side
//!   conditions.
//! * [`pairs`] covers self-maps and every commutativity, compatibility,
//!   range and family predicate.
//! * [`verifier`] scans contractive inequalities over sample grids.
//! * [`solver`] runs the full hypothesis pipeline and the fixed-point search.
//! * [`dp`] solves the Bellman-type functional-equation system by value
//!   iteration.
//!
//! Grid scans run on the ambient rayon pool. Results are always collected in
//! grid order before reduction, so reports do not depend on the worker count.

// `!(x > 0.0)` is written on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod distances;
pub mod dp;
mod error;
pub mod expr;
pub mod implicit;
pub mod metric;
pub mod pairs;
pub mod report;
pub mod solver;
pub mod verifier;

pub use error::{Error, Result};
