//! Monolithic fluid-structure interaction in two dimensions: a cut-cell
//! background fluid mesh coupled weakly to a moving body-fitted fluid patch,
//! which is in turn coupled to a hyperelastic solid.

// index loops mirror the element formulas; negated comparisons reject NaN
#![allow(
    clippy::needless_range_loop,
    clippy::neg_cmp_op_on_partial_ord,
    clippy::too_many_arguments
)]

pub mod ale;
pub mod bc;
pub mod cutcell;
pub mod driver;
pub mod error;
pub mod fem;
pub mod fixtures;
pub mod fluid;
pub mod geometry;
pub mod mesh;
pub mod nitsche;
pub mod output;
pub mod problem;
pub mod run;
pub mod scenario;
pub mod solid;
pub mod sparse;
pub mod verify;

pub use error::{FsiError, Result};
