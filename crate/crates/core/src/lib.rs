//! Vertex-patch smoothers with local p-multigrid for high-order Stokes
//! discretizations.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod fem;
pub mod gmg;
pub mod krylov;
pub mod kron;
pub mod mesh;
pub mod patches;
pub mod plocal;
pub mod poly;
pub mod sparse;

pub use error::{Error, Result};
