#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod field;
pub mod harness;
pub mod hdg_local;
pub mod mesh;
pub mod polybasis;
pub mod postprocess;
pub mod problem;
pub mod projections;
pub mod reference;
pub mod solver;
pub mod sparse_linalg;

pub use error::{HdgError, Result};
