//! Loop-group and Painlevé III computations for the tt* structure of the
//! quantum cohomology of the projective line.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod factorization;
pub mod geometry;
pub mod loops;
pub mod painleve3;
pub mod precision;
pub mod qc_frames;

pub use error::{Error, Result};
pub use loops::{LoopConfig, Mat2, TruncatedLoop};
pub use precision::{DoubleF64, Real};
