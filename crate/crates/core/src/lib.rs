#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod coherent;
pub mod diagnostics;
pub mod error;
pub mod flow;
pub mod operator;
pub mod partition;
pub mod pipeline;
pub mod sparse;
pub mod spectral;

pub use error::{Error, Result};
