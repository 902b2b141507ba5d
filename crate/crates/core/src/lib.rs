// `!(x > 0.0)` guards are meant to reject NaN too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blowup;
pub mod checkpoint;
pub mod diagnostics;
pub mod error;
pub mod ground_state;
pub mod integrator;
pub mod scenarios;
pub mod spectral;

pub use error::{Error, Result};
