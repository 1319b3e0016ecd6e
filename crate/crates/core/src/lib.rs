#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod error;
pub mod hilbert;
pub mod histories;
pub mod kernels;
pub mod quadrature;
pub mod records;
pub mod scenario;
pub mod two_state;

pub use error::{Error, Result};
