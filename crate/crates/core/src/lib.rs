#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod cli_io;
pub mod cost;
pub mod dro;
pub mod error;
pub mod grid_fem;
pub mod kl_field;
pub mod optimizer;
pub mod oracle;
pub mod uncertainty;

pub use error::{Error, Result};
