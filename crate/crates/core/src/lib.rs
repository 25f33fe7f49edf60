// `!(x > y)` is used on purpose so NaN fails range checks
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assignment;
pub mod cli;
pub mod availability;
pub mod counting;
pub mod error;
pub mod ingest;
pub mod kpi;
pub mod model;
pub mod pipeline;
pub mod simulator;
pub mod tracker;

pub use error::{Error, Result, ValidationError};
