// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod align;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod features;
pub mod geo;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod par;
pub mod phrase;
pub mod pipeline;
pub mod raster;
pub mod signal;
pub mod synth;
pub mod track;
pub mod workload;

pub use error::{Error, Result};
