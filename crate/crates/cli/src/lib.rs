//! File formats, synthetic datasets, the end-to-end loop-closure pipeline and
//! its evaluation, on top of the `histoloop` core.

pub mod config;
pub mod dataset;
mod error;
pub mod evaluate;
pub mod io;
pub mod pipeline;
pub mod synth;
pub mod timing;

pub use config::Config;
pub use dataset::Dataset;
pub use error::{Error, Result};
pub use pipeline::{run, RunReport};
