//! File formats, random ensembles and experiment campaigns around
//! [`blockrip_core`], plus the `blockrip` command-line tool.

pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod io;

pub use error::{HarnessError, Result};
