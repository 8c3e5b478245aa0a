//! Session files, decision logs, metrics and the `umm` command line on top of
//! [`umm_core`].

pub mod cli;
pub mod error;
pub mod log;
pub mod metrics;
pub mod replay;
pub mod session_io;

pub use error::{Error, Result};
