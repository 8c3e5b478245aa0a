#![cfg_attr(not(feature = "std"), no_std)]
extern crate alloc;

pub mod covariance;
pub mod decoder;
pub mod error;
pub mod synth;
pub mod trial;

pub use error::{Result, UmmError};
