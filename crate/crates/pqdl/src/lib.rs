//! Prequential description-length estimation for small classifiers.
//!
//! The crate trains small feed-forward models deterministically on nested
//! data prefixes, calibrates them online with a scalar softmax temperature,
//! estimates prequential minimum description lengths (realized as decodable
//! bitstreams through an arithmetic coder), and compares architectures with
//! log-evidence tables and bootstrap signal-to-noise ratios.

pub mod calib;
pub mod config;
pub mod codec;
pub mod data;
pub mod error;
pub mod jobs;
pub mod matrix;
pub mod nn;
pub mod optim;
pub mod prequential;
pub mod runner;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
