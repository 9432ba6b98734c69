//! Continuous-time hidden Markov models for disease progression.

pub mod cli;
pub mod error;
pub mod hmm;
pub mod io;
pub mod linalg;
pub mod outputs;
pub mod seed;
pub mod selection;
pub mod serve;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
