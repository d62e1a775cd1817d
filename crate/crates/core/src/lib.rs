pub mod baselines;
pub mod cli;
pub mod cluster;
pub mod error;
pub mod evaluation;
pub mod field;
pub mod io;
pub mod numcore;
pub mod odesolve;
pub mod pipeline;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
