//! Simulation and analysis of a time-resolved, heralded two-path
//! interference experiment: wave-optics predictions, polarization-path
//! entanglement, a deterministic-learning corpuscular model, detector
//! Monte Carlo and the statistics used to compare them.

// `!(x > 0.0)` style checks deliberately reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corpuscular;
mod error;
pub mod experiment;
pub mod io;
pub mod montecarlo;
pub mod optics;
pub mod polarization;
pub mod quad;
pub mod rng;
pub mod stats;

pub use error::Error;
