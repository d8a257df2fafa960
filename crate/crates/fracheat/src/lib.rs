//! Numerical laboratory for the fractional stochastic heat equation on the
//! circle: spectral noise models, exact second-order structure of the
//! solution, path sampling, Holder regularity estimation, and the potential
//! theory (capacity / Hausdorff measure) side of hitting probabilities.

pub mod accept;
pub mod cov;
pub mod error;
pub mod fbm;
pub mod fou;
pub mod hitting;
pub mod holder;
pub mod potential;
pub mod quad;
pub mod rng;
pub mod sim;
pub mod spectral;
pub mod stats;

pub use error::Error;
