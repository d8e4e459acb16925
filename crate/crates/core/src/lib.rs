//! Gradient-flow learning dynamics of dot-product and cyclic-invariant kernels
//! on the sphere, with random-feature SGD simulations.

pub mod activation;
pub mod empiricalflow;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod oracleflow;
pub mod rfsgd;
pub mod specfun;
pub mod spheredata;

pub use activation::Activation;
pub use error::{Error, Result};
