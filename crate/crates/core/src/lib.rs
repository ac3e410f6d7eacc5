//! Core library of the `rlul` machine-unlearning workbench.
//!
//! The workbench trains logit-based classifiers, serves sequential data
//! removal requests by feeding the removed point back with complementary
//! labels, and certifies the result against a retrain-from-scratch oracle
//! using probability-distribution divergence metrics and a membership
//! inference probe.
//!
//! Everything is deterministic per seed: the PRNG is pinned (ChaCha8 with an
//! explicit seed expansion), shuffles are hand-rolled Fisher-Yates, and all
//! arithmetic is f64.

pub mod certify;
pub mod data;
pub mod error;
pub mod experiments;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod train;
pub mod unlearn;

pub use error::{Error, Result};

// Matrix types appear throughout the public API.
pub use ndarray;
