//! Explicit ReLU network calculus and linear-implicit Euler machinery for
//! stiff SDEs, with synthesis of networks that represent Monte Carlo value
//! function estimators and zero-sum game values.

pub mod calculus;
pub mod error;
pub mod game;
pub mod nn;
pub mod sde;
pub mod synth;
pub mod systems;

pub use error::{Error, Result};
