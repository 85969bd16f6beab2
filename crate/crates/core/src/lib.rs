//! Joint spacecraft attitude estimation and star-tracker misalignment
//! calibration.
//!
//! A bank of multiplicative extended Kalman filters, one per misalignment
//! hypothesis, is weighted by Bayesian multiple-model adaptive estimation.
//! The hypothesis grid is refined adaptively around the emerging estimate and
//! the bank is collapsed into one attitude by quaternion averaging.

pub mod dynamics;
pub mod error;
pub mod fusion;
pub mod mekf;
pub mod mmae;
pub mod rotations;
pub mod scenario;
pub mod sensors;

pub use error::{Error, Result};
