//! Deterministic federated learning simulator built around a low-rank global
//! model plus per-client sparse corrections, with reference baselines, theory
//! diagnostics, and communication accounting.

pub mod error;
pub mod linalg;
pub mod model;
pub mod reshape;
pub mod rng;

pub use error::{Error, Result};
