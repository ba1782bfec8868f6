//! Simulation and learning workbench for classifying classical dephasing
//! noise acting on a driven three-level network (CTAP/STIRAP population
//! transfer).
//!
//! The crate simulates population transfer under five diagonal-noise models,
//! computes ensemble-averaged transfer-efficiency feature vectors under three
//! driving conditions, and trains a small from-scratch neural classifier on
//! those features. See the `examples/` directory for runnable entry points
//! into each capability.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod features;
pub mod linalg;
pub mod mlp;
pub mod noise;
pub mod quadrature;
pub mod quantum;
pub mod rng;
pub mod surface;

pub use error::{Error, Result};
