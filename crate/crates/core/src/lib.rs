//! Robust output regulation for boundary-controlled 1D reaction-diffusion
//! plants: finite difference models, internal-model controller design,
//! closed-loop certificates and simulation.

pub mod artifact;
pub mod closedloop;
pub mod config;
pub mod controller;
pub mod dense;
pub mod error;
pub mod freqdata;
pub mod internal_model;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod signals;
pub mod stabilization;

pub use error::{Error, Result};
