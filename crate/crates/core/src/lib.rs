//! Minimum-power current stimuli that make a phase-model neuron spike
//! at a prescribed time, with and without an amplitude bound.

pub mod bounded;
pub mod cli;
pub mod error;
pub mod json;
pub mod models;
pub mod numerics;
pub mod oracle;
pub mod simulator;
pub mod unbounded;

pub use error::{Error, Result};
pub use models::{theta_to_sniper, ModelKind, PhaseModel, ThetaReduction};
