//! Reinforced curriculum distillation for infrared/visible image fusion:
//! image I/O, fusion metrics, a degradation pipeline, a small explicit-backward
//! CNN stack, a REINFORCE curriculum agent and the training loop around them.

pub mod agent;
pub mod config;
pub mod degrade;
pub mod error;
pub mod filters;
pub mod fusenet;
pub mod imgio;
pub mod metrics;
pub mod micrograd;
pub mod trainer;

pub use error::{Error, Result};
