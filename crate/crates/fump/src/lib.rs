//! Unified motion/planning on vectorized driving scenes.
//!
//! The crate trains a single model that decodes trajectories for every agent
//! in a scene (motion) and refines the ego trajectory conditioned on the ego
//! state (planning), so that surrounding vehicles become additional experts
//! for the planner.

pub mod config;
pub mod datagen;
pub mod ecsa;
mod error;
pub mod geometry;
pub mod memory;
pub mod metrics;
pub mod numerics;
pub mod scene;
pub mod suites;
pub mod trainer;
#[cfg(test)]
pub(crate) mod testutil;
pub mod uttd;

pub use error::{Error, Result};
