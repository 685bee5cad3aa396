//! Synthetic worker-year panels with known injected effects.

mod config;
mod generate;

pub use config::{Confounding, DgpConfig, EffectProfile, GroupPair};
pub use generate::{generate, generate_shock_consistent, GroundTruth, LogMultipliers};
