//! Radial feeder model, per-unit conversion, and scenario profiles.

mod bundled;
mod model;
mod profile;
mod synth;

use thiserror::Error;

pub use bundled::{default_scenario, ieee123, ieee123_scenario, sce47, sce47_scenario};
pub use model::{
    inverter_bound, load_feeder, parse_feeder, CapacitorSpec, FeederModel, FeederSpec, InverterBound, InverterSpec,
    LineSpec,
};
pub use profile::{load_profiles, read_profiles, ProfileShape, ScenarioProfile, SlotData};
pub use synth::{synth_markov_profile, Assignment, ChainSpec, MarkovChain, Quantity};

#[derive(Debug, Error)]
pub enum FeederError {
    #[error("cannot read {0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("domain error: {0}")]
    Domain(String),
}

/// Converts kW or kVar to per-unit on a `base_mva` system base.
pub fn kilo_to_pu(value_k: f64, base_mva: f64) -> f64 {
    value_k / (base_mva * 1000.0)
}

pub fn pu_to_kilo(value_pu: f64, base_mva: f64) -> f64 {
    value_pu * base_mva * 1000.0
}
