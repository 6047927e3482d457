//! The two-timescale closed loop and its baselines.
//!
//! Each control interval picks a capacitor commitment (learned, fixed,
//! random, or re-optimized every slot), solves the fast-timescale inverter
//! problem in every slot, and records costs, voltages and setpoints.
//!
//! Profiles are replayed cyclically: control interval `tau` (1-based) uses
//! profile interval `tau mod N_P`, and the initial state is built from
//! profile interval 0 with every capacitor off.

mod cost;
mod episode;
mod trace;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::convexopt::SolverError;
use crate::drl::{AgentConfig, DrlError};

pub use cost::{best_interval_costs, interval_cost, mdp_transition, IntervalOutcome, SlotOutcome, SlotSolver};
pub use episode::{
    compare_policies, run_episode, Episode, EpisodeCheckpoint, EpisodeFailure, IntervalRecord, RunTrace, SlotRecord,
};
pub use trace::{read_trace_dir, summarize, write_trace, BusStats, PolicySummary, Summary, TraceFiles};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Drlcap,
    Fixcap,
    Randcap,
    Realtime,
}

impl Policy {
    pub fn name(self) -> &'static str {
        match self {
            Policy::Drlcap => "drlcap",
            Policy::Fixcap => "fixcap",
            Policy::Randcap => "randcap",
            Policy::Realtime => "realtime",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Policy::Drlcap, Policy::Fixcap, Policy::Randcap, Policy::Realtime].into_iter().find(|p| p.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Physics {
    /// Box QP on the linearized model.
    Linear,
    /// SOC-relaxed branch flow model.
    Socp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub policy: Policy,
    pub physics: Physics,
    pub seed: u64,
    pub n_intervals: u64,
    pub agent: AgentConfig,
    /// Commitment used every interval by `fixcap`; `None` means all off.
    #[serde(default)]
    pub fixcap_pattern: Option<Vec<bool>>,
    /// Divides interval costs before they reach the learner; `None` means
    /// `N_T * N * 0.05^2`.
    #[serde(default)]
    pub cost_scale: Option<f64>,
}

impl RunConfig {
    pub fn new(policy: Policy, seed: u64, n_intervals: u64) -> Self {
        RunConfig {
            policy,
            physics: Physics::Linear,
            seed,
            n_intervals,
            agent: AgentConfig::default(),
            fixcap_pattern: None,
            cost_scale: None,
        }
    }

    pub fn resolved_cost_scale(&self, n_buses: usize, slots_per_interval: usize) -> f64 {
        self.cost_scale.unwrap_or((slots_per_interval * n_buses) as f64 * 0.05 * 0.05)
    }

    pub fn validate(&self, n_caps: usize) -> Result<(), SimError> {
        self.agent.validate(1 << n_caps)?;
        if let Some(p) = &self.fixcap_pattern {
            if p.len() != n_caps {
                return Err(SimError::Config(format!(
                    "fixcap pattern has {} entries, feeder has {n_caps} capacitors",
                    p.len()
                )));
            }
        }
        if let Some(c) = self.cost_scale {
            if !(c > 0.0 && c.is_finite()) {
                return Err(SimError::Config(format!("cost scale must be positive, got {c}")));
            }
        }
        if self.policy == Policy::Realtime && self.physics != Physics::Linear {
            return Err(SimError::Config("the realtime baseline runs on the linear model only".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("solver failed at interval {tau}, slot {t}: {source}")]
    Solver {
        tau: u64,
        t: usize,
        #[source]
        source: SolverError,
    },
    #[error("agent failed at interval {tau}: {source}")]
    Agent {
        tau: u64,
        #[source]
        source: DrlError,
    },
    #[error(transparent)]
    Drl(#[from] DrlError),
    #[error("trace: {0}")]
    Trace(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}
