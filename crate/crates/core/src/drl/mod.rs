//! Deep Q-learning for the slow-timescale capacitor commitment.

mod agent;
mod hyper;
mod network;
mod replay;
mod schedule;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use agent::{Agent, AgentConfig, StepLog, CHECKPOINT_VERSION};
pub use hyper::HyperQNetwork;
pub use network::{argmin, select_action, td_targets, Layer, QFunction, QNetwork, Sample};
pub use replay::ReplayBuffer;
pub use schedule::{stepped_epsilon, EpsilonSchedule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DrlError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Capacitor commitment. Bit `k` of `index` is capacitor `k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    pub index: usize,
    pub y: Vec<bool>,
}

impl Action {
    pub fn from_index(index: usize, n_caps: usize) -> Self {
        assert!(index < 1 << n_caps, "action index {index} out of range for {n_caps} capacitors");
        Action { index, y: (0..n_caps).map(|k| index >> k & 1 == 1).collect() }
    }

    pub fn from_bits(y: &[bool]) -> Self {
        let index = y.iter().enumerate().fold(0, |acc, (k, &on)| acc | (usize::from(on) << k));
        Action { index, y: y.to_vec() }
    }

    pub fn all_off(n_caps: usize) -> Self {
        Self::from_index(0, n_caps)
    }
}

/// Interval-average net active injection per bus plus the commitment in
/// force; the network sees the concatenation `[p_bar; y_hat]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpState {
    pub p_bar: Vec<f64>,
    pub y_hat: Vec<bool>,
}

impl MdpState {
    pub fn features(&self) -> Vec<f64> {
        self.p_bar.iter().copied().chain(self.y_hat.iter().map(|&b| f64::from(u8::from(b)))).collect()
    }

    pub fn dim(&self) -> usize {
        self.p_bar.len() + self.y_hat.len()
    }
}

/// One transition. `cost` is already divided by the agent's cost scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    pub s_prev: Vec<f64>,
    pub action: usize,
    pub cost: f64,
    pub s_next: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn action_encoding_is_a_bijection() {
        for n in 0..6 {
            for i in 0..1usize << n {
                let a = Action::from_index(i, n);
                assert_eq!(a.y.len(), n);
                assert_eq!(Action::from_bits(&a.y), a);
            }
        }
        assert_eq!(Action::from_bits(&[true, false, true]).index, 5);
    }

    #[test]
    fn features_concatenate() {
        let s = MdpState { p_bar: vec![0.1, -0.2], y_hat: vec![true, false, true] };
        assert_eq!(s.features(), vec![0.1, -0.2, 1.0, 0.0, 1.0]);
        assert_eq!(s.dim(), 5);
    }
}
