use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::hyper::HyperQNetwork;
use super::network::{argmin, select_action};
use super::replay::ReplayBuffer;
use super::schedule::EpsilonSchedule;
use super::{DrlError, Experience};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub hidden: Vec<usize>,
    pub gamma: f64,
    /// Replay capacity `R`.
    pub replay: usize,
    /// Mini-batch size `M`.
    pub batch: usize,
    /// Target sync period `B`.
    pub target_sync: u64,
    /// Number of sub-networks `K`.
    pub hyper_k: usize,
    /// Learning rate.
    pub beta: f64,
    /// Upper end of the sigmoid output; `None` means `1 / (1 - gamma)`.
    #[serde(default)]
    pub output_scale: Option<f64>,
    #[serde(default)]
    pub epsilon: EpsilonSchedule,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            hidden: vec![44, 12],
            gamma: 0.99,
            replay: 10,
            batch: 10,
            target_sync: 5,
            hyper_k: 1,
            beta: 1e-3,
            output_scale: None,
            epsilon: EpsilonSchedule::default(),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self, n_actions: usize) -> Result<(), DrlError> {
        let bad = |m: String| Err(DrlError::Config(m));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if self.batch < 1 || self.replay < self.batch {
            return bad(format!("need R >= M >= 1, got R = {}, M = {}", self.replay, self.batch));
        }
        if self.target_sync < 1 {
            return bad("target sync period must be at least 1".into());
        }
        if self.hyper_k == 0 || !n_actions.is_multiple_of(self.hyper_k) {
            return bad(format!("K = {} must divide the {n_actions} actions", self.hyper_k));
        }
        if !(self.beta > 0.0) {
            return bad(format!("learning rate must be positive, got {}", self.beta));
        }
        if let Some(s) = self.output_scale {
            if !(s > 0.0 && s.is_finite()) {
                return bad(format!("output scale must be positive, got {s}"));
            }
        }
        self.epsilon.validate().map_err(DrlError::Config)
    }

    pub fn resolved_output_scale(&self) -> f64 {
        self.output_scale.unwrap_or(1.0 / (1.0 - self.gamma))
    }
}

/// What happened during one [`Agent::observe`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub tau: u64,
    pub buffer_len: usize,
    pub target_synced: bool,
    /// Batch loss over all groups; `None` before the buffer holds `M` items.
    pub loss: Option<f64>,
}

/// DQN agent with replay and a periodically synced target. Everything
/// random (initialization, exploration, mini-batches) comes from one
/// seeded stream, which is saved with the checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    version: u32,
    config: AgentConfig,
    n_caps: usize,
    net: HyperQNetwork,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    /// Completed intervals.
    tau: u64,
}

impl Agent {
    pub fn new(config: AgentConfig, n_in: usize, n_caps: usize, seed: u64) -> Result<Self, DrlError> {
        let n_actions = 1usize << n_caps;
        config.validate(n_actions)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = HyperQNetwork::new(
            n_in,
            &config.hidden,
            n_actions,
            config.hyper_k,
            config.resolved_output_scale(),
            &mut rng,
        )?;
        Ok(Agent {
            version: CHECKPOINT_VERSION,
            buffer: ReplayBuffer::new(config.replay),
            config,
            n_caps,
            net,
            rng,
            tau: 0,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn n_caps(&self) -> usize {
        self.n_caps
    }

    pub fn n_actions(&self) -> usize {
        self.net.n_actions()
    }

    pub fn network(&self) -> &HyperQNetwork {
        &self.net
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn tau(&self) -> u64 {
        self.tau
    }

    /// Exploration probability for the next interval.
    pub fn next_epsilon(&self) -> f64 {
        self.config.epsilon.epsilon(self.tau + 1)
    }

    /// Epsilon-greedy action for the next interval and the epsilon used.
    pub fn act(&mut self, s: &[f64]) -> Result<(usize, f64), DrlError> {
        let eps = self.next_epsilon();
        let a = select_action(&self.net, s, eps, self.n_actions(), &mut self.rng)?;
        Ok((a, eps))
    }

    pub fn greedy(&self, s: &[f64]) -> Result<usize, DrlError> {
        Ok(argmin(&self.net.forward(s)?))
    }

    /// Stores the transition, trains on a mini-batch once the buffer holds
    /// `M` experiences, and syncs the target every `B` intervals.
    pub fn observe(&mut self, e: Experience) -> Result<StepLog, DrlError> {
        if !e.cost.is_finite() {
            return Err(DrlError::Divergence(format!("non-finite cost {}", e.cost)));
        }
        self.tau += 1;
        self.buffer.push(e);
        let mut loss = None;
        if self.buffer.len() >= self.config.batch {
            let batch: Vec<Experience> =
                self.buffer.sample(self.config.batch, &mut self.rng).into_iter().cloned().collect();
            let refs: Vec<&Experience> = batch.iter().collect();
            let per_group = self.net.train_step(&refs, self.config.gamma, self.config.beta)?;
            // Group losses are means over their own samples; weight back to the batch.
            let m = batch.len() as f64;
            let mut counts = vec![0usize; self.net.k()];
            for e in &batch {
                counts[self.net.group_of(e.action)] += 1;
            }
            loss = Some(per_group.iter().zip(&counts).map(|(l, &c)| l.unwrap_or(0.0) * c as f64 / m).sum());
        }
        let target_synced = self.tau.is_multiple_of(self.config.target_sync);
        if target_synced {
            self.net.sync_target();
        }
        Ok(StepLog { tau: self.tau, buffer_len: self.buffer.len(), target_synced, loss })
    }

    pub fn save(&self, path: &Path) -> Result<(), DrlError> {
        let text = serde_json::to_string(self).map_err(|e| DrlError::Checkpoint(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| DrlError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, DrlError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| DrlError::Checkpoint(format!("{}: {e}", path.display())))?;
        let agent: Agent = serde_json::from_str(&text).map_err(|e| DrlError::Checkpoint(e.to_string()))?;
        if agent.version != CHECKPOINT_VERSION {
            return Err(DrlError::Checkpoint(format!(
                "version {} is not supported (expected {CHECKPOINT_VERSION})",
                agent.version
            )));
        }
        Ok(agent)
    }
}
