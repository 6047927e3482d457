//! Seeded Markov-chain scenario generator.
//!
//! Each assignment attaches a finite-state chain to a set of buses for one
//! quantity (load or generation). Chains step once per slot. A `shared`
//! assignment drives all of its buses from a single realization, which is
//! how correlated irradiance or feeder-wide load regimes are expressed.
//! Multiple assignments to the same bus and quantity add up.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FeederError, FeederModel, ProfileShape, ScenarioProfile};

const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkovChain {
    /// Value emitted in each state.
    pub levels: Vec<f64>,
    /// Row-stochastic transition matrix.
    pub transition: Vec<Vec<f64>>,
    /// Fixed initial state; uniformly drawn when absent.
    #[serde(default)]
    pub initial: Option<usize>,
}

impl MarkovChain {
    pub fn constant(level: f64) -> Self {
        Self { levels: vec![level], transition: vec![vec![1.0]], initial: Some(0) }
    }

    pub fn validate(&self) -> Result<(), FeederError> {
        let n = self.levels.len();
        if n == 0 {
            return Err(FeederError::Validation("chain has no states".into()));
        }
        if self.transition.len() != n || self.transition.iter().any(|row| row.len() != n) {
            return Err(FeederError::Validation(format!("transition matrix must be {n}x{n}")));
        }
        for (i, row) in self.transition.iter().enumerate() {
            if row.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
                return Err(FeederError::Validation(format!("transition row {i} has a negative entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(FeederError::Validation(format!(
                    "transition matrix is not row-stochastic: row {i} sums to {sum}"
                )));
            }
        }
        if self.levels.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(FeederError::Validation("chain levels must be finite and non-negative".into()));
        }
        if let Some(s) = self.initial {
            if s >= n {
                return Err(FeederError::Validation(format!("initial state {s} out of range")));
            }
        }
        Ok(())
    }

    fn step<R: Rng>(&self, state: usize, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let row = &self.transition[state];
        let mut acc = 0.0;
        for (j, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return j;
            }
        }
        // Rounding can leave the cumulative sum just below 1.
        row.iter().rposition(|&p| p > 0.0).unwrap_or(state)
    }

    /// Draws a state path of `len` steps.
    pub fn sample_path<R: Rng>(&self, len: usize, rng: &mut R) -> Vec<usize> {
        let mut path = Vec::with_capacity(len);
        if len == 0 {
            return path;
        }
        let mut s = match self.initial {
            Some(s) => s,
            None => rng.gen_range(0..self.levels.len()),
        };
        path.push(s);
        for _ in 1..len {
            s = self.step(s, rng);
            path.push(s);
        }
        path
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantity {
    Load,
    Generation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Assignment {
    pub quantity: Quantity,
    /// Chain index into [`ChainSpec::chains`].
    pub chain: usize,
    /// Bus labels; all eligible buses when absent (non-capacitor buses for
    /// load, buses with PV capacity for generation).
    #[serde(default)]
    pub buses: Option<Vec<i64>>,
    /// Per-bus multipliers aligned with the resolved bus list; 1 when absent.
    #[serde(default)]
    pub scales: Option<Vec<f64>>,
    /// Generation levels are fractions of each bus's PV capacity.
    #[serde(default)]
    pub per_capacity: bool,
    /// One realization drives every listed bus.
    #[serde(default)]
    pub shared: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub n_intervals: usize,
    pub slots_per_interval: usize,
    /// Load power factor; reactive consumption is `p_c * tan(acos(pf))`.
    #[serde(default = "unity")]
    pub power_factor: f64,
    pub chains: Vec<MarkovChain>,
    pub assignments: Vec<Assignment>,
}

fn unity() -> f64 {
    1.0
}

impl ChainSpec {
    pub fn shape(&self) -> ProfileShape {
        ProfileShape { n_intervals: self.n_intervals, slots_per_interval: self.slots_per_interval }
    }
}

/// Generates a profile from `params`; a pure function of its arguments.
pub fn synth_markov_profile(
    model: &FeederModel,
    seed: u64,
    params: &ChainSpec,
) -> Result<ScenarioProfile, FeederError> {
    if params.n_intervals == 0 || params.slots_per_interval == 0 {
        return Err(FeederError::Validation("profile shape must be non-empty".into()));
    }
    if !(params.power_factor > 0.0 && params.power_factor <= 1.0) {
        return Err(FeederError::Validation(format!("power factor must lie in (0, 1], got {}", params.power_factor)));
    }
    for chain in &params.chains {
        chain.validate()?;
    }
    let q_ratio = (1.0 - params.power_factor.powi(2)).sqrt() / params.power_factor;
    let n = model.n_buses();
    let n_slots = params.n_intervals * params.slots_per_interval;
    let mut p_c = vec![0.0; n_slots * n];
    let mut p_g = vec![0.0; n_slots * n];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for (ai, asg) in params.assignments.iter().enumerate() {
        let chain = params
            .chains
            .get(asg.chain)
            .ok_or_else(|| FeederError::Validation(format!("assignment {ai} references missing chain")))?;
        let nodes: Vec<usize> = match &asg.buses {
            Some(labels) => labels
                .iter()
                .map(|&l| {
                    model
                        .node_of_label(l)
                        .ok_or_else(|| FeederError::Validation(format!("assignment {ai}: unknown bus {l}")))
                })
                .collect::<Result<_, _>>()?,
            None => (0..n)
                .filter(|&k| match asg.quantity {
                    Quantity::Load => !model.is_capacitor_node(k),
                    Quantity::Generation => model.p_cap_at(k) > 0.0,
                })
                .collect(),
        };
        let scales = match &asg.scales {
            Some(s) if s.len() != nodes.len() => {
                return Err(FeederError::Validation(format!(
                    "assignment {ai}: {} scales for {} buses",
                    s.len(),
                    nodes.len()
                )))
            }
            Some(s) => s.clone(),
            None => vec![1.0; nodes.len()],
        };
        let target = match asg.quantity {
            Quantity::Load => &mut p_c,
            Quantity::Generation => &mut p_g,
        };
        let shared_path = asg.shared.then(|| chain.sample_path(n_slots, &mut rng));
        for (&k, &scale) in nodes.iter().zip(&scales) {
            let own;
            let path = match &shared_path {
                Some(p) => p,
                None => {
                    own = chain.sample_path(n_slots, &mut rng);
                    &own
                }
            };
            let mult = if asg.per_capacity { scale * model.p_cap_at(k) } else { scale };
            for (slot, &s) in path.iter().enumerate() {
                target[slot * n + k] += chain.levels[s] * mult;
            }
        }
    }

    let mut profile = ScenarioProfile::zeros(params.shape(), n);
    for slot in 0..n_slots {
        let (tau, t) = (slot / params.slots_per_interval, slot % params.slots_per_interval);
        for k in 0..n {
            let pc = p_c[slot * n + k];
            profile.set(tau, t, k, pc, pc * q_ratio, p_g[slot * n + k]);
        }
    }
    profile.validate(model)?;
    Ok(profile)
}
