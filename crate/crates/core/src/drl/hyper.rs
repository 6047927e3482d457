use rand::Rng;
use serde::{Deserialize, Serialize};

use super::network::{td_targets, QFunction, QNetwork, Sample};
use super::{DrlError, Experience};

/// `K` equal sub-networks fed the same state; sub-network `k` predicts the
/// Q-values of actions `[k w, (k+1) w)` with `w = n_actions / K`. Each has
/// its own target copy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperQNetwork {
    nets: Vec<QNetwork>,
    targets: Vec<QNetwork>,
    width: usize,
}

/// Read-only view of the target copies.
pub struct TargetView<'a>(&'a HyperQNetwork);

fn concat(nets: &[QNetwork], s: &[f64]) -> Result<Vec<f64>, DrlError> {
    let mut out = Vec::new();
    for net in nets {
        out.extend(net.forward(s)?);
    }
    Ok(out)
}

impl HyperQNetwork {
    /// `hidden` excludes the input and output layers. Sub-networks are
    /// initialized in group order from `rng`; targets start as copies.
    pub fn new<R: Rng>(
        n_in: usize,
        hidden: &[usize],
        n_actions: usize,
        k: usize,
        output_scale: f64,
        rng: &mut R,
    ) -> Result<Self, DrlError> {
        if k == 0 || !n_actions.is_multiple_of(k) {
            return Err(DrlError::Config(format!("K = {k} does not divide {n_actions} actions")));
        }
        let width = n_actions / k;
        let sizes: Vec<usize> = std::iter::once(n_in).chain(hidden.iter().copied()).chain([width]).collect();
        let nets = (0..k).map(|_| QNetwork::new(&sizes, output_scale, rng)).collect::<Result<Vec<_>, _>>()?;
        Ok(HyperQNetwork { targets: nets.clone(), nets, width })
    }

    /// Wraps existing networks; all must share input size and output width.
    pub fn from_parts(nets: Vec<QNetwork>) -> Result<Self, DrlError> {
        let first = nets.first().ok_or_else(|| DrlError::Config("no sub-networks".into()))?;
        let (n_in, width) = (first.n_in(), first.n_out());
        if nets.iter().any(|n| n.n_in() != n_in || n.n_out() != width) {
            return Err(DrlError::Config("sub-networks differ in shape".into()));
        }
        Ok(HyperQNetwork { targets: nets.clone(), nets, width })
    }

    pub fn k(&self) -> usize {
        self.nets.len()
    }

    pub fn group_width(&self) -> usize {
        self.width
    }

    pub fn n_actions(&self) -> usize {
        self.width * self.nets.len()
    }

    pub fn n_in(&self) -> usize {
        self.nets[0].n_in()
    }

    pub fn nets(&self) -> &[QNetwork] {
        &self.nets
    }

    pub fn target_nets(&self) -> &[QNetwork] {
        &self.targets
    }

    pub fn group_of(&self, action: usize) -> usize {
        action / self.width
    }

    /// Concatenation `[o_1; ...; o_K]`.
    pub fn forward(&self, s: &[f64]) -> Result<Vec<f64>, DrlError> {
        concat(&self.nets, s)
    }

    pub fn target_forward(&self, s: &[f64]) -> Result<Vec<f64>, DrlError> {
        concat(&self.targets, s)
    }

    pub fn target(&self) -> TargetView<'_> {
        TargetView(self)
    }

    pub fn sync_target(&mut self) {
        self.targets.clone_from(&self.nets);
    }

    /// Targets use the minimum over all groups' target outputs; each
    /// experience then trains only the sub-network owning its action.
    /// Returns per-group batch losses, `None` for groups with no samples.
    pub fn train_step(&mut self, batch: &[&Experience], gamma: f64, beta: f64) -> Result<Vec<Option<f64>>, DrlError> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(DrlError::Config(format!("discount must lie in [0, 1), got {gamma}")));
        }
        let targets = td_targets(batch, &self.target(), gamma)?;
        let mut groups: Vec<Vec<Sample>> = vec![Vec::new(); self.k()];
        for (e, &t) in batch.iter().zip(&targets) {
            if e.action >= self.n_actions() {
                return Err(DrlError::Dimension { expected: self.n_actions(), got: e.action });
            }
            let g = self.group_of(e.action);
            groups[g].push(Sample { state: &e.s_prev, action: e.action - g * self.width, target: t });
        }
        self.nets
            .iter_mut()
            .zip(&groups)
            .map(|(net, samples)| if samples.is_empty() { Ok(None) } else { net.sgd_step(samples, beta).map(Some) })
            .collect()
    }
}

impl QFunction for HyperQNetwork {
    fn q_values(&self, s: &[f64]) -> Result<Vec<f64>, DrlError> {
        self.forward(s)
    }
}

impl QFunction for TargetView<'_> {
    fn q_values(&self, s: &[f64]) -> Result<Vec<f64>, DrlError> {
        self.0.target_forward(s)
    }
}
