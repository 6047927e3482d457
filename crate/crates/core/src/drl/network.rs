use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DrlError, Experience};

/// Dense layer, `weights` row-major with shape `n_out x n_in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Layer { n_in, n_out, weights: vec![0.0; n_in * n_out], bias: vec![0.0; n_out] }
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_out)
            .map(|i| {
                let row = &self.weights[i * self.n_in..(i + 1) * self.n_in];
                self.bias[i] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }
}

/// Feed-forward Q-network: ReLU hidden layers, sigmoid output scaled to
/// `(0, output_scale)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNetwork {
    layers: Vec<Layer>,
    output_scale: f64,
}

/// One training example: the taken action and its (constant) target.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub state: &'a [f64],
    pub action: usize,
    pub target: f64,
}

/// Anything that maps a state to per-action Q-values.
pub trait QFunction {
    fn q_values(&self, s: &[f64]) -> Result<Vec<f64>, DrlError>;
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl QNetwork {
    /// Uniform `+-sqrt(6 / (fan_in + fan_out))` weights, zero biases.
    pub fn new<R: Rng>(sizes: &[usize], output_scale: f64, rng: &mut R) -> Result<Self, DrlError> {
        let mut net = Self::zeros(sizes, output_scale)?;
        for layer in &mut net.layers {
            let a = (6.0 / (layer.n_in + layer.n_out) as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.gen_range(-a..a);
            }
        }
        Ok(net)
    }

    pub fn zeros(sizes: &[usize], output_scale: f64) -> Result<Self, DrlError> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(DrlError::Config(format!("layer sizes {sizes:?} need an input and an output, all nonzero")));
        }
        if !(output_scale > 0.0 && output_scale.is_finite()) {
            return Err(DrlError::Config(format!("output scale must be positive, got {output_scale}")));
        }
        let layers = sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Ok(QNetwork { layers, output_scale })
    }

    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].n_in).chain(self.layers.iter().map(|l| l.n_out)).collect()
    }

    pub fn n_in(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn n_out(&self) -> usize {
        self.layers.last().map_or(0, |l| l.n_out)
    }

    pub fn output_scale(&self) -> f64 {
        self.output_scale
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    fn check_input(&self, x: &[f64]) -> Result<(), DrlError> {
        if x.len() != self.n_in() {
            return Err(DrlError::Dimension { expected: self.n_in(), got: x.len() });
        }
        Ok(())
    }

    /// Activations of every layer; the first entry is the input and the last
    /// is the scaled output.
    fn trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let z = layer.affine(acts.last().expect("input"));
            let a = if l == last {
                z.into_iter().map(|v| self.output_scale * sigmoid(v)).collect()
            } else {
                z.into_iter().map(|v| v.max(0.0)).collect()
            };
            acts.push(a);
        }
        acts
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, DrlError> {
        self.check_input(x)?;
        Ok(self.trace(x).pop().expect("output layer"))
    }

    /// `(1/2M) sum_j (target_j - Q(s_j, a_j))^2` and its gradient, in the
    /// layout of [`QNetwork::layers`]. Only the taken action's output
    /// carries error.
    pub fn loss_and_grad(&self, batch: &[Sample<'_>]) -> Result<(f64, Vec<Layer>), DrlError> {
        let mut grad: Vec<Layer> = self.layers.iter().map(|l| Layer::zeros(l.n_in, l.n_out)).collect();
        if batch.is_empty() {
            return Ok((0.0, grad));
        }
        let m = batch.len() as f64;
        let mut loss = 0.0;
        for s in batch {
            self.check_input(s.state)?;
            if s.action >= self.n_out() {
                return Err(DrlError::Dimension { expected: self.n_out(), got: s.action });
            }
            let acts = self.trace(s.state);
            let out = acts.last().expect("output")[s.action];
            let err = s.target - out;
            loss += err * err / (2.0 * m);

            // dL/dz at the output pre-activation, nonzero for the taken action only.
            let mut delta = vec![0.0; self.n_out()];
            delta[s.action] = -err / m * out * (1.0 - out / self.output_scale);
            for l in (0..self.layers.len()).rev() {
                let layer = &self.layers[l];
                let input = &acts[l];
                let g = &mut grad[l];
                for i in 0..layer.n_out {
                    if delta[i] == 0.0 {
                        continue;
                    }
                    g.bias[i] += delta[i];
                    let row = &mut g.weights[i * layer.n_in..(i + 1) * layer.n_in];
                    for (gw, &a) in row.iter_mut().zip(input) {
                        *gw += delta[i] * a;
                    }
                }
                if l == 0 {
                    break;
                }
                let mut prev = vec![0.0; layer.n_in];
                for i in 0..layer.n_out {
                    if delta[i] == 0.0 {
                        continue;
                    }
                    let row = &layer.weights[i * layer.n_in..(i + 1) * layer.n_in];
                    for (p, &w) in prev.iter_mut().zip(row) {
                        *p += w * delta[i];
                    }
                }
                // ReLU derivative, taken as zero at the kink.
                for (p, &a) in prev.iter_mut().zip(input) {
                    if a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        Ok((loss, grad))
    }

    /// `theta <- theta - beta grad L`; returns the pre-step batch loss.
    pub fn sgd_step(&mut self, batch: &[Sample<'_>], beta: f64) -> Result<f64, DrlError> {
        if !(beta > 0.0) {
            return Err(DrlError::Config(format!("learning rate must be positive, got {beta}")));
        }
        let (loss, grad) = self.loss_and_grad(batch)?;
        let finite = grad.iter().all(|g| g.weights.iter().chain(&g.bias).all(|v| v.is_finite()));
        if !loss.is_finite() || !finite {
            return Err(DrlError::Divergence(format!("non-finite loss {loss}")));
        }
        for (layer, g) in self.layers.iter_mut().zip(&grad) {
            for (w, d) in layer.weights.iter_mut().zip(&g.weights) {
                *w -= beta * d;
            }
            for (b, d) in layer.bias.iter_mut().zip(&g.bias) {
                *b -= beta * d;
            }
        }
        Ok(loss)
    }
}

impl QFunction for QNetwork {
    fn q_values(&self, s: &[f64]) -> Result<Vec<f64>, DrlError> {
        self.forward(s)
    }
}

/// Lowest index among the minima.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// With probability `epsilon` a uniform action, otherwise the greedy one.
pub fn select_action<Q: QFunction + ?Sized, R: Rng>(
    q: &Q,
    s: &[f64],
    epsilon: f64,
    n_actions: usize,
    rng: &mut R,
) -> Result<usize, DrlError> {
    let u: f64 = rng.gen();
    if u < epsilon {
        return Ok(rng.gen_range(0..n_actions));
    }
    Ok(argmin(&q.q_values(s)?))
}

/// `cost + gamma min_a' Q_target(s_next, a')` per experience.
pub fn td_targets<Q: QFunction + ?Sized>(batch: &[&Experience], target: &Q, gamma: f64) -> Result<Vec<f64>, DrlError> {
    batch
        .iter()
        .map(|e| {
            let q = target.q_values(&e.s_next)?;
            Ok(e.cost + gamma * q.iter().copied().fold(f64::INFINITY, f64::min))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert, proptest, ProptestConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Straight-line re-evaluation of the network, independent of `trace`.
    fn reference_forward(net: &QNetwork, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let n = net.layers().len();
        for (l, layer) in net.layers().iter().enumerate() {
            let mut z = vec![0.0; layer.n_out];
            for i in 0..layer.n_out {
                let mut acc = layer.bias[i];
                for j in 0..layer.n_in {
                    acc += layer.weights[i * layer.n_in + j] * a[j];
                }
                z[i] = acc;
            }
            a = if l + 1 == n {
                z.iter().map(|v| net.output_scale() / (1.0 + f64::exp(-v))).collect()
            } else {
                z.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect()
            };
        }
        a
    }

    fn loss_only(net: &QNetwork, batch: &[Sample<'_>]) -> f64 {
        net.loss_and_grad(batch).unwrap().0
    }

    #[test]
    fn zero_weights_give_half_scale() {
        let net = QNetwork::zeros(&[3, 5, 4], 7.0).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 0.5]).unwrap(), vec![3.5; 4]);
        assert!(net.forward(&[1.0]).is_err());
    }

    #[test]
    fn output_width_is_action_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = QNetwork::new(&[6, 8, 4], 1.0, &mut rng).unwrap();
        assert_eq!(net.forward(&[0.0; 6]).unwrap().len(), 4);
        assert_eq!(net.sizes(), vec![6, 8, 4]);
    }

    #[test]
    fn init_respects_xavier_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = QNetwork::new(&[50, 44, 12, 8], 1.0, &mut rng).unwrap();
        for l in net.layers() {
            let a = (6.0 / (l.n_in + l.n_out) as f64).sqrt();
            assert!(l.weights.iter().all(|w| w.abs() <= a));
            assert!(l.bias.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn greedy_and_tie_rules() {
        struct Fixed(Vec<f64>);
        impl QFunction for Fixed {
            fn q_values(&self, _: &[f64]) -> Result<Vec<f64>, DrlError> {
                Ok(self.0.clone())
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(select_action(&Fixed(vec![0.3, 0.1, 0.4, 0.2]), &[], 0.0, 4, &mut rng).unwrap(), 1);
        assert_eq!(select_action(&Fixed(vec![0.1, 0.2, 0.1, 0.3]), &[], 0.0, 4, &mut rng).unwrap(), 0);
    }

    #[test]
    fn full_exploration_is_uniform() {
        let net = QNetwork::zeros(&[1, 8], 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut counts = [0usize; 8];
        let draws = 100_000;
        for _ in 0..draws {
            counts[select_action(&net, &[0.0], 1.0, 8, &mut rng).unwrap()] += 1;
        }
        let expected = draws as f64 / 8.0;
        for &c in &counts {
            assert!((c as f64 - expected).abs() / expected < 0.02, "{counts:?}");
        }
        // Chi-square with 7 dof; 24.32 is the 0.999 quantile.
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 24.32);
    }

    #[test]
    fn targets_by_hand() {
        let net = QNetwork::zeros(&[1, 3], 2.0).unwrap(); // every output is 1
        let e = |c: f64| Experience { s_prev: vec![0.0], action: 0, cost: c, s_next: vec![0.0] };
        let (a, b, c) = (e(2.0), e(0.5), e(0.0));
        assert_eq!(td_targets(&[&a], &net, 0.99).unwrap(), vec![2.99]);
        assert_eq!(td_targets(&[&a, &b, &c], &net, 0.0).unwrap(), vec![2.0, 0.5, 0.0]);
        let t = td_targets(&[&a, &b, &c], &net, 0.5).unwrap();
        assert_eq!(t, vec![2.5, 1.0, 0.5]);
    }

    #[test]
    fn zero_error_leaves_weights_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut net = QNetwork::new(&[3, 4, 2], 1.0, &mut rng).unwrap();
        let s = [0.2, -0.1, 0.7];
        let q = net.forward(&s).unwrap();
        let before = net.clone();
        let loss = net.sgd_step(&[Sample { state: &s, action: 1, target: q[1] }], 0.1).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(net, before);
    }

    #[test]
    fn small_step_descends() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut net = QNetwork::new(&[3, 6, 5, 4], 3.0, &mut rng).unwrap();
        let states: Vec<Vec<f64>> = (0..8).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let batch: Vec<Sample> = states
            .iter()
            .enumerate()
            .map(|(i, s)| Sample { state: s, action: i % 4, target: 0.3 * i as f64 })
            .collect();
        let before = loss_only(&net, &batch);
        net.sgd_step(&batch, 1e-3).unwrap();
        assert!(loss_only(&net, &batch) < before);
    }

    #[test]
    fn divergence_is_reported() {
        let mut net = QNetwork::zeros(&[1, 2], 1.0).unwrap();
        let s = [0.0];
        let err = net.sgd_step(&[Sample { state: &s, action: 0, target: f64::NAN }], 0.1).unwrap_err();
        assert!(matches!(err, DrlError::Divergence(_)));
    }

    /// Central differences over every parameter of every layer.
    pub(crate) fn max_layer_rel_error(net: &QNetwork, batch: &[Sample<'_>], h: f64) -> f64 {
        let (_, grad) = net.loss_and_grad(batch).unwrap();
        let mut worst: f64 = 0.0;
        for l in 0..net.layers().len() {
            let n_w = net.layers()[l].weights.len();
            let n_b = net.layers()[l].bias.len();
            let mut num = 0.0;
            let mut den = 0.0;
            for p in 0..n_w + n_b {
                let mut plus = net.clone();
                let mut minus = net.clone();
                let (a, b) = if p < n_w {
                    (&mut plus.layers_mut()[l].weights[p], grad[l].weights[p])
                } else {
                    (&mut plus.layers_mut()[l].bias[p - n_w], grad[l].bias[p - n_w])
                };
                *a += h;
                if p < n_w {
                    minus.layers_mut()[l].weights[p] -= h;
                } else {
                    minus.layers_mut()[l].bias[p - n_w] -= h;
                }
                let fd = (loss_only(&plus, batch) - loss_only(&minus, batch)) / (2.0 * h);
                num += (fd - b).powi(2);
                den += fd.powi(2).max(b.powi(2));
            }
            if den > 0.0 {
                worst = worst.max((num / den).sqrt());
            }
        }
        worst
    }

    #[test]
    fn five_weight_gradient_check() {
        // 2 -> 1 -> 1 has 2 + 1 + 1 + 1 = 5 parameters.
        let mut net = QNetwork::zeros(&[2, 1, 1], 2.0).unwrap();
        net.layers_mut()[0].weights.copy_from_slice(&[0.7, -0.4]);
        net.layers_mut()[0].bias[0] = 0.1;
        net.layers_mut()[1].weights[0] = 1.3;
        net.layers_mut()[1].bias[0] = -0.2;
        let s = [0.5, 0.25];
        let batch = [Sample { state: &s, action: 0, target: 1.7 }];
        assert!(max_layer_rel_error(&net, &batch, 1e-6) < 1e-5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn forward_matches_reference(seed in any::<u64>(), scale in 0.5f64..50.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = QNetwork::new(&[5, 7, 3, 4], scale, &mut rng).unwrap();
            let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let a = net.forward(&x).unwrap();
            let b = reference_forward(&net, &x);
            for (u, v) in a.iter().zip(&b) {
                prop_assert!((u - v).abs() <= 1e-12 * scale);
                prop_assert!(*u > 0.0 && *u < scale);
            }
        }

        #[test]
        fn gradients_match_finite_differences(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut net = QNetwork::new(&[4, 6, 5, 3], 4.0, &mut rng).unwrap();
            // Zero biases put whole dead layers exactly on the ReLU kink.
            for l in net.layers_mut() {
                l.bias.iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5));
            }
            let states: Vec<Vec<f64>> = (0..5).map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            let batch: Vec<Sample> = states
                .iter()
                .map(|s| Sample { state: s, action: rng.gen_range(0..3), target: rng.gen_range(0.0..4.0) })
                .collect();
            prop_assert!(max_layer_rel_error(&net, &batch, 1e-6) < 1e-5);
        }
    }
}
