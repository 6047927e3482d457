//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voltgrid::convexopt::{assemble_qp, fixed_injections, solve_box_qp, solve_socp, BoxQpOptions, SocpOptions};
use voltgrid::drl::{td_targets, Agent, AgentConfig, EpsilonSchedule, Experience, HyperQNetwork, QNetwork, Sample};
use voltgrid::feeder::{
    parse_feeder, sce47, sce47_scenario, synth_markov_profile, FeederModel, FeederSpec, InverterSpec, LineSpec,
    ProfileShape, ScenarioProfile,
};
use voltgrid::powerflow::{
    build_sensitivity, certify_soc_exactness, solve_branch_flow_exact, solve_lindistflow, DEFAULT_EXACTNESS_TOL,
};
use voltgrid::sim::{compare_policies, Episode, Policy, RunConfig, RunTrace};

type Check = Result<String, String>;

/// Id, name, check, time budget in seconds.
type Criterion = (u32, &'static str, fn() -> Check, u64);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------
// Random radial feeders and a dense LinDistFlow oracle.

struct Tree {
    /// `parent[i]` for buses 1..=n; 0 is the substation.
    parent: Vec<usize>,
    r: Vec<f64>,
    x: Vec<f64>,
    labels: Vec<i64>,
    v0: f64,
}

impl Tree {
    fn random(rng: &mut ChaCha8Rng, n: usize) -> Self {
        let mut parent = vec![0; n + 1];
        let mut r = vec![0.0; n + 1];
        let mut x = vec![0.0; n + 1];
        for i in 1..=n {
            parent[i] = rng.gen_range(0..i);
            r[i] = rng.gen_range(0.001..0.02);
            x[i] = rng.gen_range(0.001..0.03);
        }
        let labels = (0..=n as i64).map(|i| 500 + 7 * i).collect();
        Tree { parent, r, x, labels, v0: rng.gen_range(0.97f64..1.03).powi(2) }
    }

    fn n(&self) -> usize {
        self.parent.len() - 1
    }

    fn spec(&self, rng: &mut ChaCha8Rng, inverters: Vec<InverterSpec>) -> FeederSpec {
        let mut lines: Vec<LineSpec> = (1..=self.n())
            .map(|i| LineSpec {
                from: self.labels[self.parent[i]],
                to: self.labels[i],
                r_pu: self.r[i],
                x_pu: self.x[i],
            })
            .collect();
        lines.shuffle(rng);
        FeederSpec {
            base_mva: 1.0,
            base_kv: 12.47,
            v0: self.v0,
            buses: self.labels.clone(),
            lines,
            capacitors: vec![],
            inverters,
        }
    }

    /// Solves the lossless DistFlow equations as one dense linear system in
    /// `[P; Q; v]`. Injections are indexed by bus 1..=n.
    fn dense(&self, p: &[f64], q: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.n();
        let mut a = DMatrix::<f64>::zeros(3 * n, 3 * n);
        let mut b = DVector::<f64>::zeros(3 * n);
        let (ip, iq, iv) = (|i: usize| i - 1, |i: usize| n + i - 1, |i: usize| 2 * n + i - 1);
        for i in 1..=n {
            a[(ip(i), ip(i))] = 1.0;
            a[(iq(i), iq(i))] = 1.0;
            b[ip(i)] = -p[i];
            b[iq(i)] = -q[i];
            for c in (1..=n).filter(|&c| self.parent[c] == i) {
                a[(ip(i), ip(c))] -= 1.0;
                a[(iq(i), iq(c))] -= 1.0;
            }
            a[(iv(i), iv(i))] = 1.0;
            a[(iv(i), ip(i))] = 2.0 * self.r[i];
            a[(iv(i), iq(i))] = 2.0 * self.x[i];
            match self.parent[i] {
                0 => b[iv(i)] = self.v0,
                pa => a[(iv(i), iv(pa))] = -1.0,
            }
        }
        let sol = a.lu().solve(&b).expect("DistFlow system is nonsingular");
        let pick = |f: &dyn Fn(usize) -> usize| (0..=n).map(|i| if i == 0 { 0.0 } else { sol[f(i)] }).collect();
        (pick(&ip), pick(&iq), pick(&iv))
    }
}

fn criterion_1() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.gen_range(1..=50);
        let tree = Tree::random(&mut rng, n);
        let model = FeederModel::from_spec(&tree.spec(&mut rng, vec![])).map_err(|e| e.to_string())?;
        let p: Vec<f64> = (0..=n).map(|i| if i == 0 { 0.0 } else { rng.gen_range(-0.05..0.05) }).collect();
        let q: Vec<f64> = (0..=n).map(|i| if i == 0 { 0.0 } else { rng.gen_range(-0.05..0.05) }).collect();
        let node: Vec<usize> = (1..=n).map(|i| model.node_of_label(tree.labels[i]).unwrap()).collect();
        let (mut pm, mut qm) = (vec![0.0; n], vec![0.0; n]);
        for i in 1..=n {
            pm[node[i - 1]] = p[i];
            qm[node[i - 1]] = q[i];
        }
        let rec = solve_lindistflow(&model, &pm, &qm).map_err(|e| e.to_string())?;
        let (dp, dq, dv) = tree.dense(&p, &q);
        for i in 1..=n {
            let k = node[i - 1];
            worst = worst
                .max((rec.v[k] - dv[i]).abs())
                .max((rec.p_flow[k] - dp[i]).abs())
                .max((rec.q_flow[k] - dq[i]).abs());
        }
    }
    ensure(worst <= 1e-10, || format!("max deviation {worst:.3e} > 1e-10"))?;
    Ok(format!("50 trees, max deviation {worst:.2e}"))
}

// ---------------------------------------------------------------------------

fn criterion_2() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut worst_coord, mut worst_kkt) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let n = rng.gen_range(2..=10);
        let tree = Tree::random(&mut rng, n);
        let n_inv = rng.gen_range(1..=3.min(n));
        let mut buses: Vec<usize> = (1..=n).collect();
        buses.shuffle(&mut rng);
        buses.truncate(n_inv);
        let mut bound = BTreeMap::new();
        let inverters: Vec<InverterSpec> = buses
            .iter()
            .map(|&i| {
                let p_cap: f64 = rng.gen_range(0.01..0.05);
                let s_cap = p_cap * rng.gen_range(1.1..1.5);
                bound.insert(i, (s_cap * s_cap - p_cap * p_cap).sqrt());
                InverterSpec { bus: tree.labels[i], p_cap_pu: p_cap, s_cap_pu: s_cap }
            })
            .collect();
        let model = FeederModel::from_spec(&tree.spec(&mut rng, inverters)).map_err(|e| e.to_string())?;

        let (mut p, mut q) = (vec![0.0; n + 1], vec![0.0; n + 1]);
        let mut prof = ScenarioProfile::zeros(ProfileShape { n_intervals: 1, slots_per_interval: 1 }, n);
        for i in 1..=n {
            let (p_c, q_c) = (rng.gen_range(0.0..0.05), rng.gen_range(0.0..0.03));
            let k = model.node_of_label(tree.labels[i]).unwrap();
            let p_g = if bound.contains_key(&i) { rng.gen_range(0.0..1.0) * model.p_cap_at(k) } else { 0.0 };
            prof.set(0, 0, k, p_c, q_c, p_g);
            p[i] = p_g - p_c;
            q[i] = -q_c;
        }
        let qp = assemble_qp(&model, &build_sensitivity(&model), &prof.slot(0, 0), &[]).map_err(|e| e.to_string())?;
        let (sol, _, _) = solve_box_qp(&qp, BoxQpOptions::default()).map_err(|e| e.to_string())?;
        worst_kkt = worst_kkt.max(qp.kkt_residual(&sol));

        // Setpoint order follows the model's active inverters.
        let order: Vec<usize> = model
            .active_inverters()
            .iter()
            .map(|&a| {
                let label = model.label(model.inv_nodes()[a]);
                tree.labels.iter().position(|&l| l == label).unwrap()
            })
            .collect();
        let (_, _, base) = tree.dense(&p, &q);
        let cols: Vec<Vec<f64>> = order
            .iter()
            .map(|&i| {
                let mut qi = q.clone();
                qi[i] += 1.0;
                let (_, _, v) = tree.dense(&p, &qi);
                (0..=n).map(|k| v[k] - base[k]).collect()
            })
            .collect();
        let grids: Vec<Vec<f64>> = order
            .iter()
            .map(|i| {
                let steps = (bound[i] / 1e-3).floor() as i64;
                (-steps..=steps).map(|s| s as f64 * 1e-3).collect()
            })
            .collect();
        let cost = |qs: &[f64]| -> f64 {
            (1..=n)
                .map(|k| {
                    let v = base[k] + qs.iter().zip(&cols).map(|(qj, c)| qj * c[k]).sum::<f64>();
                    (v - tree.v0).powi(2)
                })
                .sum()
        };
        let mut best = (f64::INFINITY, vec![]);
        let mut idx = vec![0usize; grids.len()];
        loop {
            let qs: Vec<f64> = idx.iter().zip(&grids).map(|(&i, g)| g[i]).collect();
            let c = cost(&qs);
            if c < best.0 {
                best = (c, qs);
            }
            let mut d = 0;
            while d < idx.len() {
                idx[d] += 1;
                if idx[d] < grids[d].len() {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == idx.len() {
                break;
            }
        }
        for (j, &lat) in best.1.iter().enumerate() {
            worst_coord = worst_coord.max((sol[j] - lat).abs());
        }
    }
    ensure(worst_coord <= 2e-3, || format!("coordinate gap {worst_coord:.3e} > 2e-3"))?;
    ensure(worst_kkt <= 1e-8, || format!("KKT residual {worst_kkt:.3e} > 1e-8"))?;
    Ok(format!("20 instances, max coordinate gap {worst_coord:.2e}, max KKT residual {worst_kkt:.2e}"))
}

// ---------------------------------------------------------------------------

const TEN_BUS: &str = r#"{"base_mva":1,"base_kv":12,"v0":1,"buses":[0,1,2,3,4,5,6,7,8,9,10],
    "lines":[{"from":0,"to":1,"r_pu":0.004,"x_pu":0.008},
             {"from":1,"to":2,"r_pu":0.006,"x_pu":0.010},
             {"from":2,"to":3,"r_pu":0.005,"x_pu":0.009},
             {"from":3,"to":4,"r_pu":0.007,"x_pu":0.011},
             {"from":2,"to":5,"r_pu":0.008,"x_pu":0.008},
             {"from":5,"to":6,"r_pu":0.006,"x_pu":0.007},
             {"from":1,"to":7,"r_pu":0.009,"x_pu":0.012},
             {"from":7,"to":8,"r_pu":0.005,"x_pu":0.006},
             {"from":8,"to":9,"r_pu":0.006,"x_pu":0.009},
             {"from":4,"to":10,"r_pu":0.004,"x_pu":0.007}],
    "capacitors":[{"bus":6,"q_pu":0.05}],
    "inverters":[{"bus":4,"p_cap_pu":0.05,"s_cap_pu":0.06},
                 {"bus":9,"p_cap_pu":0.04,"s_cap_pu":0.045}]}"#;

const TWO_BUS: &str = r#"{"base_mva":1,"base_kv":12,"v0":1,"buses":[0,1],
    "lines":[{"from":0,"to":1,"r_pu":0.01,"x_pu":0.02}],
    "inverters":[{"bus":1,"p_cap_pu":0.1,"s_cap_pu":0.1118033988749895}]}"#;

/// Margin allowed between the relaxed optimum and the exact-model cost of
/// the linear setpoints, covering the ADMM stopping tolerance.
const RELAXATION_SLACK: f64 = 1e-9;

fn criterion_3() -> Check {
    let two = parse_feeder(TWO_BUS).map_err(|e| e.to_string())?;
    let mut two_prof = ScenarioProfile::zeros(ProfileShape { n_intervals: 1, slots_per_interval: 1 }, 1);
    two_prof.set(0, 0, 0, 0.1, 0.05, 0.0);

    let ten = parse_feeder(TEN_BUS).map_err(|e| e.to_string())?;
    let mut ten_prof = ScenarioProfile::zeros(ProfileShape { n_intervals: 1, slots_per_interval: 1 }, ten.n_buses());
    for k in 0..ten.n_buses() {
        if !ten.is_capacitor_node(k) {
            ten_prof.set(0, 0, k, 0.04, 0.02, 0.5 * ten.p_cap_at(k));
        }
    }

    let cases: [(&str, &FeederModel, &ScenarioProfile, Vec<bool>); 3] = [
        ("2-bus", &two, &two_prof, vec![]),
        ("10-bus off", &ten, &ten_prof, vec![false]),
        ("10-bus on", &ten, &ten_prof, vec![true]),
    ];
    let mut details = Vec::new();
    for (name, m, prof, y) in cases {
        let slot = prof.slot(0, 0);
        let sol =
            solve_socp(m, &slot, &y, SocpOptions { tol: 1e-9, ..Default::default() }).map_err(|e| e.to_string())?;
        let cert = certify_soc_exactness(m, &sol.state, DEFAULT_EXACTNESS_TOL);
        ensure(cert.exact && cert.feasible, || format!("{name}: not exact, max gap {:.3e}", cert.max_gap))?;

        let qp = assemble_qp(m, &build_sensitivity(m), &slot, &y).map_err(|e| e.to_string())?;
        let (q_r, _, _) = solve_box_qp(&qp, BoxQpOptions::default()).map_err(|e| e.to_string())?;
        let (p, mut q) = fixed_injections(m, &slot, &y);
        for (&a, qq) in m.active_inverters().iter().zip(q_r.iter()) {
            q[m.inv_nodes()[a]] += qq;
        }
        let exact = solve_branch_flow_exact(m, &p, &q, 1e-13, 500).map_err(|e| e.to_string())?.deviation_cost(m.v0());
        let relaxed = sol.state.deviation_cost(m.v0());
        ensure(relaxed <= exact + RELAXATION_SLACK, || format!("{name}: SOCP {relaxed:.6e} > exact {exact:.6e}"))?;
        details.push(format!("{name} gap {:.1e} margin {:.1e}", cert.max_gap, exact - relaxed));
    }
    Ok(details.join(", "))
}

// ---------------------------------------------------------------------------

/// Weights of layer `l` in row-major order, then its biases.
fn param_mut(net: &mut QNetwork, l: usize, idx: usize) -> &mut f64 {
    let layer = &mut net.layers_mut()[l];
    let n_w = layer.weights.len();
    if idx < n_w {
        &mut layer.weights[idx]
    } else {
        &mut layer.bias[idx - n_w]
    }
}

fn criterion_4() -> Check {
    let h = 1e-6;
    let mut worst = 0.0f64;
    for point in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + point);
        let mut net = QNetwork::new(&[7, 9, 6, 5], 3.0, &mut rng).map_err(|e| e.to_string())?;
        for layer in net.layers_mut() {
            layer.bias.iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5));
        }
        let states: Vec<Vec<f64>> = (0..6).map(|_| (0..7).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let batch: Vec<Sample> = states
            .iter()
            .map(|s| Sample { state: s, action: rng.gen_range(0..5), target: rng.gen_range(0.0..3.0) })
            .collect();
        let (_, grads) = net.loss_and_grad(&batch).map_err(|e| e.to_string())?;
        for (l, g) in grads.iter().enumerate() {
            let mut num = 0.0;
            let mut den_a = 0.0;
            let mut den_f = 0.0;
            let n_w = net.layers()[l].weights.len();
            for idx in 0..n_w + net.layers()[l].bias.len() {
                let mut probe = net.clone();
                let orig = *param_mut(&mut probe, l, idx);
                *param_mut(&mut probe, l, idx) = orig + h;
                let up = probe.loss_and_grad(&batch).unwrap().0;
                *param_mut(&mut probe, l, idx) = orig - h;
                let down = probe.loss_and_grad(&batch).unwrap().0;
                let fd = (up - down) / (2.0 * h);
                let an = if idx < n_w { g.weights[idx] } else { g.bias[idx - n_w] };
                num += (fd - an).powi(2);
                den_a += an * an;
                den_f += fd * fd;
            }
            let rel = num.sqrt() / den_a.sqrt().max(den_f.sqrt()).max(1e-300);
            worst = worst.max(rel);
        }
    }
    ensure(worst <= 1e-5, || format!("max relative error {worst:.3e} > 1e-5"))?;
    Ok(format!("10 points x 3 layers, max relative error {worst:.2e}"))
}

// ---------------------------------------------------------------------------

/// Four states, four actions, deterministic transitions, costs in [0, 1].
const TOY_NEXT: [[usize; 4]; 4] = [[1, 2, 3, 0], [2, 0, 1, 3], [3, 3, 0, 1], [0, 1, 2, 2]];
const TOY_COST: [[f64; 4]; 4] =
    [[0.9, 0.2, 0.6, 1.0], [0.5, 0.8, 0.1, 0.7], [0.3, 1.0, 0.9, 0.4], [0.8, 0.6, 0.0, 0.9]];
const TOY_GAMMA: f64 = 0.5;

fn toy_optimal_policy() -> [usize; 4] {
    let q_of = |v: &[f64; 4], s: usize, a: usize| TOY_COST[s][a] + TOY_GAMMA * v[TOY_NEXT[s][a]];
    let mut v = [0.0f64; 4];
    for _ in 0..5000 {
        let mut nv = [0.0; 4];
        for (s, slot) in nv.iter_mut().enumerate() {
            *slot = (0..4).map(|a| q_of(&v, s, a)).fold(f64::INFINITY, f64::min);
        }
        v = nv;
    }
    let mut pi = [0; 4];
    for (s, slot) in pi.iter_mut().enumerate() {
        *slot = (0..4).min_by(|&a, &b| q_of(&v, s, a).total_cmp(&q_of(&v, s, b))).unwrap();
    }
    pi
}

fn one_hot(s: usize) -> Vec<f64> {
    (0..4).map(|i| if i == s { 1.0 } else { 0.0 }).collect()
}

fn criterion_5() -> Check {
    let optimal = toy_optimal_policy();
    let config = AgentConfig {
        hidden: vec![16],
        gamma: TOY_GAMMA,
        replay: 200,
        batch: 16,
        target_sync: 10,
        hyper_k: 1,
        beta: 0.5,
        output_scale: None,
        epsilon: EpsilonSchedule::Constant { epsilon: 0.5 },
    };
    let mut matches = 0;
    let mut per_seed = Vec::new();
    for seed in 0..10u64 {
        let mut agent = Agent::new(config.clone(), 4, 2, seed).map_err(|e| e.to_string())?;
        let mut env = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut s = 0usize;
        for _ in 0..3000 {
            let (a, _) = agent.act(&one_hot(s)).map_err(|e| e.to_string())?;
            let s2 = TOY_NEXT[s][a];
            agent
                .observe(Experience { s_prev: one_hot(s), action: a, cost: TOY_COST[s][a], s_next: one_hot(s2) })
                .map_err(|e| e.to_string())?;
            s = if env.gen_bool(0.1) { env.gen_range(0..4) } else { s2 };
        }
        let m = (0..4).filter(|&s| agent.greedy(&one_hot(s)).unwrap() == optimal[s]).count();
        per_seed.push(m);
        matches += m;
    }
    let share = matches as f64 / 40.0;
    ensure(share >= 0.95, || format!("{matches}/40 states match value iteration ({per_seed:?})"))?;
    Ok(format!("{matches}/40 state-seed pairs match value iteration"))
}

// ---------------------------------------------------------------------------

fn criterion_6() -> Check {
    let mut rng_a = ChaCha8Rng::seed_from_u64(606);
    let mut rng_b = ChaCha8Rng::seed_from_u64(606);
    let mut hyper = HyperQNetwork::new(6, &[10, 7], 8, 1, 5.0, &mut rng_a).map_err(|e| e.to_string())?;
    let mut single = QNetwork::new(&[6, 10, 7, 8], 5.0, &mut rng_b).map_err(|e| e.to_string())?;
    let mut target = single.clone();
    let mut data = ChaCha8Rng::seed_from_u64(607);
    for step in 0..100 {
        let batch: Vec<Experience> = (0..6)
            .map(|_| Experience {
                s_prev: (0..6).map(|_| data.gen_range(-1.0..1.0)).collect(),
                action: data.gen_range(0..8),
                cost: data.gen_range(0.0..1.0),
                s_next: (0..6).map(|_| data.gen_range(-1.0..1.0)).collect(),
            })
            .collect();
        let refs: Vec<&Experience> = batch.iter().collect();
        let probe = &batch[0].s_prev;
        ensure(hyper.forward(probe).unwrap() == single.forward(probe).unwrap(), || {
            format!("forward differs at step {step}")
        })?;
        let h_loss = hyper.train_step(&refs, 0.9, 0.01).map_err(|e| e.to_string())?;
        let t = td_targets(&refs, &target, 0.9).map_err(|e| e.to_string())?;
        let samples: Vec<Sample> =
            batch.iter().zip(&t).map(|(e, &t)| Sample { state: &e.s_prev, action: e.action, target: t }).collect();
        let loss = single.sgd_step(&samples, 0.01).map_err(|e| e.to_string())?;
        ensure(h_loss == vec![Some(loss)] && hyper.nets()[0] == single, || format!("training differs at step {step}"))?;
        if step % 5 == 4 {
            hyper.sync_target();
            target = single.clone();
        }
    }

    let config = AgentConfig { hyper_k: 64, ..AgentConfig::default() };
    let agent = Agent::new(config, 12, 8, 1).map_err(|e| e.to_string())?;
    let net = agent.network();
    let width = net.forward(&[0.0; 12]).map_err(|e| e.to_string())?.len();
    ensure(net.k() == 64 && net.group_width() == 4 && width == 256, || {
        format!("K = {}, group width {}, output width {width}", net.k(), net.group_width())
    })?;
    Ok("K=1 bitwise identical over 100 steps; N_a=8, K=64 gives 64 x 4 = 256 outputs".into())
}

// ---------------------------------------------------------------------------

fn expected_epsilon(tau: u64) -> f64 {
    (1.0 - 0.1 * (tau / 50) as f64).max(0.0)
}

fn criterion_7() -> Check {
    let model = sce47();
    let profile = synth_markov_profile(&model, 7, &sce47_scenario(601, 5)).map_err(|e| e.to_string())?;
    let config = RunConfig::new(Policy::Drlcap, 7, 600);
    let (replay, sync) = (config.agent.replay, config.agent.target_sync);
    let mut episode = Episode::new(&model, &profile, config).map_err(|e| e.to_string())?;
    let mut trace = RunTrace::new(Policy::Drlcap, &model);
    episode.run_until(600, &mut trace).map_err(|e| e.to_string())?;
    ensure(trace.intervals.len() == 600, || format!("{} intervals logged", trace.intervals.len()))?;
    let eps = |tau: u64| trace.intervals[tau as usize - 1].epsilon;
    ensure(eps(1) == 1.0 && eps(50) == 0.9, || format!("epsilon {} at 1, {} at 50", eps(1), eps(50)))?;
    let mut syncs = 0;
    for r in &trace.intervals {
        ensure((r.epsilon - expected_epsilon(r.tau)).abs() < 1e-12, || format!("epsilon {} at {}", r.epsilon, r.tau))?;
        if r.tau >= 500 {
            ensure(r.epsilon == 0.0, || format!("epsilon {} at {}", r.epsilon, r.tau))?;
        }
        let log = r.agent.as_ref().ok_or_else(|| format!("no agent log at {}", r.tau))?;
        ensure(log.target_synced == (r.tau % sync == 0), || format!("sync flag wrong at {}", r.tau))?;
        ensure(log.buffer_len <= replay, || format!("buffer {} > {replay} at {}", log.buffer_len, r.tau))?;
        syncs += usize::from(log.target_synced);
    }
    Ok(format!("600 intervals, {syncs} target syncs, buffer <= {replay}"))
}

// ---------------------------------------------------------------------------

const FIG4_SEEDS: u64 = 5;
const FIG4_INTERVALS: u64 = 2000;
const FIG4_SLOTS: usize = 5;

struct Fig4 {
    /// Per seed: DRLCap, RandCap, FixCap(all-off).
    runs: Vec<[RunTrace; 3]>,
    elapsed: Duration,
}

fn fig4_runs() -> Result<Fig4, String> {
    let start = Instant::now();
    let model = sce47();
    let mut runs = Vec::new();
    for seed in 0..FIG4_SEEDS {
        let profile = synth_markov_profile(&model, seed, &sce47_scenario(FIG4_INTERVALS as usize + 1, FIG4_SLOTS))
            .map_err(|e| e.to_string())?;
        let configs: Vec<RunConfig> =
            [Policy::Drlcap, Policy::Randcap, Policy::Fixcap].map(|p| RunConfig::new(p, seed, FIG4_INTERVALS)).into();
        let traces = compare_policies(&model, &profile, &configs)
            .into_iter()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|f| f.error.to_string())?;
        runs.push(<[RunTrace; 3]>::try_from(traces).unwrap());
    }
    Ok(Fig4 { runs, elapsed: start.elapsed() })
}

fn criterion_8(fig: &Fig4) -> Check {
    let mut wins = 0;
    let mut rows = Vec::new();
    for (seed, [drl, rand, off]) in fig.runs.iter().enumerate() {
        let c = |t: &RunTrace| t.final_time_avg_cost().unwrap();
        let win = c(drl) <= c(rand) && c(drl) <= c(off);
        wins += usize::from(win);
        rows.push(format!("seed {seed}: {:.4}/{:.4}/{:.4}", c(drl), c(rand), c(off)));
    }
    ensure(wins >= 4, || format!("DRLCap wins {wins}/5 [{}]", rows.join("; ")))?;
    Ok(format!("DRLCap <= RandCap and FixCap on {wins}/5 seeds (drl/rand/off: {})", rows.join("; ")))
}

/// Per-bus `max |sqrt(v) - 1|` over the final 10% of slots.
fn tail_excursion(t: &RunTrace) -> Vec<f64> {
    let tail = &t.slots[t.slots.len() - t.slots.len() / 10..];
    (0..t.bus_labels.len()).map(|b| tail.iter().map(|s| (s.v[b].sqrt() - 1.0).abs()).fold(0.0, f64::max)).collect()
}

fn criterion_9(fig: &Fig4) -> Check {
    let mut worst_ratio = 0.0f64;
    for (seed, [drl, _, off]) in fig.runs.iter().enumerate() {
        let (d, o) = (tail_excursion(drl), tail_excursion(off));
        for (b, (x, y)) in d.iter().zip(&o).enumerate() {
            ensure(x <= y, || format!("seed {seed}, bus {}: DRLCap {x:.5} > FixCap {y:.5}", drl.bus_labels[b]))?;
            if *y > 0.0 {
                worst_ratio = worst_ratio.max(x / y);
            }
        }
    }
    Ok(format!("every bus on every seed; largest DRLCap/FixCap excursion ratio {worst_ratio:.3}"))
}

// ---------------------------------------------------------------------------

fn cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_voltgrid")).args(args).output().map_err(|e| e.to_string())?;
    ensure(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())
}

fn trace_files(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut files = BTreeMap::new();
    for policy in fs::read_dir(dir).map_err(|e| e.to_string())? {
        let policy = policy.map_err(|e| e.to_string())?.path();
        if !policy.is_dir() {
            continue;
        }
        for f in fs::read_dir(&policy).map_err(|e| e.to_string())? {
            let f = f.map_err(|e| e.to_string())?.path();
            let name = f.file_name().unwrap().to_string_lossy().into_owned();
            if name.ends_with(".csv") && name != "timing.csv" {
                let key = format!("{}/{name}", policy.file_name().unwrap().to_string_lossy());
                files.insert(key, fs::read(&f).map_err(|e| e.to_string())?);
            }
        }
    }
    Ok(files)
}

fn criterion_10(fig8_elapsed: Duration) -> Result<(String, Duration), String> {
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let n = FIG4_INTERVALS.to_string();
    let slots = FIG4_SLOTS.to_string();
    cli(&[
        "compare",
        "--feeder",
        "builtin:sce47",
        "--intervals",
        &n,
        "--slots-per-interval",
        &slots,
        "--seed",
        "0",
        "--policies",
        "drlcap,randcap,fixcap",
        "--out",
        a.to_str().unwrap(),
    ])?;
    cli(&["compare", "--from-manifest", a.join("manifest.json").to_str().unwrap(), "--out", b.to_str().unwrap()])?;
    let (fa, fb) = (trace_files(&a)?, trace_files(&b)?);
    ensure(fa.len() >= 9, || format!("only {} trace files written", fa.len()))?;
    ensure(fa.keys().eq(fb.keys()), || "runs wrote different file sets".into())?;
    for (k, v) in &fa {
        ensure(&fb[k] == v, || format!("{k} differs between runs"))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < 2 * fig8_elapsed, || format!("{elapsed:.1?} >= 2 x {fig8_elapsed:.1?}"))?;
    Ok((format!("{} trace CSVs bitwise identical across two manifest runs", fa.len()), elapsed))
}

// ---------------------------------------------------------------------------

fn report(id: u32, name: &str, result: Check, elapsed: Duration, budget: Duration) -> bool {
    let pass = result.is_ok() && elapsed < budget;
    let detail = match result {
        Ok(d) if elapsed < budget => d,
        Ok(d) => format!("{d}; over budget"),
        Err(e) => e,
    };
    println!(
        "criterion {id:>2} [{name}]: {} ({detail}; {:.2} s, budget {:.0} s)",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs_f64()
    );
    pass
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn main() {
    let secs = Duration::from_secs;
    let mut all = true;
    let quick: [Criterion; 7] = [
        (1, "LinDistFlow oracle", criterion_1, 1),
        (2, "QP oracle", criterion_2, 10),
        (3, "SOCP exactness", criterion_3, 30),
        (4, "gradient check", criterion_4, 5),
        (5, "DQN oracle", criterion_5, 60),
        (6, "hyper-DQN identity", criterion_6, 5),
        (7, "schedule fidelity", criterion_7, 600),
    ];
    for (id, name, f, budget) in quick {
        let (r, t) = timed(f);
        all &= report(id, name, r, t, secs(budget));
    }

    let (fig, _) = timed(fig4_runs);
    match fig {
        Ok(fig) => {
            let budget = secs(600);
            all &= report(8, "policy ordering", criterion_8(&fig), fig.elapsed, budget);
            let (r9, t9) = timed(|| criterion_9(&fig));
            all &= report(9, "voltage flattening", r9, fig.elapsed + t9, budget);
            let (r10, t10) = match criterion_10(fig.elapsed) {
                Ok((d, t)) => (Ok(d), t),
                Err(e) => (Err(e), Duration::ZERO),
            };
            all &= report(10, "reproducibility", r10, t10, 2 * fig.elapsed);
        }
        Err(e) => {
            for (id, name) in [(8, "policy ordering"), (9, "voltage flattening"), (10, "reproducibility")] {
                all &= report(id, name, Err(e.clone()), Duration::ZERO, secs(600));
            }
        }
    }
    if !all {
        std::process::exit(1);
    }
}
