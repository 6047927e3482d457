use std::collections::{HashMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::FeederError;

/// On-disk feeder description. All electrical quantities are per-unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeederSpec {
    pub base_mva: f64,
    pub base_kv: f64,
    /// Squared substation voltage magnitude.
    pub v0: f64,
    /// Bus labels. The first entry is the substation.
    pub buses: Vec<i64>,
    pub lines: Vec<LineSpec>,
    #[serde(default)]
    pub capacitors: Vec<CapacitorSpec>,
    #[serde(default)]
    pub inverters: Vec<InverterSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSpec {
    pub from: i64,
    pub to: i64,
    pub r_pu: f64,
    pub x_pu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacitorSpec {
    pub bus: i64,
    pub q_pu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InverterSpec {
    pub bus: i64,
    pub p_cap_pu: f64,
    pub s_cap_pu: f64,
}

/// Reactive headroom of an inverter whose active output is capped at
/// `p_cap`, so the bound holds regardless of the instantaneous PV output.
pub fn inverter_bound(s_cap: f64, p_cap: f64) -> Result<f64, FeederError> {
    if !(p_cap >= 0.0) || !(s_cap >= p_cap) {
        return Err(FeederError::Domain(format!(
            "inverter apparent capacity {s_cap} must be >= active capacity {p_cap} >= 0"
        )));
    }
    Ok((s_cap * s_cap - p_cap * p_cap).sqrt())
}

/// Per-inverter capability, with the reactive bound precomputed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverterBound {
    pub p_cap: f64,
    pub s_cap: f64,
    pub q_max: f64,
}

/// Validated radial feeder.
///
/// Node indices `0..n_buses()` address the non-substation buses; line `k`
/// is the line feeding node `k` from its parent. `parent[k] == None` means
/// the parent is the substation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeederModel {
    base_mva: f64,
    base_kv: f64,
    v0: f64,
    substation_label: i64,
    labels: Vec<i64>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    root_children: Vec<usize>,
    order: Vec<usize>,
    line_r: Vec<f64>,
    line_x: Vec<f64>,
    cap_nodes: Vec<usize>,
    cap_q: Vec<f64>,
    /// Every node that is not a capacitor node, in ascending node order.
    inv_nodes: Vec<usize>,
    inv_bounds: Vec<InverterBound>,
}

impl FeederModel {
    pub fn from_spec(spec: &FeederSpec) -> Result<Self, FeederError> {
        let invalid = |msg: String| Err(FeederError::Validation(msg));

        for (name, value) in [("base_mva", spec.base_mva), ("base_kv", spec.base_kv), ("v0", spec.v0)] {
            if !(value.is_finite() && value > 0.0) {
                return invalid(format!("{name} must be positive and finite, got {value}"));
            }
        }
        if spec.buses.is_empty() {
            return invalid("feeder has no buses".into());
        }

        let mut index_of = HashMap::with_capacity(spec.buses.len());
        for (i, &label) in spec.buses.iter().enumerate() {
            if index_of.insert(label, i).is_some() {
                return invalid(format!("duplicate bus label {label}"));
            }
        }
        let n_total = spec.buses.len();
        let n = n_total - 1;
        if spec.lines.len() != n {
            return invalid(format!(
                "not a tree: {} buses require exactly {} lines, found {}",
                n_total,
                n,
                spec.lines.len()
            ));
        }

        // Union-find over full bus indices catches cycles as soon as a line
        // joins two already-connected buses.
        let mut uf: Vec<usize> = (0..n_total).collect();
        fn find(uf: &mut [usize], mut a: usize) -> usize {
            while uf[a] != a {
                uf[a] = uf[uf[a]];
                a = uf[a];
            }
            a
        }
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_total];
        for (li, line) in spec.lines.iter().enumerate() {
            let (Some(&a), Some(&b)) = (index_of.get(&line.from), index_of.get(&line.to)) else {
                return invalid(format!("line {}-{} references an unknown bus", line.from, line.to));
            };
            if a == b {
                return invalid(format!("not a tree: self-loop at bus {}", line.from));
            }
            if !(line.r_pu.is_finite() && line.r_pu > 0.0 && line.x_pu.is_finite() && line.x_pu > 0.0) {
                return invalid(format!(
                    "line {}-{} must have r > 0 and x > 0, got r={} x={}",
                    line.from, line.to, line.r_pu, line.x_pu
                ));
            }
            let (ra, rb) = (find(&mut uf, a), find(&mut uf, b));
            if ra == rb {
                return invalid(format!("not a tree: cycle detected, line {}-{} closes a loop", line.from, line.to));
            }
            uf[ra] = rb;
            adj[a].push((b, li));
            adj[b].push((a, li));
        }

        // Orient lines away from the substation (full index 0).
        let mut full_parent: Vec<Option<(usize, usize)>> = vec![None; n_total];
        let mut seen = vec![false; n_total];
        let mut bfs = Vec::with_capacity(n_total);
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            bfs.push(u);
            for &(w, li) in &adj[u] {
                if !seen[w] {
                    seen[w] = true;
                    full_parent[w] = Some((u, li));
                    queue.push_back(w);
                }
            }
        }
        if bfs.len() != n_total {
            let orphan = spec.buses[seen.iter().position(|s| !s).unwrap_or(0)];
            return invalid(format!("not a tree: bus {orphan} is not connected to the substation"));
        }

        let node = |full: usize| full - 1;
        let mut parent = vec![None; n];
        let mut children = vec![Vec::new(); n];
        let mut root_children = Vec::new();
        let mut line_r = vec![0.0; n];
        let mut line_x = vec![0.0; n];
        for full in 1..n_total {
            let (p, li) = full_parent[full].expect("connected");
            let k = node(full);
            line_r[k] = spec.lines[li].r_pu;
            line_x[k] = spec.lines[li].x_pu;
            if p == 0 {
                root_children.push(k);
            } else {
                parent[k] = Some(node(p));
                children[node(p)].push(k);
            }
        }
        let order: Vec<usize> = bfs.iter().skip(1).map(|&f| node(f)).collect();

        let node_of = |label: i64, what: &str| -> Result<usize, FeederError> {
            match index_of.get(&label) {
                None => Err(FeederError::Validation(format!("{what} at unknown bus {label}"))),
                Some(0) => {
                    Err(FeederError::Validation(format!("{what} at substation bus {label} is not controllable")))
                }
                Some(&i) => Ok(i - 1),
            }
        };

        let mut is_cap = vec![false; n];
        let mut cap_nodes = Vec::with_capacity(spec.capacitors.len());
        let mut cap_q = Vec::with_capacity(spec.capacitors.len());
        for cap in &spec.capacitors {
            let k = node_of(cap.bus, "capacitor")?;
            if is_cap[k] {
                return invalid(format!("duplicate capacitor at bus {}", cap.bus));
            }
            if !(cap.q_pu.is_finite() && cap.q_pu > 0.0) {
                return invalid(format!("capacitor at bus {} must have q > 0, got {}", cap.bus, cap.q_pu));
            }
            is_cap[k] = true;
            cap_nodes.push(k);
            cap_q.push(cap.q_pu);
        }

        let zero = InverterBound { p_cap: 0.0, s_cap: 0.0, q_max: 0.0 };
        let mut bounds: Vec<Option<InverterBound>> = vec![None; n];
        for inv in &spec.inverters {
            let k = node_of(inv.bus, "inverter")?;
            if is_cap[k] {
                return invalid(format!(
                    "overlapping device sets: bus {} has both a capacitor and an inverter",
                    inv.bus
                ));
            }
            if bounds[k].is_some() {
                return invalid(format!("duplicate inverter at bus {}", inv.bus));
            }
            let q_max = inverter_bound(inv.s_cap_pu, inv.p_cap_pu)
                .map_err(|e| FeederError::Validation(format!("inverter at bus {}: {e}", inv.bus)))?;
            bounds[k] = Some(InverterBound { p_cap: inv.p_cap_pu, s_cap: inv.s_cap_pu, q_max });
        }
        let inv_nodes: Vec<usize> = (0..n).filter(|&k| !is_cap[k]).collect();
        let inv_bounds = inv_nodes.iter().map(|&k| bounds[k].unwrap_or(zero)).collect();

        Ok(Self {
            base_mva: spec.base_mva,
            base_kv: spec.base_kv,
            v0: spec.v0,
            substation_label: spec.buses[0],
            labels: spec.buses[1..].to_vec(),
            parent,
            children,
            root_children,
            order,
            line_r,
            line_x,
            cap_nodes,
            cap_q,
            inv_nodes,
            inv_bounds,
        })
    }

    /// Reconstructs a file description (lines oriented parent → child).
    pub fn to_spec(&self) -> FeederSpec {
        let mut buses = vec![self.substation_label];
        buses.extend_from_slice(&self.labels);
        let lines = self
            .order
            .iter()
            .map(|&k| LineSpec {
                from: self.parent[k].map_or(self.substation_label, |p| self.labels[p]),
                to: self.labels[k],
                r_pu: self.line_r[k],
                x_pu: self.line_x[k],
            })
            .collect();
        let capacitors = self
            .cap_nodes
            .iter()
            .zip(&self.cap_q)
            .map(|(&k, &q)| CapacitorSpec { bus: self.labels[k], q_pu: q })
            .collect();
        let inverters = self
            .inv_nodes
            .iter()
            .zip(&self.inv_bounds)
            .filter(|(_, b)| b.s_cap > 0.0)
            .map(|(&k, b)| InverterSpec { bus: self.labels[k], p_cap_pu: b.p_cap, s_cap_pu: b.s_cap })
            .collect();
        FeederSpec { base_mva: self.base_mva, base_kv: self.base_kv, v0: self.v0, buses, lines, capacitors, inverters }
    }

    pub fn n_buses(&self) -> usize {
        self.labels.len()
    }

    pub fn n_capacitors(&self) -> usize {
        self.cap_nodes.len()
    }

    pub fn n_inverters(&self) -> usize {
        self.inv_nodes.len()
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    pub fn base_kv(&self) -> f64 {
        self.base_kv
    }

    pub fn v0(&self) -> f64 {
        self.v0
    }

    pub fn substation_label(&self) -> i64 {
        self.substation_label
    }

    /// External label of node `k`.
    pub fn label(&self, k: usize) -> i64 {
        self.labels[k]
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn node_of_label(&self, label: i64) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    pub fn parent(&self, k: usize) -> Option<usize> {
        self.parent[k]
    }

    pub fn children(&self, k: usize) -> &[usize] {
        &self.children[k]
    }

    pub fn root_children(&self) -> &[usize] {
        &self.root_children
    }

    /// Nodes in breadth-first order from the substation; every parent
    /// precedes its children. Reverse it for leaf-to-root accumulation.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn line_r(&self) -> &[f64] {
        &self.line_r
    }

    pub fn line_x(&self) -> &[f64] {
        &self.line_x
    }

    pub fn cap_nodes(&self) -> &[usize] {
        &self.cap_nodes
    }

    pub fn cap_q(&self) -> &[f64] {
        &self.cap_q
    }

    pub fn inv_nodes(&self) -> &[usize] {
        &self.inv_nodes
    }

    pub fn inv_bounds(&self) -> &[InverterBound] {
        &self.inv_bounds
    }

    /// Inverters with nonzero reactive headroom; these are the free
    /// variables of the fast-timescale problems. Returns positions into
    /// `inv_nodes()`.
    pub fn active_inverters(&self) -> Vec<usize> {
        (0..self.inv_nodes.len()).filter(|&i| self.inv_bounds[i].q_max > 0.0).collect()
    }

    /// Active-power capacity of node `k` (zero at capacitor and bare buses).
    pub fn p_cap_at(&self, k: usize) -> f64 {
        self.inv_nodes.binary_search(&k).map(|i| self.inv_bounds[i].p_cap).unwrap_or(0.0)
    }

    pub fn is_capacitor_node(&self, k: usize) -> bool {
        self.cap_nodes.contains(&k)
    }

    /// Depth-first preorder over all buses, substation first, as labels.
    pub fn dfs_labels(&self) -> Vec<i64> {
        let mut out = vec![self.substation_label];
        let mut stack: Vec<usize> = self.root_children.iter().rev().copied().collect();
        while let Some(k) = stack.pop() {
            out.push(self.labels[k]);
            stack.extend(self.children[k].iter().rev());
        }
        out
    }

    /// Nodes on the path from node `k` up to (excluding) the substation.
    pub fn path_to_root(&self, k: usize) -> Vec<usize> {
        let mut path = vec![k];
        let mut cur = k;
        while let Some(p) = self.parent[cur] {
            path.push(p);
            cur = p;
        }
        path
    }
}

pub fn load_feeder(path: impl AsRef<Path>) -> Result<FeederModel, FeederError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| FeederError::Io(path.display().to_string(), e))?;
    parse_feeder(&text)
}

pub fn parse_feeder(text: &str) -> Result<FeederModel, FeederError> {
    let spec: FeederSpec = serde_json::from_str(text).map_err(|e| FeederError::Parse(e.to_string()))?;
    FeederModel::from_spec(&spec)
}
