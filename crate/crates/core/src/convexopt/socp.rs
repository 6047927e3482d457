//! ADMM for the SOC-relaxed branch flow problem.
//!
//! The problem is written as `min 1/2 x'Px + c'x  s.t.  Ax = z, z in C`
//! where `C` is a product of equality, box and rotated second-order cone
//! blocks. Iterates follow the operator-splitting scheme with
//! over-relaxation: a linear solve with the cached factor of
//! `P + sigma I + A' diag(rho) A`, a projection onto `C`, and a dual
//! update. `rho` is rebalanced by x2 / /2 from the residual ratio.
//!
//! Variable layout per node `k`: `[v_k, P_k, Q_k, l_k]` at `4k..4k+4`,
//! then the substation voltage, then one setpoint per active inverter.
//! Each line contributes the rotated cone `2 a b >= |w|^2` on
//! `(v_parent, l_k, sqrt2 P_k, sqrt2 Q_k)`, which is `v_parent l_k >= P_k^2 + Q_k^2`.

use nalgebra::{DMatrix, DVector};

use super::assemble::{check_commitment, check_slot, fixed_injections};
use super::{SolveReport, SolveStatus, SolverError};
use crate::feeder::{FeederModel, SlotData};
use crate::powerflow::{solve_lindistflow, FlowState};

pub const DEFAULT_SOCP_TOL: f64 = 1e-6;
pub const DEFAULT_SOCP_MAX_ITER: usize = 50_000;

const SIGMA: f64 = 1e-6;
const ALPHA: f64 = 1.6;
/// Equality rows get a stiffer penalty than cone and box rows.
const EQ_RHO_SCALE: f64 = 1e3;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const ADAPT_EVERY: usize = 25;
const ADAPT_RATIO: f64 = 10.0;
/// Dual iterates beyond this magnitude are taken as a divergence certificate.
const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SocpOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Initial penalty.
    pub rho: f64,
}

impl Default for SocpOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_SOCP_TOL, max_iter: DEFAULT_SOCP_MAX_ITER, rho: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SocpSolution {
    pub state: FlowState,
    /// Setpoints of the active inverters.
    pub q_r: Vec<f64>,
    pub report: SolveReport,
}

#[derive(Debug, Clone, Copy)]
enum Block {
    Eq {
        start: usize,
        len: usize,
    },
    Box {
        start: usize,
        len: usize,
    },
    /// Rotated cone on rows `start..start + 4`.
    Cone {
        start: usize,
    },
}

struct Problem {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
    /// Right-hand side for equality rows, bounds for box rows.
    b: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    blocks: Vec<Block>,
    is_eq: Vec<bool>,
    /// Diagonal of `P`.
    p_diag: Vec<f64>,
    c: Vec<f64>,
}

impl Problem {
    fn m(&self) -> usize {
        self.rows.len()
    }

    fn a_mul(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().map(|&(j, a)| a * x[j]).sum()).collect()
    }

    fn at_mul(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (row, &wi) in self.rows.iter().zip(w) {
            for &(j, a) in row {
                out[j] += a * wi;
            }
        }
        out
    }

    fn project(&self, w: &mut [f64]) {
        for block in &self.blocks {
            match *block {
                Block::Eq { start, len } => w[start..start + len].copy_from_slice(&self.b[start..start + len]),
                Block::Box { start, len } => {
                    for i in start..start + len {
                        w[i] = w[i].clamp(self.lo[i], self.hi[i]);
                    }
                }
                Block::Cone { start } => project_rotated_cone(&mut w[start..start + 4]),
            }
        }
    }

    fn factor(&self, rho: &[f64]) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>, SolverError> {
        let mut k = DMatrix::<f64>::zeros(self.n, self.n);
        for i in 0..self.n {
            k[(i, i)] = self.p_diag[i] + SIGMA;
        }
        for (row, &r) in self.rows.iter().zip(rho) {
            for &(i, ai) in row {
                for &(j, aj) in row {
                    k[(i, j)] += r * ai * aj;
                }
            }
        }
        k.cholesky().ok_or(SolverError::NotPositiveDefinite)
    }
}

/// Euclidean projection onto `{(a, b, w): 2ab >= |w|^2, a, b >= 0}` via the
/// isometry `t = (a+b)/sqrt2, s = (a-b)/sqrt2` to the standard cone
/// `|(s, w)| <= t`.
pub(crate) fn project_rotated_cone(z: &mut [f64]) {
    let r2 = std::f64::consts::SQRT_2;
    let t = (z[0] + z[1]) / r2;
    let s = (z[0] - z[1]) / r2;
    let norm = (s * s + z[2] * z[2] + z[3] * z[3]).sqrt();
    if norm <= t {
        return;
    }
    if norm <= -t {
        z.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let scale = 0.5 * (norm + t);
    let (t, s, w1, w2) = (scale, scale * s / norm, scale * z[2] / norm, scale * z[3] / norm);
    z[0] = (t + s) / r2;
    z[1] = (t - s) / r2;
    z[2] = w1;
    z[3] = w2;
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| f64::max(m, x.abs()))
}

/// Minimizes `||v - v0 1||^2` over the relaxed branch flow set with the
/// capacitor commitment `y_hat` fixed and inverter setpoints boxed.
pub fn solve_socp(
    model: &FeederModel,
    slot: &SlotData,
    y_hat: &[bool],
    opts: SocpOptions,
) -> Result<SocpSolution, SolverError> {
    check_commitment(model, y_hat)?;
    check_slot(model, slot)?;
    let nb = model.n_buses();
    let active = model.active_inverters();
    let nr = active.len();
    let (p_inj, q_inj) = fixed_injections(model, slot, y_hat);
    let (r, x) = (model.line_r(), model.line_x());
    let v0 = model.v0();

    let vi = |k: usize| 4 * k;
    let pi = |k: usize| 4 * k + 1;
    let qi = |k: usize| 4 * k + 2;
    let li = |k: usize| 4 * k + 3;
    let v_root = 4 * nb;
    let qr = |i: usize| 4 * nb + 1 + i;
    let n = 4 * nb + 1 + nr;
    let parent_v = |k: usize| model.parent(k).map_or(v_root, vi);

    let mut inv_var = vec![None; nb];
    for (i, &a) in active.iter().enumerate() {
        inv_var[model.inv_nodes()[a]] = Some(qr(i));
    }

    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut b = Vec::new();
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    let mut is_eq = Vec::new();
    let mut blocks = Vec::new();
    let mut push = |row: Vec<(usize, f64)>, bi: f64, l: f64, h: f64, eq: bool| {
        rows.push(row);
        b.push(bi);
        lo.push(l);
        hi.push(h);
        is_eq.push(eq);
    };

    for k in 0..nb {
        let mut ra = vec![(pi(k), -1.0), (li(k), r[k])];
        let mut rb = vec![(qi(k), -1.0), (li(k), x[k])];
        for &c in model.children(k) {
            ra.push((pi(c), 1.0));
            rb.push((qi(c), 1.0));
        }
        if let Some(j) = inv_var[k] {
            rb.push((j, -1.0));
        }
        push(ra, p_inj[k], 0.0, 0.0, true);
        push(rb, q_inj[k], 0.0, 0.0, true);
        let z2 = r[k] * r[k] + x[k] * x[k];
        push(
            vec![(vi(k), 1.0), (parent_v(k), -1.0), (pi(k), 2.0 * r[k]), (qi(k), 2.0 * x[k]), (li(k), -z2)],
            0.0,
            0.0,
            0.0,
            true,
        );
    }
    push(vec![(v_root, 1.0)], v0, 0.0, 0.0, true);
    let n_eq = 3 * nb + 1;
    blocks.push(Block::Eq { start: 0, len: n_eq });

    for (i, &a) in active.iter().enumerate() {
        let q_max = model.inv_bounds()[a].q_max;
        push(vec![(qr(i), 1.0)], 0.0, -q_max, q_max, false);
    }
    blocks.push(Block::Box { start: n_eq, len: nr });

    let r2 = std::f64::consts::SQRT_2;
    for k in 0..nb {
        let start = n_eq + nr + 4 * k;
        push(vec![(parent_v(k), 1.0)], 0.0, 0.0, 0.0, false);
        push(vec![(li(k), 1.0)], 0.0, 0.0, 0.0, false);
        push(vec![(pi(k), r2)], 0.0, 0.0, 0.0, false);
        push(vec![(qi(k), r2)], 0.0, 0.0, 0.0, false);
        blocks.push(Block::Cone { start });
    }

    let mut p_diag = vec![0.0; n];
    let mut c = vec![0.0; n];
    for k in 0..nb {
        p_diag[vi(k)] = 2.0;
        c[vi(k)] = -2.0 * v0;
    }
    let prob = Problem { n, rows, b, lo, hi, blocks, is_eq, p_diag, c };
    let m = prob.m();

    // Start from the lossless flow with inverters idle.
    let lin = solve_lindistflow(model, &p_inj, &q_inj)?;
    let mut xk = vec![0.0; n];
    for k in 0..nb {
        xk[vi(k)] = lin.v[k];
        xk[pi(k)] = lin.p_flow[k];
        xk[qi(k)] = lin.q_flow[k];
        let up = model.parent(k).map_or(v0, |p| lin.v[p]);
        xk[li(k)] = (lin.p_flow[k].powi(2) + lin.q_flow[k].powi(2)) / up.max(1e-3);
    }
    xk[v_root] = v0;
    let mut zk = prob.a_mul(&xk);
    prob.project(&mut zk);
    let mut yk = vec![0.0; m];

    let mut rho_base = opts.rho;
    let rho_vec =
        |base: f64| -> Vec<f64> { prob.is_eq.iter().map(|&e| if e { base * EQ_RHO_SCALE } else { base }).collect() };
    let mut rho = rho_vec(rho_base);
    let mut chol = prob.factor(&rho)?;

    let c_norm = inf_norm(&prob.c);
    let mut status = SolveStatus::MaxIter;
    let (mut r_prim, mut r_dual) = (f64::INFINITY, f64::INFINITY);
    let mut iterations = 0;

    for it in 1..=opts.max_iter {
        iterations = it;
        let w: Vec<f64> = (0..m).map(|i| rho[i] * zk[i] - yk[i]).collect();
        let atw = prob.at_mul(&w);
        let rhs = DVector::from_fn(n, |i, _| SIGMA * xk[i] - prob.c[i] + atw[i]);
        let x_tilde = chol.solve(&rhs);
        let z_tilde = prob.a_mul(x_tilde.as_slice());

        let z_prev = zk.clone();
        for i in 0..n {
            xk[i] = ALPHA * x_tilde[i] + (1.0 - ALPHA) * xk[i];
        }
        let z_relaxed: Vec<f64> = (0..m).map(|i| ALPHA * z_tilde[i] + (1.0 - ALPHA) * z_prev[i]).collect();
        let mut z_new: Vec<f64> = (0..m).map(|i| z_relaxed[i] + yk[i] / rho[i]).collect();
        prob.project(&mut z_new);
        for i in 0..m {
            yk[i] += rho[i] * (z_relaxed[i] - z_new[i]);
        }
        zk = z_new;

        let ax = prob.a_mul(&xk);
        let aty = prob.at_mul(&yk);
        let px: Vec<f64> = (0..n).map(|i| prob.p_diag[i] * xk[i]).collect();
        r_prim = inf_norm(&ax.iter().zip(&zk).map(|(a, z)| a - z).collect::<Vec<_>>());
        r_dual = inf_norm(&(0..n).map(|i| px[i] + prob.c[i] + aty[i]).collect::<Vec<_>>());
        let prim_scale = f64::max(inf_norm(&ax), inf_norm(&zk));
        let dual_scale = inf_norm(&px).max(inf_norm(&aty)).max(c_norm);

        if !(r_prim.is_finite() && r_dual.is_finite()) || inf_norm(&yk) > DIVERGENCE_LIMIT {
            status = SolveStatus::Infeasible;
            break;
        }
        if r_prim <= opts.tol * (1.0 + prim_scale) && r_dual <= opts.tol * (1.0 + dual_scale) {
            status = SolveStatus::Optimal;
            break;
        }
        if it % ADAPT_EVERY == 0 {
            let ratio = (r_prim / (1e-12 + prim_scale)) / (r_dual / (1e-12 + dual_scale) + 1e-300);
            let new_base = if ratio > ADAPT_RATIO {
                (rho_base * 2.0).min(RHO_MAX)
            } else if ratio < 1.0 / ADAPT_RATIO {
                (rho_base / 2.0).max(RHO_MIN)
            } else {
                rho_base
            };
            if new_base != rho_base {
                // Keep the scaled dual y / rho consistent across the change.
                rho_base = new_base;
                rho = rho_vec(rho_base);
                chol = prob.factor(&rho)?;
            }
        }
    }

    let mut state = FlowState { v: vec![0.0; nb], p_flow: vec![0.0; nb], q_flow: vec![0.0; nb], ell: vec![0.0; nb] };
    for k in 0..nb {
        state.v[k] = xk[vi(k)];
        state.p_flow[k] = xk[pi(k)];
        state.q_flow[k] = xk[qi(k)];
        state.ell[k] = xk[li(k)];
    }
    let q_r: Vec<f64> = active
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let q_max = model.inv_bounds()[a].q_max;
            xk[qr(i)].clamp(-q_max, q_max)
        })
        .collect();
    let report = SolveReport {
        objective: state.deviation_cost(v0),
        iterations,
        primal_residual: r_prim,
        dual_residual: r_dual,
        status,
        rounding_gap: None,
    };
    Ok(SocpSolution { state, q_r, report })
}
