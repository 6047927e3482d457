use nalgebra::{DMatrix, DVector};

use super::{QpProblem, SolveReport, SolveStatus, SolverError};

pub const DEFAULT_QP_TOL: f64 = 1e-8;
pub const DEFAULT_QP_MAX_ITER: usize = 10_000;

/// Halvings tried along the projection arc.
const ARC_STEPS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxQpOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Record the objective after every iteration (for diagnostics).
    pub record_history: bool,
}

impl Default for BoxQpOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_QP_TOL, max_iter: DEFAULT_QP_MAX_ITER, record_history: false }
    }
}

/// Projected gradient with step `1/L`, `L = lambda_max(H)`, where each step
/// is followed by a reduced Newton step on the variables the projected
/// iterate leaves free, backtracked along the projection arc. A Newton
/// trial is only taken when it does not raise the objective, so iterates
/// never increase it; once the active set is identified the full Newton
/// step lands on the optimum.
///
/// Returns the setpoints, the report, and the objective history (empty
/// unless requested).
pub fn solve_box_qp(
    problem: &QpProblem,
    opts: BoxQpOptions,
) -> Result<(DVector<f64>, SolveReport, Vec<f64>), SolverError> {
    let n = problem.dim();
    if problem.h.shape() != (n, n) || problem.lo.len() != n || problem.hi.len() != n {
        return Err(SolverError::Dimension("inconsistent QP dimensions".into()));
    }
    if (0..n).any(|i| problem.lo[i] > problem.hi[i]) {
        return Err(SolverError::Dimension("lower bound exceeds upper bound".into()));
    }
    let mut history = Vec::new();
    if n == 0 {
        let x = DVector::zeros(0);
        let obj = problem.objective(&x);
        let report = SolveReport {
            objective: obj,
            iterations: 0,
            primal_residual: 0.0,
            dual_residual: 0.0,
            status: SolveStatus::Optimal,
            rounding_gap: None,
        };
        return Ok((x, report, history));
    }
    let eig = problem.h.clone().symmetric_eigenvalues();
    let (lmin, lmax) = (eig.min(), eig.max());
    if !(lmin > 0.0) || !lmax.is_finite() {
        return Err(SolverError::NotPositiveDefinite);
    }
    let step = 1.0 / lmax;

    let mut x = problem.clip(&DVector::zeros(n));
    let mut f = problem.objective(&x);
    if opts.record_history {
        history.push(f);
    }
    let mut residual = problem.kkt_residual(&x);
    let mut iterations = 0;
    while residual > opts.tol && iterations < opts.max_iter {
        iterations += 1;
        let grad = problem.gradient(&x);
        let x_pg = problem.clip(&(&x - step * &grad));
        let f_pg = problem.objective(&x_pg);
        (x, f) = match newton_direction(problem, &x_pg) {
            Some(d) => projected_arc_search(problem, &x_pg, f_pg, &d),
            None => (x_pg, f_pg),
        };
        if opts.record_history {
            history.push(f);
        }
        residual = problem.kkt_residual(&x);
    }
    let status = if residual <= opts.tol { SolveStatus::Optimal } else { SolveStatus::MaxIter };
    let report = SolveReport {
        objective: f,
        iterations,
        primal_residual: 0.0,
        dual_residual: residual,
        status,
        rounding_gap: None,
    };
    Ok((x, report, history))
}

/// Newton direction on the coordinates that are interior, or at a bound
/// with the gradient pointing inward; zero elsewhere.
fn newton_direction(problem: &QpProblem, x: &DVector<f64>) -> Option<DVector<f64>> {
    let n = x.len();
    let grad = problem.gradient(x);
    let free: Vec<usize> = (0..n)
        .filter(|&i| {
            let (lo, hi) = (problem.lo[i], problem.hi[i]);
            if lo == hi {
                return false;
            }
            (x[i] > lo && x[i] < hi) || (x[i] <= lo && grad[i] < 0.0) || (x[i] >= hi && grad[i] > 0.0)
        })
        .collect();
    if free.is_empty() {
        return None;
    }
    let m = free.len();
    let h_ff = DMatrix::from_fn(m, m, |a, b| problem.h[(free[a], free[b])]);
    let rhs = DVector::from_fn(m, |a, _| -grad[free[a]]);
    let d_f = h_ff.cholesky()?.solve(&rhs);
    let mut d = DVector::zeros(n);
    for (a, &i) in free.iter().enumerate() {
        d[i] = d_f[a];
    }
    Some(d)
}

/// Backtracks along `clip(x + alpha d)` from `alpha = 1`; keeps `x` when no
/// trial point improves on `f_x`.
fn projected_arc_search(problem: &QpProblem, x: &DVector<f64>, f_x: f64, d: &DVector<f64>) -> (DVector<f64>, f64) {
    let mut alpha = 1.0;
    for _ in 0..ARC_STEPS {
        let trial = problem.clip(&(x + alpha * d));
        let f_t = problem.objective(&trial);
        if f_t <= f_x {
            return (trial, f_t);
        }
        alpha *= 0.5;
    }
    (x.clone(), f_x)
}
