use nalgebra::{DMatrix, DVector};

use super::SolverError;
use crate::feeder::{FeederModel, SlotData};
use crate::powerflow::Sensitivity;

/// `minimize 1/2 x'Hx + g'x + constant  subject to  lo <= x <= hi`.
///
/// For assembled slot problems the objective equals the squared voltage
/// deviation `||v(x) - v0 1||^2` exactly, constant included.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub constant: f64,
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
}

impl QpProblem {
    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.g.dot(x) + self.constant
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.h * x + &self.g
    }

    pub fn clip(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(x.len(), (0..x.len()).map(|i| x[i].clamp(self.lo[i], self.hi[i])))
    }

    /// `||x - clip(x - grad f(x))||_inf`; zero exactly at the optimum.
    pub fn kkt_residual(&self, x: &DVector<f64>) -> f64 {
        let step = x - self.gradient(x);
        (x - self.clip(&step)).amax()
    }

    /// Builds `||d + M x||^2` with bounds, where `M` has columns `cols`.
    pub(crate) fn least_squares(m: DMatrix<f64>, d: &DVector<f64>, lo: Vec<f64>, hi: Vec<f64>) -> Self {
        let mt = m.transpose();
        QpProblem {
            h: 2.0 * &mt * &m,
            g: 2.0 * &mt * d,
            constant: d.dot(d),
            lo: DVector::from_vec(lo),
            hi: DVector::from_vec(hi),
        }
    }
}

/// Net injections with every reactive device except the inverters fixed:
/// `p = p_g - p_c`, `q = -q_c + y_k q_a,k` at capacitor buses.
pub fn fixed_injections(model: &FeederModel, slot: &SlotData, y_hat: &[bool]) -> (Vec<f64>, Vec<f64>) {
    let p = slot.net_p();
    let mut q: Vec<f64> = slot.q_c.iter().map(|q| -q).collect();
    for ((&k, &qa), &on) in model.cap_nodes().iter().zip(model.cap_q()).zip(y_hat) {
        if on {
            q[k] += qa;
        }
    }
    (p, q)
}

pub(crate) fn check_commitment(model: &FeederModel, y_hat: &[bool]) -> Result<(), SolverError> {
    if y_hat.len() != model.n_capacitors() {
        return Err(SolverError::Dimension(format!(
            "commitment has {} entries, feeder has {} capacitors",
            y_hat.len(),
            model.n_capacitors()
        )));
    }
    Ok(())
}

pub(crate) fn check_slot(model: &FeederModel, slot: &SlotData) -> Result<(), SolverError> {
    let n = model.n_buses();
    if slot.p_c.len() != n || slot.q_c.len() != n || slot.p_g.len() != n {
        return Err(SolverError::Dimension(format!("slot data must cover {n} buses")));
    }
    Ok(())
}

/// Substitutes loads, PV output and committed capacitor VARs into the
/// linear voltage map; the only remaining variables are the reactive
/// setpoints of the active inverters (see [`FeederModel::active_inverters`]).
pub fn assemble_qp(
    model: &FeederModel,
    sens: &Sensitivity,
    slot: &SlotData,
    y_hat: &[bool],
) -> Result<QpProblem, SolverError> {
    check_commitment(model, y_hat)?;
    check_slot(model, slot)?;
    let n = model.n_buses();
    if sens.x_mat.nrows() != n {
        return Err(SolverError::Dimension("sensitivity does not match feeder".into()));
    }
    let (p, q) = fixed_injections(model, slot, y_hat);
    let d = sens.voltages(&p, &q).add_scalar(-model.v0());
    let active = model.active_inverters();
    let m = DMatrix::from_fn(n, active.len(), |i, j| sens.x_mat[(i, model.inv_nodes()[active[j]])]);
    let bounds: Vec<f64> = active.iter().map(|&a| model.inv_bounds()[a].q_max).collect();
    Ok(QpProblem::least_squares(m, &d, bounds.iter().map(|b| -b).collect(), bounds))
}

/// Linear-model voltages for the active-inverter setpoints `q_r`.
pub fn voltages_with_setpoints(
    model: &FeederModel,
    sens: &Sensitivity,
    slot: &SlotData,
    y_hat: &[bool],
    q_r: &[f64],
) -> Vec<f64> {
    let (p, mut q) = fixed_injections(model, slot, y_hat);
    for (&a, &qr) in model.active_inverters().iter().zip(q_r) {
        q[model.inv_nodes()[a]] += qr;
    }
    sens.voltages(&p, &q).as_slice().to_vec()
}
