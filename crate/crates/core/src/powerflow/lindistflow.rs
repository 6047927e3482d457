use super::{check_dims, FlowState, PowerFlowError};
use crate::feeder::FeederModel;

/// Lossless DistFlow: flows accumulate leaf-to-root, voltages drop
/// root-to-leaf by `2 (r P + x Q)`.
pub fn solve_lindistflow(model: &FeederModel, p: &[f64], q: &[f64]) -> Result<FlowState, PowerFlowError> {
    let n = model.n_buses();
    check_dims(n, p, q)?;
    let (r, x) = (model.line_r(), model.line_x());

    let mut p_flow = vec![0.0; n];
    let mut q_flow = vec![0.0; n];
    for &k in model.order().iter().rev() {
        let (mut sp, mut sq) = (-p[k], -q[k]);
        for &c in model.children(k) {
            sp += p_flow[c];
            sq += q_flow[c];
        }
        p_flow[k] = sp;
        q_flow[k] = sq;
    }

    let mut v = vec![0.0; n];
    for &k in model.order() {
        let upstream = model.parent(k).map_or(model.v0(), |pk| v[pk]);
        v[k] = upstream - 2.0 * (r[k] * p_flow[k] + x[k] * q_flow[k]);
    }
    Ok(FlowState { v, p_flow, q_flow, ell: vec![0.0; n] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::{FeederSpec, InverterSpec, LineSpec};

    pub(crate) fn two_bus() -> FeederModel {
        FeederModel::from_spec(&FeederSpec {
            base_mva: 1.0,
            base_kv: 12.0,
            v0: 1.0,
            buses: vec![0, 1],
            lines: vec![LineSpec { from: 0, to: 1, r_pu: 0.01, x_pu: 0.02 }],
            capacitors: vec![],
            inverters: vec![InverterSpec { bus: 1, p_cap_pu: 0.1, s_cap_pu: 0.108 }],
        })
        .unwrap()
    }

    #[test]
    fn no_injection_flat_profile() {
        let m = crate::feeder::sce47();
        let z = vec![0.0; m.n_buses()];
        let s = solve_lindistflow(&m, &z, &z).unwrap();
        assert!(s.v.iter().all(|&v| v == m.v0()));
        assert!(s.p_flow.iter().chain(&s.q_flow).all(|&f| f == 0.0));
    }

    #[test]
    fn two_bus_hand_values() {
        let s = solve_lindistflow(&two_bus(), &[-0.1], &[-0.05]).unwrap();
        assert!((s.p_flow[0] - 0.1).abs() < 1e-15);
        assert!((s.q_flow[0] - 0.05).abs() < 1e-15);
        // 1 - 2 (0.01 * 0.1 + 0.02 * 0.05)
        assert!((s.v[0] - 0.996).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(solve_lindistflow(&two_bus(), &[0.0, 0.0], &[0.0]), Err(PowerFlowError::Dimension { .. })));
    }
}
