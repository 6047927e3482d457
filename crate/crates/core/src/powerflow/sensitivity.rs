use nalgebra::{DMatrix, DVector};

use crate::feeder::FeederModel;

/// Affine map from injections to squared voltages under the linear model:
/// `v = v_base + R p + X q`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sensitivity {
    pub r_mat: DMatrix<f64>,
    pub x_mat: DMatrix<f64>,
    pub v_base: DVector<f64>,
}

impl Sensitivity {
    pub fn voltages(&self, p: &[f64], q: &[f64]) -> DVector<f64> {
        let p = DVector::from_column_slice(p);
        let q = DVector::from_column_slice(q);
        &self.v_base + &self.r_mat * p + &self.x_mat * q
    }
}

/// Entry `(i, j)` is twice the resistance (reactance) summed over the lines
/// shared by the root paths of `i` and `j`.
pub fn build_sensitivity(model: &FeederModel) -> Sensitivity {
    let n = model.n_buses();
    // Cumulative impedance from the substation down to each node.
    let mut cum_r = vec![0.0; n];
    let mut cum_x = vec![0.0; n];
    let mut depth = vec![0usize; n];
    for &k in model.order() {
        let (pr, px, pd) = model.parent(k).map_or((0.0, 0.0, 0), |p| (cum_r[p], cum_x[p], depth[p] + 1));
        cum_r[k] = pr + model.line_r()[k];
        cum_x[k] = px + model.line_x()[k];
        depth[k] = pd;
    }
    // Deepest common ancestor, walking the deeper node up first.
    let common = |mut a: usize, mut b: usize| -> Option<usize> {
        while depth[a] > depth[b] {
            a = model.parent(a)?;
        }
        while depth[b] > depth[a] {
            b = model.parent(b)?;
        }
        while a != b {
            a = model.parent(a)?;
            b = model.parent(b)?;
        }
        Some(a)
    };
    let mut r_mat = DMatrix::zeros(n, n);
    let mut x_mat = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            if let Some(c) = common(i, j) {
                let (r, x) = (2.0 * cum_r[c], 2.0 * cum_x[c]);
                r_mat[(i, j)] = r;
                r_mat[(j, i)] = r;
                x_mat[(i, j)] = x;
                x_mat[(j, i)] = x;
            }
        }
    }
    Sensitivity { r_mat, x_mat, v_base: DVector::from_element(n, model.v0()) }
}
