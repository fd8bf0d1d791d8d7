use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute asymmetry tolerance, scaled by the largest entry.
const SYMMETRY_TOL: f64 = 1e-12;

/// Gradient `p` and symmetric Hessian `m` (row-major) at one point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorInput {
    p: Vec<f64>,
    m: Vec<f64>,
}

impl OperatorInput {
    pub fn new(p: Vec<f64>, m: Vec<f64>) -> Result<Self> {
        let n = p.len();
        if n == 0 || m.len() != n * n {
            return Err(Error::InvalidDimension(format!("gradient of length {n} with {} matrix entries", m.len())));
        }
        let scale = m.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        let mut asym: f64 = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                asym = asym.max((m[i * n + j] - m[j * n + i]).abs());
            }
        }
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::NotSymmetric(asym));
        }
        Ok(Self { p, m })
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn m(&self) -> &[f64] {
        &self.m
    }
}

/// `F(p, M) = inf { -tr(a M) / 2 : a >= 0, tr a = 1, a p = 0 }`.
///
/// The control set is the convex hull of the projectors `q q^T` with `|q| = 1`
/// and `q . p = 0`, so the infimum is `-lambda_max(B^T M B) / 2` for an
/// orthonormal basis `B` of `p^perp`, and `-lambda_max(M) / 2` when `p = 0`.
pub fn f_operator(input: &OperatorInput) -> f64 {
    let n = input.dim();
    let (p, m) = (&input.p, &input.m);
    let pn = p.iter().map(|v| v * v).sum::<f64>().sqrt();
    if pn == 0.0 {
        return -0.5 * lambda_max(&DMatrix::from_row_slice(n, n, m));
    }
    if n == 1 {
        // p^perp is trivial: the control set is empty
        return f64::INFINITY;
    }
    if n == 2 {
        let q = [-p[1] / pn, p[0] / pn];
        return -0.5 * (q[0] * q[0] * m[0] + 2.0 * q[0] * q[1] * m[1] + q[1] * q[1] * m[3]);
    }
    let b = orthonormal_complement(p);
    let mm = DMatrix::from_row_slice(n, n, m);
    let reduced = b.transpose() * mm * &b;
    -0.5 * lambda_max(&reduced)
}

/// Convenience wrapper validating symmetry first.
pub fn f_operator_checked(p: &[f64], m: &[f64]) -> Result<f64> {
    Ok(f_operator(&OperatorInput::new(p.to_vec(), m.to_vec())?))
}

fn lambda_max(m: &DMatrix<f64>) -> f64 {
    let sym = 0.5 * (m + m.transpose());
    SymmetricEigen::new(sym).eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Columns of the Householder reflector that maps `p` to a multiple of `e_k`,
/// minus column `k`: an orthonormal basis of `p^perp`.
pub(crate) fn orthonormal_complement(p: &[f64]) -> DMatrix<f64> {
    let n = p.len();
    let pn = p.iter().map(|v| v * v).sum::<f64>().sqrt();
    let k = (0..n).max_by(|&a, &b| p[a].abs().total_cmp(&p[b].abs())).expect("non-empty");
    // v = p_hat + sign(p_k) e_k
    let mut v: Vec<f64> = p.iter().map(|x| x / pn).collect();
    v[k] += if p[k] >= 0.0 { 1.0 } else { -1.0 };
    let vv: f64 = v.iter().map(|x| x * x).sum();
    let h = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - 2.0 * v[i] * v[j] / vv);
    let cols: Vec<usize> = (0..n).filter(|&j| j != k).collect();
    h.select_columns(cols.iter())
}
