use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Concave portfolio generating functions on the simplex.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratingFunction {
    /// `Q(x) = 1 - |x|^2`
    Quadratic,
    /// `G1(x) = -sum x_i log x_i`
    Entropy,
    /// `G2(x) = prod x_i^(1/d)`
    Geometric,
}

impl GeneratingFunction {
    pub fn name(self) -> &'static str {
        match self {
            Self::Quadratic => "quadratic",
            Self::Entropy => "entropy",
            Self::Geometric => "geometric",
        }
    }

    fn check_interior(self, x: &[f64]) -> Result<()> {
        if self != Self::Quadratic {
            if let Some((i, v)) = x.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
                return Err(Error::BoundaryEvaluation(format!(
                    "{} generating function needs positive weights; weight {i} is {v}",
                    self.name()
                )));
            }
        }
        Ok(())
    }

    pub fn value(self, x: &[f64]) -> Result<f64> {
        self.check_interior(x)?;
        Ok(match self {
            Self::Quadratic => 1.0 - x.iter().map(|v| v * v).sum::<f64>(),
            Self::Entropy => -x.iter().map(|v| v * v.ln()).sum::<f64>(),
            Self::Geometric => geometric_mean(x),
        })
    }

    pub fn gradient(self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_interior(x)?;
        let d = x.len() as f64;
        Ok(match self {
            Self::Quadratic => x.iter().map(|v| -2.0 * v).collect(),
            Self::Entropy => x.iter().map(|v| -(v.ln() + 1.0)).collect(),
            Self::Geometric => {
                let g = geometric_mean(x);
                x.iter().map(|v| g / (d * v)).collect()
            }
        })
    }

    /// Row-major `d x d` Hessian.
    pub fn hessian(self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_interior(x)?;
        let n = x.len();
        let d = n as f64;
        let mut h = vec![0.0; n * n];
        match self {
            Self::Quadratic => (0..n).for_each(|i| h[i * n + i] = -2.0),
            Self::Entropy => (0..n).for_each(|i| h[i * n + i] = -1.0 / x[i]),
            Self::Geometric => {
                let g = geometric_mean(x);
                for i in 0..n {
                    for j in 0..n {
                        h[i * n + j] = g / (d * d * x[i] * x[j]);
                    }
                    h[i * n + i] -= g / (d * x[i] * x[i]);
                }
            }
        }
        Ok(h)
    }
}

fn geometric_mean(x: &[f64]) -> f64 {
    let d = x.len() as f64;
    (x.iter().map(|v| v.ln()).sum::<f64>() / d).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn fd_check(g: GeneratingFunction, x: &[f64]) {
        let eps = 1e-5;
        let grad = g.gradient(x).unwrap();
        let hess = g.hessian(x).unwrap();
        let n = x.len();
        for i in 0..n {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += eps;
            xm[i] -= eps;
            let fd = (g.value(&xp).unwrap() - g.value(&xm).unwrap()) / (2.0 * eps);
            assert!((fd - grad[i]).abs() < 1e-7, "{g:?} grad {i}: {fd} vs {}", grad[i]);
            let gp = g.gradient(&xp).unwrap();
            let gm = g.gradient(&xm).unwrap();
            for j in 0..n {
                let fd = (gp[j] - gm[j]) / (2.0 * eps);
                assert!((fd - hess[j * n + i]).abs() < 1e-5, "{g:?} hess {i}{j}");
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let x = [0.2, 0.3, 0.5];
        for g in [GeneratingFunction::Quadratic, GeneratingFunction::Entropy, GeneratingFunction::Geometric] {
            fd_check(g, &x);
        }
    }

    #[test]
    fn quadratic_is_exact() {
        let x = [0.1, 0.2, 0.3, 0.4];
        let q = GeneratingFunction::Quadratic;
        assert!((q.value(&x).unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(q.gradient(&x).unwrap(), vec![-0.2, -0.4, -0.6, -0.8]);
        let h = q.hessian(&x).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(h[i * 4 + j], if i == j { -2.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn boundary_rejected_for_entropy_and_geometric() {
        let x = [0.0, 0.5, 0.5];
        assert!(GeneratingFunction::Quadratic.value(&x).is_ok());
        assert!(matches!(GeneratingFunction::Entropy.hessian(&x), Err(Error::BoundaryEvaluation(_))));
        assert!(matches!(GeneratingFunction::Geometric.value(&x), Err(Error::BoundaryEvaluation(_))));
    }

    #[test]
    fn entropy_and_geometric_hessians_are_nsd() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let d = rng.random_range(2..6);
            let raw: Vec<f64> = (0..d).map(|_| rng.random::<f64>() + 1e-3).collect();
            let s: f64 = raw.iter().sum();
            let x: Vec<f64> = raw.iter().map(|v| v / s).collect();
            for g in [GeneratingFunction::Entropy, GeneratingFunction::Geometric] {
                let h = nalgebra::DMatrix::from_row_slice(d, d, &g.hessian(&x).unwrap());
                let lmax = h.symmetric_eigenvalues().max();
                assert!(lmax <= 1e-9 * h.norm(), "{g:?} not concave at {x:?}: {lmax}");
            }
        }
    }
}
