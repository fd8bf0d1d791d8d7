//! Market-weight path accounting and functionally generated strategies.
//!
//! Quadratic covariation is the realized covariation of the discrete path,
//! `[mu_i, mu_j](t_n) = sum_{k<n} dmu_i(t_k) dmu_j(t_k)`, and strategies are
//! predictable: `theta(t_k)` is applied to the increment `mu(t_{k+1}) - mu(t_k)`.

mod generating;
pub mod io;

use serde::{Deserialize, Serialize};

pub use generating::GeneratingFunction;

use crate::error::{Error, Result};
use crate::geometry::SimplexPoint;

/// Discrete market-weight trajectory with its running realized covariation.
#[derive(Clone, Debug, PartialEq)]
pub struct SimplexPath {
    times: Vec<f64>,
    weights: Vec<SimplexPoint>,
    /// `(n+1) * d * d`, row-major per time.
    qcov: Vec<f64>,
}

impl SimplexPath {
    pub fn new(times: Vec<f64>, weights: Vec<SimplexPoint>) -> Result<Self> {
        if times.is_empty() || times.len() != weights.len() {
            return Err(Error::InvalidArgument(format!(
                "{} times for {} weight vectors",
                times.len(),
                weights.len()
            )));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidArgument(format!("path must start at t=0, got {}", times[0])));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("times must be strictly increasing".into()));
        }
        let d = weights[0].dim();
        if weights.iter().any(|w| w.dim() != d) {
            return Err(Error::InvalidDimension("weights of mixed dimension".into()));
        }
        let mut qcov = vec![0.0; times.len() * d * d];
        for k in 0..times.len() - 1 {
            let (a, b) = (weights[k].coords(), weights[k + 1].coords());
            let (prev, next) = qcov.split_at_mut((k + 1) * d * d);
            let prev = &prev[k * d * d..];
            for i in 0..d {
                let di = b[i] - a[i];
                for j in 0..d {
                    next[i * d + j] = prev[i * d + j] + di * (b[j] - a[j]);
                }
            }
        }
        Ok(Self { times, weights, qcov })
    }

    pub fn from_rows(times: Vec<f64>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let weights = rows.into_iter().map(SimplexPoint::new).collect::<Result<Vec<_>>>()?;
        Self::new(times, weights)
    }

    /// A market frozen at `mu` on the given time grid.
    pub fn constant(mu: SimplexPoint, times: Vec<f64>) -> Result<Self> {
        let weights = vec![mu; times.len()];
        Self::new(times, weights)
    }

    pub fn d(&self) -> usize {
        self.weights[0].dim()
    }

    /// Number of grid times.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn weights(&self) -> &[SimplexPoint] {
        &self.weights
    }

    pub fn weight(&self, n: usize) -> &[f64] {
        self.weights[n].coords()
    }

    pub fn qcov(&self, n: usize) -> &[f64] {
        let dd = self.d() * self.d();
        &self.qcov[n * dd..(n + 1) * dd]
    }

    pub fn trace(&self, n: usize) -> f64 {
        let d = self.d();
        (0..d).map(|i| self.qcov(n)[i * d + i]).sum()
    }

    /// `mu(t_{k+1}) - mu(t_k)`.
    pub fn increment(&self, k: usize) -> Vec<f64> {
        self.weight(k + 1).iter().zip(self.weight(k)).map(|(b, a)| b - a).collect()
    }

    /// `sum_k |dmu(t_k)|^3`, the scale of the third-order Taylor remainder.
    pub fn cubic_variation(&self) -> f64 {
        (0..self.len() - 1)
            .map(|k| self.increment(k).iter().map(|v| v * v).sum::<f64>().powf(1.5))
            .sum()
    }

    /// Index of the last grid time not after `t`.
    pub fn index_at(&self, t: f64) -> usize {
        self.times.partition_point(|s| *s <= t + 1e-12).saturating_sub(1)
    }

    /// Appends a continuation that starts at this path's final state.
    pub fn concat(mut self, tail: &SimplexPath) -> Result<Self> {
        if tail.weight(0) != self.weight(self.len() - 1) || tail.d() != self.d() {
            return Err(Error::InvalidArgument("continuation must start where the path ends".into()));
        }
        let t0 = *self.times.last().expect("non-empty path");
        let base = self.qcov(self.len() - 1).to_vec();
        let dd = self.d() * self.d();
        for n in 1..tail.len() {
            self.times.push(t0 + tail.times[n]);
            self.weights.push(tail.weights[n].clone());
            self.qcov.extend(tail.qcov(n).iter().zip(&base).map(|(a, b)| a + b));
        }
        debug_assert_eq!(self.qcov.len(), self.times.len() * dd);
        Ok(self)
    }
}

/// `Gamma^G(t_n) = -1/2 sum_{k<n} dmu(t_k)^T Hess G(mu(t_k)) dmu(t_k)`.
pub fn accumulate_gamma(path: &SimplexPath, g: GeneratingFunction) -> Result<Vec<f64>> {
    let d = path.d();
    let mut gamma = Vec::with_capacity(path.len());
    gamma.push(0.0);
    let mut acc = 0.0;
    for k in 0..path.len() - 1 {
        let hess = g.hessian(path.weight(k))?;
        let dmu = path.increment(k);
        let mut quad = 0.0;
        for i in 0..d {
            for j in 0..d {
                quad += hess[i * d + j] * dmu[i] * dmu[j];
            }
        }
        acc -= 0.5 * quad;
        gamma.push(acc);
    }
    // the last weight must also be admissible for G
    g.value(path.weight(path.len() - 1))?;
    Ok(gamma)
}

/// Holdings, relative value and drift process of a functionally generated strategy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyPath {
    pub generating_function: GeneratingFunction,
    pub times: Vec<f64>,
    pub theta: Vec<Vec<f64>>,
    pub value: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl StrategyPath {
    /// `V(t_N) - V(0) - sum_k theta(t_k)^T dmu(t_k)`.
    pub fn self_financing_residual(&self, path: &SimplexPath) -> f64 {
        let gains: f64 = (0..path.len() - 1)
            .map(|k| {
                self.theta[k]
                    .iter()
                    .zip(path.increment(k))
                    .map(|(t, dm)| t * dm)
                    .sum::<f64>()
            })
            .sum();
        self.value[self.value.len() - 1] - self.value[0] - gains
    }

    /// Tolerance `10 * sum |dmu|^3` on the self-financing residual.
    pub fn residual_bound(path: &SimplexPath) -> f64 {
        10.0 * path.cubic_variation()
    }
}

/// `theta = grad G(mu) + (G(mu) + Gamma^G - grad G(mu)^T mu) 1`, with value `G(mu) + Gamma^G`.
pub fn generate_strategy(path: &SimplexPath, g: GeneratingFunction) -> Result<StrategyPath> {
    let gamma = accumulate_gamma(path, g)?;
    let mut theta = Vec::with_capacity(path.len());
    let mut value = Vec::with_capacity(path.len());
    for (n, gam) in gamma.iter().enumerate() {
        let mu = path.weight(n);
        let gv = g.value(mu)?;
        let grad = g.gradient(mu)?;
        let carry = gv + gam - grad.iter().zip(mu).map(|(a, b)| a * b).sum::<f64>();
        theta.push(grad.iter().map(|gi| gi + carry).collect());
        value.push(gv + gam);
    }
    Ok(StrategyPath { generating_function: g, times: path.times().to_vec(), theta, value, gamma })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VolatilityCondition {
    /// `tr [mu, mu](t) >= t`
    Trace,
    /// `sum_i int d[mu_i, mu_i] / mu_i >= t`
    Entropy,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolatilityReport {
    pub satisfied: bool,
    pub worst_margin: f64,
    pub worst_time: f64,
}

/// Smallest margin of the volatility clock over the grid; satisfied iff it is
/// at least `-tolerance`.
pub fn check_sufficient_volatility(
    path: &SimplexPath,
    condition: VolatilityCondition,
    tolerance: f64,
) -> Result<VolatilityReport> {
    let d = path.d();
    let mut clock = 0.0;
    let mut worst = (f64::INFINITY, 0.0);
    for n in 1..path.len() {
        match condition {
            VolatilityCondition::Trace => clock = path.trace(n),
            VolatilityCondition::Entropy => {
                let mu = path.weight(n - 1);
                if let Some(i) = (0..d).find(|&i| !(mu[i] > 0.0)) {
                    return Err(Error::BoundaryEvaluation(format!(
                        "entropy clock needs positive weights; weight {i} vanishes at t={}",
                        path.times()[n - 1]
                    )));
                }
                let dmu = path.increment(n - 1);
                clock += (0..d).map(|i| dmu[i] * dmu[i] / mu[i]).sum::<f64>();
            }
        }
        let margin = clock - path.times()[n];
        if margin < worst.0 {
            worst = (margin, path.times()[n]);
        }
    }
    if path.len() == 1 {
        worst = (0.0, 0.0);
    }
    Ok(VolatilityReport { satisfied: worst.0 >= -tolerance, worst_margin: worst.0, worst_time: worst.1 })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArbitrageReport {
    pub horizon: f64,
    pub nonneg: bool,
    pub min_value: f64,
    pub gain: f64,
}

/// Nonnegativity of the relative value on `[0, T]` and the gain `V(T) - V(0)`.
pub fn verify_relative_arbitrage(strategy: &StrategyPath, horizon: f64) -> Result<ArbitrageReport> {
    let last = *strategy.times.last().expect("non-empty strategy");
    if horizon > last + 1e-12 || horizon < 0.0 {
        return Err(Error::InvalidArgument(format!("horizon {horizon} outside [0, {last}]")));
    }
    let n = strategy.times.partition_point(|s| *s <= horizon + 1e-12).saturating_sub(1);
    let min_value = strategy.value[..=n].iter().copied().fold(f64::INFINITY, f64::min);
    Ok(ArbitrageReport {
        horizon,
        nonneg: min_value >= 0.0,
        min_value,
        gain: strategy.value[n] - strategy.value[0],
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleVerdict {
    pub paths: usize,
    pub all_nonneg: bool,
    pub all_gains_nonneg: bool,
    pub any_gain_positive: bool,
    pub min_gain: f64,
    pub relative_arbitrage: bool,
}

pub fn relative_arbitrage_verdict(reports: &[ArbitrageReport]) -> EnsembleVerdict {
    let all_nonneg = reports.iter().all(|r| r.nonneg);
    let all_gains_nonneg = reports.iter().all(|r| r.gain >= 0.0);
    let any_gain_positive = reports.iter().any(|r| r.gain > 0.0);
    EnsembleVerdict {
        paths: reports.len(),
        all_nonneg,
        all_gains_nonneg,
        any_gain_positive,
        min_gain: reports.iter().map(|r| r.gain).fold(f64::INFINITY, f64::min),
        relative_arbitrage: !reports.is_empty() && all_nonneg && all_gains_nonneg && any_gain_positive,
    }
}

/// JSON summary of one strategy run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub generating_function: GeneratingFunction,
    pub arbitrage: ArbitrageReport,
    pub initial_value: f64,
    pub final_value: f64,
    pub gamma_final: f64,
    pub self_financing_residual: f64,
    pub residual_bound: f64,
}

impl StrategyReport {
    pub fn new(path: &SimplexPath, strategy: &StrategyPath, horizon: f64) -> Result<Self> {
        Ok(Self {
            generating_function: strategy.generating_function,
            arbitrage: verify_relative_arbitrage(strategy, horizon)?,
            initial_value: strategy.value[0],
            final_value: *strategy.value.last().expect("non-empty"),
            gamma_final: *strategy.gamma.last().expect("non-empty"),
            self_financing_residual: strategy.self_financing_residual(path),
            residual_bound: StrategyPath::residual_bound(path),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, dt: f64) -> Vec<f64> {
        (0..n).map(|k| k as f64 * dt).collect()
    }

    fn toy_path() -> SimplexPath {
        SimplexPath::from_rows(
            grid(4, 0.1),
            vec![
                vec![0.5, 0.3, 0.2],
                vec![0.45, 0.35, 0.2],
                vec![0.5, 0.25, 0.25],
                vec![0.4, 0.3, 0.3],
            ],
        )
        .unwrap()
    }

    #[test]
    fn path_validation() {
        let bary = SimplexPoint::barycenter(3);
        assert!(SimplexPath::constant(bary.clone(), vec![0.0, 0.1, 0.1]).is_err());
        assert!(SimplexPath::constant(bary.clone(), vec![0.1, 0.2]).is_err());
        assert!(SimplexPath::new(vec![0.0], vec![]).is_err());
    }

    #[test]
    fn qcov_is_realized_covariation() {
        let p = toy_path();
        assert!(p.qcov(0).iter().all(|v| *v == 0.0));
        let expect_trace: f64 = (0..3).map(|k| p.increment(k).iter().map(|v| v * v).sum::<f64>()).sum();
        assert!((p.trace(3) - expect_trace).abs() < 1e-15);
        let q = p.qcov(3);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(q[i * 3 + j], q[j * 3 + i]);
            }
        }
    }

    #[test]
    fn quadratic_gamma_equals_trace() {
        let p = toy_path();
        let g = accumulate_gamma(&p, GeneratingFunction::Quadratic).unwrap();
        for n in 0..p.len() {
            assert!((g[n] - p.trace(n)).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_path_has_zero_gamma_and_flat_value() {
        let p = SimplexPath::constant(SimplexPoint::new(vec![0.2, 0.3, 0.5]).unwrap(), grid(5, 0.25)).unwrap();
        for g in [GeneratingFunction::Quadratic, GeneratingFunction::Entropy, GeneratingFunction::Geometric] {
            assert!(accumulate_gamma(&p, g).unwrap().iter().all(|v| *v == 0.0));
            let s = generate_strategy(&p, g).unwrap();
            let v0 = g.value(p.weight(0)).unwrap();
            assert!(s.value.iter().all(|v| (v - v0).abs() < 1e-15));
            assert_eq!(verify_relative_arbitrage(&s, 1.0).unwrap().gain, 0.0);
        }
        let r = check_sufficient_volatility(&p, VolatilityCondition::Trace, 0.0).unwrap();
        assert!(!r.satisfied);
        assert!((r.worst_margin + 1.0).abs() < 1e-15);
    }

    #[test]
    fn entropy_gamma_by_hand_two_assets() {
        // Hessian of G1 is diag(-1/mu1, -1/mu2)
        let rows = vec![vec![0.6, 0.4], vec![0.65, 0.35], vec![0.55, 0.45]];
        let p = SimplexPath::from_rows(grid(3, 0.5), rows).unwrap();
        let g = accumulate_gamma(&p, GeneratingFunction::Entropy).unwrap();
        let step1 = 0.5 * (0.05f64.powi(2) / 0.6 + 0.05f64.powi(2) / 0.4);
        let step2 = 0.5 * (0.1f64.powi(2) / 0.65 + 0.1f64.powi(2) / 0.35);
        assert!((g[1] - step1).abs() < 1e-12);
        assert!((g[2] - step1 - step2).abs() < 1e-12);
    }

    #[test]
    fn quadratic_strategy_at_barycenter() {
        let p = SimplexPath::constant(SimplexPoint::barycenter(3), grid(2, 0.1)).unwrap();
        let s = generate_strategy(&p, GeneratingFunction::Quadratic).unwrap();
        for t in &s.theta[0] {
            assert!((t - 2.0 / 3.0).abs() < 1e-15);
        }
        assert!((s.value[0] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn quadratic_strategy_matches_closed_form() {
        let p = toy_path();
        let s = generate_strategy(&p, GeneratingFunction::Quadratic).unwrap();
        for n in 0..p.len() {
            let mu = p.weight(n);
            let m2: f64 = mu.iter().map(|v| v * v).sum();
            for i in 0..3 {
                let expect = -2.0 * mu[i] + 1.0 + m2 + s.gamma[n];
                assert!((s.theta[n][i] - expect).abs() < 1e-14);
            }
            let v: f64 = s.theta[n].iter().zip(mu).map(|(a, b)| a * b).sum();
            assert!((v - s.value[n]).abs() < 1e-14);
        }
        // the quadratic strategy is self-financing exactly on the discrete path
        assert!(s.self_financing_residual(&p).abs() < 1e-14);
        let gain = verify_relative_arbitrage(&s, 0.3).unwrap().gain;
        let q = GeneratingFunction::Quadratic;
        let expect = q.value(p.weight(3)).unwrap() - q.value(p.weight(0)).unwrap() + p.trace(3);
        assert!((gain - expect).abs() < 1e-14);
    }

    #[test]
    fn boundary_paths_rejected_for_entropy() {
        let rows = vec![vec![0.5, 0.5, 0.0], vec![0.4, 0.6, 0.0]];
        let p = SimplexPath::from_rows(grid(2, 0.1), rows).unwrap();
        assert!(matches!(generate_strategy(&p, GeneratingFunction::Entropy), Err(Error::BoundaryEvaluation(_))));
        assert!(matches!(
            check_sufficient_volatility(&p, VolatilityCondition::Entropy, 0.0),
            Err(Error::BoundaryEvaluation(_))
        ));
        assert!(generate_strategy(&p, GeneratingFunction::Quadratic).is_ok());
    }

    #[test]
    fn horizon_out_of_range() {
        let s = generate_strategy(&toy_path(), GeneratingFunction::Quadratic).unwrap();
        assert!(verify_relative_arbitrage(&s, 0.31).is_err());
    }

    #[test]
    fn ensemble_verdict() {
        let r = |nonneg, gain| ArbitrageReport { horizon: 1.0, nonneg, min_value: 0.0, gain };
        assert!(relative_arbitrage_verdict(&[r(true, 0.0), r(true, 0.1)]).relative_arbitrage);
        assert!(!relative_arbitrage_verdict(&[r(true, 0.0), r(true, 0.0)]).relative_arbitrage);
        assert!(!relative_arbitrage_verdict(&[r(false, 0.2)]).relative_arbitrage);
        assert!(!relative_arbitrage_verdict(&[r(true, -0.1), r(true, 0.3)]).relative_arbitrage);
        assert!(!relative_arbitrage_verdict(&[]).relative_arbitrage);
    }

    #[test]
    fn concat_keeps_running_covariation() {
        let p = toy_path();
        let tail = SimplexPath::from_rows(grid(2, 0.1), vec![p.weight(3).to_vec(), vec![0.3, 0.4, 0.3]]).unwrap();
        let joined = p.clone().concat(&tail).unwrap();
        assert_eq!(joined.len(), 5);
        assert!((joined.times()[4] - 0.4).abs() < 1e-15);
        assert!((joined.trace(4) - p.trace(3) - 0.02).abs() < 1e-15);
    }
}
