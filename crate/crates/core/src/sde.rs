//! Euler–Maruyama simulation of the optimal martingales in the chart of the
//! simplex: the circle SDE, the skew-gradient SDE driven by an arrival-time
//! field, exit-time statistics and conversion to market-weight paths.
//!
//! Every path draws from its own ChaCha stream `(seed, path index)`, so an
//! ensemble does not depend on how many threads generate it.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::ConvexDomain;
use crate::error::{Error, Result};
use crate::fmt::{round12, sig12};
use crate::geometry::{build_isometry, IsometryMap, SimplexPoint};
use crate::mcf2d::ArrivalField;
use crate::mincurv::{Histogram, MinCurvField};
use crate::portfolio::SimplexPath;

/// Where the drift-free diffusion direction comes from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientSource {
    /// `w = 1 - |x|^2` on the unit disk.
    #[default]
    AnalyticDisk,
    /// Curve shortening arrival field.
    ArrivalField,
    /// Planar wide-stencil solution.
    MincurvField,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub gradient_source: GradientSource,
    /// Dimension of the driving Brownian motion: 1 for the planar drives,
    /// the face dimension for the boundary continuation.
    pub brownian_dim: usize,
    /// Censoring time; defaults to `2 max w` (skew-gradient) or twice the
    /// squared distance to the farthest bounding-box corner (circle).
    pub t_max: Option<f64>,
    /// Keep every `record_every`-th step; `0` keeps only the start and the end.
    pub record_every: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            n_paths: 1000,
            seed: 0,
            gradient_source: GradientSource::AnalyticDisk,
            brownian_dim: 1,
            t_max: None,
            record_every: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if self.n_paths == 0 {
            return Err(Error::InvalidArgument("n_paths must be at least 1".into()));
        }
        if self.brownian_dim == 0 {
            return Err(Error::InvalidArgument("brownian_dim must be at least 1".into()));
        }
        if let Some(t) = self.t_max {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::InvalidArgument(format!("t_max must be positive, got {t}")));
            }
        }
        Ok(())
    }
}

/// Running checks accumulated along a path.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PathDiagnostics {
    /// Largest `|sigma(X) . X| / |X|` (circle SDE).
    pub max_orthogonality: f64,
    /// Largest `|w(X(t)) - (w(x0) - t)|` before the Brownian switch.
    pub max_level_deviation: f64,
    /// Largest `|realized_trace(t) - t|`.
    pub max_trace_deviation: f64,
    /// Time spent in the Brownian mode near the critical point.
    pub brownian_time: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanarPath {
    pub times: Vec<f64>,
    pub points: Vec<[f64; 2]>,
    /// Running `sum |dX|^2`, one entry per recorded time.
    pub realized_trace: Vec<f64>,
    /// First time the path leaves the domain, interpolated along the last
    /// increment; `None` if it was censored at `t_max`.
    pub exit_time: Option<f64>,
    pub diagnostics: PathDiagnostics,
}

impl PlanarPath {
    /// Exit time, or the censoring time for paths that never left.
    pub fn stopping_time(&self) -> f64 {
        self.exit_time.unwrap_or_else(|| *self.times.last().expect("non-empty path"))
    }

    pub fn end(&self) -> [f64; 2] {
        *self.points.last().expect("non-empty path")
    }
}

/// A planar function whose level sets the skew-gradient SDE follows.
pub trait LevelField: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> [f64; 2];
    /// Estimate of `||D^2 w||` near the critical point, where the switch acts.
    fn hessian_estimate(&self) -> f64;
    /// Grid spacing, `0` for analytic fields.
    fn spacing(&self) -> f64;
    fn max_value(&self) -> f64;
}

/// `w = 1 - |x|^2`, the arrival time of the unit disk.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DiskField;

impl LevelField for DiskField {
    fn value(&self, x: &[f64]) -> f64 {
        1.0 - x[0] * x[0] - x[1] * x[1]
    }

    fn gradient(&self, x: &[f64]) -> [f64; 2] {
        [-2.0 * x[0], -2.0 * x[1]]
    }

    fn hessian_estimate(&self) -> f64 {
        2.0
    }

    fn spacing(&self) -> f64 {
        0.0
    }

    fn max_value(&self) -> f64 {
        1.0
    }
}

impl LevelField for ArrivalField {
    fn value(&self, x: &[f64]) -> f64 {
        ArrivalField::value(self, x)
    }

    fn gradient(&self, x: &[f64]) -> [f64; 2] {
        ArrivalField::gradient(self, x)
    }

    /// Largest second difference through the critical point along the axes
    /// and diagonals, with steps of 4, 8 and 16 cells to see past the flat
    /// top. The sup over the grid is useless here: it is dominated by the
    /// corner singularities.
    fn hessian_estimate(&self) -> f64 {
        let c = self.critical_point();
        let w0 = ArrivalField::value(self, &c);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let mut best: f64 = 0.0;
        for cells in [4.0, 8.0, 16.0] {
            let s = cells * self.h();
            for e in [[1.0, 0.0], [0.0, 1.0], [r, r], [r, -r]] {
                let f = ArrivalField::value(self, &[c[0] + s * e[0], c[1] + s * e[1]]);
                let b = ArrivalField::value(self, &[c[0] - s * e[0], c[1] - s * e[1]]);
                best = best.max((f - 2.0 * w0 + b).abs() / (s * s));
            }
        }
        best
    }

    fn spacing(&self) -> f64 {
        self.h()
    }

    fn max_value(&self) -> f64 {
        ArrivalField::max_value(self)
    }
}

/// Planar wide-stencil solution as an interpolated field with nodal gradients.
pub fn mincurv_level_field(field: &MinCurvField) -> Result<ArrivalField> {
    if field.dim() != 2 {
        return Err(Error::InvalidDimension(format!("level field needs a planar solution, got dim {}", field.dim())));
    }
    let values = field
        .values()
        .iter()
        .zip(field.inside_mask())
        .map(|(v, inside)| if *inside { *v } else { 0.0 })
        .collect();
    ArrivalField::new(field.lattice().clone(), values, field.inside_mask().to_vec())
}

/// Gradient magnitude below which the skew-gradient direction is replaced by
/// a Brownian step: `max(10 h ||D^2 w||, 1e-4)`.
pub fn switch_threshold(field: &dyn LevelField) -> f64 {
    (10.0 * field.spacing() * field.hessian_estimate()).max(1e-4)
}

fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

fn normal(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    sd * rng.sample::<f64, _>(StandardNormal)
}

/// Bookkeeping shared by the planar schemes.
struct Recorder {
    every: usize,
    path: PlanarPath,
    trace: f64,
}

impl Recorder {
    fn new(x0: [f64; 2], every: usize) -> Self {
        Self {
            every,
            path: PlanarPath {
                times: vec![0.0],
                points: vec![x0],
                realized_trace: vec![0.0],
                exit_time: None,
                diagnostics: PathDiagnostics::default(),
            },
            trace: 0.0,
        }
    }

    fn push(&mut self, t: f64, x: [f64; 2], dx2: f64, last: bool) {
        self.trace += dx2;
        let d = &mut self.path.diagnostics;
        d.steps += 1;
        d.max_trace_deviation = d.max_trace_deviation.max((self.trace - t).abs());
        if last || (self.every > 0 && d.steps.is_multiple_of(self.every)) {
            if *self.path.times.last().expect("non-empty") >= t {
                // an exit exactly on the previous grid time replaces it
                self.path.times.pop();
                self.path.points.pop();
                self.path.realized_trace.pop();
            }
            self.path.times.push(t);
            self.path.points.push(x);
            self.path.realized_trace.push(self.trace);
        }
    }
}

enum Step {
    Inside([f64; 2]),
    Exit { x: [f64; 2], fraction: f64 },
}

fn advance(domain: &dyn ConvexDomain, x: [f64; 2], dx: [f64; 2]) -> Step {
    let next = [x[0] + dx[0], x[1] + dx[1]];
    if domain.signed_distance(&next) >= 0.0 {
        return Step::Inside(next);
    }
    // the boundary crossing along the increment
    let fraction = domain.ray_exit(&x, &dx).clamp(0.0, 1.0);
    Step::Exit { x: [x[0] + fraction * dx[0], x[1] + fraction * dx[1]], fraction }
}

fn default_horizon(domain: &dyn ConvexDomain, x0: [f64; 2]) -> f64 {
    let (lo, hi) = domain.bounding_box();
    let far2: f64 = (0..2).map(|k| (x0[k] - lo[k]).abs().max((hi[k] - x0[k]).abs()).powi(2)).sum();
    2.0 * far2
}

fn check_start(domain: &dyn ConvexDomain, x0: [f64; 2], strict: bool) -> Result<()> {
    if domain.dim() != 2 {
        return Err(Error::InvalidDimension(format!("planar simulation on a {}-dimensional domain", domain.dim())));
    }
    let s = domain.signed_distance(&x0);
    if !(s > 0.0 || (!strict && s >= 0.0)) {
        return Err(Error::OutsideDomain(format!("start ({}, {}) is not inside the domain", x0[0], x0[1])));
    }
    Ok(())
}

/// Circle SDE `dX = (X_2, -X_1) / |X| dW` from `x0`, one path.
/// At `X = 0` the direction is `(1, 0)`.
pub fn simulate_circle(x0: [f64; 2], domain: &dyn ConvexDomain, cfg: &SimConfig, path: usize) -> Result<PlanarPath> {
    cfg.validate()?;
    check_start(domain, x0, true)?;
    let t_max = cfg.t_max.unwrap_or_else(|| default_horizon(domain, x0));
    let mut rng = path_rng(cfg.seed, path);
    Ok(circle_run(x0, domain, cfg.dt, t_max, cfg.record_every, &mut rng))
}

fn circle_run(
    x0: [f64; 2],
    domain: &dyn ConvexDomain,
    dt: f64,
    t_max: f64,
    every: usize,
    rng: &mut ChaCha8Rng,
) -> PlanarPath {
    let sd = dt.sqrt();
    let mut rec = Recorder::new(x0, every);
    let (mut x, mut t) = (x0, 0.0);
    let mut n = 0usize;
    loop {
        let r = x[0].hypot(x[1]);
        let sigma = if r > 0.0 { [x[1] / r, -x[0] / r] } else { [1.0, 0.0] };
        if r > 0.0 {
            let dot = (sigma[0] * x[0] + sigma[1] * x[1]).abs() / r;
            let d = &mut rec.path.diagnostics;
            d.max_orthogonality = d.max_orthogonality.max(dot);
        }
        let dw = normal(rng, sd);
        let dx = [sigma[0] * dw, sigma[1] * dw];
        match advance(domain, x, dx) {
            Step::Inside(next) => {
                n += 1;
                t = n as f64 * dt;
                x = next;
                let last = t >= t_max;
                rec.push(t, x, dw * dw, last);
                if last {
                    break;
                }
            }
            Step::Exit { x: at, fraction } => {
                let te = t + fraction * dt;
                rec.push(te, at, (fraction * dw).powi(2), true);
                rec.path.exit_time = Some(te);
                break;
            }
        }
    }
    rec.path
}

/// Skew-gradient SDE `dX = grad^perp w / |grad w| dW` from `x0`, one path.
/// Where `|grad w| < g_min` the step is a planar Brownian increment scaled by
/// `1/sqrt 2`, so the trace clock still runs at rate one.
pub fn simulate_skew_gradient(
    x0: [f64; 2],
    field: &dyn LevelField,
    domain: &dyn ConvexDomain,
    cfg: &SimConfig,
    path: usize,
) -> Result<PlanarPath> {
    cfg.validate()?;
    check_start(domain, x0, true)?;
    let t_max = cfg.t_max.unwrap_or(2.0 * field.max_value());
    let mut rng = path_rng(cfg.seed, path);
    Ok(skew_run(x0, field, domain, cfg.dt, t_max, cfg.record_every, &mut rng))
}

fn skew_run(
    x0: [f64; 2],
    field: &dyn LevelField,
    domain: &dyn ConvexDomain,
    dt: f64,
    t_max: f64,
    every: usize,
    rng: &mut ChaCha8Rng,
) -> PlanarPath {
    let sd = dt.sqrt();
    let g_min = switch_threshold(field);
    let w0 = field.value(&x0);
    let mut rec = Recorder::new(x0, every);
    let (mut x, mut t) = (x0, 0.0);
    let mut n = 0usize;
    let mut level_tracked = true;
    loop {
        let g = field.gradient(&x);
        let gn = g[0].hypot(g[1]);
        let brownian = gn < g_min;
        let dx = if brownian {
            level_tracked = false;
            let s = sd / std::f64::consts::SQRT_2;
            [normal(rng, s), normal(rng, s)]
        } else {
            let dw = normal(rng, sd);
            [-g[1] / gn * dw, g[0] / gn * dw]
        };
        let dx2 = dx[0] * dx[0] + dx[1] * dx[1];
        match advance(domain, x, dx) {
            Step::Inside(next) => {
                n += 1;
                t = n as f64 * dt;
                x = next;
                let d = &mut rec.path.diagnostics;
                if brownian {
                    d.brownian_time += dt;
                }
                if level_tracked {
                    d.max_level_deviation = d.max_level_deviation.max((field.value(&x) - (w0 - t)).abs());
                }
                let last = t >= t_max;
                rec.push(t, x, dx2, last);
                if last {
                    break;
                }
            }
            Step::Exit { x: at, fraction } => {
                let te = t + fraction * dt;
                if brownian {
                    rec.path.diagnostics.brownian_time += fraction * dt;
                }
                rec.push(te, at, fraction * fraction * dx2, true);
                rec.path.exit_time = Some(te);
                break;
            }
        }
    }
    rec.path
}

/// Circle SDE ensemble; path `i` uses stream `i`.
pub fn circle_ensemble(x0: [f64; 2], domain: &dyn ConvexDomain, cfg: &SimConfig) -> Result<Vec<PlanarPath>> {
    cfg.validate()?;
    check_start(domain, x0, true)?;
    (0..cfg.n_paths).into_par_iter().map(|i| simulate_circle(x0, domain, cfg, i)).collect()
}

/// Skew-gradient ensemble; path `i` uses stream `i`.
pub fn skew_gradient_ensemble(
    x0: [f64; 2],
    field: &dyn LevelField,
    domain: &dyn ConvexDomain,
    cfg: &SimConfig,
) -> Result<Vec<PlanarPath>> {
    cfg.validate()?;
    check_start(domain, x0, true)?;
    (0..cfg.n_paths).into_par_iter().map(|i| simulate_skew_gradient(x0, field, domain, cfg, i)).collect()
}

/// Market weights `mu(t) = U^T X(t) + offset` of a fully recorded path, up
/// to its exit. Weights within `1e-9` of the boundary are clamped onto it.
pub fn to_market_path(path: &PlanarPath, chart: &IsometryMap) -> Result<SimplexPath> {
    if chart.chart_dim() != 2 {
        return Err(Error::InvalidDimension(format!("planar paths need a 3-asset chart, got d = {}", chart.source_dim())));
    }
    let weights = path
        .points
        .iter()
        .map(|x| SimplexPoint::from_clamped(chart.lift(x), 1e-9))
        .collect::<Result<Vec<_>>>()?;
    SimplexPath::new(path.times.clone(), weights)
}

/// Continues a market from `start` up to time `horizon` (relative) as a
/// Brownian motion with unit trace rate on the smallest face containing it.
/// When a weight hits zero the walk stays on the smaller face; on an edge it
/// is reflected at the vertices.
fn continue_on_face(start: &SimplexPoint, horizon: f64, dt: f64, rng: &mut ChaCha8Rng) -> Result<SimplexPath> {
    let d = start.dim();
    let mut y = start.coords().to_vec();
    let mut active: Vec<usize> = (0..d).filter(|&i| y[i] > 0.0).collect();
    let mut times = vec![0.0];
    let mut weights = vec![start.clone()];
    if active.len() < 2 {
        // a single asset has no volatility left
        if horizon > 0.0 {
            times.push(horizon);
            weights.push(start.clone());
        }
        return SimplexPath::new(times, weights);
    }
    let mut basis = build_isometry(active.len())?;
    let steps = (horizon / dt).ceil() as usize;
    for n in 1..=steps {
        let m = active.len() - 1;
        let sd = (dt / m as f64).sqrt();
        let db: Vec<f64> = (0..m).map(|_| normal(rng, sd)).collect();
        let step = basis.lift_vector(&db);
        let mut next = y.clone();
        for (k, &i) in active.iter().enumerate() {
            next[i] += step[k];
        }
        if let Some(&hit) = active.iter().find(|&&i| next[i] < 0.0) {
            if active.len() == 2 {
                let other = *active.iter().find(|&&i| i != hit).expect("two active weights");
                next[hit] = -next[hit];
                next[other] = 1.0 - next[hit];
            } else {
                // stop on the face where the first weight vanishes
                let s = active
                    .iter()
                    .enumerate()
                    .filter(|(k, &i)| y[i] + step[*k] < 0.0)
                    .map(|(k, &i)| y[i] / (y[i] - (y[i] + step[k])))
                    .fold(1.0, f64::min);
                for (k, &i) in active.iter().enumerate() {
                    next[i] = y[i] + s * step[k];
                }
                let low = *active.iter().min_by(|&&a, &&b| next[a].total_cmp(&next[b])).expect("non-empty");
                next[low] = 0.0;
                active.retain(|&i| i != low);
                basis = build_isometry(active.len())?;
            }
        }
        y = next;
        times.push((n as f64 * dt).min(horizon));
        weights.push(SimplexPoint::from_clamped(y.clone(), 1e-9)?);
        if times[n] >= horizon {
            break;
        }
    }
    SimplexPath::new(times, weights)
}

/// Skew-gradient markets on `[0, horizon]`: the chart path up to its exit,
/// then the face continuation. Path `i` uses stream `i` for both parts.
pub fn simulate_market(
    x0: [f64; 2],
    field: &dyn LevelField,
    domain: &dyn ConvexDomain,
    chart: &IsometryMap,
    cfg: &SimConfig,
    horizon: f64,
) -> Result<Vec<SimplexPath>> {
    cfg.validate()?;
    check_start(domain, x0, true)?;
    if !(horizon > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(cfg.seed, i);
            let planar = skew_run(x0, field, domain, cfg.dt, horizon, 1, &mut rng);
            let market = to_market_path(&planar, chart)?;
            match planar.exit_time {
                Some(te) if te < horizon => {
                    let start = market.weights().last().expect("non-empty").clone();
                    let tail = continue_on_face(&start, horizon - te, cfg.dt, &mut rng)?;
                    market.concat(&tail)
                }
                _ => Ok(market),
            }
        })
        .collect()
}

/// Estimate with a bootstrap percentile interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitStatistics {
    pub n_paths: usize,
    pub censored_fraction: f64,
    /// First percentile of the stopping times.
    pub essinf_estimate: Estimate,
    pub mean: Estimate,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub histogram: Histogram,
}

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// Nearest-rank quantile of unsorted data.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    let k = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
    *v.select_nth_unstable_by(k, f64::total_cmp).1
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Exit-time summary. Censored paths enter at their censoring time. The
/// intervals are 95% bootstrap percentile intervals.
pub fn exit_time_statistics(ensemble: &[PlanarPath]) -> Result<ExitStatistics> {
    let times: Vec<f64> = ensemble.iter().map(PlanarPath::stopping_time).collect();
    let censored = ensemble.iter().filter(|p| p.exit_time.is_none()).count();
    let mut s = stopping_time_statistics(&times, 0)?;
    s.censored_fraction = censored as f64 / ensemble.len() as f64;
    Ok(s)
}

/// Summary of raw stopping times with a seeded bootstrap.
pub fn stopping_time_statistics(times: &[f64], seed: u64) -> Result<ExitStatistics> {
    if times.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let n = times.len();
    let m = mean(times);
    let std = (times.iter().map(|t| (t - m).powi(2)).sum::<f64>() / n as f64).sqrt();
    let (lo, hi) = times.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), t| (a.min(*t), b.max(*t)));
    let boot: Vec<(f64, f64)> = (0..BOOTSTRAP_RESAMPLES)
        .into_par_iter()
        .map(|b| {
            let mut rng = path_rng(seed, b);
            let sample: Vec<f64> = (0..n).map(|_| times[rng.random_range(0..n)]).collect();
            (quantile(&sample, 0.01), mean(&sample))
        })
        .collect();
    let interval = |v: Vec<f64>, value: f64| Estimate { value, lo: quantile(&v, 0.025), hi: quantile(&v, 0.975) };
    let width = if hi > lo { hi - lo } else { 1.0 };
    Ok(ExitStatistics {
        n_paths: n,
        censored_fraction: 0.0,
        essinf_estimate: interval(boot.iter().map(|b| b.0).collect(), quantile(times, 0.01)),
        mean: interval(boot.iter().map(|b| b.1).collect(), m),
        std,
        min: lo,
        max: hi,
        histogram: Histogram::build(times, lo, lo + width * (1.0 + 1e-12), 20),
    })
}

/// Ensemble as CSV rows `path_id, t, x_1, x_2`.
pub fn write_ensemble_csv<W: Write>(ensemble: &[PlanarPath], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["path_id", "t", "x_1", "x_2"])?;
    for (id, p) in ensemble.iter().enumerate() {
        for (t, x) in p.times.iter().zip(&p.points) {
            w.write_record([id.to_string(), sig12(*t), sig12(x[0]), sig12(x[1])])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Markets as CSV rows `path_id, t, mu_1..mu_d`, keeping every `every`-th
/// time and the last one (`every = 0` keeps the first and the last).
pub fn write_markets_csv<W: Write>(markets: &[SimplexPath], every: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let Some(first) = markets.first() else {
        w.flush()?;
        return Ok(());
    };
    let mut header = vec!["path_id".to_string(), "t".to_string()];
    header.extend((1..=first.d()).map(|i| format!("mu_{i}")));
    w.write_record(&header)?;
    for (id, p) in markets.iter().enumerate() {
        let last = p.len() - 1;
        let keep = |n: usize| n == 0 || n == last || (every > 0 && n.is_multiple_of(every));
        for n in (0..p.len()).filter(|&n| keep(n)) {
            let mut row = vec![id.to_string(), sig12(p.times()[n])];
            row.extend(p.weight(n).iter().map(|v| sig12(*v)));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Summary JSON of an ensemble and its configuration.
pub fn summary_json(cfg: &SimConfig, stats: &ExitStatistics, ensemble: &[PlanarPath]) -> Result<String> {
    let worst = |f: fn(&PathDiagnostics) -> f64| round12(ensemble.iter().map(|p| f(&p.diagnostics)).fold(0.0, f64::max));
    let est = |e: &Estimate| serde_json::json!({"value": round12(e.value), "lo": round12(e.lo), "hi": round12(e.hi)});
    let v = serde_json::json!({
        "config": cfg,
        "n_paths": stats.n_paths,
        "censored_fraction": round12(stats.censored_fraction),
        "essinf_estimate": est(&stats.essinf_estimate),
        "mean": est(&stats.mean),
        "std": round12(stats.std),
        "min": round12(stats.min),
        "max": round12(stats.max),
        "histogram": {
            "lo": round12(stats.histogram.lo),
            "hi": round12(stats.histogram.hi),
            "counts": stats.histogram.counts,
        },
        "max_orthogonality": worst(|d| d.max_orthogonality),
        "max_level_deviation": worst(|d| d.max_level_deviation),
        "max_trace_deviation": worst(|d| d.max_trace_deviation),
    });
    Ok(serde_json::to_string_pretty(&v)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Ball;
    use crate::geometry::PolytopeK;

    fn cfg(dt: f64, n: usize) -> SimConfig {
        SimConfig { dt, n_paths: n, seed: 7, ..SimConfig::default() }
    }

    #[test]
    fn first_circle_step_is_orthogonal() {
        // from (1, 0) the increment is dW (0, -1)
        let ball = Ball::new(vec![0.0, 0.0], 10.0);
        let c = SimConfig { t_max: Some(1e-4), ..cfg(1e-4, 1) };
        let p = simulate_circle([1.0, 0.0], &ball, &c, 0).unwrap();
        let [x, y] = p.points[1];
        assert_eq!(x, 1.0);
        assert!((x * x + y * y - 1.0 - p.realized_trace[1]).abs() < 1e-15);
    }

    #[test]
    fn circle_radius_is_the_trace_clock() {
        let k = PolytopeK::simplex(3).unwrap();
        let p = simulate_circle([0.0, 0.0], &k, &cfg(1e-4, 1), 3).unwrap();
        for (x, tr) in p.points.iter().zip(&p.realized_trace) {
            assert!((x[0] * x[0] + x[1] * x[1] - tr).abs() < 1e-12);
        }
        assert!(p.exit_time.is_some());
        assert!(p.diagnostics.max_orthogonality <= f64::EPSILON);
    }

    #[test]
    fn exit_point_lies_on_the_boundary() {
        let k = PolytopeK::simplex(3).unwrap();
        let p = simulate_skew_gradient([0.1, 0.0], &DiskField, &k, &cfg(1e-3, 1), 0).unwrap();
        let end = p.end();
        assert!(k.signed_boundary_distance(&end).abs() < 1e-12);
        assert_eq!(p.exit_time, p.times.last().copied());
    }

    #[test]
    fn start_outside_rejected() {
        let ball = Ball::unit(2);
        assert!(matches!(
            simulate_skew_gradient([2.0, 0.0], &DiskField, &ball, &cfg(1e-3, 1), 0),
            Err(Error::OutsideDomain(_))
        ));
        assert!(cfg(0.0, 1).validate().is_err());
        assert!(cfg(1e-3, 0).validate().is_err());
    }

    #[test]
    fn deterministic_exits_have_no_spread() {
        let s = stopping_time_statistics(&[0.5; 40], 1).unwrap();
        assert_eq!(s.std, 0.0);
        assert_eq!(s.essinf_estimate.value, s.mean.value);
        assert_eq!(s.histogram.counts.iter().sum::<usize>(), 40);
        assert!(matches!(stopping_time_statistics(&[], 1), Err(Error::EmptyEnsemble)));
    }

    #[test]
    fn nearest_rank_quantile() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(quantile(&v, 0.01), 1.0);
        assert_eq!(quantile(&v, 0.5), 50.0);
        assert_eq!(quantile(&v, 1.0), 100.0);
    }

    #[test]
    fn face_walk_keeps_unit_trace_rate() {
        let mut rng = path_rng(3, 0);
        let start = SimplexPoint::new(vec![0.5, 0.5, 0.0]).unwrap();
        let p = continue_on_face(&start, 0.5, 1e-4, &mut rng).unwrap();
        let end = p.len() - 1;
        assert!((p.times()[end] - 0.5).abs() < 1e-12);
        assert!((p.trace(end) - 0.5).abs() < 5.0 * 1e-2);
        assert!(p.weights().iter().all(|w| w.coords()[2] == 0.0));
    }
}
