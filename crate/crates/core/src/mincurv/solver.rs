//! Wide-stencil solver for `F(grad u, D^2 u) = 1` through its arrival-time form.
//!
//! The level sets `{u = t}` move inward with normal speed equal to half their
//! smallest principal curvature. The solver evolves a level-set function that
//! is kept close to a signed distance, negative in the part not yet reached.
//! Its speed at a node is half the least second difference along lattice
//! directions within the angular tolerance of the plane orthogonal to the
//! discrete gradient, each divided by the squared cosine of its angle to that
//! plane. For a distance function this is exact to second order, so coarse
//! direction sets stay consistent. The time at which a node changes sign is
//! its value of `u`.
//!
//! Nodes outside the domain are ghost nodes. Zero data keep them at their
//! (positive) exterior distance. Facet data set them to
//! `(t - g) / |grad g|`, the signed distance to the front within the facet.

use std::fmt::Debug;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::ConvexDomain;
use crate::error::{Error, Result};
use crate::fmt::sig12;
use crate::geometry::{build_isometry, IsometryMap, PolytopeK, SimplexPoint};
use crate::grid::Lattice;

/// Dirichlet data on the boundary of the domain.
pub trait BoundaryData: Send + Sync + Debug {
    /// Value at a boundary point; also asked for points slightly outside,
    /// which should be treated as their nearest boundary point.
    fn value(&self, x: &[f64]) -> f64;

    /// Magnitude of the tangential gradient of the data near `x`, or `None`
    /// when the data vanish identically.
    fn slope(&self, _x: &[f64]) -> Option<f64> {
        None
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZeroBoundary;

impl BoundaryData for ZeroBoundary {
    fn value(&self, _x: &[f64]) -> f64 {
        0.0
    }
}

/// Boundary data of the chart of a simplex: on the face `{y_k = 0}` the value
/// of a lower-dimensional solution in that face's own chart.
#[derive(Clone, Debug)]
pub struct FacetBoundary {
    chart: IsometryMap,
    face_chart: IsometryMap,
    face_solution: MinCurvField,
}

impl FacetBoundary {
    pub fn new(d: usize, face_solution: MinCurvField) -> Result<Self> {
        if face_solution.dim() != d - 2 {
            return Err(Error::InvalidDimension(format!(
                "faces of the {d}-simplex need a {}-dimensional solution",
                d - 2
            )));
        }
        Ok(Self { chart: build_isometry(d)?, face_chart: build_isometry(d - 1)?, face_solution })
    }

    pub fn face_solution(&self) -> &MinCurvField {
        &self.face_solution
    }

    /// Face-chart coordinates of the facet point nearest to `x` in weight space.
    fn face_point(&self, x: &[f64]) -> Vec<f64> {
        let y = self.chart.lift(x);
        let k = (0..y.len()).min_by(|&a, &b| y[a].total_cmp(&y[b])).expect("non-empty");
        let mut rest: Vec<f64> = y.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, v)| v.max(0.0)).collect();
        let s: f64 = rest.iter().sum();
        rest.iter_mut().for_each(|v| *v /= s);
        self.face_chart.project(&rest)
    }
}

impl BoundaryData for FacetBoundary {
    fn value(&self, x: &[f64]) -> f64 {
        self.face_solution.value(&self.face_point(x))
    }

    fn slope(&self, x: &[f64]) -> Option<f64> {
        let z = self.face_point(x);
        let step = self.face_solution.h();
        let mut g2 = 0.0;
        for k in 0..z.len() {
            let (mut a, mut b) = (z.clone(), z.clone());
            a[k] += step;
            b[k] -= step;
            g2 += ((self.face_solution.value(&a) - self.face_solution.value(&b)) / (2.0 * step)).powi(2);
        }
        Some(g2.sqrt())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinCurvConfig {
    pub stencil_radius: usize,
    /// Half-width of the cone around the plane orthogonal to the gradient
    /// whose directions are admissible; defaults to `atan(1 / stencil_radius)`.
    pub angular_tol: Option<f64>,
    /// Time step in units of `h^2`.
    pub cfl: f64,
    /// Steps between reinitializations to a signed distance.
    pub reinit_every: usize,
    /// Half-width of the updated band, in cells.
    pub band_cells: f64,
    /// Once the unreached region is smaller than a ball of this many cells
    /// across, it is treated as a shrinking ball.
    pub stop_cells: f64,
    /// Coarsest accepted grid, in cells across the inradius.
    pub min_inradius_cells: f64,
    pub max_steps: usize,
}

impl Default for MinCurvConfig {
    fn default() -> Self {
        Self {
            stencil_radius: 1,
            angular_tol: None,
            cfl: 0.3,
            reinit_every: 20,
            band_cells: 6.0,
            stop_cells: 4.0,
            min_inradius_cells: 4.0,
            max_steps: 50_000_000,
        }
    }
}

impl MinCurvConfig {
    pub fn with_radius(stencil_radius: usize) -> Self {
        Self { stencil_radius, ..Self::default() }
    }

    pub fn tolerance(&self) -> f64 {
        self.angular_tol.unwrap_or_else(|| (1.0 / self.stencil_radius as f64).atan())
    }
}

/// Grid solution of `F(grad u, D^2 u) = 1`. Values at nodes outside the domain
/// hold the boundary data of their nearest boundary point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinCurvField {
    lattice: Lattice,
    values: Vec<f64>,
    inside: Vec<bool>,
    node_residual: Vec<f64>,
    stencil_radius: usize,
    steps: usize,
    history: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSummary {
    pub dim: usize,
    pub h: f64,
    pub stencil_radius: usize,
    pub unknowns: usize,
    pub steps: usize,
    pub max: f64,
    pub arg_max: Vec<f64>,
    /// `|F_h(u) - 1|` over interior nodes whose whole stencil lies inside.
    pub residual_max: f64,
    pub residual_mean: f64,
    pub residual_median: f64,
}

impl MinCurvField {
    pub fn dim(&self) -> usize {
        self.lattice.dim()
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn h(&self) -> f64 {
        self.lattice.h
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn inside_mask(&self) -> &[bool] {
        &self.inside
    }

    /// Time steps of the front evolution.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// `|F_h(u) - 1|` at each node, `NaN` where the stencil leaves the domain.
    pub fn node_residuals(&self) -> &[f64] {
        &self.node_residual
    }

    /// Measure of the unreached region at each reinitialization.
    pub fn history(&self) -> &[f64] {
        &self.history
    }

    /// Multilinear interpolation, clamped to be nonnegative.
    pub fn value(&self, x: &[f64]) -> f64 {
        self.lattice.interpolate(&self.values, x).max(0.0)
    }

    fn argmax_node(&self) -> Option<usize> {
        (0..self.values.len())
            .filter(|&i| self.inside[i])
            .max_by(|&a, &b| self.values[a].total_cmp(&self.values[b]).then(b.cmp(&a)))
    }

    pub fn max_value(&self) -> f64 {
        self.argmax_node().map_or(0.0, |i| self.values[i])
    }

    pub fn arg_max(&self) -> Vec<f64> {
        self.argmax_node().map_or_else(|| vec![f64::NAN; self.dim()], |i| self.lattice.point(i))
    }

    pub fn summary(&self) -> FieldSummary {
        let mut res: Vec<f64> = (0..self.values.len())
            .filter(|&i| self.inside[i] && self.node_residual[i].is_finite())
            .map(|i| self.node_residual[i])
            .collect();
        res.sort_by(f64::total_cmp);
        FieldSummary {
            dim: self.dim(),
            h: self.h(),
            stencil_radius: self.stencil_radius,
            unknowns: self.inside.iter().filter(|b| **b).count(),
            steps: self.steps,
            max: self.max_value(),
            arg_max: self.arg_max(),
            residual_max: res.last().copied().unwrap_or(0.0),
            residual_mean: if res.is_empty() { 0.0 } else { res.iter().sum::<f64>() / res.len() as f64 },
            residual_median: res.get(res.len() / 2).copied().unwrap_or(0.0),
        }
    }

    /// Largest nodal gradient magnitude over interior nodes (central differences).
    pub fn lipschitz_estimate(&self) -> f64 {
        let h = self.h();
        let n = self.dim();
        let mut best: f64 = 0.0;
        for i in (0..self.values.len()).filter(|&i| self.inside[i]) {
            let mut g2 = 0.0;
            for k in 0..n {
                let mut e = vec![0i32; n];
                e[k] = 1;
                let f = self.lattice.offset(i, &e).map_or(self.values[i], |j| self.values[j]);
                e[k] = -1;
                let b = self.lattice.offset(i, &e).map_or(self.values[i], |j| self.values[j]);
                g2 += ((f - b) / (2.0 * h)).powi(2);
            }
            best = best.max(g2.sqrt());
        }
        best
    }

    /// Along every lattice axis through the arg-max node, interior values rise
    /// to the maximum and then fall, up to `tol`. Returns the worst violation.
    pub fn quasi_concavity_violation(&self) -> f64 {
        let Some(c) = self.argmax_node() else { return 0.0 };
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for k in 0..n {
            for dir in [1i32, -1] {
                let mut e = vec![0i32; n];
                e[k] = dir;
                let mut prev = self.values[c];
                let mut cur = c;
                while let Some(j) = self.lattice.offset(cur, &e) {
                    if !self.inside[j] {
                        break;
                    }
                    worst = worst.max(self.values[j] - prev);
                    prev = self.values[j];
                    cur = j;
                }
            }
        }
        worst
    }

    /// Largest interior value within distance `h` of a vertex or an edge of `k`,
    /// i.e. of a face on which the solution vanishes.
    pub fn max_near_edges(&self, k: &PolytopeK) -> f64 {
        let h = self.h();
        let v = k.vertices();
        let mut worst: f64 = 0.0;
        for i in (0..self.values.len()).filter(|&i| self.inside[i]) {
            let x = self.lattice.point(i);
            let near = (0..v.len()).any(|a| (a + 1..v.len()).any(|b| segment_distance(&x, &v[a], &v[b]) <= h));
            if near {
                worst = worst.max(self.values[i]);
            }
        }
        worst
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.dim()).map(|k| format!("x_{k}")).collect();
        header.push("u".into());
        w.write_record(&header)?;
        for i in (0..self.values.len()).filter(|&i| self.inside[i]) {
            let mut row: Vec<String> = self.lattice.point(i).iter().map(|c| sig12(*c)).collect();
            row.push(sig12(self.values[i]));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary_json(&self) -> Result<String> {
        let s = self.summary();
        let v = serde_json::json!({
            "dim": s.dim,
            "h": crate::fmt::round12(s.h),
            "stencil_radius": s.stencil_radius,
            "unknowns": s.unknowns,
            "steps": s.steps,
            "max": crate::fmt::round12(s.max),
            "arg_max": s.arg_max.iter().map(|c| crate::fmt::round12(*c)).collect::<Vec<_>>(),
            "residual_max": crate::fmt::round12(s.residual_max),
            "residual_mean": crate::fmt::round12(s.residual_mean),
            "residual_median": crate::fmt::round12(s.residual_median),
        });
        Ok(serde_json::to_string_pretty(&v)?)
    }
}

fn segment_distance(x: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let t: Vec<f64> = b.iter().zip(a).map(|(p, q)| p - q).collect();
    let tt: f64 = t.iter().map(|v| v * v).sum();
    let s = (x.iter().zip(a).zip(&t).map(|((xi, ai), ti)| (xi - ai) * ti).sum::<f64>() / tt).clamp(0.0, 1.0);
    x.iter().zip(a).zip(&t).map(|((xi, ai), ti)| (xi - ai - s * ti).powi(2)).sum::<f64>().sqrt()
}

/// Primitive integer vectors with entries in `[-r, r]`, one per `+-` pair
/// (first nonzero entry positive), in lexicographic order.
pub fn stencil_directions(dim: usize, r: usize) -> Vec<Vec<i32>> {
    let r = r as i32;
    let mut out = Vec::new();
    let mut v = vec![-r; dim];
    loop {
        let first = v.iter().find(|c| **c != 0);
        if matches!(first, Some(c) if *c > 0) && v.iter().fold(0i32, |g, c| gcd(g, c.abs())) == 1 {
            out.push(v.clone());
        }
        let mut k = dim;
        loop {
            if k == 0 {
                out.sort();
                return out;
            }
            k -= 1;
            if v[k] < r {
                v[k] += 1;
                break;
            }
            v[k] = -r;
        }
    }
}

fn gcd(a: i32, b: i32) -> i32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}


/// Gradients below this size select no tangent plane.
const FLAT_GRADIENT: f64 = 1e-9;

/// Ghost values use at least this slope of the facet data.
const MIN_SLOPE: f64 = 0.1;

struct Direction {
    offset: isize,
    unit: [f64; 3],
    /// `|e|^2 h^2`.
    len2: f64,
}

/// Band evolution on a fixed lattice.
struct Flow<'a> {
    lat: &'a Lattice,
    h: f64,
    dim: usize,
    strides: Vec<usize>,
    axes: Vec<isize>,
    directions: Vec<Direction>,
    sin_tol: f64,
    inside: &'a [bool],
    /// Nodes that take part: the domain and a layer of ghosts around it.
    kept: &'a [bool],
    /// Nodes that may evolve: kept, and with the whole stencil on kept nodes.
    safe: Vec<bool>,
}

impl<'a> Flow<'a> {
    fn new(lat: &'a Lattice, inside: &'a [bool], kept: &'a [bool], cfg: &MinCurvConfig) -> Self {
        let dim = lat.dim();
        let strides = lat.strides();
        let r = cfg.stencil_radius;
        let directions: Vec<Direction> = stencil_directions(dim, r)
            .into_iter()
            .map(|e| {
                let len2: f64 = e.iter().map(|c| (c * c) as f64).sum();
                let mut unit = [0.0; 3];
                for k in 0..dim {
                    unit[k] = e[k] as f64 / len2.sqrt();
                }
                let offset = e.iter().zip(&strides).map(|(c, s)| *c as isize * *s as isize).sum();
                Direction { offset, unit, len2: len2 * lat.h * lat.h }
            })
            .collect();
        let axes: Vec<isize> = strides.iter().map(|s| *s as isize).collect();
        let rim = r + 1;
        let on_lattice: Vec<bool> = (0..lat.len())
            .map(|i| lat.multi_index(i).iter().zip(&lat.shape).all(|(m, s)| *m >= rim && m + rim < *s))
            .collect();
        let reaches = |i: usize, o: isize| kept[(i as isize + o) as usize] && kept[(i as isize - o) as usize];
        let safe = (0..lat.len())
            .map(|i| {
                on_lattice[i]
                    && kept[i]
                    && directions.iter().all(|d: &Direction| reaches(i, d.offset))
                    && axes.iter().all(|a| reaches(i, *a))
            })
            .collect();
        Self { lat, h: lat.h, dim, strides, axes, directions, sin_tol: cfg.tolerance().sin(), inside, kept, safe }
    }

    fn gradient(&self, phi: &[f64], i: usize) -> [f64; 3] {
        let mut g = [0.0; 3];
        for (k, a) in self.axes.iter().enumerate() {
            g[k] = (phi[(i as isize + a) as usize] - phi[(i as isize - a) as usize]) / (2.0 * self.h);
        }
        g
    }

    fn second_difference(&self, phi: &[f64], i: usize, d: &Direction) -> f64 {
        let (f, b) = ((i as isize + d.offset) as usize, (i as isize - d.offset) as usize);
        (phi[f] + phi[b] - 2.0 * phi[i]) / d.len2
    }

    /// Half the least normalized second difference over admissible directions,
    /// floored at zero: the time derivative of `phi` at node `i`.
    fn speed(&self, phi: &[f64], i: usize) -> f64 {
        let g = self.gradient(phi, i);
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut best = f64::INFINITY;
        if gn < FLAT_GRADIENT {
            for d in &self.directions {
                best = best.min(self.second_difference(phi, i, d));
            }
        } else {
            let mut closest = (f64::INFINITY, 0usize);
            for (n, d) in self.directions.iter().enumerate() {
                let c = (0..self.dim).map(|k| d.unit[k] * g[k]).sum::<f64>() / gn;
                if c.abs() < closest.0 {
                    closest = (c.abs(), n);
                }
                if c.abs() <= self.sin_tol {
                    let v = self.second_difference(phi, i, d) / (1.0 - c * c);
                    if v < best {
                        best = v;
                    }
                }
            }
            if best == f64::INFINITY {
                let (c, n) = closest;
                best = self.second_difference(phi, i, &self.directions[n]) / (1.0 - c * c);
            }
        }
        // the level sets are convex, so the front never recedes
        0.5 * best.clamp(0.0, 1.0 / self.h)
    }

    /// Stationary residual `|-max_e D_e u / 2 - 1|` over admissible directions
    /// for the gradient of `u`, at nodes whose stencil stays inside.
    fn residual(&self, u: &[f64], i: usize) -> Option<f64> {
        if !self.safe[i] {
            return None;
        }
        let reach = |d: &Direction| {
            self.inside[(i as isize + d.offset) as usize] && self.inside[(i as isize - d.offset) as usize]
        };
        if !self.directions.iter().all(reach) {
            return None;
        }
        let g = self.gradient(u, i);
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut best = f64::NEG_INFINITY;
        let mut closest = (f64::INFINITY, 0usize);
        for (n, d) in self.directions.iter().enumerate() {
            let c = if gn < FLAT_GRADIENT { 0.0 } else { (0..self.dim).map(|k| d.unit[k] * g[k]).sum::<f64>() / gn };
            if c.abs() < closest.0 {
                closest = (c.abs(), n);
            }
            if c.abs() <= self.sin_tol {
                best = best.max(self.second_difference(u, i, d));
            }
        }
        if best == f64::NEG_INFINITY {
            best = self.second_difference(u, i, &self.directions[closest.1]);
        }
        Some((-0.5 * best - 1.0).abs())
    }

    /// Nodes with `|phi| < width` whose stencil stays on the lattice, leaving
    /// out unreached ghosts, which follow the boundary data.
    fn band(&self, phi: &[f64], width: f64) -> Vec<usize> {
        (0..phi.len())
            .filter(|&i| (self.inside[i] || phi[i] >= 0.0) && self.safe[i] && phi[i].abs() < width)
            .collect()
    }

    /// Replaces `phi` by the signed distance to its zero set near the region
    /// `phi < reach`. Negative ghost values carry the boundary data and are
    /// kept as fixed distances; positive ghosts are recomputed.
    fn reinitialize(&self, phi: &mut [f64], reach: f64) {
        let dim = self.dim;
        let shape = &self.lat.shape;
        // bounding box of the region of interest
        let mut lo = shape.clone();
        let mut hi = vec![0usize; dim];
        for i in (0..phi.len()).filter(|&i| self.inside[i] && phi[i] < reach) {
            for (k, m) in self.lat.multi_index(i).into_iter().enumerate() {
                lo[k] = lo[k].min(m);
                hi[k] = hi[k].max(m);
            }
        }
        if lo.iter().zip(&hi).any(|(l, u)| l > u) {
            return;
        }
        for k in 0..dim {
            lo[k] = lo[k].saturating_sub(3).max(1);
            hi[k] = (hi[k] + 3).min(shape[k] - 2);
        }
        let box_nodes = |visit: &mut dyn FnMut(usize)| {
            let mut m = lo.clone();
            loop {
                visit(m.iter().zip(&self.strides).map(|(a, s)| a * s).sum());
                let mut k = dim;
                loop {
                    if k == 0 {
                        return;
                    }
                    k -= 1;
                    if m[k] < hi[k] {
                        m[k] += 1;
                        break;
                    }
                    m[k] = lo[k];
                }
            }
        };
        let mut dist = vec![f64::INFINITY; phi.len()];
        let mut fixed = vec![false; phi.len()];
        box_nodes(&mut |i| {
            if !self.kept[i] {
                return;
            }
            if !self.inside[i] && phi[i] < 0.0 {
                dist[i] = -phi[i];
                fixed[i] = true;
                return;
            }
            let crossing = self.axes.iter().any(|a| {
                [i as isize + a, i as isize - a].iter().any(|&j| (phi[j as usize] >= 0.0) != (phi[i] >= 0.0))
            });
            if crossing {
                let g = self.gradient(phi, i);
                let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                // a node next to a sign change is within one cell of the zero set
                dist[i] = (phi[i].abs() / gn).min(self.h);
                fixed[i] = true;
            }
        });
        let h = self.h;
        let mut order: Vec<usize> = Vec::new();
        box_nodes(&mut |i| order.push(i));
        // the box is visited in lexicographic order; the 2^dim sweep directions
        // are obtained by reflecting each axis
        let extent: Vec<usize> = (0..dim).map(|k| hi[k] - lo[k]).collect();
        let base: usize = lo.iter().zip(&self.strides).map(|(a, s)| a * s).sum();
        for pass in 0..2 * (1usize << dim) {
            let flip = pass % (1 << dim);
            for &i in &order {
                let j = if flip == 0 {
                    i
                } else {
                    // reflect the axes selected by `flip` within the box
                    let mut rel = i - base;
                    let mut out = base;
                    for k in 0..dim {
                        let c = rel / self.strides[k];
                        rel %= self.strides[k];
                        let c = if flip >> k & 1 == 1 { extent[k] - c } else { c };
                        out += c * self.strides[k];
                    }
                    out
                };
                if fixed[j] || !self.kept[j] {
                    continue;
                }
                let mut a = [f64::INFINITY; 3];
                for (k, s) in self.axes.iter().enumerate() {
                    a[k] = dist[(j as isize + s) as usize].min(dist[(j as isize - s) as usize]);
                }
                let a = &mut a[..dim];
                a.sort_by(f64::total_cmp);
                let mut cand = a[0] + h;
                let (mut s1, mut s2) = (a[0], a[0] * a[0]);
                for m in 1..dim {
                    if cand <= a[m] {
                        break;
                    }
                    s1 += a[m];
                    s2 += a[m] * a[m];
                    let n = (m + 1) as f64;
                    let disc = s1 * s1 - n * (s2 - h * h);
                    cand = (s1 + disc.max(0.0).sqrt()) / n;
                }
                if cand < dist[j] {
                    dist[j] = cand;
                }
            }
        }
        box_nodes(&mut |i| {
            if self.kept[i] && (self.inside[i] || phi[i] >= 0.0) && dist[i].is_finite() {
                phi[i] = if phi[i] >= 0.0 { dist[i] } else { -dist[i] };
            }
        });
    }
}

/// Solves on `domain` with data `boundary` at spacing `h`.
pub fn solve_mincurv_with(
    domain: &dyn ConvexDomain,
    h: f64,
    cfg: &MinCurvConfig,
    boundary: &dyn BoundaryData,
) -> Result<MinCurvField> {
    let dim = domain.dim();
    if !(2..=3).contains(&dim) {
        return Err(Error::InvalidDimension(format!("grid solver supports dimension 2 or 3, got {dim}")));
    }
    if !(h > 0.0) || cfg.stencil_radius == 0 || !(cfg.cfl > 0.0) || cfg.reinit_every == 0 {
        return Err(Error::InvalidArgument(format!(
            "need h > 0, stencil radius >= 1, positive cfl and reinit interval, got h={h}, r={}",
            cfg.stencil_radius
        )));
    }
    let r = cfg.stencil_radius;
    // ghosts within reach of a stencil evolve once reached; a second layer
    // of the same depth is only reinitialized
    let layer = (r as f64 * (dim as f64).sqrt()).ceil() as usize + 1;
    let lat = Lattice::covering(domain, h, 2 * layer + r + 2);
    let points: Vec<Vec<f64>> = (0..lat.len()).map(|i| lat.point(i)).collect();
    let sd: Vec<f64> = points.par_iter().map(|x| domain.exact_signed_distance(x)).collect();
    let depth = sd.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if depth < cfg.min_inradius_cells * h {
        return Err(Error::GridTooCoarse(format!(
            "{:.1} cells across the inradius, need {}",
            depth / h,
            cfg.min_inradius_cells
        )));
    }
    let inside: Vec<bool> = sd.iter().map(|s| *s > 1e-12).collect();
    let kept: Vec<bool> = sd.iter().map(|s| *s > -((2 * layer) as f64 + 0.5) * h).collect();
    let flow = Flow::new(&lat, &inside, &kept, cfg);

    // unreached ghost nodes: phi = base + rate * t
    let ghosts: Vec<usize> = (0..lat.len()).filter(|&i| kept[i] && !inside[i]).collect();
    let ghost_law: Vec<(f64, f64)> = ghosts
        .par_iter()
        .map(|&i| match boundary.slope(&points[i]) {
            None => (0.0, 0.0),
            Some(s) => {
                let rate = 1.0 / s.max(MIN_SLOPE);
                (-boundary.value(&points[i]) * rate, rate)
            }
        })
        .collect();
    let dynamic_ghosts = ghost_law.iter().any(|(_, rate)| *rate != 0.0);
    // once reached, a ghost node follows the reinitialization
    let set_ghosts = |phi: &mut [f64], t: f64| {
        for (&i, (base, rate)) in ghosts.iter().zip(&ghost_law) {
            let v = base + rate * t;
            if v < 0.0 || phi[i] < 0.0 {
                phi[i] = v;
            }
        }
    };

    let mut phi: Vec<f64> = sd.iter().map(|s| -s).collect();
    set_ghosts(&mut phi, 0.0);
    let width = cfg.band_cells * h;
    let reach = width + 2.0 * h;
    flow.reinitialize(&mut phi, reach);

    let dt = cfg.cfl * h * h;
    let cell = h.powi(dim as i32);
    let stop = (cfg.stop_cells * h).powi(dim as i32);
    let (lo, hi) = domain.bounding_box();
    let diameter2: f64 = lo.iter().zip(&hi).map(|(a, b)| (b - a) * (b - a)).sum();
    // a ball containing the domain is swept out by time radius^2
    let t_max = diameter2 + 1.0;

    let mut arrival = vec![f64::NAN; lat.len()];
    let mut history = Vec::new();
    let mut t = 0.0;
    let mut steps = 0usize;
    let mut band: Vec<usize> = Vec::new();
    loop {
        if steps.is_multiple_of(cfg.reinit_every) {
            if steps > 0 {
                flow.reinitialize(&mut phi, reach);
            }
            for i in 0..lat.len() {
                if inside[i] && phi[i] >= 0.0 && arrival[i].is_nan() {
                    arrival[i] = t;
                }
            }
            let remaining = (0..lat.len()).filter(|&i| inside[i] && phi[i] < 0.0).count() as f64 * cell;
            history.push(remaining);
            if remaining < stop {
                let rest = if dim == 2 {
                    remaining / std::f64::consts::PI
                } else {
                    (3.0 * remaining / (4.0 * std::f64::consts::PI)).powf(2.0 / 3.0)
                };
                for i in 0..lat.len() {
                    if inside[i] && arrival[i].is_nan() {
                        arrival[i] = t + rest;
                    }
                }
                break;
            }
            band = flow.band(&phi, width);
        }
        if steps >= cfg.max_steps || t > t_max {
            let residual = history.last().copied().unwrap_or(f64::NAN);
            return Err(Error::NoConvergence { iterations: steps, residual, history });
        }
        let next: Vec<f64> = band.par_iter().map(|&i| phi[i] + dt * flow.speed(&phi, i)).collect();
        for (&i, v) in band.iter().zip(next) {
            if inside[i] && phi[i] < 0.0 && v >= 0.0 && arrival[i].is_nan() {
                arrival[i] = t + dt * (-phi[i] / (v - phi[i]));
            }
            phi[i] = v;
        }
        t += dt;
        steps += 1;
        if dynamic_ghosts {
            set_ghosts(&mut phi, t);
        }
    }

    let values: Vec<f64> = (0..lat.len())
        .map(|i| if inside[i] { arrival[i] } else { boundary.value(&points[i]) })
        .collect();
    let node_residual: Vec<f64> =
        (0..lat.len()).into_par_iter().map(|i| flow.residual(&values, i).unwrap_or(f64::NAN)).collect();
    Ok(MinCurvField { lattice: lat, values, inside, node_residual, stencil_radius: r, steps, history })
}


/// Solves on a planar polygon with zero data, or on the chart of the
/// 4-simplex with each facet carrying the planar solution of the 3-simplex.
pub fn solve_mincurv(k: &PolytopeK, h: f64, stencil_radius: usize) -> Result<MinCurvField> {
    solve_mincurv_cfg(k, h, &MinCurvConfig::with_radius(stencil_radius))
}

pub fn solve_mincurv_cfg(k: &PolytopeK, h: f64, cfg: &MinCurvConfig) -> Result<MinCurvField> {
    match k.dim() {
        2 => solve_mincurv_with(k, h, cfg, &ZeroBoundary),
        3 => {
            let boundary = simplex_facet_boundary(4, h / 2.0, cfg)?;
            if k.vertices().len() != 4 {
                return Err(Error::InvalidArgument("facet data needs a simplex-shaped polytope".into()));
            }
            solve_mincurv_with(k, h, cfg, &boundary)
        }
        d => Err(Error::InvalidDimension(format!("grid solver supports dimension 2 or 3, got {d}"))),
    }
}

/// Facet data for the chart of the `d`-simplex, solving the `(d-1)`-simplex at `h_face`.
pub fn simplex_facet_boundary(d: usize, h_face: f64, cfg: &MinCurvConfig) -> Result<FacetBoundary> {
    if d != 4 {
        return Err(Error::InvalidDimension(format!("facet recursion implemented for d = 4, got {d}")));
    }
    let face = PolytopeK::simplex(d - 1)?;
    let face_solution = solve_mincurv_with(&face, h_face, cfg, &ZeroBoundary)?;
    FacetBoundary::new(d, face_solution)
}

/// Solutions at `h` and `h/2` and the spread between their maxima.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub coarse: FieldSummary,
    pub fine: FieldSummary,
    /// `max_fine + (max_fine - max_coarse)`, first-order extrapolation.
    pub extrapolated: f64,
    /// `|max_fine - max_coarse|`.
    pub error_bar: f64,
}

pub fn refine(k: &PolytopeK, h: f64, cfg: &MinCurvConfig) -> Result<(Refinement, MinCurvField)> {
    let coarse = solve_mincurv_cfg(k, h, cfg)?;
    let fine = solve_mincurv_cfg(k, h / 2.0, cfg)?;
    let (mc, mf) = (coarse.max_value(), fine.max_value());
    Ok((
        Refinement { coarse: coarse.summary(), fine: fine.summary(), extrapolated: 2.0 * mf - mc, error_bar: (mf - mc).abs() },
        fine,
    ))
}

/// Points on the relative interior of facet `j` (opposite vertex `j`) of the
/// chart of the `d`-simplex, keeping barycentric weights at least `margin`.
pub fn facet_samples(d: usize, j: usize, n: usize, margin: f64) -> Result<Vec<Vec<f64>>> {
    let u = build_isometry(d)?;
    let mut out = Vec::with_capacity(n);
    let mut k = 0u64;
    while out.len() < n {
        k += 1;
        let r = [super::halton(k, 2), super::halton(k, 3), super::halton(k, 5)];
        let mut w: Vec<f64> = r.iter().take(d - 1).map(|v| -(1.0 - v).ln()).collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= s);
        if w.iter().any(|v| *v < margin) {
            continue;
        }
        let mut y = Vec::with_capacity(d);
        let mut it = w.into_iter();
        for i in 0..d {
            y.push(if i == j { 0.0 } else { it.next().expect("d-1 weights") });
        }
        let y = SimplexPoint::from_clamped(y, 1e-12)?;
        out.push(u.project(y.coords()));
        if k > 1_000_000 {
            break;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Ball;

    #[test]
    fn stencil_counts() {
        assert_eq!(stencil_directions(2, 1), vec![vec![0, 1], vec![1, -1], vec![1, 0], vec![1, 1]]);
        assert_eq!(stencil_directions(2, 2).len(), 8);
        assert_eq!(stencil_directions(3, 1).len(), 13);
        assert_eq!(stencil_directions(3, 2).len(), 49);
    }

    fn paraboloid_error(f: &MinCurvField) -> f64 {
        let mut err: f64 = 0.0;
        for i in 0..f.values().len() {
            if f.inside_mask()[i] {
                let p = f.lattice().point(i);
                let r2: f64 = p.iter().map(|c| c * c).sum();
                err = err.max((f.values()[i] - (1.0 - r2)).abs());
            }
        }
        err
    }

    #[test]
    fn disk_recovers_paraboloid() {
        let f = solve_mincurv_with(&Ball::unit(2), 0.05, &MinCurvConfig::default(), &ZeroBoundary).unwrap();
        let err = paraboloid_error(&f);
        assert!(err < 0.05, "max error {err}");
        assert!(f.quasi_concavity_violation() < 1e-9);
    }

    #[test]
    fn ball_in_three_dimensions() {
        // the paraboloid 1 - |x|^2 solves the equation in any dimension
        let f = solve_mincurv_with(&Ball::unit(3), 0.1, &MinCurvConfig::default(), &ZeroBoundary).unwrap();
        let err = paraboloid_error(&f);
        assert!(err < 0.05, "max error {err}");
    }

    #[test]
    fn nonconvergence_is_reported() {
        let cfg = MinCurvConfig { max_steps: 5, ..MinCurvConfig::default() };
        match solve_mincurv_with(&Ball::unit(2), 0.05, &cfg, &ZeroBoundary) {
            Err(Error::NoConvergence { iterations, history, .. }) => {
                assert_eq!(iterations, 5);
                assert!(!history.is_empty());
            }
            other => panic!("expected nonconvergence, got {other:?}"),
        }
    }

    #[test]
    fn coarse_grid_rejected() {
        assert!(matches!(
            solve_mincurv_with(&Ball::unit(2), 0.5, &MinCurvConfig::default(), &ZeroBoundary),
            Err(Error::GridTooCoarse(_))
        ));
    }

    #[test]
    fn facet_samples_lie_on_the_facet() {
        let k = PolytopeK::simplex(4).unwrap();
        for j in 0..4 {
            for x in facet_samples(4, j, 20, 0.05).unwrap() {
                assert!(k.signed_boundary_distance(&x).abs() < 1e-12);
                assert!(k.halfspaces()[j].slack(&x).abs() < 1e-12);
            }
        }
    }
}
