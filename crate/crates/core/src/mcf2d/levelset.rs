//! Eulerian level-set solver for the arrival time of the halved curvature flow.
//!
//! `phi` is a signed distance (negative inside) evolved by
//! `phi_t = kappa |grad phi| / 2`, with the curvature taken in divergence form
//! from face-centred unit normals. Each node's arrival time is the moment its
//! sign flips.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::field::ArrivalField;
use crate::domain::ConvexDomain;
use crate::error::{Error, Result};
use crate::grid::Lattice;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSetConfig {
    /// Steps between signed-distance reinitializations.
    pub reinit_every: usize,
    /// Narrow band half-width in cells.
    pub band_cells: f64,
    /// `dt = cfl * h^2`.
    pub cfl: f64,
    /// Stop when the enclosed area drops below `(stop_cells * h)^2`.
    pub stop_cells: f64,
    /// Nodes required across the inradius.
    pub min_inradius_cells: f64,
}

impl Default for LevelSetConfig {
    fn default() -> Self {
        Self { reinit_every: 20, band_cells: 6.0, cfl: 0.3, stop_cells: 10.0, min_inradius_cells: 40.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSetRun {
    pub field: ArrivalField,
    pub steps: usize,
    /// Flow time at the stop.
    pub final_time: f64,
    /// Area still enclosed at the stop.
    pub final_area: f64,
}

pub fn arrival_grid(domain: &dyn ConvexDomain, h: f64) -> Result<ArrivalField> {
    Ok(arrival_grid_with(domain, h, &LevelSetConfig::default())?.field)
}

pub fn arrival_grid_with(domain: &dyn ConvexDomain, h: f64, cfg: &LevelSetConfig) -> Result<LevelSetRun> {
    if domain.dim() != 2 {
        return Err(Error::InvalidDimension(format!("level-set solver is planar, got dim {}", domain.dim())));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("grid spacing must be positive, got {h}")));
    }
    let margin = cfg.band_cells.ceil() as usize + 4;
    let lat = Lattice::covering(domain, h, margin);
    let n = lat.len();
    let sd: Vec<f64> = (0..n).map(|i| domain.exact_signed_distance(&lat.point(i))).collect();
    let depth = sd.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if depth < cfg.min_inradius_cells * h {
        return Err(Error::GridTooCoarse(format!(
            "{:.1} nodes across the inradius, need {}",
            depth / h,
            cfg.min_inradius_cells
        )));
    }
    let inside: Vec<bool> = sd.iter().map(|s| *s >= 0.0).collect();
    let mut phi: Vec<f64> = sd.iter().map(|s| -s).collect();
    let mut arrival: Vec<f64> = (0..n).map(|i| if inside[i] && phi[i] < 0.0 { f64::NAN } else { 0.0 }).collect();

    let solver = Solver { nx: lat.shape[0], ny: lat.shape[1], h };
    let dt = cfg.cfl * h * h;
    let stop_area = (cfg.stop_cells * h).powi(2);
    let band_width = cfg.band_cells * h;
    let max_steps = (10.0 * domain.measure() / (std::f64::consts::PI * dt)).ceil() as usize + 1000;

    let mut t = 0.0;
    let mut steps = 0usize;
    let mut band: Vec<usize> = Vec::new();
    let area = loop {
        if steps.is_multiple_of(cfg.reinit_every) {
            solver.reinitialize(&mut phi, band_width + 2.0 * h);
            for i in 0..n {
                if arrival[i].is_nan() && phi[i] >= 0.0 {
                    arrival[i] = t;
                }
            }
            let area = solver.negative_area(&phi);
            if area < stop_area {
                break area;
            }
            band = solver.band(&phi, band_width);
        }
        if steps >= max_steps {
            return Err(Error::NoConvergence { iterations: steps, residual: solver.negative_area(&phi), history: vec![] });
        }
        let updated: Vec<f64> = band
            .par_iter()
            .map(|&i| phi[i] + dt * 0.5 * solver.curvature_speed(&phi, i))
            .collect();
        for (&i, &new) in band.iter().zip(&updated) {
            let old = phi[i];
            if arrival[i].is_nan() && old < 0.0 && new >= 0.0 {
                arrival[i] = t + dt * (-old) / (new - old);
            }
            phi[i] = new;
        }
        t += dt;
        steps += 1;
    };
    let rest = t + area / std::f64::consts::PI;
    for a in arrival.iter_mut().filter(|a| a.is_nan()) {
        *a = rest;
    }
    let field = ArrivalField::new(lat, arrival, inside)?;
    Ok(LevelSetRun { field, steps, final_time: t, final_area: area })
}

struct Solver {
    nx: usize,
    ny: usize,
    h: f64,
}

impl Solver {
    /// Nodes with `|phi| < width` away from the lattice rim.
    fn band(&self, phi: &[f64], width: f64) -> Vec<usize> {
        let mut out = Vec::new();
        for ix in 2..self.nx - 2 {
            for iy in 2..self.ny - 2 {
                let i = ix * self.ny + iy;
                if phi[i].abs() < width {
                    out.push(i);
                }
            }
        }
        out
    }

    /// `kappa |grad phi|` with `kappa` clamped to `1/h`.
    fn curvature_speed(&self, phi: &[f64], i: usize) -> f64 {
        let ny = self.ny as isize;
        let f = |dx: isize, dy: isize| phi[(i as isize + dx * ny + dy) as usize];
        let eps = 1e-12;
        let c = f(0, 0);
        let unit_x = |s: isize| {
            // face between (0,0) and (s,0)
            let gx = (f(s, 0) - c) * s as f64;
            let gy = 0.25 * (f(0, 1) - f(0, -1) + f(s, 1) - f(s, -1));
            gx / (gx * gx + gy * gy + eps).sqrt()
        };
        let unit_y = |s: isize| {
            let gy = (f(0, s) - c) * s as f64;
            let gx = 0.25 * (f(1, 0) - f(-1, 0) + f(1, s) - f(-1, s));
            gy / (gx * gx + gy * gy + eps).sqrt()
        };
        let h = self.h;
        let kappa = ((unit_x(1) - unit_x(-1) + unit_y(1) - unit_y(-1)) / h).clamp(-1.0 / h, 1.0 / h);
        let gx = (f(1, 0) - f(-1, 0)) / (2.0 * h);
        let gy = (f(0, 1) - f(0, -1)) / (2.0 * h);
        kappa * gx.hypot(gy)
    }

    /// Area of `{phi < 0}` from the piecewise-linear interpolant on a
    /// two-triangle split of each cell.
    fn negative_area(&self, phi: &[f64]) -> f64 {
        let half = 0.5 * self.h * self.h;
        let ny = self.ny;
        let mut area = 0.0;
        for ix in 0..self.nx - 1 {
            for iy in 0..ny - 1 {
                let i = ix * ny + iy;
                let (a, b, c, d) = (phi[i], phi[i + ny], phi[i + ny + 1], phi[i + 1]);
                if a >= 0.0 && b >= 0.0 && c >= 0.0 && d >= 0.0 {
                    continue;
                }
                area += half * (negative_fraction([a, b, c]) + negative_fraction([a, c, d]));
            }
        }
        area
    }

    /// Rebuilds `phi` as a signed distance inside the box that covers
    /// `{phi < reach}`, keeping the zero level set in place.
    fn reinitialize(&self, phi: &mut [f64], reach: f64) {
        let (nx, ny, h) = (self.nx, self.ny, self.h);
        let (mut x0, mut x1, mut y0, mut y1) = (nx, 0, ny, 0);
        for ix in 0..nx {
            for iy in 0..ny {
                if phi[ix * ny + iy] < reach {
                    x0 = x0.min(ix);
                    x1 = x1.max(ix);
                    y0 = y0.min(iy);
                    y1 = y1.max(iy);
                }
            }
        }
        if x0 > x1 {
            return;
        }
        let pad = 3;
        let (x0, x1) = (x0.saturating_sub(pad).max(1), (x1 + pad).min(nx - 2));
        let (y0, y1) = (y0.saturating_sub(pad).max(1), (y1 + pad).min(ny - 2));

        let mut dist = vec![f64::INFINITY; phi.len()];
        let mut fixed = vec![false; phi.len()];
        let mut any = false;
        for ix in x0..=x1 {
            for iy in y0..=y1 {
                let i = ix * ny + iy;
                let p = phi[i];
                let crosses = [i - ny, i + ny, i - 1, i + 1].iter().any(|&j| p * phi[j] <= 0.0 && (p != 0.0 || phi[j] != 0.0));
                if crosses || p == 0.0 {
                    let gx = (phi[i + ny] - phi[i - ny]) / (2.0 * h);
                    let gy = (phi[i + 1] - phi[i - 1]) / (2.0 * h);
                    let g = gx.hypot(gy).max(1e-3);
                    dist[i] = p.abs() / g;
                    fixed[i] = true;
                    any = true;
                }
            }
        }
        if !any {
            return;
        }
        let xs: Vec<usize> = (x0..=x1).collect();
        let ys: Vec<usize> = (y0..=y1).collect();
        for order in 0..4 {
            let xiter: Vec<usize> = if order & 1 == 0 { xs.clone() } else { xs.iter().rev().copied().collect() };
            let yiter: Vec<usize> = if order & 2 == 0 { ys.clone() } else { ys.iter().rev().copied().collect() };
            for &ix in &xiter {
                for &iy in &yiter {
                    let i = ix * ny + iy;
                    if fixed[i] {
                        continue;
                    }
                    let get = |jx: usize, jy: usize| {
                        if jx < x0 || jx > x1 || jy < y0 || jy > y1 {
                            f64::INFINITY
                        } else {
                            dist[jx * ny + jy]
                        }
                    };
                    let a = get(ix - 1, iy).min(get(ix + 1, iy));
                    let b = get(ix, iy - 1).min(get(ix, iy + 1));
                    let cand = if (a - b).abs() >= h {
                        a.min(b) + h
                    } else {
                        0.5 * (a + b + (2.0 * h * h - (a - b) * (a - b)).sqrt())
                    };
                    if cand < dist[i] {
                        dist[i] = cand;
                    }
                }
            }
        }
        for ix in x0..=x1 {
            for iy in y0..=y1 {
                let i = ix * ny + iy;
                if dist[i].is_finite() {
                    phi[i] = if phi[i] < 0.0 { -dist[i] } else { dist[i] };
                }
            }
        }
    }
}

/// Fraction of a triangle where the linear interpolant of `v` is negative.
fn negative_fraction(v: [f64; 3]) -> f64 {
    let neg = v.iter().filter(|x| **x < 0.0).count();
    match neg {
        0 => 0.0,
        3 => 1.0,
        1 | 2 => {
            // isolate the vertex on the minority side
            let lonely_neg = neg == 1;
            let k = v.iter().position(|x| (*x < 0.0) == lonely_neg).expect("minority vertex exists");
            let a = v[k];
            let (b, c) = (v[(k + 1) % 3], v[(k + 2) % 3]);
            let corner = (a / (a - b)) * (a / (a - c));
            if lonely_neg {
                corner
            } else {
                1.0 - corner
            }
        }
        _ => unreachable!(),
    }
}
