use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::domain::ConvexDomain;
use crate::error::{Error, Result};
use crate::fmt::sig12;
use crate::grid::Lattice;

/// Arrival time sampled on a square lattice covering a planar domain.
/// Nodes outside the domain carry `w = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrivalField {
    lattice: Lattice,
    values: Vec<f64>,
    inside: Vec<bool>,
    /// Nodal gradient, `[dx, dy]` per node.
    gradient: Vec<[f64; 2]>,
    critical_point: [f64; 2],
    max_value: f64,
}

impl ArrivalField {
    pub fn new(lattice: Lattice, values: Vec<f64>, inside: Vec<bool>) -> Result<Self> {
        if lattice.dim() != 2 || values.len() != lattice.len() || inside.len() != lattice.len() {
            return Err(Error::InvalidDimension("arrival field needs a 2D lattice and matching data".into()));
        }
        let max_value = (0..values.len())
            .filter(|&i| inside[i])
            .map(|i| values[i])
            .fold(f64::NEG_INFINITY, f64::max);
        // the solvers assign one value to the whole region around the maximum
        let tie = 1e-12 * max_value.abs().max(1.0);
        let (mut c, mut count) = ([0.0, 0.0], 0.0);
        for i in (0..values.len()).filter(|&i| inside[i] && values[i] >= max_value - tie) {
            let p = lattice.point(i);
            c = [c[0] + p[0], c[1] + p[1]];
            count += 1.0;
        }
        let critical_point = if count > 0.0 { [c[0] / count, c[1] / count] } else { [f64::NAN; 2] };
        let mut f = Self {
            lattice,
            values,
            inside,
            gradient: Vec::new(),
            critical_point,
            max_value: max_value.max(0.0),
        };
        f.gradient = (0..f.values.len()).map(|i| f.nodal_gradient(i)).collect();
        Ok(f)
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn inside_mask(&self) -> &[bool] {
        &self.inside
    }

    pub fn h(&self) -> f64 {
        self.lattice.h
    }

    pub fn max_value(&self) -> f64 {
        self.max_value
    }

    /// Mean position of the nodes attaining the maximum.
    pub fn critical_point(&self) -> [f64; 2] {
        self.critical_point
    }

    /// Bilinear interpolation of the nodal values.
    pub fn value(&self, x: &[f64]) -> f64 {
        self.lattice.interpolate(&self.values, x)
    }

    /// Bilinear interpolation of nodal central differences.
    pub fn gradient(&self, x: &[f64]) -> [f64; 2] {
        let (cell, frac) = self.lattice.locate(x);
        let ny = self.lattice.shape[1];
        let base = cell[0] * ny + cell[1];
        let corners = [
            (base, (1.0 - frac[0]) * (1.0 - frac[1])),
            (base + 1, (1.0 - frac[0]) * frac[1]),
            (base + ny, frac[0] * (1.0 - frac[1])),
            (base + ny + 1, frac[0] * frac[1]),
        ];
        let mut g = [0.0, 0.0];
        for (i, w) in corners {
            g[0] += w * self.gradient[i][0];
            g[1] += w * self.gradient[i][1];
        }
        g
    }

    /// Central differences; one-sided where a neighbor lies outside the domain.
    fn nodal_gradient(&self, i: usize) -> [f64; 2] {
        if !self.inside[i] {
            return [0.0, 0.0];
        }
        let h = self.lattice.h;
        let mut g = [0.0; 2];
        for (k, gk) in g.iter_mut().enumerate() {
            let mut e = [0i32; 2];
            e[k] = 1;
            let fwd = self.lattice.offset(i, &e).filter(|&j| self.inside[j]);
            e[k] = -1;
            let bwd = self.lattice.offset(i, &e).filter(|&j| self.inside[j]);
            *gk = match (fwd, bwd) {
                (Some(f), Some(b)) => (self.values[f] - self.values[b]) / (2.0 * h),
                (Some(f), None) => (self.values[f] - self.values[i]) / h,
                (None, Some(b)) => (self.values[i] - self.values[b]) / h,
                (None, None) => 0.0,
            };
        }
        g
    }

    /// Largest second difference over interior nodes, an estimate of `||D^2 w||`.
    pub fn hessian_bound(&self) -> f64 {
        let h2 = self.lattice.h * self.lattice.h;
        let mut m: f64 = 0.0;
        for i in 0..self.values.len() {
            if !self.inside[i] {
                continue;
            }
            for e in [[1, 0], [0, 1]] {
                let (Some(f), Some(b)) = (self.lattice.offset(i, &e), self.lattice.offset(i, &[-e[0], -e[1]]))
                else {
                    continue;
                };
                if self.inside[f] && self.inside[b] {
                    m = m.max((self.values[f] - 2.0 * self.values[i] + self.values[b]).abs() / h2);
                }
            }
        }
        m
    }

    /// Number of inside nodes within `tol` of the maximum, and whether they
    /// form one 4-connected region.
    pub fn max_region(&self, tol: f64) -> (usize, bool) {
        let members: Vec<usize> = (0..self.values.len())
            .filter(|&i| self.inside[i] && self.values[i] >= self.max_value - tol)
            .collect();
        if members.is_empty() {
            return (0, true);
        }
        let mut seen = vec![false; self.values.len()];
        let mut stack = vec![members[0]];
        seen[members[0]] = true;
        let mut reached = 0;
        while let Some(i) = stack.pop() {
            reached += 1;
            for e in [[1, 0], [-1, 0], [0, 1], [0, -1]] {
                if let Some(j) = self.lattice.offset(i, &e) {
                    if !seen[j] && self.inside[j] && self.values[j] >= self.max_value - tol {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        (members.len(), reached == members.len())
    }

    /// Checks nonnegativity, the `area / pi` ceiling, and a single maximum region.
    pub fn check_invariants(&self, area: f64, tol: f64) -> FieldInvariants {
        let min_inside = (0..self.values.len())
            .filter(|&i| self.inside[i])
            .map(|i| self.values[i])
            .fold(f64::INFINITY, f64::min);
        let outside_zero = (0..self.values.len()).all(|i| self.inside[i] || self.values[i] == 0.0);
        let (region, connected) = self.max_region(tol);
        FieldInvariants {
            nonnegative: min_inside >= 0.0 && outside_zero,
            below_ceiling: self.max_value <= area / std::f64::consts::PI + tol,
            max_region_nodes: region,
            single_max_region: connected,
        }
    }

    /// Superlevel sets are convex: every node inside the hull of a superlevel
    /// set's nodes lies in the set, up to a distance `h` to it.
    pub fn superlevel_sets_convex(&self, levels: usize) -> bool {
        (1..levels).all(|k| {
            let c = self.max_value * k as f64 / levels as f64;
            let pts: Vec<[f64; 2]> = (0..self.values.len())
                .filter(|&i| self.inside[i] && self.values[i] >= c)
                .map(|i| {
                    let p = self.lattice.point(i);
                    [p[0], p[1]]
                })
                .collect();
            let hull = convex_hull(&pts);
            if hull.len() < 3 {
                return true;
            }
            let h = self.lattice.h;
            (0..self.values.len()).filter(|&i| self.inside[i] && self.values[i] < c).all(|i| {
                let p = self.lattice.point(i);
                hull_depth(&hull, [p[0], p[1]]) <= h * (1.0 + 1e-9)
            })
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "y", "w"])?;
        for i in 0..self.values.len() {
            let p = self.lattice.point(i);
            w.write_record([sig12(p[0]), sig12(p[1]), sig12(self.values[i])])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads `x, y, w` rows written by [`ArrivalField::write_csv`]; the domain
    /// decides which nodes are inside.
    pub fn read_csv<R: Read>(input: R, domain: &dyn ConvexDomain) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let v = rec
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            if v.len() != 3 {
                return Err(Error::Parse("expected columns x, y, w".into()));
            }
            rows.push([v[0], v[1], v[2]]);
        }
        let lattice = lattice_from_points(&rows)?;
        let mut values = vec![0.0; lattice.len()];
        for row in &rows {
            let (cell, frac) = lattice.locate(&row[..2]);
            let ix = cell[0] + frac[0].round() as usize;
            let iy = cell[1] + frac[1].round() as usize;
            values[lattice.flat_index(&[ix, iy])] = row[2];
        }
        let inside = (0..lattice.len()).map(|i| domain.signed_distance(&lattice.point(i)) >= 0.0).collect();
        Self::new(lattice, values, inside)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldInvariants {
    pub nonnegative: bool,
    pub below_ceiling: bool,
    pub max_region_nodes: usize,
    pub single_max_region: bool,
}

fn lattice_from_points(rows: &[[f64; 3]]) -> Result<Lattice> {
    let mut xs: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let mut ys: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    for v in [&mut xs, &mut ys] {
        v.sort_by(f64::total_cmp);
        v.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    }
    if xs.len() < 2 || ys.len() < 2 || xs.len() * ys.len() != rows.len() {
        return Err(Error::Parse("field rows do not form a full lattice".into()));
    }
    let h = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
    Ok(Lattice { origin: vec![xs[0], ys[0]], h, shape: vec![xs.len(), ys.len()] })
}

/// Monotone chain, counter-clockwise, collinear points dropped.
pub(crate) fn convex_hull(pts: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut p = pts.to_vec();
    p.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let turn = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * p.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> =
            if pass == 0 { Box::new(p.iter()) } else { Box::new(p.iter().rev()) };
        for &q in iter {
            while hull.len() >= start + 2 && turn(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    hull
}

/// Depth of `q` inside a counter-clockwise convex polygon (negative outside).
fn hull_depth(hull: &[[f64; 2]], q: [f64; 2]) -> f64 {
    let n = hull.len();
    (0..n)
        .map(|i| {
            let (a, b) = (hull[i], hull[(i + 1) % n]);
            let (tx, ty) = (b[0] - a[0], b[1] - a[1]);
            (tx * (q[1] - a[1]) - ty * (q[0] - a[0])) / tx.hypot(ty)
        })
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Ball;

    fn paraboloid(h: f64) -> (ArrivalField, Ball) {
        let disk = Ball::unit(2);
        let lat = Lattice::covering(&disk, h, 2);
        let inside: Vec<bool> = (0..lat.len()).map(|i| disk.signed_distance(&lat.point(i)) >= 0.0).collect();
        let values = (0..lat.len())
            .map(|i| {
                let p = lat.point(i);
                if inside[i] {
                    (1.0 - p[0] * p[0] - p[1] * p[1]).max(0.0)
                } else {
                    0.0
                }
            })
            .collect();
        (ArrivalField::new(lat, values, inside).unwrap(), disk)
    }

    #[test]
    fn interpolation_and_gradient() {
        let (f, _) = paraboloid(0.02);
        let x = [0.31, -0.22];
        assert!((f.value(&x) - (1.0 - 0.31f64.powi(2) - 0.22f64.powi(2))).abs() < 1e-3);
        let g = f.gradient(&x);
        assert!((g[0] + 0.62).abs() < 1e-6 && (g[1] - 0.44).abs() < 1e-6, "{g:?}");
        assert!((f.hessian_bound() - 2.0).abs() < 1e-9);
        assert_eq!(f.critical_point(), [0.0, 0.0]);
        assert_eq!(f.max_value(), 1.0);
    }

    #[test]
    fn invariants_and_convexity() {
        let (f, _) = paraboloid(0.05);
        let inv = f.check_invariants(std::f64::consts::PI, 1e-9);
        assert!(inv.nonnegative && inv.below_ceiling && inv.single_max_region);
        assert_eq!(inv.max_region_nodes, 1);
        assert!(f.superlevel_sets_convex(8));
    }

    #[test]
    fn csv_round_trip() {
        let (f, disk) = paraboloid(0.1);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let g = ArrivalField::read_csv(buf.as_slice(), &disk).unwrap();
        assert_eq!(g.lattice().shape, f.lattice().shape);
        for (a, b) in f.values().iter().zip(g.values()) {
            assert!((a - b).abs() < 1e-11);
        }
    }

    #[test]
    fn hull_of_square() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5], [0.5, 0.0]];
        let hull = convex_hull(&pts);
        assert_eq!(hull.len(), 4);
        assert!((hull_depth(&hull, [0.5, 0.5]) - 0.5).abs() < 1e-15);
        assert!((hull_depth(&hull, [2.0, 0.5]) + 1.0).abs() < 1e-15);
    }
}
