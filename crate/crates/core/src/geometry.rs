//! Simplex geometry: the isometric chart between the simplex hyperplane and
//! `R^{d-1}`, the projected polytope `K`, and the face lattice of the simplex.
//!
//! Points of `R^{d-1}` are plain `&[f64]` slices; only simplex points carry a
//! validating newtype.

use serde::{Deserialize, Serialize};

use crate::domain::ConvexDomain;
use crate::error::{Error, Result};

/// Tolerance on `sum(coords) == 1` and on halfspace membership.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// A point of the closed unit simplex `{y in [0,1]^d : sum y = 1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SimplexPoint(Vec<f64>);

impl SimplexPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::InvalidDimension(format!(
                "simplex point needs at least 2 coordinates, got {}",
                coords.len()
            )));
        }
        if let Some(c) = coords.iter().find(|c| !(**c >= 0.0)) {
            return Err(Error::OutsideDomain(format!("negative weight {c}")));
        }
        let sum: f64 = coords.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::OutsideDomain(format!("weights sum to {sum}")));
        }
        Ok(Self(coords))
    }

    /// Clamps round-off negatives (down to `-tol`) to zero and renormalizes.
    pub fn from_clamped(mut coords: Vec<f64>, tol: f64) -> Result<Self> {
        for c in coords.iter_mut() {
            if *c < 0.0 {
                if *c < -tol {
                    return Err(Error::OutsideDomain(format!("weight {c} below -{tol}")));
                }
                *c = 0.0;
            }
        }
        let sum: f64 = coords.iter().sum();
        coords.iter_mut().for_each(|c| *c /= sum);
        Self::new(coords)
    }

    pub fn barycenter(d: usize) -> Self {
        Self(vec![1.0 / d as f64; d])
    }

    pub fn vertex(d: usize, i: usize) -> Self {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        Self(v)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Relative interior: every weight strictly positive.
    pub fn is_interior(&self) -> bool {
        self.0.iter().all(|c| *c > 0.0)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for SimplexPoint {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SimplexPoint> for Vec<f64> {
    fn from(p: SimplexPoint) -> Self {
        p.0
    }
}

impl AsRef<[f64]> for SimplexPoint {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Affine isometry `y -> U (y - offset)` from the hyperplane `{sum y = 1}` onto
/// `R^{d-1}`. `U` has orthonormal rows and annihilates the all-ones vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsometryMap {
    d: usize,
    /// Row-major `(d-1) x d`.
    matrix: Vec<f64>,
    offset: Vec<f64>,
}

/// Gram–Schmidt on `e_1 - e_2, e_2 - e_3, ...`. For `d = 3` this reproduces
/// the rows `(1,-1,0)/sqrt2` and `(1,1,-2)/sqrt6`.
pub fn build_isometry(d: usize) -> Result<IsometryMap> {
    if d < 2 {
        return Err(Error::InvalidDimension(format!("isometry needs d >= 2, got {d}")));
    }
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(d - 1);
    for i in 0..d - 1 {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        v[i + 1] = -1.0;
        for r in &rows {
            let dot = dot(&v, r);
            v.iter_mut().zip(r).for_each(|(a, b)| *a -= dot * b);
        }
        let n = norm(&v);
        v.iter_mut().for_each(|a| *a /= n);
        rows.push(v);
    }
    Ok(IsometryMap {
        d,
        matrix: rows.concat(),
        offset: vec![1.0 / d as f64; d],
    })
}

impl IsometryMap {
    /// Dimension of the ambient simplex space.
    pub fn source_dim(&self) -> usize {
        self.d
    }

    /// Dimension of the chart, `d - 1`.
    pub fn chart_dim(&self) -> usize {
        self.d - 1
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.matrix[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.d - 1).map(|i| self.row(i).to_vec()).collect()
    }

    /// Column `j` of `U`: the image direction of `e_j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.d - 1).map(|i| self.matrix[i * self.d + j]).collect()
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    pub fn project(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.d, "project: dimension mismatch");
        (0..self.d - 1)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(y.iter().zip(&self.offset))
                    .map(|(u, (y, o))| u * (y - o))
                    .sum()
            })
            .collect()
    }

    /// `U^T x + offset`; the result lies on the hyperplane but may leave the simplex.
    pub fn lift(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.d - 1, "lift: dimension mismatch");
        let mut y = self.offset.clone();
        for (i, xi) in x.iter().enumerate() {
            y.iter_mut().zip(self.row(i)).for_each(|(a, u)| *a += u * xi);
        }
        y
    }

    /// Linear part only: maps a tangent vector of the hyperplane.
    pub fn project_vector(&self, v: &[f64]) -> Vec<f64> {
        (0..self.d - 1).map(|i| dot(self.row(i), v)).collect()
    }

    pub fn lift_vector(&self, v: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.d];
        for (i, vi) in v.iter().enumerate() {
            y.iter_mut().zip(self.row(i)).for_each(|(a, u)| *a += u * vi);
        }
        y
    }
}

/// Closed halfspace `normal . x <= offset` with a unit normal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Halfspace {
    /// Distance to the bounding hyperplane, positive on the inside.
    pub fn slack(&self, x: &[f64]) -> f64 {
        self.offset - dot(&self.normal, x)
    }
}

/// Convex polytope in `R^dim` held in both vertex and halfspace form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolytopeK {
    dim: usize,
    vertices: Vec<Vec<f64>>,
    halfspaces: Vec<Halfspace>,
}

impl PolytopeK {
    pub fn new(vertices: Vec<Vec<f64>>, halfspaces: Vec<Halfspace>) -> Result<Self> {
        let dim = vertices
            .first()
            .map(|v| v.len())
            .ok_or_else(|| Error::InvalidArgument("polytope without vertices".into()))?;
        if vertices.iter().any(|v| v.len() != dim) || halfspaces.iter().any(|h| h.normal.len() != dim)
        {
            return Err(Error::InvalidDimension("inconsistent polytope dimensions".into()));
        }
        for h in &halfspaces {
            if (norm(&h.normal) - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument("halfspace normal is not unit".into()));
            }
            for v in &vertices {
                if h.slack(v) < -SIMPLEX_TOL {
                    return Err(Error::InvalidArgument(format!(
                        "vertex {v:?} violates halfspace by {}",
                        -h.slack(v)
                    )));
                }
            }
        }
        Ok(Self { dim, vertices, halfspaces })
    }

    /// `K = U(simplex)` with `U` from [`build_isometry`]; centered at the origin.
    pub fn simplex(d: usize) -> Result<Self> {
        let u = build_isometry(d)?;
        Ok(Self::simplex_in_chart(&u))
    }

    pub fn simplex_in_chart(u: &IsometryMap) -> Self {
        let d = u.source_dim();
        let vertices = (0..d).map(|i| u.project(SimplexPoint::vertex(d, i).coords())).collect();
        // facet opposite vertex i is {y_i = 0}; y_i = (U^T x)_i + 1/d >= 0
        let scale = (1.0 - 1.0 / d as f64).sqrt();
        let halfspaces = (0..d)
            .map(|i| Halfspace {
                normal: u.column(i).iter().map(|c| -c / scale).collect(),
                offset: (1.0 / d as f64) / scale,
            })
            .collect();
        Self { dim: d - 1, vertices, halfspaces }
    }

    /// Convex polygon from its vertices (any order).
    pub fn polygon(mut vertices: Vec<[f64; 2]>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidArgument("polygon needs 3 vertices".into()));
        }
        let n = vertices.len() as f64;
        let c = vertices.iter().fold([0.0, 0.0], |a, v| [a[0] + v[0] / n, a[1] + v[1] / n]);
        vertices.sort_by(|a, b| {
            let ta = (a[1] - c[1]).atan2(a[0] - c[0]);
            let tb = (b[1] - c[1]).atan2(b[0] - c[0]);
            ta.total_cmp(&tb)
        });
        let mut halfspaces = Vec::with_capacity(vertices.len());
        for i in 0..vertices.len() {
            let a = vertices[i];
            let b = vertices[(i + 1) % vertices.len()];
            let (tx, ty) = (b[0] - a[0], b[1] - a[1]);
            let l = tx.hypot(ty);
            // outward normal of a counter-clockwise edge
            let normal = vec![ty / l, -tx / l];
            let offset = normal[0] * a[0] + normal[1] * a[1];
            halfspaces.push(Halfspace { normal, offset });
        }
        Self::new(vertices.into_iter().map(|v| v.to_vec()).collect(), halfspaces)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    pub fn halfspaces(&self) -> &[Halfspace] {
        &self.halfspaces
    }

    pub fn centroid(&self) -> Vec<f64> {
        let n = self.vertices.len() as f64;
        let mut c = vec![0.0; self.dim];
        for v in &self.vertices {
            c.iter_mut().zip(v).for_each(|(a, b)| *a += b / n);
        }
        c
    }

    /// `min_k (offset_k - n_k . x)`: positive inside, zero on the boundary.
    /// Exact Euclidean distance inside; a lower bound on it outside.
    pub fn signed_boundary_distance(&self, x: &[f64]) -> f64 {
        self.halfspaces
            .iter()
            .map(|h| h.slack(x))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.signed_boundary_distance(x) >= -SIMPLEX_TOL
    }

    /// Vertices in counter-clockwise order (2D only).
    pub fn ccw_vertices_2d(&self) -> Vec<[f64; 2]> {
        assert_eq!(self.dim, 2);
        let c = self.centroid();
        let mut v: Vec<[f64; 2]> = self.vertices.iter().map(|v| [v[0], v[1]]).collect();
        v.sort_by(|a, b| {
            let ta = (a[1] - c[1]).atan2(a[0] - c[0]);
            let tb = (b[1] - c[1]).atan2(b[0] - c[0]);
            ta.total_cmp(&tb)
        });
        v
    }

    /// Area (2D) or volume of a simplex-shaped polytope.
    pub fn measure(&self) -> f64 {
        if self.dim == 2 {
            let v = self.ccw_vertices_2d();
            let n = v.len();
            0.5 * (0..n)
                .map(|i| {
                    let (a, b) = (v[i], v[(i + 1) % n]);
                    a[0] * b[1] - a[1] * b[0]
                })
                .sum::<f64>()
        } else if self.vertices.len() == self.dim + 1 {
            let m = nalgebra::DMatrix::from_fn(self.dim, self.dim, |i, j| {
                self.vertices[j + 1][i] - self.vertices[0][i]
            });
            let fact: f64 = (1..=self.dim).map(|k| k as f64).product();
            m.determinant().abs() / fact
        } else {
            f64::NAN
        }
    }

    /// Radius of the largest ball centered at the centroid.
    pub fn inradius(&self) -> f64 {
        self.signed_boundary_distance(&self.centroid())
    }

    /// Brute-force convex-hull membership through the vertex representation:
    /// solves for barycentric weights of `x` (simplex-shaped polytopes only).
    pub fn hull_contains(&self, x: &[f64]) -> Option<bool> {
        if self.vertices.len() != self.dim + 1 {
            return None;
        }
        let n = self.dim;
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| self.vertices[j + 1][i] - self.vertices[0][i]);
        let rhs = nalgebra::DVector::from_fn(n, |i, _| x[i] - self.vertices[0][i]);
        let lam = m.lu().solve(&rhs)?;
        let l0 = 1.0 - lam.sum();
        Some(l0 >= 0.0 && lam.iter().all(|l| *l >= 0.0))
    }
}

impl ConvexDomain for PolytopeK {
    fn dim(&self) -> usize {
        self.dim
    }

    fn signed_distance(&self, x: &[f64]) -> f64 {
        self.signed_boundary_distance(x)
    }

    fn ray_exit(&self, x: &[f64], dir: &[f64]) -> f64 {
        self.halfspaces
            .iter()
            .filter_map(|h| {
                let rate = dot(&h.normal, dir);
                (rate > 0.0).then(|| (h.slack(x) / rate).max(0.0))
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for v in &self.vertices {
            for k in 0..self.dim {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }

    fn measure(&self) -> f64 {
        PolytopeK::measure(self)
    }

    fn exact_signed_distance(&self, x: &[f64]) -> f64 {
        let sd = self.signed_boundary_distance(x);
        if sd >= 0.0 || self.dim != 2 {
            return sd;
        }
        let v = self.ccw_vertices_2d();
        let n = v.len();
        let d = (0..n)
            .map(|i| segment_distance(x, v[i], v[(i + 1) % n]))
            .fold(f64::INFINITY, f64::min);
        -d
    }
}

fn segment_distance(x: &[f64], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (tx, ty) = (b[0] - a[0], b[1] - a[1]);
    let s = (((x[0] - a[0]) * tx + (x[1] - a[1]) * ty) / (tx * tx + ty * ty)).clamp(0.0, 1.0);
    (x[0] - a[0] - s * tx).hypot(x[1] - a[1] - s * ty)
}

/// A proper face of the simplex spanned by a subset of its vertices, with its
/// own isometric chart onto `R^{k-1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Facet {
    pub vertex_indices: Vec<usize>,
    pub chart: IsometryMap,
}

impl Facet {
    /// Weights of `y` on this face's vertices.
    pub fn restrict(&self, y: &[f64]) -> Vec<f64> {
        self.vertex_indices.iter().map(|&i| y[i]).collect()
    }

    /// Chart coordinates of a point lying on this face.
    pub fn to_chart(&self, y: &[f64]) -> Vec<f64> {
        self.chart.project(&self.restrict(y))
    }

    pub fn size(&self) -> usize {
        self.vertex_indices.len()
    }
}

/// All faces with `2..=d-1` vertices, ordered by size then lexicographically.
pub fn facet_lattice(d: usize) -> Result<Vec<Facet>> {
    if d < 2 {
        return Err(Error::InvalidDimension(format!("facet lattice needs d >= 2, got {d}")));
    }
    let mut faces = Vec::new();
    for k in 2..d {
        let chart = build_isometry(k)?;
        for subset in combinations(d, k) {
            faces.push(Facet { vertex_indices: subset, chart: chart.clone() });
        }
    }
    Ok(faces)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        let Some(i) = (0..k).rev().find(|&i| cur[i] != i + n - k) else {
            return out;
        };
        cur[i] += 1;
        for j in i + 1..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
