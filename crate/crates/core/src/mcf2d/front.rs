//! Lagrangian front tracking for curve shortening flow (normal speed = curvature).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PolytopeK;

const CONVEXITY_TOL: f64 = 1e-8;

/// Closed convex polygon, counter-clockwise, at a given flow time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontPolygon {
    vertices: Vec<[f64; 2]>,
    time: f64,
}

impl FrontPolygon {
    pub fn new(vertices: Vec<[f64; 2]>, time: f64) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidArgument("front needs at least 3 vertices".into()));
        }
        let p = Self { vertices, time };
        if p.area() <= 0.0 {
            return Err(Error::InvalidArgument("front must be positively oriented".into()));
        }
        if !p.is_convex() {
            return Err(Error::NonConvex("initial front".into()));
        }
        Ok(p)
    }

    /// Boundary of a planar polytope sampled at `n` arclength-equispaced points,
    /// starting at a vertex.
    pub fn from_polygon(k: &PolytopeK, n: usize) -> Result<Self> {
        if k.dim() != 2 {
            return Err(Error::InvalidDimension(format!("front needs a planar domain, got dim {}", k.dim())));
        }
        Self::new(resample(&k.ccw_vertices_2d(), n), 0.0)
    }

    pub fn circle(center: [f64; 2], radius: f64, n: usize) -> Result<Self> {
        let verts = (0..n)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
            })
            .collect();
        Self::new(verts, 0.0)
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn area(&self) -> f64 {
        let v = &self.vertices;
        let n = v.len();
        0.5 * (0..n).map(|i| cross(v[i], v[(i + 1) % n])).sum::<f64>()
    }

    pub fn perimeter(&self) -> f64 {
        let n = self.len();
        (0..n).map(|i| dist(self.vertices[i], self.vertices[(i + 1) % n])).sum()
    }

    pub fn centroid(&self) -> [f64; 2] {
        let n = self.len() as f64;
        self.vertices.iter().fold([0.0, 0.0], |a, v| [a[0] + v[0] / n, a[1] + v[1] / n])
    }

    /// All turns between consecutive unit edges are left turns, up to tolerance.
    pub fn is_convex(&self) -> bool {
        let n = self.len();
        (0..n).all(|i| {
            let a = unit(sub(self.vertices[i], self.vertices[(i + n - 1) % n]));
            let b = unit(sub(self.vertices[(i + 1) % n], self.vertices[i]));
            cross(a, b) >= -CONVEXITY_TOL
        })
    }

    pub fn max_turning_angle(&self) -> f64 {
        let n = self.len();
        (0..n).map(|i| self.turning(i).abs()).fold(0.0, f64::max)
    }

    fn turning(&self, i: usize) -> f64 {
        let n = self.len();
        let a = sub(self.vertices[i], self.vertices[(i + n - 1) % n]);
        let b = sub(self.vertices[(i + 1) % n], self.vertices[i]);
        cross(a, b).atan2(a[0] * b[0] + a[1] * b[1])
    }

    /// Signed Euclidean distance to the polygon, positive inside.
    pub fn signed_distance(&self, q: [f64; 2]) -> f64 {
        let n = self.len();
        let mut d = f64::INFINITY;
        let mut inside = true;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            d = d.min(segment_distance(q, a, b));
            if cross(sub(b, a), sub(q, a)) < 0.0 {
                inside = false;
            }
        }
        if inside {
            d
        } else {
            -d
        }
    }

    pub fn contains(&self, q: [f64; 2]) -> bool {
        self.signed_distance(q) >= 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontConfig {
    /// Vertex count, held fixed by resampling.
    pub vertices: usize,
    /// Stop once the area falls below this fraction of the initial area.
    pub stop_area_fraction: f64,
    /// Store a snapshot whenever the area has dropped by this relative amount.
    pub snapshot_area_drop: f64,
    /// Step-halving attempts when a step breaks convexity.
    pub max_retries: usize,
}

impl Default for FrontConfig {
    fn default() -> Self {
        Self { vertices: 256, stop_area_fraction: 1e-6, snapshot_area_drop: 0.005, max_retries: 12 }
    }
}

/// One accepted step of the evolution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AreaSample {
    pub time: f64,
    pub area: f64,
    pub max_turning: f64,
}

/// Nested contours of the flow from the initial front down to near extinction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontHistory {
    pub snapshots: Vec<FrontPolygon>,
    pub area_trace: Vec<AreaSample>,
}

impl FrontHistory {
    pub fn initial(&self) -> &FrontPolygon {
        &self.snapshots[0]
    }

    pub fn last(&self) -> &FrontPolygon {
        self.snapshots.last().expect("history holds the initial front")
    }

    /// Extinction time of this flow, extrapolating the area law from the last contour.
    pub fn extinction_time(&self) -> f64 {
        let f = self.last();
        f.time() + f.area() / (2.0 * std::f64::consts::PI)
    }

    /// Average `dA/dt` over the steps whose max turning angle is below
    /// `smooth_angle`, from the first such step to the end.
    pub fn smooth_area_rate(&self, smooth_angle: f64) -> Option<f64> {
        let start = self.area_trace.iter().position(|s| s.max_turning < smooth_angle)?;
        let a = self.area_trace[start];
        let b = *self.area_trace.last()?;
        (b.time > a.time).then(|| (b.area - a.area) / (b.time - a.time))
    }

    /// The contours as JSON polylines `[{time, points: [[x, y], ...]}, ...]`.
    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Polyline<'a> {
            time: f64,
            area: f64,
            points: &'a [[f64; 2]],
        }
        let lines: Vec<Polyline> = self
            .snapshots
            .iter()
            .map(|s| Polyline {
                time: crate::fmt::round12(s.time()),
                area: crate::fmt::round12(s.area()),
                points: s.vertices(),
            })
            .collect();
        Ok(serde_json::to_string(&lines)?)
    }
}

/// Evolves `initial` by curve shortening flow until its area drops below
/// `stop_area_fraction` of the start.
pub fn evolve_front(initial: &FrontPolygon, cfg: &FrontConfig) -> Result<FrontHistory> {
    if initial.len() < 8 {
        return Err(Error::InvalidArgument(format!(
            "front tracking needs at least 8 vertices, got {}",
            initial.len()
        )));
    }
    if !initial.is_convex() {
        return Err(Error::NonConvex("initial front".into()));
    }
    let n = cfg.vertices.max(8);
    let area0 = initial.area();
    let stop = cfg.stop_area_fraction * area0;
    let mut cur = initial.clone();
    let mut snapshots = vec![initial.clone()];
    let mut last_snap_area = area0;
    let mut area_trace = vec![AreaSample { time: cur.time, area: area0, max_turning: cur.max_turning_angle() }];
    if cur.len() != n {
        cur = FrontPolygon { vertices: resample(&cur.vertices, n), time: cur.time };
    }

    while cur.area() > stop {
        let e_min = (0..n)
            .map(|i| dist(cur.vertices[i], cur.vertices[(i + 1) % n]))
            .fold(f64::INFINITY, f64::min);
        let kappa_max = (0..n).map(|i| curvature(&cur.vertices, i).abs()).fold(0.0, f64::max);
        let mut dt = (0.2 * e_min * e_min).min(0.25 * e_min / kappa_max.max(1e-300));
        let mut accepted = None;
        for _ in 0..=cfg.max_retries {
            let moved = step(&cur.vertices, dt);
            let next = FrontPolygon { vertices: resample(&moved, n), time: cur.time + dt };
            if next.is_convex() && next.area() < cur.area() && next.area() > 0.0 {
                accepted = Some(next);
                break;
            }
            dt *= 0.5;
        }
        cur = accepted.ok_or_else(|| {
            Error::NonConvex(format!("step rejected at t={} after {} halvings", cur.time, cfg.max_retries))
        })?;
        let area = cur.area();
        area_trace.push(AreaSample { time: cur.time, area, max_turning: cur.max_turning_angle() });
        if area <= last_snap_area * (1.0 - cfg.snapshot_area_drop) || area <= stop {
            snapshots.push(cur.clone());
            last_snap_area = area;
        }
    }
    Ok(FrontHistory { snapshots, area_trace })
}

/// Arrival time of the halved flow at `q`: twice the curve shortening time at
/// which the contour passes `q`.
pub fn arrival_from_front(history: &FrontHistory, q: [f64; 2]) -> Result<f64> {
    let snaps = &history.snapshots;
    let sd0 = snaps[0].signed_distance(q);
    if sd0 < -1e-12 {
        return Err(Error::OutsideDomain(format!("query {q:?} is outside the initial front")));
    }
    if sd0 <= 0.0 {
        return Ok(0.0);
    }
    let last = history.last();
    if last.signed_distance(q) > 0.0 {
        return Ok(2.0 * history.extinction_time());
    }
    // contours are nested: find the last one still enclosing q
    let (mut lo, mut hi) = (0, snaps.len() - 1);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if snaps[mid].signed_distance(q) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (a, b) = (&snaps[lo], &snaps[hi]);
    let (da, db) = (a.signed_distance(q), b.signed_distance(q));
    let frac = if da - db > 0.0 { da / (da - db) } else { 1.0 };
    Ok(2.0 * (a.time() + frac * (b.time() - a.time())))
}

/// Discrete curvature: turning angle over half the adjacent edge lengths.
fn curvature(v: &[[f64; 2]], i: usize) -> f64 {
    let n = v.len();
    let a = sub(v[i], v[(i + n - 1) % n]);
    let b = sub(v[(i + 1) % n], v[i]);
    let phi = cross(a, b).atan2(a[0] * b[0] + a[1] * b[1]);
    phi / (0.5 * (norm(a) + norm(b)))
}

fn step(v: &[[f64; 2]], dt: f64) -> Vec<[f64; 2]> {
    let n = v.len();
    (0..n)
        .map(|i| {
            let a = sub(v[i], v[(i + n - 1) % n]);
            let b = sub(v[(i + 1) % n], v[i]);
            // inward normals of counter-clockwise edges point left
            let (ua, ub) = (unit(a), unit(b));
            let bis = unit([-(ua[1] + ub[1]), ua[0] + ub[0]]);
            let k = curvature(v, i);
            let cap = 0.25 * norm(a).min(norm(b));
            let s = (k * dt).clamp(-cap, cap);
            [v[i][0] + s * bis[0], v[i][1] + s * bis[1]]
        })
        .collect()
}

/// `n` points equally spaced in arclength along the closed polyline, starting at `v[0]`.
fn resample(v: &[[f64; 2]], n: usize) -> Vec<[f64; 2]> {
    let m = v.len();
    let lens: Vec<f64> = (0..m).map(|i| dist(v[i], v[(i + 1) % m])).collect();
    let total: f64 = lens.iter().sum();
    let spacing = total / n as f64;
    let mut out = Vec::with_capacity(n);
    let (mut seg, mut seg_start) = (0usize, 0.0);
    for k in 0..n {
        let s = k as f64 * spacing;
        while seg + 1 < m && seg_start + lens[seg] < s {
            seg_start += lens[seg];
            seg += 1;
        }
        let t = if lens[seg] > 0.0 { ((s - seg_start) / lens[seg]).clamp(0.0, 1.0) } else { 0.0 };
        let (a, b) = (v[seg], v[(seg + 1) % m]);
        out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
    }
    out
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn norm(a: [f64; 2]) -> f64 {
    a[0].hypot(a[1])
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    norm(sub(a, b))
}

fn unit(a: [f64; 2]) -> [f64; 2] {
    let l = norm(a);
    [a[0] / l, a[1] / l]
}

fn segment_distance(q: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let t = sub(b, a);
    let s = ((q[0] - a[0]) * t[0] + (q[1] - a[1]) * t[1]) / (t[0] * t[0] + t[1] * t[1]);
    let s = s.clamp(0.0, 1.0);
    dist(q, [a[0] + s * t[0], a[1] + s * t[1]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polygon_measures() {
        let sq = FrontPolygon::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]], 0.0).unwrap();
        assert!((sq.area() - 1.0).abs() < 1e-15);
        assert!((sq.perimeter() - 4.0).abs() < 1e-15);
        assert!((sq.signed_distance([0.5, 0.25]) - 0.25).abs() < 1e-15);
        assert!((sq.signed_distance([2.0, 0.5]) + 1.0).abs() < 1e-15);
        assert!(FrontPolygon::new(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]], 0.0).is_err());
        let dart = vec![[0.0, 0.0], [2.0, 0.0], [1.0, 0.3], [1.0, 2.0]];
        assert!(matches!(FrontPolygon::new(dart, 0.0), Err(Error::NonConvex(_))));
    }

    #[test]
    fn resampling_keeps_corners_when_commensurate() {
        let k = PolytopeK::simplex(3).unwrap();
        let f = FrontPolygon::from_polygon(&k, 48).unwrap();
        assert_eq!(f.len(), 48);
        assert!((f.area() - 3f64.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_vertices() {
        let k = PolytopeK::simplex(3).unwrap();
        let tri = FrontPolygon::from_polygon(&k, 3).unwrap();
        assert!(evolve_front(&tri, &FrontConfig::default()).is_err());
    }

    #[test]
    fn circle_shrinks_like_the_ode() {
        // r' = -1/r, extinction at r0^2 / 2
        let r0 = 0.8;
        let init = FrontPolygon::circle([0.1, -0.2], r0, 512).unwrap();
        let cfg = FrontConfig { vertices: 512, ..FrontConfig::default() };
        let hist = evolve_front(&init, &cfg).unwrap();
        let t_ext = hist.extinction_time();
        assert!((t_ext - r0 * r0 / 2.0).abs() < 0.005 * r0 * r0 / 2.0, "{t_ext}");
        for s in hist.snapshots.iter().step_by(50) {
            let expect = (r0 * r0 - 2.0 * s.time()).max(0.0).sqrt();
            let r = (s.area() / PI).sqrt();
            assert!((r - expect).abs() < 0.005 * r0, "t={} r={r} expect={expect}", s.time());
        }
        let w0 = arrival_from_front(&hist, [0.1, -0.2]).unwrap();
        assert!((w0 - r0 * r0).abs() < 0.01 * r0 * r0);
    }

    #[test]
    fn arrival_queries() {
        let init = FrontPolygon::circle([0.0, 0.0], 1.0, 256).unwrap();
        let hist = evolve_front(&init, &FrontConfig::default()).unwrap();
        assert_eq!(arrival_from_front(&hist, init.vertices()[3]).unwrap(), 0.0);
        assert!(arrival_from_front(&hist, [1.5, 0.0]).is_err());
        let w = arrival_from_front(&hist, [0.5, 0.0]).unwrap();
        assert!((w - 0.75).abs() < 0.01, "{w}");
        let w = arrival_from_front(&hist, [0.0, 0.0]).unwrap();
        assert!((w - 1.0).abs() < 0.01, "{w}");
        assert!(hist.to_json().unwrap().starts_with("[{\"time\":0"));
    }

    #[test]
    fn contours_stay_convex_and_shrink() {
        let k = PolytopeK::simplex(3).unwrap();
        let init = FrontPolygon::from_polygon(&k, 96).unwrap();
        let cfg = FrontConfig { vertices: 96, ..FrontConfig::default() };
        let hist = evolve_front(&init, &cfg).unwrap();
        assert!(hist.snapshots.iter().all(FrontPolygon::is_convex));
        assert!(hist.area_trace.windows(2).all(|w| w[1].area < w[0].area));
    }
}
