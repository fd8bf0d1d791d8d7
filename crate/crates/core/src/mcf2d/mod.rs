//! Arrival time of curvature flow on convex planar domains.
//!
//! The arrival time `w` solves `1 + grad^perp w^T D^2 w grad^perp w / (2 |grad w|^2) = 0`
//! with `w = 0` on the boundary: level sets of `w` move with normal speed equal
//! to half their curvature. Two independent solvers are provided. Front
//! tracking evolves the boundary polygon by full curvature and doubles the
//! resulting times; the level-set solver evolves the halved flow directly.
//! On any convex domain the enclosed area shrinks linearly, so `max w = area / pi`.

mod field;
mod front;
mod levelset;

pub use field::{ArrivalField, FieldInvariants};
pub use front::{arrival_from_front, evolve_front, AreaSample, FrontConfig, FrontHistory, FrontPolygon};
pub use levelset::{arrival_grid, arrival_grid_with, LevelSetConfig, LevelSetRun};

use crate::error::{Error, Result};
use crate::geometry::{build_isometry, PolytopeK};

/// Maximum arrival time on a convex domain of the given area.
pub fn max_arrival_from_area(area: f64) -> f64 {
    area / std::f64::consts::PI
}

/// The chart image of `{x in simplex_3 : max x_i <= 1 - delta}`, a hexagon of
/// area `sqrt3 (1 - 3 delta^2) / 2`, and its maximum arrival time.
pub fn diverse_truncation(delta: f64) -> Result<(PolytopeK, f64)> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0, 1/2), got {delta}")));
    }
    let u = build_isometry(3)?;
    let mut verts = Vec::with_capacity(6);
    for big in 0..3 {
        for small in 0..3 {
            if small != big {
                let mut y = [0.0; 3];
                y[big] = 1.0 - delta;
                y[small] = delta;
                let x = u.project(&y);
                verts.push([x[0], x[1]]);
            }
        }
    }
    let k = PolytopeK::polygon(verts)?;
    let expected = 3f64.sqrt() * (1.0 - 3.0 * delta * delta) / (2.0 * std::f64::consts::PI);
    Ok((k, expected))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diverse_hexagon() {
        let (k, expected) = diverse_truncation(0.1).unwrap();
        assert_eq!(k.vertices().len(), 6);
        assert!((k.measure() - 3f64.sqrt() * 0.97 / 2.0).abs() < 1e-10);
        assert!((expected - 0.267_39).abs() < 1e-5);
        assert!((expected - max_arrival_from_area(k.measure())).abs() < 1e-12);
        let (_, e0) = diverse_truncation(1e-9).unwrap();
        assert!((e0 - 3f64.sqrt() / (2.0 * std::f64::consts::PI)).abs() < 1e-12);
        assert!(diverse_truncation(0.5).is_err());
        assert!(diverse_truncation(0.0).is_err());
    }
}
