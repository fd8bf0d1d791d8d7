//! Convex domains the solvers and simulators run on: projected simplices,
//! truncated (diverse) polygons and Euclidean balls.

use std::fmt::Debug;

use serde::{Deserialize, Serialize};

pub trait ConvexDomain: Send + Sync + Debug {
    fn dim(&self) -> usize;

    /// Positive inside, zero on the boundary; exact inside, any lower bound on
    /// the distance outside.
    fn signed_distance(&self, x: &[f64]) -> f64;

    /// Largest `s >= 0` with `x + s * dir` in the domain, for `x` inside.
    fn ray_exit(&self, x: &[f64], dir: &[f64]) -> f64;

    fn bounding_box(&self) -> (Vec<f64>, Vec<f64>);

    /// Area or volume.
    fn measure(&self) -> f64;

    /// Signed distance that is exact on both sides of the boundary.
    fn exact_signed_distance(&self, x: &[f64]) -> f64 {
        self.signed_distance(x)
    }
}

/// Closed ball `|x - center| <= radius`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Self {
        assert!(radius > 0.0, "ball radius must be positive");
        Self { center, radius }
    }

    pub fn unit(dim: usize) -> Self {
        Self::new(vec![0.0; dim], 1.0)
    }
}

impl ConvexDomain for Ball {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn signed_distance(&self, x: &[f64]) -> f64 {
        let r: f64 = x.iter().zip(&self.center).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt();
        self.radius - r
    }

    fn ray_exit(&self, x: &[f64], dir: &[f64]) -> f64 {
        // |x - c + s dir|^2 = R^2
        let rel: Vec<f64> = x.iter().zip(&self.center).map(|(a, c)| a - c).collect();
        let a: f64 = dir.iter().map(|v| v * v).sum();
        let b: f64 = rel.iter().zip(dir).map(|(r, v)| r * v).sum();
        let c: f64 = rel.iter().map(|r| r * r).sum::<f64>() - self.radius * self.radius;
        let disc = (b * b - a * c).max(0.0);
        ((-b + disc.sqrt()) / a).max(0.0)
    }

    fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.center.iter().map(|c| c - self.radius).collect(),
            self.center.iter().map(|c| c + self.radius).collect(),
        )
    }

    fn measure(&self) -> f64 {
        use std::f64::consts::PI;
        let n = self.dim() as i32;
        let unit = match n {
            1 => 2.0,
            2 => PI,
            3 => 4.0 * PI / 3.0,
            _ => PI.powf(n as f64 / 2.0) / gamma_half_int(n as u32 + 2),
        };
        unit * self.radius.powi(n)
    }
}

/// `Gamma(k / 2)` for positive integer `k`.
fn gamma_half_int(k: u32) -> f64 {
    if k == 1 {
        std::f64::consts::PI.sqrt()
    } else if k == 2 {
        1.0
    } else {
        (k as f64 / 2.0 - 1.0) * gamma_half_int(k - 2)
    }
}
