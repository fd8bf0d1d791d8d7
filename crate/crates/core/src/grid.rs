//! Uniform Cartesian lattices in 2 or 3 dimensions.

use serde::{Deserialize, Serialize};

use crate::domain::ConvexDomain;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub origin: Vec<f64>,
    pub h: f64,
    pub shape: Vec<usize>,
}

impl Lattice {
    /// Lattice aligned so the coordinate origin is a node, covering the
    /// domain's bounding box plus `margin` nodes on every side.
    pub fn covering(domain: &dyn ConvexDomain, h: f64, margin: usize) -> Self {
        let (lo, hi) = domain.bounding_box();
        let mut origin = Vec::with_capacity(lo.len());
        let mut shape = Vec::with_capacity(lo.len());
        for (l, u) in lo.iter().zip(&hi) {
            let i0 = (l / h).floor() as i64 - margin as i64;
            let i1 = (u / h).ceil() as i64 + margin as i64;
            origin.push(i0 as f64 * h);
            shape.push((i1 - i0 + 1) as usize);
        }
        Self { origin, h, shape }
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major strides, last axis fastest.
    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dim()];
        for k in (0..self.dim().saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.shape[k + 1];
        }
        s
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            out[k] = idx % self.shape[k];
            idx /= self.shape[k];
        }
        out
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(self.strides()).map(|(i, s)| i * s).sum()
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx)
            .iter()
            .zip(&self.origin)
            .map(|(&i, o)| ((o / self.h).round() + i as f64) * self.h)
            .collect()
    }

    /// Offset of node `idx` by integer steps `v`, if it stays on the lattice.
    pub fn offset(&self, idx: usize, v: &[i32]) -> Option<usize> {
        let m = self.multi_index(idx);
        let mut out = 0usize;
        for ((k, mi), s) in m.iter().enumerate().zip(self.strides()) {
            let j = *mi as i64 + v[k] as i64;
            if j < 0 || j >= self.shape[k] as i64 {
                return None;
            }
            out += j as usize * s;
        }
        Some(out)
    }

    /// Cell containing `x` and the local coordinates in `[0,1]^dim`, clamped to the lattice.
    pub fn locate(&self, x: &[f64]) -> (Vec<usize>, Vec<f64>) {
        let mut cell = Vec::with_capacity(self.dim());
        let mut frac = Vec::with_capacity(self.dim());
        for k in 0..self.dim() {
            let t = ((x[k] - self.origin[k]) / self.h).clamp(0.0, (self.shape[k] - 1) as f64);
            let i = (t.floor() as usize).min(self.shape[k].saturating_sub(2));
            cell.push(i);
            frac.push(t - i as f64);
        }
        (cell, frac)
    }

    /// Multilinear interpolation of nodal values.
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> f64 {
        let (cell, frac) = self.locate(x);
        let strides = self.strides();
        let base: usize = cell.iter().zip(&strides).map(|(c, s)| c * s).sum();
        let mut acc = 0.0;
        for corner in 0..(1usize << self.dim()) {
            let mut w = 1.0;
            let mut idx = base;
            for k in 0..self.dim() {
                if corner >> k & 1 == 1 {
                    w *= frac[k];
                    idx += strides[k];
                } else {
                    w *= 1.0 - frac[k];
                }
            }
            if w != 0.0 {
                acc += w * values[idx];
            }
        }
        acc
    }
}
