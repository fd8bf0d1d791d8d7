//! Pointwise evidence that a smooth candidate is a sub- or supersolution of
//! `F(grad w, D^2 w) = 1` on a polytope, and the bound on `T*` it implies.
//!
//! A subsolution (`F <= 1` inside, `w <= 0` on the boundary) lies below the
//! value function, so `T* >= max w`. A supersolution (`F >= 1` inside,
//! `w >= 0` on the boundary) lies above it, so `T* <= max w`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::operator::{f_operator, OperatorInput};
use super::solver::MinCurvField;
use crate::domain::ConvexDomain;
use crate::error::{Error, Result};
use crate::geometry::PolytopeK;

/// Value, gradient and row-major Hessian at a point.
pub type Jet = (f64, Vec<f64>, Vec<f64>);

pub trait Candidate: Sync {
    fn id(&self) -> String;
    fn jet(&self, x: &[f64]) -> Option<Jet>;
    /// Location of the maximum over the domain, when known in closed form.
    fn known_argmax(&self) -> Option<Vec<f64>> {
        None
    }
}

/// Candidate specification as read from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum CandidateSpec {
    /// `(d - 1)/d - |x|^2` in the chart of the `d`-simplex.
    Quadratic,
    /// `scale * max(r^2 - |x|^2, 0)` with `r` the inradius.
    InscribedBall {
        #[serde(default = "one")]
        scale: f64,
    },
    /// `sum coeff * prod x_k^powers_k` in chart coordinates.
    Polynomial { terms: Vec<Monomial> },
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coeff: f64,
    pub powers: Vec<u32>,
}

impl CandidateSpec {
    /// Parses a named candidate (`quadratic`, `inscribed-ball`) or a JSON object.
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "quadratic" => Ok(Self::Quadratic),
            "inscribed-ball" => Ok(Self::InscribedBall { scale: 1.0 }),
            t if t.starts_with('{') => serde_json::from_str(t).map_err(|e| Error::Parse(format!("candidate: {e}"))),
            other => Err(Error::Parse(format!("unknown candidate {other:?}"))),
        }
    }

    pub fn build(&self, k: &PolytopeK) -> Result<Box<dyn Candidate>> {
        let n = k.dim();
        Ok(match self {
            Self::Quadratic => {
                let d = (n + 1) as f64;
                Box::new(Polynomial::quadratic(n, (d - 1.0) / d, "quadratic"))
            }
            Self::InscribedBall { scale } => Box::new(InscribedBall {
                center: k.centroid(),
                radius: k.inradius(),
                scale: *scale,
            }),
            Self::Polynomial { terms } => {
                if terms.iter().any(|t| t.powers.len() != n) {
                    return Err(Error::InvalidDimension(format!("polynomial terms must have {n} powers")));
                }
                Box::new(Polynomial { terms: terms.clone(), dim: n, name: "polynomial".into() })
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    terms: Vec<Monomial>,
    dim: usize,
    name: String,
}

impl Polynomial {
    /// `c - |x|^2`.
    pub fn quadratic(dim: usize, c: f64, name: &str) -> Self {
        let mut terms = vec![Monomial { coeff: c, powers: vec![0; dim] }];
        for k in 0..dim {
            let mut p = vec![0; dim];
            p[k] = 2;
            terms.push(Monomial { coeff: -1.0, powers: p });
        }
        Self { terms, dim, name: name.into() }
    }
}

impl Candidate for Polynomial {
    fn id(&self) -> String {
        self.name.clone()
    }

    fn jet(&self, x: &[f64]) -> Option<Jet> {
        let n = self.dim;
        let pow = |b: f64, e: i64| if e < 0 { 0.0 } else { b.powi(e as i32) };
        let (mut v, mut g, mut hs) = (0.0, vec![0.0; n], vec![0.0; n * n]);
        for t in &self.terms {
            let e: Vec<i64> = t.powers.iter().map(|p| *p as i64).collect();
            let full = |skip: &[usize]| -> f64 {
                (0..n)
                    .map(|k| {
                        let drop = skip.iter().filter(|s| **s == k).count() as i64;
                        let falling: f64 = (0..drop).map(|j| (e[k] - j) as f64).product();
                        falling * pow(x[k], e[k] - drop)
                    })
                    .product()
            };
            v += t.coeff * full(&[]);
            for a in 0..n {
                g[a] += t.coeff * full(&[a]);
                for b in 0..n {
                    hs[a * n + b] += t.coeff * full(&[a, b]);
                }
            }
        }
        v.is_finite().then_some((v, g, hs))
    }

    fn known_argmax(&self) -> Option<Vec<f64>> {
        (self.name == "quadratic").then(|| vec![0.0; self.dim])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InscribedBall {
    pub center: Vec<f64>,
    pub radius: f64,
    pub scale: f64,
}

impl Candidate for InscribedBall {
    fn id(&self) -> String {
        "inscribed-ball".into()
    }

    fn jet(&self, x: &[f64]) -> Option<Jet> {
        let n = x.len();
        let rel: Vec<f64> = x.iter().zip(&self.center).map(|(a, c)| a - c).collect();
        let q = self.radius * self.radius - rel.iter().map(|v| v * v).sum::<f64>();
        if q <= 0.0 {
            return Some((0.0, vec![0.0; n], vec![0.0; n * n]));
        }
        let g = rel.iter().map(|r| -2.0 * self.scale * r).collect();
        let mut hs = vec![0.0; n * n];
        (0..n).for_each(|k| hs[k * n + k] = -2.0 * self.scale);
        Some((self.scale * q, g, hs))
    }

    fn known_argmax(&self) -> Option<Vec<f64>> {
        Some(self.center.clone())
    }
}

/// A grid solution used as a candidate, with derivatives by central
/// differences of its multilinear interpolant at step `2h`.
pub struct FieldCandidate<'a> {
    pub field: &'a MinCurvField,
}

impl Candidate for FieldCandidate<'_> {
    fn id(&self) -> String {
        "grid-solution".into()
    }

    fn jet(&self, x: &[f64]) -> Option<Jet> {
        let f = self.field;
        let n = x.len();
        let s = 2.0 * f.h();
        let at = |dx: &[(usize, f64)]| {
            let mut y = x.to_vec();
            dx.iter().for_each(|(k, d)| y[*k] += d);
            f.value(&y)
        };
        let v = at(&[]);
        let g = (0..n).map(|k| (at(&[(k, s)]) - at(&[(k, -s)])) / (2.0 * s)).collect();
        let mut hs = vec![0.0; n * n];
        for a in 0..n {
            hs[a * n + a] = (at(&[(a, s)]) - 2.0 * v + at(&[(a, -s)])) / (s * s);
            for b in a + 1..n {
                let m = (at(&[(a, s), (b, s)]) - at(&[(a, s), (b, -s)]) - at(&[(a, -s), (b, s)])
                    + at(&[(a, -s), (b, -s)]))
                    / (4.0 * s * s);
                hs[a * n + b] = m;
                hs[b * n + a] = m;
            }
        }
        Some((v, g, hs))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    SubsolutionEvidence,
    SupersolutionEvidence,
    /// Both inequalities hold: the candidate solves the equation.
    SolutionEvidence,
    Neither,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
    pub below: usize,
    pub above: usize,
}

impl Histogram {
    pub fn build(values: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let mut h = Self { lo, hi, counts: vec![0; bins], below: 0, above: 0 };
        for &v in values {
            if v < lo {
                h.below += 1;
            } else if v >= hi {
                h.above += 1;
            } else {
                let b = (((v - lo) / (hi - lo)) * bins as f64) as usize;
                h.counts[b.min(bins - 1)] += 1;
            }
        }
        h
    }

    /// Fraction of values within `[center - width, center + width]`, by bins.
    pub fn fraction_near(&self, center: f64, width: f64) -> f64 {
        let total = self.counts.iter().sum::<usize>() + self.below + self.above;
        let bw = (self.hi - self.lo) / self.counts.len() as f64;
        let inside: usize = self
            .counts
            .iter()
            .enumerate()
            .filter(|(b, _)| {
                let mid = self.lo + (*b as f64 + 0.5) * bw;
                (mid - center).abs() <= width
            })
            .map(|(_, c)| c)
            .sum();
        inside as f64 / total.max(1) as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub candidate_id: String,
    pub samples: usize,
    pub residual_min: f64,
    pub residual_max: f64,
    pub boundary_min: f64,
    pub boundary_max: f64,
    pub max_value: f64,
    pub verdict: Verdict,
    /// Lower bound on `T*` for subsolution evidence, upper bound for supersolution evidence.
    pub bound_value: Option<f64>,
    pub histogram: Histogram,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateConfig {
    pub samples: usize,
    pub boundary_samples: usize,
    pub tolerance: f64,
}

impl Default for CertificateConfig {
    fn default() -> Self {
        Self { samples: 20_000, boundary_samples: 2_000, tolerance: 1e-9 }
    }
}

pub fn check_certificate(candidate: &dyn Candidate, k: &PolytopeK, samples: usize) -> Result<CertificateReport> {
    check_certificate_with(candidate, k, &CertificateConfig { samples, ..CertificateConfig::default() })
}

pub fn check_certificate_with(
    candidate: &dyn Candidate,
    k: &PolytopeK,
    cfg: &CertificateConfig,
) -> Result<CertificateReport> {
    if cfg.samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let pts = interior_samples(k, cfg.samples);
    let evals: Vec<Result<(f64, f64)>> = pts
        .par_iter()
        .map(|x| {
            let (v, g, hs) = candidate.jet(x).ok_or_else(|| Error::CandidateUndefined(x.clone()))?;
            if !v.is_finite() || g.iter().chain(&hs).any(|c| !c.is_finite()) {
                return Err(Error::CandidateUndefined(x.clone()));
            }
            let sym: Vec<f64> = {
                let n = g.len();
                (0..n * n).map(|i| 0.5 * (hs[i] + hs[(i % n) * n + i / n])).collect()
            };
            Ok((v, f_operator(&OperatorInput::new(g, sym)?)))
        })
        .collect();
    let evals = evals.into_iter().collect::<Result<Vec<_>>>()?;
    let residuals: Vec<f64> = evals.iter().map(|e| e.1).collect();
    let residual_min = residuals.iter().copied().fold(f64::INFINITY, f64::min);
    let residual_max = residuals.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let bpts = boundary_samples(k, cfg.boundary_samples);
    let bvals = bpts
        .iter()
        .map(|x| candidate.jet(x).map(|j| j.0).ok_or_else(|| Error::CandidateUndefined(x.clone())))
        .collect::<Result<Vec<_>>>()?;
    let boundary_min = bvals.iter().copied().fold(f64::INFINITY, f64::min);
    let boundary_max = bvals.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut max_value = evals.iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max);
    if let Some(x) = candidate.known_argmax().filter(|x| k.contains(x)) {
        if let Some((v, _, _)) = candidate.jet(&x) {
            max_value = max_value.max(v);
        }
    }

    let tol = cfg.tolerance;
    let sub = residual_max <= 1.0 + tol && boundary_max <= tol;
    let sup = residual_min >= 1.0 - tol && boundary_min >= -tol;
    let verdict = match (sub, sup) {
        (true, true) => Verdict::SolutionEvidence,
        (true, false) => Verdict::SubsolutionEvidence,
        (false, true) => Verdict::SupersolutionEvidence,
        (false, false) => Verdict::Neither,
    };
    Ok(CertificateReport {
        candidate_id: candidate.id(),
        samples: pts.len(),
        residual_min,
        residual_max,
        boundary_min,
        boundary_max,
        max_value,
        verdict,
        bound_value: (verdict != Verdict::Neither).then_some(max_value),
        histogram: Histogram::build(&residuals, 0.0, 2.0, 40),
    })
}

/// Halton points of the bounding box kept when strictly inside `k`.
pub fn interior_samples(k: &PolytopeK, n: usize) -> Vec<Vec<f64>> {
    let (lo, hi) = k.bounding_box();
    let dim = k.dim();
    let bases = [2u64, 3, 5, 7, 11, 13, 17, 19];
    let mut out = Vec::with_capacity(n);
    let mut i = 0u64;
    while out.len() < n {
        i += 1;
        let x: Vec<f64> = (0..dim).map(|j| lo[j] + (hi[j] - lo[j]) * super::halton(i, bases[j % bases.len()])).collect();
        if k.signed_boundary_distance(&x) > 0.0 {
            out.push(x);
        }
    }
    out
}

/// Points on the boundary: rays from the centroid through interior samples.
pub fn boundary_samples(k: &PolytopeK, n: usize) -> Vec<Vec<f64>> {
    let c = k.centroid();
    interior_samples(k, n.max(1))
        .into_iter()
        .filter_map(|x| {
            let dir: Vec<f64> = x.iter().zip(&c).map(|(a, b)| a - b).collect();
            if dir.iter().all(|v| v.abs() < 1e-14) {
                return None;
            }
            let s = k.ray_exit(&c, &dir);
            Some(c.iter().zip(&dir).map(|(a, d)| a + s * d).collect())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_a_supersolution() {
        for d in [3usize, 4, 5] {
            let k = PolytopeK::simplex(d).unwrap();
            let c = CandidateSpec::Quadratic.build(&k).unwrap();
            let r = check_certificate(c.as_ref(), &k, 2000).unwrap();
            assert_eq!(r.verdict, Verdict::SupersolutionEvidence, "d={d}: {r:?}");
            let expect = (d as f64 - 1.0) / d as f64;
            assert!((r.bound_value.unwrap() - expect).abs() < 1e-12);
            assert!((r.residual_min - 1.0).abs() < 1e-12 && (r.residual_max - 1.0).abs() < 1e-12);
            assert!(r.boundary_min >= -1e-12);
        }
    }

    #[test]
    fn inscribed_ball_is_a_subsolution() {
        for (d, bound) in [(3usize, 1.0 / 6.0), (4, 1.0 / 12.0)] {
            let k = PolytopeK::simplex(d).unwrap();
            let c = CandidateSpec::parse("inscribed-ball").unwrap().build(&k).unwrap();
            let r = check_certificate(c.as_ref(), &k, 2000).unwrap();
            assert_eq!(r.verdict, Verdict::SubsolutionEvidence, "{r:?}");
            assert!((r.bound_value.unwrap() - bound).abs() < 1e-12);
            assert!(r.boundary_max <= 1e-12);
        }
    }

    #[test]
    fn scaled_up_ball_is_neither() {
        let k = PolytopeK::simplex(3).unwrap();
        let c = CandidateSpec::InscribedBall { scale: 1.5 }.build(&k).unwrap();
        assert_eq!(check_certificate(c.as_ref(), &k, 500).unwrap().verdict, Verdict::Neither);
    }

    #[test]
    fn polynomial_json_matches_named_quadratic() {
        let k = PolytopeK::simplex(3).unwrap();
        let spec = CandidateSpec::parse(
            r#"{"type":"polynomial","terms":[{"coeff":0.6666666666666666,"powers":[0,0]},
                {"coeff":-1,"powers":[2,0]},{"coeff":-1,"powers":[0,2]}]}"#,
        )
        .unwrap();
        let p = spec.build(&k).unwrap();
        let q = CandidateSpec::Quadratic.build(&k).unwrap();
        for x in interior_samples(&k, 50) {
            let (a, ga, ha) = p.jet(&x).unwrap();
            let (b, gb, hb) = q.jet(&x).unwrap();
            assert!((a - b).abs() < 1e-15);
            assert!(ga.iter().zip(&gb).chain(ha.iter().zip(&hb)).all(|(u, v)| (u - v).abs() < 1e-15));
        }
        let bad = CandidateSpec::parse(r#"{"type":"polynomial","terms":[{"coeff":1,"powers":[1]}]}"#).unwrap();
        assert!(bad.build(&k).is_err());
        assert!(CandidateSpec::parse("cubic").is_err());
    }

    #[test]
    fn polynomial_derivatives_by_hand() {
        // 3 x^2 y - y^3
        let p = Polynomial {
            terms: vec![Monomial { coeff: 3.0, powers: vec![2, 1] }, Monomial { coeff: -1.0, powers: vec![0, 3] }],
            dim: 2,
            name: "p".into(),
        };
        let (v, g, h) = p.jet(&[0.5, -2.0]).unwrap();
        assert!((v - (3.0 * 0.25 * -2.0 + 8.0)).abs() < 1e-14);
        assert!((g[0] - 6.0 * 0.5 * -2.0).abs() < 1e-14);
        assert!((g[1] - (3.0 * 0.25 - 3.0 * 4.0)).abs() < 1e-14);
        assert_eq!(h, vec![-12.0, 3.0, 3.0, 12.0]);
    }

    #[test]
    fn boundary_samples_lie_on_the_boundary() {
        let k = PolytopeK::simplex(4).unwrap();
        let b = boundary_samples(&k, 200);
        assert!(b.len() > 150);
        assert!(b.iter().all(|x| k.signed_boundary_distance(x).abs() < 1e-9));
    }
}
