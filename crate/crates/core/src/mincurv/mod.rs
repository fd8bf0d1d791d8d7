//! The minimum-curvature operator
//! `F(p, M) = inf { -tr(a M)/2 : a >= 0, tr a = 1, a p = 0 }`,
//! a wide-stencil level-set solver for `F(grad u, D^2 u) = 1` with zero or
//! facet boundary data, and pointwise sub/supersolution certificates.

mod certificate;
mod operator;
mod solver;

pub use certificate::{
    boundary_samples, check_certificate, check_certificate_with, interior_samples, Candidate, CandidateSpec,
    CertificateConfig, CertificateReport, FieldCandidate, Histogram, InscribedBall, Jet, Monomial, Polynomial,
    Verdict,
};
pub use operator::{f_operator, f_operator_checked, OperatorInput};
pub use solver::{
    facet_samples, refine, simplex_facet_boundary, solve_mincurv, solve_mincurv_cfg, solve_mincurv_with,
    stencil_directions, BoundaryData, FacetBoundary, FieldSummary, MinCurvConfig, MinCurvField, Refinement,
    ZeroBoundary,
};

/// Radical inverse of `index` in `base`.
pub(crate) fn halton(mut index: u64, base: u64) -> f64 {
    let (mut f, mut r) = (1.0, 0.0);
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

#[cfg(test)]
mod tests {
    #[test]
    fn halton_prefix() {
        let v: Vec<f64> = (1..5).map(|k| super::halton(k, 2)).collect();
        assert_eq!(v, vec![0.5, 0.25, 0.75, 0.125]);
        assert!((super::halton(5, 3) - 7.0 / 9.0).abs() < 1e-15);
    }
}
