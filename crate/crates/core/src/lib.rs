//! Numerical toolkit for the sharp relative-arbitrage horizon `T*` of
//! sufficiently volatile equity markets.
//!
//! * [`geometry`]: the isometric chart of the simplex and the polytope `K`.
//! * [`portfolio`]: realized covariation, functionally generated strategies,
//!   volatility and arbitrage checks.
//! * [`mcf2d`]: arrival time of curve shortening flow on convex planar domains,
//!   by front tracking and by a level-set grid solver.
//! * [`mincurv`]: the minimum-curvature operator, a wide-stencil solver for its
//!   arrival-time equation and sub/supersolution certificates.
//! * [`sde`]: Euler–Maruyama simulation of the optimal martingales and their
//!   conversion to market-weight paths.

// `!(x > 0.0)` rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod domain;
pub mod error;
pub mod fmt;
pub mod geometry;
pub mod grid;
pub mod mcf2d;
pub mod mincurv;
pub mod portfolio;
pub mod sde;

pub use domain::{Ball, ConvexDomain};
pub use error::{Error, Result};
pub use geometry::{build_isometry, facet_lattice, Facet, IsometryMap, PolytopeK, SimplexPoint};
