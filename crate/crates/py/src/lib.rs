//! Python bindings: domains, the operator, the two arrival-time solvers,
//! certificates, SDE ensembles and functionally generated strategies.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

use curvarb::mcf2d::{self, ArrivalField, FrontConfig, FrontPolygon};
use curvarb::mincurv::{
    check_certificate_with, f_operator_checked, solve_mincurv_cfg, solve_mincurv_with, CandidateSpec,
    CertificateConfig, MinCurvConfig, MinCurvField, ZeroBoundary,
};
use curvarb::portfolio::{generate_strategy, verify_relative_arbitrage, GeneratingFunction, SimplexPath};
use curvarb::sde::{self, DiskField, SimConfig};
use curvarb::{Ball, ConvexDomain, Error, PolytopeK};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::NoConvergence { .. } => PyRuntimeError::new_err(e.to_string()),
        Error::Io(_) | Error::Csv(_) => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(a) => {
            let items = a.iter().map(|x| to_py(py, x)).collect::<PyResult<Vec<_>>>()?;
            PyList::new(py, items)?.into_any()
        }
        Value::Object(o) => {
            let d = PyDict::new(py);
            for (k, x) in o {
                d.set_item(k, to_py(py, x)?)?;
            }
            d.into_any()
        }
    })
}

fn json_to_py<'py, T: serde::Serialize>(py: Python<'py>, x: &T) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &serde_json::to_value(x).map_err(|e| py_err(e.into()))?)
}

#[derive(Clone, Debug)]
enum Shape {
    Polytope(PolytopeK),
    Ball(Ball),
}

/// Convex domain: the chart of a simplex, a polygon or a ball.
#[pyclass(name = "Domain", frozen, skip_from_py_object, module = "pycurvarb")]
#[derive(Clone)]
struct PyDomain {
    shape: Shape,
}

impl PyDomain {
    fn domain(&self) -> &dyn ConvexDomain {
        match &self.shape {
            Shape::Polytope(k) => k,
            Shape::Ball(b) => b,
        }
    }

    fn inradius_value(&self) -> f64 {
        match &self.shape {
            Shape::Polytope(k) => k.inradius(),
            Shape::Ball(b) => b.radius,
        }
    }
}

#[pymethods]
impl PyDomain {
    /// Chart of the simplex with `d` vertices.
    #[staticmethod]
    fn simplex(d: usize) -> PyResult<Self> {
        Ok(Self { shape: Shape::Polytope(PolytopeK::simplex(d).map_err(py_err)?) })
    }

    /// Chart of `{max mu_i <= 1 - delta}` for three assets.
    #[staticmethod]
    fn diverse(delta: f64) -> PyResult<Self> {
        Ok(Self { shape: Shape::Polytope(mcf2d::diverse_truncation(delta).map_err(py_err)?.0) })
    }

    #[staticmethod]
    fn polygon(vertices: Vec<[f64; 2]>) -> PyResult<Self> {
        Ok(Self { shape: Shape::Polytope(PolytopeK::polygon(vertices).map_err(py_err)?) })
    }

    #[staticmethod]
    #[pyo3(signature = (radius = 1.0, center = None))]
    fn disk(radius: f64, center: Option<[f64; 2]>) -> PyResult<Self> {
        if !(radius > 0.0) {
            return Err(PyValueError::new_err("radius must be positive"));
        }
        Ok(Self { shape: Shape::Ball(Ball::new(center.unwrap_or([0.0, 0.0]).to_vec(), radius)) })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.domain().dim()
    }

    #[getter]
    fn inradius(&self) -> f64 {
        self.inradius_value()
    }

    #[getter]
    fn measure(&self) -> f64 {
        self.domain().measure()
    }

    /// Vertices of a polytope; empty for a ball.
    #[getter]
    fn vertices(&self) -> Vec<Vec<f64>> {
        match &self.shape {
            Shape::Polytope(k) => k.vertices().to_vec(),
            Shape::Ball(_) => Vec::new(),
        }
    }

    fn signed_distance(&self, x: Vec<f64>) -> PyResult<f64> {
        if x.len() != self.dim() {
            return Err(PyValueError::new_err(format!("expected {} coordinates", self.dim())));
        }
        Ok(self.domain().exact_signed_distance(&x))
    }

    fn contains(&self, x: Vec<f64>) -> PyResult<bool> {
        Ok(self.signed_distance(x)? >= 0.0)
    }

    fn __repr__(&self) -> String {
        match &self.shape {
            Shape::Polytope(k) => format!("Domain(polytope, dim={}, vertices={})", k.dim(), k.vertices().len()),
            Shape::Ball(b) => format!("Domain(ball, center={:?}, radius={})", b.center, b.radius),
        }
    }
}

/// Arrival time of curve shortening flow on a lattice.
#[pyclass(name = "ArrivalField", frozen, module = "pycurvarb")]
struct PyArrivalField {
    field: ArrivalField,
}

#[pymethods]
impl PyArrivalField {
    #[getter]
    fn h(&self) -> f64 {
        self.field.h()
    }

    #[getter]
    fn max_value(&self) -> f64 {
        self.field.max_value()
    }

    #[getter]
    fn critical_point(&self) -> [f64; 2] {
        self.field.critical_point()
    }

    fn value(&self, x: [f64; 2]) -> f64 {
        self.field.value(&x)
    }

    fn gradient(&self, x: [f64; 2]) -> [f64; 2] {
        self.field.gradient(&x)
    }

    /// `(x, y, w)` rows for every lattice node inside the domain.
    fn nodes(&self) -> Vec<(f64, f64, f64)> {
        nodes(self.field.lattice(), self.field.values(), self.field.inside_mask())
    }

    fn write_csv(&self, path: std::path::PathBuf) -> PyResult<()> {
        let file = std::fs::File::create(path)?;
        self.field.write_csv(std::io::BufWriter::new(file)).map_err(py_err)
    }
}

fn nodes(lattice: &curvarb::grid::Lattice, values: &[f64], inside: &[bool]) -> Vec<(f64, f64, f64)> {
    (0..values.len())
        .filter(|&i| inside[i])
        .map(|i| {
            let p = lattice.point(i);
            (p[0], p.get(1).copied().unwrap_or(0.0), values[i])
        })
        .collect()
}

/// Wide-stencil solution of the minimum-curvature arrival equation.
#[pyclass(name = "MinCurvField", frozen, module = "pycurvarb")]
struct PyMinCurvField {
    field: MinCurvField,
}

#[pymethods]
impl PyMinCurvField {
    #[getter]
    fn dim(&self) -> usize {
        self.field.dim()
    }

    #[getter]
    fn h(&self) -> f64 {
        self.field.h()
    }

    #[getter]
    fn max_value(&self) -> f64 {
        self.field.max_value()
    }

    #[getter]
    fn arg_max(&self) -> Vec<f64> {
        self.field.arg_max()
    }

    fn value(&self, x: Vec<f64>) -> PyResult<f64> {
        if x.len() != self.field.dim() {
            return Err(PyValueError::new_err(format!("expected {} coordinates", self.field.dim())));
        }
        Ok(self.field.value(&x))
    }

    fn lipschitz_estimate(&self) -> f64 {
        self.field.lipschitz_estimate()
    }

    fn quasi_concavity_violation(&self) -> f64 {
        self.field.quasi_concavity_violation()
    }

    /// Grid size, steps, maximizer and residual statistics.
    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        json_to_py(py, &self.field.summary())
    }

    /// Level field for the skew-gradient simulator (planar fields only).
    fn level_field(&self) -> PyResult<PyArrivalField> {
        Ok(PyArrivalField { field: sde::mincurv_level_field(&self.field).map_err(py_err)? })
    }

    fn write_csv(&self, path: std::path::PathBuf) -> PyResult<()> {
        let file = std::fs::File::create(path)?;
        self.field.write_csv(std::io::BufWriter::new(file)).map_err(py_err)
    }
}

/// `F(p, M)`: least `-tr(a M)/2` over unit-trace PSD `a` with `a p = 0`.
#[pyfunction]
fn f_operator(p: Vec<f64>, m: Vec<Vec<f64>>) -> PyResult<f64> {
    if m.len() != p.len() || m.iter().any(|row| row.len() != p.len()) {
        return Err(PyValueError::new_err("m must be a square matrix matching p"));
    }
    f_operator_checked(&p, &m.concat()).map_err(py_err)
}

/// Curve shortening arrival time on a planar domain; `h` defaults to inradius/80.
#[pyfunction]
#[pyo3(signature = (domain, h = None))]
fn solve_mcf(py: Python<'_>, domain: &PyDomain, h: Option<f64>) -> PyResult<PyArrivalField> {
    let h = h.unwrap_or(domain.inradius_value() / 80.0);
    let d = domain.clone();
    let field = py.detach(move || mcf2d::arrival_grid(d.domain(), h)).map_err(py_err)?;
    Ok(PyArrivalField { field })
}

/// Wide-stencil arrival time; `h` defaults to inradius/40 in the plane and inradius/6 in 3D.
#[pyfunction]
#[pyo3(signature = (domain, h = None, stencil_radius = 1))]
fn solve_mincurv(py: Python<'_>, domain: &PyDomain, h: Option<f64>, stencil_radius: usize) -> PyResult<PyMinCurvField> {
    let div = if domain.dim() == 2 { 40.0 } else { 6.0 };
    let h = h.unwrap_or(domain.inradius_value() / div);
    let cfg = MinCurvConfig::with_radius(stencil_radius);
    let d = domain.clone();
    let field = py
        .detach(move || match &d.shape {
            Shape::Polytope(k) => solve_mincurv_cfg(k, h, &cfg),
            Shape::Ball(b) => solve_mincurv_with(b, h, &cfg, &ZeroBoundary),
        })
        .map_err(py_err)?;
    Ok(PyMinCurvField { field })
}

/// Extinction time of a polygonal front and its area rate once smooth.
#[pyfunction]
#[pyo3(signature = (domain, vertices = 256, smooth_angle = 0.2))]
fn front_area_rate(py: Python<'_>, domain: &PyDomain, vertices: usize, smooth_angle: f64) -> PyResult<(f64, Option<f64>)> {
    let front = match &domain.shape {
        Shape::Polytope(k) => FrontPolygon::from_polygon(k, vertices),
        Shape::Ball(b) => FrontPolygon::circle([b.center[0], b.center[1]], b.radius, vertices),
    }
    .map_err(py_err)?;
    let history = py.detach(move || mcf2d::evolve_front(&front, &FrontConfig::default())).map_err(py_err)?;
    Ok((history.extinction_time(), history.smooth_area_rate(smooth_angle)))
}

/// Certificate for a candidate (`quadratic`, `inscribed-ball` or JSON) on the `d`-simplex chart.
#[pyfunction]
#[pyo3(signature = (candidate, d, samples = 20_000))]
fn check_certificate<'py>(py: Python<'py>, candidate: &str, d: usize, samples: usize) -> PyResult<Bound<'py, PyAny>> {
    let spec = CandidateSpec::parse(candidate).map_err(py_err)?;
    let report = py
        .detach(move || {
            let k = PolytopeK::simplex(d)?;
            let c = spec.build(&k)?;
            check_certificate_with(c.as_ref(), &k, &CertificateConfig { samples, ..CertificateConfig::default() })
        })
        .map_err(py_err)?;
    json_to_py(py, &report)
}

fn sim_config(dt: f64, n_paths: usize, seed: u64, t_max: Option<f64>) -> PyResult<SimConfig> {
    let cfg = SimConfig { dt, n_paths, seed, t_max, record_every: 0, ..SimConfig::default() };
    cfg.validate().map_err(py_err)?;
    Ok(cfg)
}

/// Exit times of the circle SDE `dX = (-X2, X1)/|X| dW` from `x0`.
#[pyfunction]
#[pyo3(signature = (domain, x0 = [0.0, 0.0], dt = 1e-4, n_paths = 1000, seed = 0, t_max = None))]
fn circle_exit_times(
    py: Python<'_>,
    domain: &PyDomain,
    x0: [f64; 2],
    dt: f64,
    n_paths: usize,
    seed: u64,
    t_max: Option<f64>,
) -> PyResult<Vec<f64>> {
    let cfg = sim_config(dt, n_paths, seed, t_max)?;
    let d = domain.clone();
    let e = py.detach(move || sde::circle_ensemble(x0, d.domain(), &cfg)).map_err(py_err)?;
    Ok(e.iter().map(|p| p.stopping_time()).collect())
}

/// Exit times of the skew-gradient SDE of `field`, or of `1 - |x|^2` on the unit disk if `field` is None.
#[pyfunction]
#[pyo3(signature = (domain, field = None, x0 = [0.0, 0.0], dt = 1e-4, n_paths = 1000, seed = 0, t_max = None))]
#[allow(clippy::too_many_arguments)]
fn skew_gradient_exit_times(
    py: Python<'_>,
    domain: &PyDomain,
    field: Option<&PyArrivalField>,
    x0: [f64; 2],
    dt: f64,
    n_paths: usize,
    seed: u64,
    t_max: Option<f64>,
) -> PyResult<Vec<f64>> {
    let cfg = sim_config(dt, n_paths, seed, t_max)?;
    let d = domain.clone();
    let e = match field {
        Some(f) => {
            let f = f.field.clone();
            py.detach(move || sde::skew_gradient_ensemble(x0, &f, d.domain(), &cfg))
        }
        None => py.detach(move || sde::skew_gradient_ensemble(x0, &DiskField, d.domain(), &cfg)),
    }
    .map_err(py_err)?;
    Ok(e.iter().map(|p| p.stopping_time()).collect())
}

/// Essential infimum (1st percentile), mean, spread and censoring of stopping times.
#[pyfunction]
#[pyo3(signature = (times, seed = 0))]
fn exit_time_statistics<'py>(py: Python<'py>, times: Vec<f64>, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    json_to_py(py, &sde::stopping_time_statistics(&times, seed).map_err(py_err)?)
}

/// Functionally generated strategy along a market-weight path.
///
/// Returns a dict with `theta`, `value`, `gamma`, and, when `horizon` is
/// given, the relative-arbitrage report over `[0, horizon]`.
#[pyfunction]
#[pyo3(signature = (times, weights, generator = "quadratic", horizon = None))]
fn strategy<'py>(
    py: Python<'py>,
    times: Vec<f64>,
    weights: Vec<Vec<f64>>,
    generator: &str,
    horizon: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let g: GeneratingFunction = serde_json::from_value(Value::String(generator.into()))
        .map_err(|_| PyValueError::new_err(format!("unknown generating function {generator:?}")))?;
    let path = SimplexPath::from_rows(times, weights).map_err(py_err)?;
    let s = generate_strategy(&path, g).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("theta", &s.theta)?;
    d.set_item("value", &s.value)?;
    d.set_item("gamma", &s.gamma)?;
    d.set_item("self_financing_residual", s.self_financing_residual(&path))?;
    if let Some(t) = horizon {
        d.set_item("arbitrage", json_to_py(py, &verify_relative_arbitrage(&s, t).map_err(py_err)?)?)?;
    }
    Ok(d.into_any())
}

#[pymodule]
fn pycurvarb(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyDomain>()?;
    m.add_class::<PyArrivalField>()?;
    m.add_class::<PyMinCurvField>()?;
    m.add_function(wrap_pyfunction!(f_operator, m)?)?;
    m.add_function(wrap_pyfunction!(solve_mcf, m)?)?;
    m.add_function(wrap_pyfunction!(solve_mincurv, m)?)?;
    m.add_function(wrap_pyfunction!(front_area_rate, m)?)?;
    m.add_function(wrap_pyfunction!(check_certificate, m)?)?;
    m.add_function(wrap_pyfunction!(circle_exit_times, m)?)?;
    m.add_function(wrap_pyfunction!(skew_gradient_exit_times, m)?)?;
    m.add_function(wrap_pyfunction!(exit_time_statistics, m)?)?;
    m.add_function(wrap_pyfunction!(strategy, m)?)?;
    Ok(())
}
