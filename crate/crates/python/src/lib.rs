//! Python bindings. Structured arguments and results cross the boundary as
//! plain dicts and lists (through the `json` module).

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::de::DeserializeOwned;
use serde::Serialize;
use specdim::gauge::{self, GaugeSpec};
use specdim::measure::MeasureSpec;
use specdim::{borel, dynamics, halfline, hausdorff_set, rank_one, runner, trend};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let s: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&s).map_err(err)
}

fn to_py<T: Serialize>(py: Python<'_>, x: &T) -> PyResult<Py<PyAny>> {
    let s = serde_json::to_string(x).map_err(err)?;
    Ok(py.import("json")?.call_method1("loads", (s,))?.unbind())
}

/// Gauge function built from `{"name": ..., "params": {...}}` or a name plus keyword params.
#[pyclass(name = "Gauge", module = "specdim_py", skip_from_py_object)]
#[derive(Clone)]
struct Gauge {
    inner: specdim::GaugeFunction,
}

#[pymethods]
impl Gauge {
    #[new]
    #[pyo3(signature = (name, **params))]
    fn new(name: &Bound<'_, PyAny>, params: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let inner = if let Ok(n) = name.extract::<String>() {
            let p: serde_json::Value = match params {
                Some(d) => from_py(d.as_any())?,
                None => serde_json::json!({}),
            };
            gauge::build_named(&n, p).map_err(err)?
        } else {
            specdim::GaugeFunction::new(from_py::<GaugeSpec>(name)?).map_err(err)?
        };
        Ok(Gauge { inner })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name()
    }

    /// ln rho(e^{-s})
    fn log_form(&self, s: f64) -> f64 {
        self.inner.log_form(s)
    }

    /// ln rho(eps)
    fn ln_at(&self, eps: f64) -> f64 {
        self.inner.ln_at(eps)
    }

    fn spec(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, self.inner.spec())
    }

    fn __repr__(&self) -> String {
        format!("Gauge({})", self.inner.name())
    }
}

/// "Precedes", "Equivalent", "Succeeds" or "Undetermined".
#[pyfunction]
fn compare(rho: &Gauge, xi: &Gauge) -> PyResult<String> {
    let o = gauge::compare(&rho.inner, &xi.inner, &gauge::default_s_grid(), &trend::TrendConfig::default()).map_err(err)?;
    Ok(format!("{o:?}"))
}

/// Spectral measure from `{"atoms": [[E, a], ...], "density": [...], "cantor": {...}}`.
#[pyclass(name = "Measure", module = "specdim_py", skip_from_py_object)]
#[derive(Clone)]
struct Measure {
    inner: specdim::SpectralMeasure,
}

#[pymethods]
impl Measure {
    #[new]
    fn new(spec: &Bound<'_, PyAny>) -> PyResult<Self> {
        let s: MeasureSpec = from_py(spec)?;
        Ok(Measure { inner: specdim::SpectralMeasure::new(s).map_err(err)? })
    }

    #[staticmethod]
    fn atomic(atoms: Vec<(f64, f64)>) -> PyResult<Self> {
        Ok(Measure { inner: specdim::SpectralMeasure::atomic(&atoms).map_err(err)? })
    }

    #[staticmethod]
    fn semicircle() -> Self {
        Measure { inner: specdim::SpectralMeasure::semicircle() }
    }

    fn total_mass(&self) -> f64 {
        self.inner.total_mass()
    }

    fn mass(&self, lo: f64, hi: f64) -> f64 {
        self.inner.mass_closed(lo, hi)
    }

    fn atoms(&self) -> Vec<(f64, f64)> {
        self.inner.atoms().to_vec()
    }

    /// F(z) = int dmu(x) / (x - z)
    fn borel(&self, z: Complex64) -> PyResult<Complex64> {
        Ok(borel::borel_transform(&self.inner, z).map_err(err)?.value)
    }

    fn spec(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.spec())
    }
}

#[pyfunction]
fn hausborel(py: Python<'_>, mu: &Measure, x: f64, rho: &Gauge) -> PyResult<Py<PyAny>> {
    let eps = specdim::measure::default_eps_grid(&mu.inner);
    to_py(py, &borel::hausborel_compare(&mu.inner, x, &rho.inner, &eps).map_err(err)?)
}

#[pyfunction]
fn boole_check(py: Python<'_>, mu: &Measure, lambdas: Vec<f64>) -> PyResult<Py<PyAny>> {
    to_py(py, &borel::boole_check(&mu.inner, &lambdas).map_err(err)?)
}

#[pyfunction]
fn measure_dimension(py: Python<'_>, mu: &Measure, family: &Bound<'_, PyAny>) -> PyResult<Py<PyAny>> {
    let fam: specdim::CompleteFamily = from_py(family)?;
    to_py(py, &specdim::measure::measure_dimension(&mu.inner, &fam).map_err(err)?)
}

/// Dimension of a cover tree (`{"rule": "cantor", "ratio": r}` etc.) in a complete family.
#[pyfunction]
#[pyo3(signature = (tree, family, k_min = 5, k_max = 60, tol = 0.005))]
fn set_dimension(py: Python<'_>, tree: &Bound<'_, PyAny>, family: &Bound<'_, PyAny>, k_min: usize, k_max: usize, tol: f64) -> PyResult<Py<PyAny>> {
    let t = hausdorff_set::CoverTree::from_spec(from_py(tree)?).map_err(err)?;
    let fam: specdim::CompleteFamily = from_py(family)?;
    let r = hausdorff_set::set_dimension_report(&t, &fam, (k_min, k_max), tol, &Default::default()).map_err(err)?;
    to_py(py, &r)
}

/// (estimate, positive flag) of the upper Lyapunov exponent.
#[pyfunction]
#[pyo3(signature = (potential, energy, n_max = 100_000, theta = 0.0))]
fn upper_lyapunov(potential: &Bound<'_, PyAny>, energy: f64, n_max: usize, theta: f64) -> PyResult<(f64, bool)> {
    let spec: halfline::PotentialSpec = from_py(potential)?;
    let h = halfline::HalfLineOperator::new(halfline::Potential::from_spec(&spec).map_err(err)?, theta).map_err(err)?;
    let r = halfline::upper_lyapunov(&h, energy, &halfline::default_schedule(n_max), &Default::default());
    Ok((r.estimate, r.positive))
}

/// Eigenvalues and weights of the rank-one perturbation of an atomic measure.
#[pyfunction]
fn rank_one_spectrum(mu: &Measure, coupling: f64) -> PyResult<Vec<(f64, f64)>> {
    let p = rank_one::RankOnePerturbation::new(mu.inner.clone(), coupling).map_err(err)?;
    rank_one::perturbed_spectrum(&p).map_err(err)
}

/// The same spectrum by direct diagonalization of diag(E) + coupling sqrt(a) sqrt(a)^T.
#[pyfunction]
fn rank_one_oracle(atoms: Vec<(f64, f64)>, coupling: f64) -> PyResult<Vec<(f64, f64)>> {
    rank_one::rank_one_matrix_oracle(&atoms, coupling).map_err(err)
}

/// Time averages <<obs>>_T on a truncated lattice, starting from delta at `site`.
#[pyfunction]
#[pyo3(signature = (lattice, site, observable, times))]
fn time_average(lattice: &Bound<'_, PyAny>, site: Vec<i64>, observable: &Bound<'_, PyAny>, times: Vec<f64>) -> PyResult<Vec<f64>> {
    let spec: dynamics::LatticeSpec = from_py(lattice)?;
    let obs: dynamics::Observable = from_py(observable)?;
    let ham = dynamics::LatticeHamiltonian::new(spec).map_err(err)?;
    let i = ham.site_index(&site).ok_or_else(|| err("site outside the box"))?;
    let mut psi = vec![0.0; ham.dim()];
    psi[i] = 1.0;
    let plan = dynamics::EvolutionPlan::new(ham, psi, dynamics::DEFAULT_LEAKAGE_BUDGET).map_err(err)?;
    let av = dynamics::average_over(&plan, &obs, &times, dynamics::Quadrature::Exact).map_err(err)?;
    Ok(av.into_iter().map(|a| a.value).collect())
}

/// Run a batch configuration; returns (csv text, report dict).
#[pyfunction]
fn run(py: Python<'_>, config: &Bound<'_, PyAny>) -> PyResult<(String, Py<PyAny>)> {
    let v: serde_json::Value = from_py(config)?;
    let cfg = runner::RunConfig::from_value(v).map_err(err)?;
    let out = py.detach(|| runner::run(&cfg)).map_err(err)?;
    let report = py.import("json")?.call_method1("loads", (out.json,))?.unbind();
    Ok((out.csv, report))
}

#[pymodule]
fn specdim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Gauge>()?;
    m.add_class::<Measure>()?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(hausborel, m)?)?;
    m.add_function(wrap_pyfunction!(boole_check, m)?)?;
    m.add_function(wrap_pyfunction!(measure_dimension, m)?)?;
    m.add_function(wrap_pyfunction!(set_dimension, m)?)?;
    m.add_function(wrap_pyfunction!(upper_lyapunov, m)?)?;
    m.add_function(wrap_pyfunction!(rank_one_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(rank_one_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(time_average, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
