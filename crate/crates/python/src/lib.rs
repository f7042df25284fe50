//! Python bindings. Structured results come back as plain dicts and lists.

use dyadsim_core::dynamics::{self, NoiseDistribution, NoiseSpec};
use dyadsim_core::ensemble;
use dyadsim_core::model::{IntegrationControls, SiteParams};
use dyadsim_core::perturbation::{self, DyadParams};
use dyadsim_core::rng;
use dyadsim_core::topology::{self, BoostedSite, ChainSpec, DyadNetwork, InterLink, LinkKind, TetradShape};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyModule;
use serde::Serialize;

create_exception!(dyadsim, DyadsimError, PyException);

fn err(e: dyadsim_core::Error) -> PyErr {
    DyadsimError::new_err(format!("{}: {e}", e.kind()))
}

/// Serialises through JSON so Python gets dicts, lists and floats.
fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn noise(seed: u64, amplitude: f64, distribution: &str) -> PyResult<NoiseSpec> {
    let distribution = match distribution {
        "gaussian" | "complex_gaussian" => NoiseDistribution::ComplexGaussian,
        "disk" | "uniform_disk" => NoiseDistribution::UniformDisk,
        other => return Err(PyValueError::new_err(format!("unknown noise distribution '{other}'"))),
    };
    Ok(NoiseSpec { amplitude, distribution, seed })
}

fn shape(name: &str) -> PyResult<TetradShape> {
    match name {
        "square" => Ok(TetradShape::Square),
        "crossed" => Ok(TetradShape::Crossed),
        other => Err(PyValueError::new_err(format!("unknown tetrad shape '{other}'"))),
    }
}

/// Parameters of a symmetric dyad and its perturbative calibration.
#[pyclass(name = "DyadParams", module = "dyadsim", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyDyadParams {
    inner: DyadParams,
}

#[pymethods]
impl PyDyadParams {
    #[new]
    #[pyo3(signature = (J, gamma, g, xi))]
    #[allow(non_snake_case)]
    fn new(J: f64, gamma: f64, g: f64, xi: f64) -> PyResult<Self> {
        Ok(PyDyadParams { inner: DyadParams::new(J, gamma, g, xi).map_err(err)? })
    }

    #[getter(J)]
    fn j(&self) -> f64 {
        self.inner.j
    }
    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma0
    }
    #[getter]
    fn g(&self) -> f64 {
        self.inner.g
    }
    #[getter]
    fn xi(&self) -> f64 {
        self.inner.xi
    }

    /// Zeroth-order equal-occupancy state: dict with a1, a2, theta, mu.
    fn equal_occupancy(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &perturbation::equal_occupancy_state(self.inner).map_err(err)?)
    }

    /// Closed-form first-order corrections (gamma1, theta1, mu1, a1_1, a2_1).
    fn closed_form(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &perturbation::closed_form_corrections(self.inner).map_err(err)?)
    }

    /// The same corrections from the general 4x4 linear system.
    fn first_order(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let base = perturbation::equal_occupancy_state(self.inner).map_err(err)?;
        to_py(py, &perturbation::solve_first_order(&base).map_err(err)?)
    }

    fn locus_slope(&self) -> f64 {
        perturbation::analytic_locus_slope(self.inner)
    }

    /// `(r_g, r_gamma)` pairs from the closed form and from the exact nonlinear locus.
    fn calibration_curve(&self, py: Python<'_>, epsilons: Vec<f64>) -> PyResult<Py<PyAny>> {
        let analytic = perturbation::analytic_calibration_curve(self.inner, &epsilons).map_err(err)?;
        let numerical = perturbation::numerical_calibration_curve(self.inner, &epsilons).map_err(err)?;
        to_py(py, &serde_json::json!({ "analytic": analytic, "numerical": numerical }))
    }

    /// Monte-Carlo p1 and sigma over `r_g_grid` at fixed `r_gamma`, with spline critical points.
    #[pyo3(signature = (r_gamma, r_g_grid, n_trials, seed = 0, amplitude = 1e-3))]
    fn calibration_sweep(
        &self,
        py: Python<'_>,
        r_gamma: f64,
        r_g_grid: Vec<f64>,
        n_trials: usize,
        seed: u64,
        amplitude: f64,
    ) -> PyResult<Py<PyAny>> {
        let noise = noise(seed, amplitude, "gaussian")?;
        let p = self.inner;
        let r = py
            .detach(|| {
                ensemble::calibration_sweep(p, IntegrationControls::default(), r_gamma, &r_g_grid, n_trials, &noise)
            })
            .map_err(err)?;
        to_py(py, &r)
    }

    fn __repr__(&self) -> String {
        let p = self.inner;
        format!("DyadParams(J={}, gamma={}, g={}, xi={})", p.j, p.gamma0, p.g, p.xi)
    }
}

/// A coupled network with its dyad pairs.
#[pyclass(name = "Network", module = "dyadsim", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyNetwork {
    inner: DyadNetwork,
}

#[pymethods]
impl PyNetwork {
    #[staticmethod]
    #[pyo3(signature = (J, gamma, g, xi))]
    #[allow(non_snake_case)]
    fn dyad(J: f64, gamma: f64, g: f64, xi: f64) -> PyResult<Self> {
        let base = SiteParams::new(gamma, g).map_err(err)?;
        Ok(PyNetwork { inner: topology::dyad(J, base, xi).map_err(err)? })
    }

    #[staticmethod]
    #[pyo3(signature = (J, alpha, gamma, g, xi, shape = "square"))]
    #[allow(non_snake_case)]
    fn tetrad(J: f64, alpha: f64, gamma: f64, g: f64, xi: f64, shape: &str) -> PyResult<Self> {
        let base = SiteParams::new(gamma, g).map_err(err)?;
        Ok(PyNetwork { inner: topology::tetrad(J, alpha, self::shape(shape)?, base, xi).map_err(err)? })
    }

    /// Chain of `n_dyads`; `links` are `(position, "lateral" | "crossed", alpha)`,
    /// `boosts` are `(site, factor)`.
    #[staticmethod]
    #[pyo3(signature = (n_dyads, J, gamma, g, xi, links = Vec::new(), boosts = Vec::new()))]
    #[allow(non_snake_case)]
    fn chain(
        n_dyads: usize,
        J: f64,
        gamma: f64,
        g: f64,
        xi: f64,
        links: Vec<(usize, String, f64)>,
        boosts: Vec<(usize, f64)>,
    ) -> PyResult<Self> {
        let inter_links = links
            .into_iter()
            .map(|(position, kind, alpha)| {
                let kind = match kind.as_str() {
                    "lateral" => LinkKind::Lateral,
                    "crossed" => LinkKind::Crossed,
                    other => return Err(PyValueError::new_err(format!("unknown link kind '{other}'"))),
                };
                Ok(InterLink { position, kind, alpha })
            })
            .collect::<PyResult<Vec<_>>>()?;
        let spec = ChainSpec {
            n_dyads,
            intra_coupling: J,
            inter_links,
            boosted_sites: boosts.into_iter().map(|(site, factor)| BoostedSite { site, factor }).collect(),
        };
        let base = SiteParams::new(gamma, g).map_err(err)?;
        Ok(PyNetwork { inner: topology::chain(&spec, base, xi).map_err(err)? })
    }

    /// Copy with site `site` set to `(gamma, g)`.
    fn with_site(&self, site: usize, gamma: f64, g: f64) -> PyResult<Self> {
        let params = SiteParams::new(gamma, g).map_err(err)?;
        Ok(PyNetwork { inner: self.inner.clone().with_site(site, params).map_err(err)? })
    }

    /// Copy with the pump of `site` multiplied by `factor`.
    fn boost(&self, site: usize, factor: f64) -> PyResult<Self> {
        Ok(PyNetwork { inner: self.inner.clone().boost(site, factor).map_err(err)? })
    }

    #[getter]
    fn n_sites(&self) -> usize {
        self.inner.config.n()
    }

    #[getter]
    fn dyads(&self) -> Vec<(usize, usize)> {
        self.inner.dyads.clone()
    }

    #[getter]
    fn coupling(&self) -> Vec<Vec<f64>> {
        self.inner.config.coupling.to_rows()
    }

    #[pyo3(signature = (seed = 0, amplitude = 1e-3, distribution = "gaussian"))]
    fn run_trial(&self, py: Python<'_>, seed: u64, amplitude: f64, distribution: &str) -> PyResult<Py<PyAny>> {
        let noise = noise(seed, amplitude, distribution)?;
        let net = &self.inner;
        let o = py.detach(|| dynamics::run_trial(&net.config, &net.dyads, &noise)).map_err(err)?;
        to_py(py, &o)
    }

    /// Trials with seeds `seed .. seed + n_trials`; returns aggregate statistics.
    #[pyo3(signature = (n_trials, seed = 0, amplitude = 1e-3, distribution = "gaussian"))]
    fn run_ensemble(
        &self,
        py: Python<'_>,
        n_trials: usize,
        seed: u64,
        amplitude: f64,
        distribution: &str,
    ) -> PyResult<Py<PyAny>> {
        let noise = noise(seed, amplitude, distribution)?;
        let net = &self.inner;
        let s = py.detach(|| ensemble::run_ensemble(&net.config, &net.dyads, n_trials, &noise)).map_err(err)?;
        to_py(py, &s)
    }

    /// Chain samples plus the randomness test reports.
    #[pyo3(signature = (n_samples, seed = 0, amplitude = 1e-3))]
    fn generate_stream(&self, py: Python<'_>, n_samples: usize, seed: u64, amplitude: f64) -> PyResult<Py<PyAny>> {
        let noise = noise(seed, amplitude, "gaussian")?;
        let net = &self.inner;
        let stream = py.detach(|| rng::generate_stream(net, n_samples, &noise)).map_err(err)?;
        let tests = if stream.samples.len() >= 100 { rng::test_suite(&stream.samples).ok() } else { None };
        let mi = rng::max_pairwise_mutual_information(&stream.samples).ok();
        to_py(
            py,
            &serde_json::json!({
                "samples": stream.samples,
                "attempted": stream.attempted,
                "unresolved": stream.unresolved,
                "nonstationary": stream.nonstationary,
                "tests": tests,
                "max_pairwise_mi": mi,
            }),
        )
    }

    fn __repr__(&self) -> String {
        format!("Network(n_sites={}, dyads={:?})", self.inner.config.n(), self.inner.dyads)
    }
}

/// Bias `B(alpha)` of a tetrad for each alpha.
#[pyfunction]
#[pyo3(signature = (J, alphas, gamma, g, xi, n_trials, shape = "square", seed = 0, amplitude = 1e-3))]
#[allow(non_snake_case, clippy::too_many_arguments)]
fn tetrad_bias(
    py: Python<'_>,
    J: f64,
    alphas: Vec<f64>,
    gamma: f64,
    g: f64,
    xi: f64,
    n_trials: usize,
    shape: &str,
    seed: u64,
    amplitude: f64,
) -> PyResult<Py<PyAny>> {
    let base = SiteParams::new(gamma, g).map_err(err)?;
    let shape = self::shape(shape)?;
    let noise = noise(seed, amplitude, "gaussian")?;
    let rows = py
        .detach(|| {
            ensemble::tetrad_bias(J, &alphas, shape, base, xi, IntegrationControls::default(), n_trials, &noise)
        })
        .map_err(err)?;
    to_py(py, &rows)
}

/// Region verdict of a symmetric dyad: "asymmetric", "symmetric", "non_stationary" or "no_condensate".
#[pyfunction]
#[pyo3(signature = (gamma, g, J, xi, n_seeds = 8, seed = 0, amplitude = 1e-3))]
#[allow(non_snake_case, clippy::too_many_arguments)]
fn classify_point(
    py: Python<'_>,
    gamma: f64,
    g: f64,
    J: f64,
    xi: f64,
    n_seeds: usize,
    seed: u64,
    amplitude: f64,
) -> PyResult<Py<PyAny>> {
    let noise = noise(seed, amplitude, "gaussian")?;
    let c = py
        .detach(|| ensemble::classify_point(gamma, g, J, xi, IntegrationControls::default(), n_seeds, &noise))
        .map_err(err)?;
    to_py(py, &c)
}

/// Bits (dyad 0 first) to integer.
#[pyfunction]
fn encode(bits: Vec<u8>) -> PyResult<u64> {
    rng::encode(&bits).map_err(err)
}

/// Integer to `n` bits, dyad 0 first.
#[pyfunction]
fn decode(value: u64, n: usize) -> PyResult<Vec<u32>> {
    // Vec<u8> would surface as `bytes`.
    Ok(rng::decode(value, n).map_err(err)?.into_iter().map(u32::from).collect())
}

#[pymodule]
fn dyadsim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DyadsimError", m.py().get_type::<DyadsimError>())?;
    m.add_class::<PyDyadParams>()?;
    m.add_class::<PyNetwork>()?;
    m.add_function(wrap_pyfunction!(tetrad_bias, m)?)?;
    m.add_function(wrap_pyfunction!(classify_point, m)?)?;
    m.add_function(wrap_pyfunction!(encode, m)?)?;
    m.add_function(wrap_pyfunction!(decode, m)?)?;
    Ok(())
}
