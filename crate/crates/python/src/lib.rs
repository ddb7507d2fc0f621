//! Python bindings for `ncc_ofdma`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use ncc_ofdma::analysis::{self, AnalyticParams, OutageCurve, OutagePoint, SnrWindow};
use ncc_ofdma::channel::{self, Mode, OfdmaGrid};
use ncc_ofdma::matching::{self, BipartiteGraph};
use ncc_ofdma::montecarlo::{self, EstimatorConfig};
use ncc_ofdma::{protocol, Engine, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config { .. } | Error::Parse { .. } | Error::Usage(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse_mode(mode: &str) -> PyResult<Mode> {
    mode.parse().map_err(py_err)
}

#[pyclass(name = "NetworkConfig", frozen, from_py_object)]
#[derive(Clone)]
struct PyNetworkConfig {
    inner: channel::NetworkConfig,
}

#[pymethods]
impl PyNetworkConfig {
    #[new]
    #[pyo3(signature = (sources, relays, blocks, subcarriers_per_block, k1, k2=None, rate_r=1.0, mode="realistic", r0=1.0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        sources: usize,
        relays: usize,
        blocks: usize,
        subcarriers_per_block: usize,
        k1: usize,
        k2: Option<usize>,
        rate_r: f64,
        mode: &str,
        r0: f64,
    ) -> PyResult<Self> {
        let grid = OfdmaGrid::new(blocks, subcarriers_per_block).map_err(py_err)?;
        let inner = channel::NetworkConfig::new(
            sources,
            relays,
            grid,
            k1,
            k2.unwrap_or(k1),
            rate_r,
            parse_mode(mode)?,
            r0,
        )
        .map_err(py_err)?;
        Ok(Self { inner })
    }

    fn with_mode(&self, mode: &str) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.clone().with_mode(parse_mode(mode)?),
        })
    }

    #[getter]
    fn sources(&self) -> usize {
        self.inner.sources()
    }
    #[getter]
    fn relays(&self) -> usize {
        self.inner.relays()
    }
    #[getter]
    fn blocks(&self) -> usize {
        self.inner.grid().blocks()
    }
    #[getter]
    fn subcarriers_per_block(&self) -> usize {
        self.inner.grid().subcarriers_per_block()
    }
    #[getter]
    fn k1(&self) -> usize {
        self.inner.k1()
    }
    #[getter]
    fn k2(&self) -> usize {
        self.inner.k2()
    }
    #[getter]
    fn rate_r(&self) -> f64 {
        self.inner.rate_r()
    }
    #[getter]
    fn r0(&self) -> f64 {
        self.inner.r0()
    }
    #[getter]
    fn mode(&self) -> &'static str {
        self.inner.mode().as_str()
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "NetworkConfig(P={}, M={}, L={}, N_c={}, K1={}, K2={}, rate_r={}, mode={:?})",
            c.sources(),
            c.relays(),
            c.grid().blocks(),
            c.grid().subcarriers_per_block(),
            c.k1(),
            c.k2(),
            c.rate_r(),
            c.mode().as_str()
        )
    }
}

#[pyclass(name = "FrameOutcome", frozen, get_all)]
struct PyFrameOutcome {
    relay_decode_set: Vec<usize>,
    m: usize,
    direct_success: Vec<bool>,
    coded_success: Vec<bool>,
    recovered: Vec<bool>,
    frame_outage: bool,
    relay_source_ok: Vec<Vec<bool>>,
}

#[pymethods]
impl PyFrameOutcome {
    fn __repr__(&self) -> String {
        format!(
            "FrameOutcome(m={}, relay_decode_set={:?}, frame_outage={})",
            self.m, self.relay_decode_set, self.frame_outage
        )
    }
}

#[pyfunction]
fn db_to_linear(db: f64) -> f64 {
    channel::db_to_linear(db)
}

#[pyfunction]
#[pyo3(signature = (snr, rate_r=1.0))]
fn block_outage_prob(snr: f64, rate_r: f64) -> f64 {
    channel::block_outage_prob(snr, rate_r)
}

/// Closed-form frame outage probability at linear `snr`.
#[pyfunction]
#[pyo3(signature = (config, snr, mode=None))]
fn overall_outage(config: &PyNetworkConfig, snr: f64, mode: Option<&str>) -> PyResult<f64> {
    let mode = mode
        .map(parse_mode)
        .transpose()?
        .unwrap_or(config.inner.mode());
    Ok(analysis::overall_outage(
        &AnalyticParams::from_config(&config.inner, snr),
        mode,
    ))
}

#[pyfunction]
fn analytic_curve(config: &PyNetworkConfig, snrs: Vec<f64>) -> PyResult<Vec<f64>> {
    let curve =
        analysis::analytic_curve(&config.inner, &snrs, config.inner.mode()).map_err(py_err)?;
    Ok(curve.points().iter().map(|p| p.outage).collect())
}

/// Returns `(coefficient, exponent)` of the high-SNR realistic outage.
#[pyfunction]
fn asymptotic_leading_term(sources: usize, relays: usize, blocks: usize) -> PyResult<(f64, usize)> {
    let t = analysis::asymptotic_leading_term(sources, relays, blocks).map_err(py_err)?;
    Ok((t.coefficient, t.exponent))
}

#[pyfunction]
fn simulate_frame(config: &PyNetworkConfig, snr: f64, seed: u64) -> PyResult<PyFrameOutcome> {
    let o = protocol::simulate_frame(&config.inner, snr, seed).map_err(py_err)?;
    Ok(PyFrameOutcome {
        relay_decode_set: o.relay_decode_set,
        m: o.m,
        direct_success: o.direct_success,
        coded_success: o.coded_success,
        recovered: o.recovered,
        frame_outage: o.frame_outage,
        relay_source_ok: o.relay_source_ok,
    })
}

fn estimator(
    trials: u64,
    seed: u64,
    workers: Option<usize>,
    target_stderr: Option<f64>,
) -> PyResult<EstimatorConfig> {
    let mut est = EstimatorConfig::new(trials, seed).map_err(py_err)?;
    est.workers = workers;
    est.target_stderr = target_stderr;
    est.validate().map_err(py_err)?;
    Ok(est)
}

/// Returns `(outage, stderr, trials)`.
#[pyfunction]
#[pyo3(signature = (config, snr, trials, seed, workers=None, target_stderr=None))]
fn estimate_outage(
    py: Python<'_>,
    config: &PyNetworkConfig,
    snr: f64,
    trials: u64,
    seed: u64,
    workers: Option<usize>,
    target_stderr: Option<f64>,
) -> PyResult<(f64, f64, u64)> {
    let est = estimator(trials, seed, workers, target_stderr)?;
    let p = py
        .detach(|| montecarlo::estimate_outage(&config.inner, snr, &est))
        .map_err(py_err)?;
    Ok((p.outage, p.stderr, p.trials))
}

/// Returns a list of `(snr, outage, stderr, trials)`.
#[pyfunction]
#[pyo3(signature = (config, snrs, trials, seed, workers=None))]
fn sweep(
    py: Python<'_>,
    config: &PyNetworkConfig,
    snrs: Vec<f64>,
    trials: u64,
    seed: u64,
    workers: Option<usize>,
) -> PyResult<Vec<(f64, f64, f64, u64)>> {
    let est = estimator(trials, seed, workers, None)?;
    let curve = py
        .detach(|| montecarlo::sweep(&config.inner, &snrs, &est))
        .map_err(py_err)?;
    Ok(curve
        .points()
        .iter()
        .map(|p| (p.snr, p.outage, p.stderr, p.trials))
        .collect())
}

fn graph(users: usize, subcarriers: usize, edges: Vec<(usize, usize)>) -> PyResult<BipartiteGraph> {
    BipartiteGraph::from_edges(users, subcarriers, edges).map_err(py_err)
}

/// Subcarriers assigned to each user; unsaturated users get an empty list.
#[pyfunction]
fn max_constraint_matching(
    users: usize,
    subcarriers: usize,
    edges: Vec<(usize, usize)>,
    k: usize,
) -> PyResult<Vec<Vec<usize>>> {
    let g = graph(users, subcarriers, edges)?;
    let m = matching::max_constraint_matching(&g, k).map_err(py_err)?;
    Ok((0..users).map(|u| m.assigned(u).to_vec()).collect())
}

/// Returns `(holds, witness)`.
#[pyfunction]
fn hall_condition(
    users: usize,
    subcarriers: usize,
    edges: Vec<(usize, usize)>,
    k: usize,
) -> PyResult<(bool, Option<Vec<usize>>)> {
    let h = matching::hall_condition(&graph(users, subcarriers, edges)?, k).map_err(py_err)?;
    Ok((h.holds, h.witness))
}

/// Least-squares slope of −log10(outage) against log10(snr) over `[lo, hi]`.
#[pyfunction]
fn diversity_slope(snrs: Vec<f64>, outages: Vec<f64>, lo: f64, hi: f64) -> PyResult<f64> {
    if snrs.len() != outages.len() {
        return Err(PyValueError::new_err("snrs and outages differ in length"));
    }
    let points = snrs
        .iter()
        .zip(&outages)
        .map(|(&s, &o)| OutagePoint::analytic(s, o))
        .collect();
    let curve = OutageCurve::new(points, Mode::Realistic, Engine::Analytic).map_err(py_err)?;
    let fit = analysis::diversity_slope(&curve, SnrWindow { lo, hi }).map_err(py_err)?;
    Ok(fit.slope)
}

#[pymodule(name = "ncc_ofdma")]
fn ncc_ofdma_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNetworkConfig>()?;
    m.add_class::<PyFrameOutcome>()?;
    m.add_function(wrap_pyfunction!(db_to_linear, m)?)?;
    m.add_function(wrap_pyfunction!(block_outage_prob, m)?)?;
    m.add_function(wrap_pyfunction!(overall_outage, m)?)?;
    m.add_function(wrap_pyfunction!(analytic_curve, m)?)?;
    m.add_function(wrap_pyfunction!(asymptotic_leading_term, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_frame, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_outage, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(max_constraint_matching, m)?)?;
    m.add_function(wrap_pyfunction!(hall_condition, m)?)?;
    m.add_function(wrap_pyfunction!(diversity_slope, m)?)?;
    Ok(())
}
