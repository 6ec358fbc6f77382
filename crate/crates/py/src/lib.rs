//! Python bindings: load or generate an economy, evaluate restrictions, run
//! batches and write report files.

use std::collections::BTreeSet;
use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use supplynet_core as core;
use supplynet_core::icio::{FormatAdapter, OecdOptions};
use supplynet_core::report::{emit_all, Binning, EmitOptions};
use supplynet_core::runner::{evaluate_scenario, TargetContext};

create_exception!(supplynet, SupplynetError, PyException);
create_exception!(supplynet, StabilityError, SupplynetError);
create_exception!(supplynet, TotalDependenceError, SupplynetError);
create_exception!(supplynet, UnknownCodeError, SupplynetError);
create_exception!(supplynet, DegenerateClassError, SupplynetError);

fn to_py(e: core::Error) -> PyErr {
    let msg = e.to_string();
    match e {
        core::Error::Stability { .. } | core::Error::Uncertified => StabilityError::new_err(msg),
        core::Error::TotalDependence { .. } => TotalDependenceError::new_err(msg),
        core::Error::UnknownCode(_) | core::Error::Spec(_) => UnknownCodeError::new_err(msg),
        core::Error::DegenerateClass(_) => DegenerateClassError::new_err(msg),
        core::Error::Argument(_) | core::Error::Usage(_) => PyValueError::new_err(msg),
        _ => SupplynetError::new_err(msg),
    }
}

/// `target=<code> source=<code> sectors=<list|ALL>`
#[pyclass(name = "RestrictionSpec", frozen, from_py_object)]
#[derive(Clone)]
struct PyRestrictionSpec {
    inner: core::RestrictionSpec,
}

#[pymethods]
impl PyRestrictionSpec {
    /// `sectors` is a list of sector codes, a comma-separated string, or
    /// "ALL".
    #[new]
    #[pyo3(signature = (target, source, sectors = None))]
    fn new(target: &str, source: &str, sectors: Option<Sectors>) -> PyResult<Self> {
        let selection = match sectors {
            None => core::SectorSelection::All,
            Some(Sectors::Text(s)) => s.parse().map_err(to_py)?,
            Some(Sectors::List(l)) => core::SectorSelection::Listed(l),
        };
        core::RestrictionSpec::new(target, source, selection)
            .map(|inner| PyRestrictionSpec { inner })
            .map_err(to_py)
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        text.parse()
            .map(|inner| PyRestrictionSpec { inner })
            .map_err(to_py)
    }

    #[getter]
    fn target(&self) -> &str {
        &self.inner.target
    }

    #[getter]
    fn source(&self) -> &str {
        &self.inner.source
    }

    #[getter]
    fn sectors(&self) -> String {
        self.inner.sector_label()
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }

    fn __repr__(&self) -> String {
        format!("RestrictionSpec('{}')", self.inner)
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }
}

#[derive(FromPyObject)]
enum Sectors {
    Text(String),
    List(Vec<String>),
}

/// Outcome of a single restriction.
#[pyclass(name = "Scenario", frozen, get_all)]
struct PyScenario {
    spec: PyRestrictionSpec,
    gamma: f64,
    delta_y: Vec<f64>,
    /// `(label, ψ)` per restricted supplier.
    psi: Vec<(String, f64)>,
    skipped_inactive: usize,
}

#[pymethods]
impl PyScenario {
    fn __repr__(&self) -> String {
        format!("Scenario({}, gamma={})", self.spec.inner, self.gamma)
    }
}

/// Calibrated table with a certified benchmark kernel.
#[pyclass(name = "Economy", frozen)]
struct PyEconomy {
    inner: core::Economy,
}

#[pymethods]
impl PyEconomy {
    /// Reads a table. `format` is "canonical" (long flows plus a final-use
    /// file) or "oecd" (wide matrix).
    #[staticmethod]
    #[pyo3(signature = (flows, final_use = None, format = "canonical", year = None))]
    fn load(
        flows: PathBuf,
        final_use: Option<PathBuf>,
        format: &str,
        year: Option<i32>,
    ) -> PyResult<Self> {
        let adapter = match format {
            "canonical" => FormatAdapter::Canonical { final_use },
            "oecd" => FormatAdapter::Oecd(OecdOptions { year }),
            other => {
                return Err(PyValueError::new_err(format!(
                    "format must be 'canonical' or 'oecd', got {other:?}"
                )))
            }
        };
        core::Economy::load(&flows, &adapter)
            .map(|inner| PyEconomy { inner })
            .map_err(to_py)
    }

    #[getter]
    fn countries(&self) -> Vec<String> {
        self.inner.index().countries().to_vec()
    }

    #[getter]
    fn sectors(&self) -> Vec<String> {
        self.inner.index().sectors().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.index().len()
    }

    /// Node labels `COUNTRY_SECTOR` in index order.
    fn labels(&self) -> Vec<String> {
        let idx = self.inner.index();
        (0..idx.len()).map(|k| idx.label(k)).collect()
    }

    /// Intermediate output z per node.
    fn sizes(&self) -> Vec<f64> {
        self.inner.calibration.sizes.z.clone()
    }

    /// Leakage β per node.
    fn leakage(&self) -> Vec<f64> {
        self.inner.calibration.leakage.beta.clone()
    }

    fn kernel_column_sums(&self) -> Vec<f64> {
        self.inner.kernel.column_sums()
    }

    /// Stability certificate as `(colsum_bound, spectral_radius, certified)`.
    fn certificate(&self) -> (f64, Option<f64>, bool) {
        let c = self.inner.certificate();
        (c.colsum_bound, c.spectral_radius, c.certified)
    }

    fn data_digest(&self) -> String {
        self.inner.data_digest()
    }

    /// Evaluates one restriction.
    fn run_scenario(&self, py: Python<'_>, spec: PyRestrictionSpec) -> PyResult<PyScenario> {
        let outcome = py
            .detach(|| {
                let ctx = TargetContext::new(&self.inner, &spec.inner.target)?;
                evaluate_scenario(&ctx, &spec.inner)
            })
            .map_err(to_py)?;
        Ok(PyScenario {
            spec,
            gamma: outcome.delta.gamma,
            delta_y: outcome.delta.delta_y,
            psi: outcome.diagnostics.psi,
            skipped_inactive: outcome.diagnostics.skipped_inactive,
        })
    }

    /// Runs every restriction of `kind` ("sector" or "country") against
    /// `target`.
    #[pyo3(signature = (kind, target, workers = 1))]
    fn run_batch(&self, py: Python<'_>, kind: &str, target: &str, workers: usize) -> PyResult<PyBatchReport> {
        let kind: core::ScenarioKind = kind.parse().map_err(to_py)?;
        let class = core::ScenarioClass::new(kind, target);
        py.detach(|| core::run_batch(&self.inner, &class, workers))
            .map(|inner| PyBatchReport { inner })
            .map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Economy({})", self.inner.index())
    }
}

/// Ranked results of one scenario class.
#[pyclass(name = "BatchReport", frozen)]
struct PyBatchReport {
    inner: core::BatchReport,
}

#[pymethods]
impl PyBatchReport {
    #[getter]
    fn kind(&self) -> String {
        self.inner.class.kind.to_string()
    }

    #[getter]
    fn target(&self) -> &str {
        &self.inner.class.target
    }

    /// `(rank, country, sector, gamma, gamma_normalized)` by rank.
    fn results(&self) -> Vec<(usize, String, String, f64, f64)> {
        self.inner
            .results
            .iter()
            .map(|r| {
                (
                    r.rank,
                    r.spec.source.clone(),
                    r.spec.sector_label(),
                    r.gamma,
                    r.gamma_normalized,
                )
            })
            .collect()
    }

    /// `(country, sector, error tag, message)` in enumeration order.
    fn failures(&self) -> Vec<(String, String, String, String)> {
        self.inner
            .failures
            .iter()
            .map(|f| {
                (
                    f.spec.source.clone(),
                    f.spec.sector_label(),
                    f.tag.clone(),
                    f.message.clone(),
                )
            })
            .collect()
    }

    /// `(k, share of the k largest scores)`.
    fn shares(&self) -> Vec<(usize, f64)> {
        self.inner.concentration.shares.clone()
    }

    fn top_share(&self, k: usize) -> f64 {
        self.inner.concentration.top_share(k)
    }

    /// Writes the report files into `out` and returns their paths.
    #[pyo3(signature = (out, top_n = None, exclude_sectors = None, bins = 40))]
    fn write(
        &self,
        out: PathBuf,
        top_n: Option<usize>,
        exclude_sectors: Option<Vec<String>>,
        bins: usize,
    ) -> PyResult<Vec<PathBuf>> {
        let opts = EmitOptions {
            top_n,
            exclude_sectors: exclude_sectors.unwrap_or_default().into_iter().collect::<BTreeSet<_>>(),
            binning: Binning::Count(bins),
        };
        emit_all(&self.inner, &opts, &out).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.scenario_count()
    }
}

/// Seeded synthetic economy. With `out`, the table and its ground truth are
/// also written there.
#[pyfunction]
#[pyo3(signature = (seed, countries, sectors, density = 0.05, min_leakage = 0.05, out = None))]
fn generate_synthetic(
    seed: u64,
    countries: usize,
    sectors: usize,
    density: f64,
    min_leakage: f64,
    out: Option<PathBuf>,
) -> PyResult<PyEconomy> {
    let params = core::SyntheticParams::new(seed, countries, sectors)
        .with_density(density)
        .with_min_leakage(min_leakage);
    let fx = core::generate_synthetic(params).map_err(to_py)?;
    if let Some(dir) = out {
        std::fs::create_dir_all(&dir).map_err(|e| SupplynetError::new_err(e.to_string()))?;
        core::icio::write_fixture(&fx, &dir).map_err(to_py)?;
    }
    core::Economy::from_table(&fx.table)
        .map(|inner| PyEconomy { inner })
        .map_err(to_py)
}

/// Divides by the largest score.
#[pyfunction]
fn normalize_scores(scores: Vec<f64>) -> PyResult<Vec<f64>> {
    core::vulnerability::normalize_scores(&scores).map_err(to_py)
}

/// Top-k shares of labelled scores, as `[(k, share), ...]`.
#[pyfunction]
fn concentration(scores: Vec<(String, f64)>) -> PyResult<Vec<(usize, f64)>> {
    core::vulnerability::concentration(&scores)
        .map(|s| s.shares)
        .map_err(to_py)
}

#[pymodule]
fn supplynet(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyEconomy>()?;
    m.add_class::<PyRestrictionSpec>()?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyBatchReport>()?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_scores, m)?)?;
    m.add_function(wrap_pyfunction!(concentration, m)?)?;
    m.add("SupplynetError", py.get_type::<SupplynetError>())?;
    m.add("StabilityError", py.get_type::<StabilityError>())?;
    m.add("TotalDependenceError", py.get_type::<TotalDependenceError>())?;
    m.add("UnknownCodeError", py.get_type::<UnknownCodeError>())?;
    m.add("DegenerateClassError", py.get_type::<DegenerateClassError>())?;
    Ok(())
}
