//! Scenario classes and the batch runner.
//!
//! A batch fixes one target country and sweeps every foreign source, either
//! one sector at a time or all sectors at once. The benchmark kernel and the
//! target's benchmark exposure `y` are computed once and shared read-only by
//! every scenario; only `y°` is solved per scenario.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::icio::{parse_icio, Calibration, CountrySectorIndex, FlowTable, FormatAdapter};
use crate::network::{
    build_kernel, leontief_row_solve, ExposureVector, PropagationKernel, StabilityReport,
};
use crate::restriction::{
    apply_restriction, make_selectors, restricted_kernel, RestrictionSpec, SectorSelection,
    SelectorSet,
};
use crate::vulnerability::{
    concentration, exposure_delta, exposure_delta_cached, gamma, normalize_scores,
    ConcentrationStats, PropagationDelta,
};

/// Calibrated table plus its certified benchmark kernel.
#[derive(Debug, Clone)]
pub struct Economy {
    pub calibration: Calibration,
    pub kernel: PropagationKernel,
    /// Digests of the files the table was read from, if any.
    pub inputs: Vec<InputDigest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

pub fn digest_file(path: &Path) -> Result<InputDigest> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(InputDigest {
        path: path.display().to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

impl Economy {
    /// Calibrates `table` and certifies its kernel; fails with a stability
    /// error when the kernel cannot be certified.
    pub fn from_table(table: &FlowTable) -> Result<Self> {
        Self::from_calibration(Calibration::from_table(table)?)
    }

    pub fn from_calibration(calibration: Calibration) -> Result<Self> {
        let mut kernel = build_kernel(&calibration.allocation, &calibration.leakage)?;
        kernel.certify()?;
        Ok(Economy {
            calibration,
            kernel,
            inputs: Vec::new(),
        })
    }

    /// Reads, calibrates and certifies a table from disk, recording file
    /// digests for provenance.
    pub fn load(path: &Path, adapter: &FormatAdapter) -> Result<Self> {
        let table = parse_icio(path, adapter)?;
        let mut economy = Self::from_table(&table)?;
        economy.inputs.push(digest_file(path)?);
        if let FormatAdapter::Canonical {
            final_use: Some(f),
        } = adapter
        {
            economy.inputs.push(digest_file(f)?);
        }
        Ok(economy)
    }

    pub fn index(&self) -> &CountrySectorIndex {
        &self.calibration.index
    }

    pub fn certificate(&self) -> &StabilityReport {
        self.kernel
            .certificate()
            .expect("economy kernels are certified on construction")
    }

    /// SHA-256 of the calibrated table: codes, flows and final use, in index
    /// order. Identifies the data independently of file layout.
    pub fn data_digest(&self) -> String {
        let c = &self.calibration;
        let mut h = Sha256::new();
        for code in c.index.countries() {
            h.update(code.as_bytes());
            h.update([0u8]);
        }
        h.update([1u8]);
        for code in c.index.sectors() {
            h.update(code.as_bytes());
            h.update([0u8]);
        }
        for j in 0..c.flows.len() {
            let col = c.flows.x.column(j);
            h.update((j as u64).to_le_bytes());
            for (i, v) in col.iter() {
                h.update((i as u64).to_le_bytes());
                h.update(v.to_bits().to_le_bytes());
            }
        }
        for f in &c.flows.final_use {
            h.update(f.to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Benchmark quantities for one target country, shared by all of its
/// scenarios.
#[derive(Debug, Clone)]
pub struct TargetContext<'e> {
    pub economy: &'e Economy,
    pub target: String,
    pub mu: Vec<f64>,
    /// `y = μᵀ (I − K)^-1`.
    pub y: ExposureVector,
}

impl<'e> TargetContext<'e> {
    pub fn new(economy: &'e Economy, target: &str) -> Result<Self> {
        let index = economy.index();
        let t = index.country_index(target)?;
        let mut mu = vec![0.0; index.len()];
        for k in index.country_nodes(t) {
            mu[k] = 1.0;
        }
        let y = leontief_row_solve(&economy.kernel, &mu)?;
        Ok(TargetContext {
            economy,
            target: target.to_string(),
            mu,
            y,
        })
    }
}

/// Everything one restriction produces before class-level normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutcome {
    pub spec: RestrictionSpec,
    pub delta: PropagationDelta,
    pub diagnostics: ScenarioDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScenarioDiagnostics {
    /// `(label, ψ)` for each restricted column, ascending by node.
    pub psi: Vec<(String, f64)>,
    pub skipped_inactive: usize,
}

fn restrict(
    economy: &Economy,
    spec: &RestrictionSpec,
) -> Result<(SelectorSet, PropagationKernel, ScenarioDiagnostics)> {
    let c = &economy.calibration;
    let sel = make_selectors(spec, &c.index)?;
    let restricted = apply_restriction(&c.allocation, &sel)?;
    let k_circ = restricted_kernel(&economy.kernel, &restricted, &c.leakage)?;
    let diagnostics = ScenarioDiagnostics {
        psi: sel
            .restricted
            .iter()
            .zip(&sel.labels)
            .map(|(&l, label)| (label.clone(), restricted.psi[l]))
            .collect(),
        skipped_inactive: restricted.skipped_inactive,
    };
    Ok((sel, k_circ, diagnostics))
}

/// Evaluates one restriction against a prepared target. Both the batch
/// runner and single runs go through here, so their γ agree bitwise.
pub fn evaluate_scenario(ctx: &TargetContext<'_>, spec: &RestrictionSpec) -> Result<ScenarioOutcome> {
    if spec.target != ctx.target {
        return Err(Error::Spec(format!(
            "scenario targets {} but the context was prepared for {}",
            spec.target, ctx.target
        )));
    }
    let (sel, k_circ, diagnostics) = restrict(ctx.economy, spec)?;
    let delta_y = exposure_delta_cached(&ctx.y, &k_circ, &ctx.mu)?;
    finish(ctx.economy, spec, &sel, delta_y, diagnostics)
}

/// Same as [`evaluate_scenario`] but solves `y` and `y°` from scratch.
pub fn evaluate_scenario_uncached(
    economy: &Economy,
    spec: &RestrictionSpec,
) -> Result<ScenarioOutcome> {
    let (sel, k_circ, diagnostics) = restrict(economy, spec)?;
    let delta_y = exposure_delta(&economy.kernel, &k_circ, &sel.mu())?;
    finish(economy, spec, &sel, delta_y, diagnostics)
}

fn finish(
    economy: &Economy,
    spec: &RestrictionSpec,
    sel: &SelectorSet,
    delta_y: Vec<f64>,
    diagnostics: ScenarioDiagnostics,
) -> Result<ScenarioOutcome> {
    let g = gamma(&delta_y, &economy.calibration.sizes, &sel.nu())?;
    Ok(ScenarioOutcome {
        spec: spec.clone(),
        delta: PropagationDelta {
            delta_y,
            gamma: g,
            gamma_normalized: None,
        },
        diagnostics,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScenarioKind {
    /// One source country-sector per scenario.
    #[serde(rename = "sector")]
    SectorLevel,
    /// All sectors of one source country per scenario.
    #[serde(rename = "country")]
    CountryLevel,
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioKind::SectorLevel => "sector",
            ScenarioKind::CountryLevel => "country",
        })
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sector" => Ok(ScenarioKind::SectorLevel),
            "country" => Ok(ScenarioKind::CountryLevel),
            other => Err(Error::Usage(format!(
                "scenario class must be `sector` or `country`, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ScenarioClass {
    pub kind: ScenarioKind,
    pub target: String,
}

impl ScenarioClass {
    pub fn new(kind: ScenarioKind, target: impl Into<String>) -> Self {
        ScenarioClass {
            kind,
            target: target.into(),
        }
    }

    pub fn enumerate(&self, index: &CountrySectorIndex) -> Result<Vec<RestrictionSpec>> {
        match self.kind {
            ScenarioKind::SectorLevel => enumerate_sector_scenarios(index, &self.target),
            ScenarioKind::CountryLevel => enumerate_country_scenarios(index, &self.target),
        }
    }
}

impl fmt::Display for ScenarioClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-level restrictions on {}", self.kind, self.target)
    }
}

fn foreign(index: &CountrySectorIndex, target: &str) -> Result<Vec<String>> {
    let t = index.country_index(target)?;
    Ok(index
        .countries()
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != t)
        .map(|(_, code)| code.clone())
        .collect())
}

/// One scenario per foreign (country, sector), in index order.
pub fn enumerate_sector_scenarios(
    index: &CountrySectorIndex,
    target: &str,
) -> Result<Vec<RestrictionSpec>> {
    let mut out = Vec::with_capacity(index.len());
    for source in foreign(index, target)? {
        for sector in index.sectors() {
            out.push(RestrictionSpec::new(
                target,
                source.clone(),
                SectorSelection::Listed(vec![sector.clone()]),
            )?);
        }
    }
    Ok(out)
}

/// One all-sector scenario per foreign country, in index order.
pub fn enumerate_country_scenarios(
    index: &CountrySectorIndex,
    target: &str,
) -> Result<Vec<RestrictionSpec>> {
    foreign(index, target)?
        .into_iter()
        .map(|source| RestrictionSpec::new(target, source, SectorSelection::All))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub spec: RestrictionSpec,
    pub gamma: f64,
    pub gamma_normalized: f64,
    /// 1-based, descending γ, ties by (country, sector).
    pub rank: usize,
    pub diagnostics: ScenarioDiagnostics,
}

impl ScenarioResult {
    /// Ranking label: source country and restricted sector (or `ALL`).
    pub fn label(&self) -> (String, String) {
        (self.spec.source.clone(), self.spec.sector_label())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFailure {
    pub spec: RestrictionSpec,
    pub tag: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub inputs: Vec<InputDigest>,
    pub data_digest: String,
    pub timestamp: String,
    pub versions: Vec<(String, String)>,
}

#[derive(Debug, Clone)]
pub struct BatchReport {
    pub class: ScenarioClass,
    /// Ordered by rank.
    pub results: Vec<ScenarioResult>,
    /// In enumeration order.
    pub failures: Vec<ScenarioFailure>,
    pub concentration: ConcentrationStats<(String, String)>,
    pub benchmark_certificate: StabilityReport,
    pub provenance: Provenance,
}

impl BatchReport {
    pub fn scenario_count(&self) -> usize {
        self.results.len() + self.failures.len()
    }

    pub fn result(&self, source: &str, sector: &str) -> Option<&ScenarioResult> {
        self.results
            .iter()
            .find(|r| r.spec.source == source && r.spec.sector_label() == sector)
    }
}

/// Sorts descending by score, ties by label; returns 1-based ranks aligned
/// with the input.
pub fn rank_by_score<L: Ord>(items: &[(L, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| {
        items[b]
            .1
            .total_cmp(&items[a].1)
            .then_with(|| items[a].0.cmp(&items[b].0))
    });
    let mut ranks = vec![0; items.len()];
    for (r, &k) in order.iter().enumerate() {
        ranks[k] = r + 1;
    }
    ranks
}

pub fn run_batch(economy: &Economy, class: &ScenarioClass, workers: usize) -> Result<BatchReport> {
    let specs = class.enumerate(economy.index())?;
    let ctx = TargetContext::new(economy, &class.target)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Argument(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<Result<ScenarioOutcome>> =
        pool.install(|| specs.par_iter().map(|s| evaluate_scenario(&ctx, s)).collect());

    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for (spec, outcome) in specs.into_iter().zip(outcomes) {
        match outcome {
            Ok(o) => ok.push(o),
            Err(e) => {
                log::warn!("scenario {spec} failed: {e}");
                failures.push(ScenarioFailure {
                    spec,
                    tag: e.tag().to_string(),
                    message: e.to_string(),
                });
            }
        }
    }
    let gammas: Vec<f64> = ok.iter().map(|o| o.delta.gamma).collect();
    let normalized = normalize_scores(&gammas)?;
    let labeled: Vec<((String, String), f64)> = ok
        .iter()
        .map(|o| ((o.spec.source.clone(), o.spec.sector_label()), o.delta.gamma))
        .collect();
    let ranks = rank_by_score(&labeled);
    let stats = concentration(&labeled)?;
    let mut results: Vec<ScenarioResult> = ok
        .into_iter()
        .zip(normalized)
        .zip(ranks)
        .map(|((o, g), rank)| ScenarioResult {
            spec: o.spec,
            gamma: o.delta.gamma,
            gamma_normalized: g,
            rank,
            diagnostics: o.diagnostics,
        })
        .collect();
    results.sort_by_key(|r| r.rank);
    Ok(BatchReport {
        class: class.clone(),
        results,
        failures,
        concentration: stats,
        benchmark_certificate: economy.certificate().clone(),
        provenance: Provenance {
            inputs: economy.inputs.clone(),
            data_digest: economy.data_digest(),
            timestamp: chrono::Utc::now().to_rfc3339(),
            versions: crate::module_versions(),
        },
    })
}

/// Batch settings read from a TOML file. Command-line flags override them.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchConfig {
    pub flows: Option<PathBuf>,
    pub final_use: Option<PathBuf>,
    /// `canonical` or `oecd`.
    pub format: Option<String>,
    pub year: Option<i32>,
    pub target: Option<String>,
    pub class: Option<ScenarioKind>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub top_n: Option<usize>,
    /// Sector codes dropped from the filtered ranking, for example the
    /// oil, gas and mining sectors of the table's taxonomy.
    pub exclude_sectors: Option<Vec<String>>,
    pub bins: Option<usize>,
}

impl BatchConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            column: String::new(),
            message: e.to_string(),
        })
    }
}
