//! Delimited-text outputs for a finished batch: rankings, the log-scale
//! score distribution, country map data, concentration shares, failures, and
//! country-aggregated flows.
//!
//! Every file name carries the scenario class, target and a data-digest
//! prefix, e.g. `ranking_sector_IND_3f9a0c12d4e5.csv`. Floats are written
//! with 17 significant digits so that re-reading reproduces them exactly.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::icio::{CountrySectorIndex, FlowMatrix};
use crate::network::StabilityReport;
use crate::runner::{rank_by_score, BatchReport, Provenance, ScenarioKind};
use crate::vulnerability::normalize_scores;

/// Oil and gas extraction, other mining and mining support services in the
/// 45-industry ICIO taxonomy. The default exclusion set for the filtered
/// ranking.
pub const OIL_GAS_MINING: [&str; 3] = ["B05_06", "B07_08", "B09"];

pub const DEFAULT_BINS: usize = 40;
/// Hex digits of the data digest used in file names.
pub const DIGEST_PREFIX: usize = 12;

/// Round-trippable decimal with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn file_name(stem: &str, report: &BatchReport) -> String {
    let digest = &report.provenance.data_digest;
    format!(
        "{stem}_{}_{}_{}.csv",
        report.class.kind,
        report.class.target,
        &digest[..DIGEST_PREFIX.min(digest.len())]
    )
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_io(path, e))
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Schema(format!("{}: {other:?}", path.display())),
    }
}

fn write_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| csv_io(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One line of a ranking table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRow {
    pub rank: usize,
    pub country: String,
    pub sector: String,
    pub gamma: f64,
    pub gamma_normalized: f64,
}

/// Ranking restricted to scenarios whose sector is not in `exclude`,
/// re-ranked and re-normalized within what is left.
pub fn ranking_rows(report: &BatchReport, exclude: &BTreeSet<String>) -> Result<Vec<RankingRow>> {
    let kept: Vec<_> = report
        .results
        .iter()
        .filter(|r| !exclude.contains(&r.spec.sector_label()))
        .collect();
    if kept.is_empty() {
        return Err(Error::DegenerateClass(
            "sector filter removed every scenario".into(),
        ));
    }
    let gammas: Vec<f64> = kept.iter().map(|r| r.gamma).collect();
    let normalized = normalize_scores(&gammas)?;
    let labeled: Vec<((String, String), f64)> =
        kept.iter().map(|r| (r.label(), r.gamma)).collect();
    let ranks = rank_by_score(&labeled);
    let mut rows: Vec<RankingRow> = kept
        .iter()
        .zip(normalized)
        .zip(ranks)
        .map(|((r, g), rank)| RankingRow {
            rank,
            country: r.spec.source.clone(),
            sector: r.spec.sector_label(),
            gamma: r.gamma,
            gamma_normalized: g,
        })
        .collect();
    rows.sort_by_key(|r| r.rank);
    Ok(rows)
}

/// Writes `ranking_*.csv`, or `ranking_filtered_*.csv` when `exclude` is
/// nonempty. `top_n` truncates the table.
pub fn emit_ranking(
    report: &BatchReport,
    top_n: Option<usize>,
    exclude: &BTreeSet<String>,
    dir: &Path,
) -> Result<PathBuf> {
    let mut rows = ranking_rows(report, exclude)?;
    if let Some(n) = top_n {
        rows.truncate(n);
    }
    ensure_dir(dir)?;
    let stem = if exclude.is_empty() {
        "ranking"
    } else {
        "ranking_filtered"
    };
    let path = dir.join(file_name(stem, report));
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.rank.to_string(),
                r.country.clone(),
                r.sector.clone(),
                fmt_f64(r.gamma),
                fmt_f64(r.gamma_normalized),
            ]
        })
        .collect();
    write_rows(
        &path,
        &["rank", "country", "sector", "gamma", "gamma_normalized"],
        &body,
    )?;
    Ok(path)
}

pub fn read_ranking(path: &Path) -> Result<Vec<RankingRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    rdr.deserialize()
        .map(|r| {
            r.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: e.position().map(|p| p.line()).unwrap_or(0),
                column: String::new(),
                message: e.to_string(),
            })
        })
        .collect()
}

/// Histogram layout on a log axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Binning {
    /// This many log-spaced bins from the smallest to the largest score.
    Count(usize),
    /// This many bins per decade, aligned so that powers of ten are edges.
    PerDecade(usize),
}

impl Default for Binning {
    fn default() -> Self {
        Binning::Count(DEFAULT_BINS)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `counts.len() + 1` ascending edges. Bins are `[lo, hi)` except the
    /// last, which also holds its upper edge.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Zero or negative scores left off the log axis.
    pub dropped: usize,
}

pub fn log_histogram(scores: &[f64], binning: Binning) -> Result<Histogram> {
    let positive: Vec<f64> = scores.iter().copied().filter(|&s| s > 0.0).collect();
    let dropped = scores.len() - positive.len();
    if positive.is_empty() {
        return Err(Error::DegenerateClass(
            "no positive scores to place on a log axis".into(),
        ));
    }
    let min = positive.iter().copied().fold(f64::INFINITY, f64::min);
    let max = positive.iter().copied().fold(0.0, f64::max);
    let edges = match binning {
        Binning::Count(0) | Binning::PerDecade(0) => {
            return Err(Error::Argument("histogram needs at least one bin".into()))
        }
        Binning::Count(n) => {
            let (lo, hi) = if min < max {
                (min.log10(), max.log10())
            } else {
                (min.log10() - 0.5, min.log10() + 0.5)
            };
            let mut e: Vec<f64> = (0..=n)
                .map(|k| 10f64.powf(lo + (hi - lo) * k as f64 / n as f64))
                .collect();
            if min < max {
                e[0] = min;
                e[n] = max;
            }
            e
        }
        Binning::PerDecade(b) => {
            let decade = min.log10().floor() as i32;
            let edge = |k: usize| {
                let (d, r) = ((k / b) as i32, k % b);
                let p = 10f64.powi(decade + d);
                if r == 0 {
                    p
                } else {
                    p * 10f64.powf(r as f64 / b as f64)
                }
            };
            let mut e = vec![edge(0)];
            while *e.last().unwrap() <= max {
                e.push(edge(e.len()));
            }
            e
        }
    };
    let n = edges.len() - 1;
    let mut counts = vec![0; n];
    for s in positive {
        counts[edges[1..n].partition_point(|&e| e <= s)] += 1;
    }
    Ok(Histogram {
        edges,
        counts,
        dropped,
    })
}

/// Writes `distribution_*.csv` with columns `lower,upper,count`.
pub fn emit_distribution(report: &BatchReport, binning: Binning, dir: &Path) -> Result<(PathBuf, Histogram)> {
    let scores: Vec<f64> = report.results.iter().map(|r| r.gamma_normalized).collect();
    let h = log_histogram(&scores, binning)?;
    ensure_dir(dir)?;
    let path = dir.join(file_name("distribution", report));
    let rows: Vec<Vec<String>> = h
        .counts
        .iter()
        .enumerate()
        .map(|(k, c)| vec![fmt_f64(h.edges[k]), fmt_f64(h.edges[k + 1]), c.to_string()])
        .collect();
    write_rows(&path, &["lower", "upper", "count"], &rows)?;
    Ok((path, h))
}

/// Writes `map_*.csv` (`country,score`, by country code) for a country-level
/// report.
pub fn emit_map_data(report: &BatchReport, dir: &Path) -> Result<PathBuf> {
    if report.class.kind != ScenarioKind::CountryLevel {
        return Err(Error::Usage(
            "map data needs a country-level batch".into(),
        ));
    }
    let mut rows: Vec<(String, f64)> = report
        .results
        .iter()
        .map(|r| (r.spec.source.clone(), r.gamma_normalized))
        .collect();
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    ensure_dir(dir)?;
    let path = dir.join(file_name("map", report));
    let body: Vec<Vec<String>> = rows
        .into_iter()
        .map(|(c, s)| vec![c, fmt_f64(s)])
        .collect();
    write_rows(&path, &["country", "score"], &body)?;
    Ok(path)
}

/// Writes `concentration_*.csv` with columns `k,top_k_share`.
pub fn emit_concentration(report: &BatchReport, dir: &Path) -> Result<PathBuf> {
    ensure_dir(dir)?;
    let path = dir.join(file_name("concentration", report));
    let rows: Vec<Vec<String>> = report
        .concentration
        .shares
        .iter()
        .map(|(k, s)| vec![k.to_string(), fmt_f64(*s)])
        .collect();
    write_rows(&path, &["k", "top_k_share"], &rows)?;
    Ok(path)
}

/// Writes `failures_*.csv`; the file always exists, possibly with only a
/// header.
pub fn emit_failures(report: &BatchReport, dir: &Path) -> Result<PathBuf> {
    ensure_dir(dir)?;
    let path = dir.join(file_name("failures", report));
    let rows: Vec<Vec<String>> = report
        .failures
        .iter()
        .map(|f| {
            vec![
                f.spec.source.clone(),
                f.spec.sector_label(),
                f.tag.clone(),
                f.message.clone(),
            ]
        })
        .collect();
    write_rows(&path, &["country", "sector", "error", "message"], &rows)?;
    Ok(path)
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    class: String,
    target: &'a str,
    scenarios: usize,
    results: usize,
    failures: usize,
    psi_max: f64,
    skipped_inactive: usize,
    clamped_negative_scores: usize,
    excluded_negative_scores: usize,
    dropped_nonpositive_scores: usize,
    benchmark_certificate: &'a StabilityReport,
    provenance: &'a Provenance,
}

/// Writes `summary_*.json`. The run timestamp appears only here, on its own
/// line.
pub fn emit_summary(report: &BatchReport, dropped: usize, dir: &Path) -> Result<PathBuf> {
    ensure_dir(dir)?;
    let path = dir.join(file_name("summary", report).replace(".csv", ".json"));
    let summary = Summary {
        class: report.class.kind.to_string(),
        target: &report.class.target,
        scenarios: report.scenario_count(),
        results: report.results.len(),
        failures: report.failures.len(),
        psi_max: report
            .results
            .iter()
            .flat_map(|r| r.diagnostics.psi.iter().map(|p| p.1))
            .fold(0.0, f64::max),
        skipped_inactive: report
            .results
            .iter()
            .map(|r| r.diagnostics.skipped_inactive)
            .sum(),
        clamped_negative_scores: report.concentration.clamped,
        excluded_negative_scores: report.concentration.excluded.len(),
        dropped_nonpositive_scores: dropped,
        benchmark_certificate: &report.benchmark_certificate,
        provenance: &report.provenance,
    };
    let mut text = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::Schema(format!("cannot serialize summary: {e}")))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[derive(Debug, Clone, Default)]
pub struct EmitOptions {
    pub top_n: Option<usize>,
    pub exclude_sectors: BTreeSet<String>,
    pub binning: Binning,
}

/// Every file a batch produces: full ranking, filtered ranking when a filter
/// is set, distribution, map data (country class), concentration, failures
/// and summary.
pub fn emit_all(report: &BatchReport, opts: &EmitOptions, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = vec![emit_ranking(report, opts.top_n, &BTreeSet::new(), dir)?];
    if !opts.exclude_sectors.is_empty() {
        paths.push(emit_ranking(report, opts.top_n, &opts.exclude_sectors, dir)?);
    }
    let (p, h) = emit_distribution(report, opts.binning, dir)?;
    paths.push(p);
    if report.class.kind == ScenarioKind::CountryLevel {
        paths.push(emit_map_data(report, dir)?);
    }
    paths.push(emit_concentration(report, dir)?);
    paths.push(emit_failures(report, dir)?);
    paths.push(emit_summary(report, h.dropped, dir)?);
    Ok(paths)
}

/// Flows summed over sector blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct CountryFlows {
    pub countries: Vec<String>,
    /// `flows[(supplier, user)]`, summed over the sectors of each country.
    pub flows: DMatrix<f64>,
    /// Total intermediate production of each country.
    pub sizes: Vec<f64>,
}

pub fn aggregate_country_flows(x: &FlowMatrix, index: &CountrySectorIndex) -> Result<CountryFlows> {
    if x.len() != index.len() {
        return Err(Error::DimensionMismatch {
            expected: index.len(),
            found: x.len(),
        });
    }
    let c = index.n_countries();
    let mut flows = DMatrix::zeros(c, c);
    for j in 0..x.len() {
        let (supplier, _) = index.unflat(j);
        for (i, v) in x.x.column(j).iter() {
            let (user, _) = index.unflat(i);
            flows[(supplier, user)] += v;
        }
    }
    let sizes = (0..c).map(|s| flows.row(s).sum()).collect();
    Ok(CountryFlows {
        countries: index.countries().to_vec(),
        flows,
        sizes,
    })
}

/// Writes `country_flows.csv` (long format: supplier, user, flow) and
/// `country_sizes.csv` (country, intermediate output) into `dir`.
pub fn emit_country_flows(
    x: &FlowMatrix,
    index: &CountrySectorIndex,
    dir: &Path,
) -> Result<(PathBuf, PathBuf)> {
    let agg = aggregate_country_flows(x, index)?;
    ensure_dir(dir)?;
    let flows_path = dir.join("country_flows.csv");
    let mut rows = Vec::new();
    for (s, sc) in agg.countries.iter().enumerate() {
        for (u, uc) in agg.countries.iter().enumerate() {
            rows.push(vec![sc.clone(), uc.clone(), fmt_f64(agg.flows[(s, u)])]);
        }
    }
    write_rows(&flows_path, &["supplier", "user", "flow"], &rows)?;
    let sizes_path = dir.join("country_sizes.csv");
    let rows: Vec<Vec<String>> = agg
        .countries
        .iter()
        .zip(&agg.sizes)
        .map(|(c, z)| vec![c.clone(), fmt_f64(*z)])
        .collect();
    write_rows(&sizes_path, &["country", "intermediate_output"], &rows)?;
    Ok((flows_path, sizes_path))
}
