//! Inter-country input–output ingestion and calibration.
//!
//! Raw tables are parsed into a [`FlowTable`] (one record per observed
//! supplier → user flow, plus non-intermediate totals per supplier), assembled
//! into a [`FlowMatrix`] whose entry `(i, j)` is the flow from supplier column
//! `j` to user row `i`, and calibrated into sizes, allocation shares and
//! leakage rates.

mod canonical;
mod oecd;
mod synthetic;

use std::collections::HashMap;
use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::CscMatrix;

pub use canonical::{read_canonical, write_canonical, FINAL_USE_HEADER, FLOWS_HEADER};
pub use oecd::{read_oecd, OecdOptions, TOTAL_COLUMN_LABELS};
pub use synthetic::{
    generate_synthetic, write_fixture, GroundTruth, SyntheticFixture, SyntheticParams,
};

/// Bijection between `(country, sector)` pairs and flat node indices.
///
/// Flat indices are zero-based: `flat(c, s) = c * S + s`, so the sectors of
/// country `c` occupy the contiguous range `c*S .. (c+1)*S`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountrySectorIndex {
    countries: Vec<String>,
    sectors: Vec<String>,
    country_pos: HashMap<String, usize>,
    sector_pos: HashMap<String, usize>,
}

fn validate_code(kind: &str, code: &str) -> Result<()> {
    if code.is_empty() {
        return Err(Error::Schema(format!("empty {kind} code")));
    }
    if code
        .chars()
        .any(|c| c.is_whitespace() || c == ',' || c == '=')
    {
        return Err(Error::Schema(format!(
            "{kind} code {code:?} contains whitespace, ',' or '='"
        )));
    }
    Ok(())
}

impl CountrySectorIndex {
    pub fn new(countries: Vec<String>, sectors: Vec<String>) -> Result<Self> {
        if countries.is_empty() || sectors.is_empty() {
            return Err(Error::Schema(
                "an index needs at least one country and one sector".into(),
            ));
        }
        let mut country_pos = HashMap::with_capacity(countries.len());
        for (k, c) in countries.iter().enumerate() {
            validate_code("country", c)?;
            if country_pos.insert(c.clone(), k).is_some() {
                return Err(Error::Schema(format!("duplicate country code {c}")));
            }
        }
        let mut sector_pos = HashMap::with_capacity(sectors.len());
        for (k, s) in sectors.iter().enumerate() {
            validate_code("sector", s)?;
            if sector_pos.insert(s.clone(), k).is_some() {
                return Err(Error::Schema(format!("duplicate sector code {s}")));
            }
        }
        Ok(CountrySectorIndex {
            countries,
            sectors,
            country_pos,
            sector_pos,
        })
    }

    pub fn countries(&self) -> &[String] {
        &self.countries
    }

    pub fn sectors(&self) -> &[String] {
        &self.sectors
    }

    pub fn n_countries(&self) -> usize {
        self.countries.len()
    }

    pub fn n_sectors(&self) -> usize {
        self.sectors.len()
    }

    /// Node count `N = C * S`.
    pub fn len(&self) -> usize {
        self.countries.len() * self.sectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn flat(&self, country: usize, sector: usize) -> usize {
        debug_assert!(country < self.n_countries() && sector < self.n_sectors());
        country * self.sectors.len() + sector
    }

    #[inline]
    pub fn unflat(&self, node: usize) -> (usize, usize) {
        (node / self.sectors.len(), node % self.sectors.len())
    }

    pub fn country_index(&self, code: &str) -> Result<usize> {
        self.country_pos
            .get(code)
            .copied()
            .ok_or_else(|| Error::UnknownCode(format!("country {code}")))
    }

    pub fn sector_index(&self, code: &str) -> Result<usize> {
        self.sector_pos
            .get(code)
            .copied()
            .ok_or_else(|| Error::UnknownCode(format!("sector {code}")))
    }

    pub fn node(&self, country: &str, sector: &str) -> Result<usize> {
        Ok(self.flat(self.country_index(country)?, self.sector_index(sector)?))
    }

    pub fn country_code(&self, node: usize) -> &str {
        &self.countries[self.unflat(node).0]
    }

    pub fn sector_code(&self, node: usize) -> &str {
        &self.sectors[self.unflat(node).1]
    }

    /// `COUNTRY_SECTOR` label of a node.
    pub fn label(&self, node: usize) -> String {
        format!("{}_{}", self.country_code(node), self.sector_code(node))
    }

    /// Flat indices of every sector of `country`.
    pub fn country_nodes(&self, country: usize) -> Range<usize> {
        let s = self.sectors.len();
        country * s..(country + 1) * s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowRecord {
    /// Flat supplier node in the owning table's index.
    pub supplier: usize,
    /// Flat user node in the owning table's index.
    pub user: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TableMetadata {
    pub source: String,
    pub year: Option<i32>,
}

/// Parsed flows with all codes resolved against [`FlowTable::index`].
#[derive(Debug, Clone)]
pub struct FlowTable {
    pub index: CountrySectorIndex,
    pub records: Vec<FlowRecord>,
    /// Non-intermediate use per supplier node, dense over the index.
    pub final_use: Vec<f64>,
    pub metadata: TableMetadata,
    /// Number of negative raw cells that were clamped to zero.
    pub clamped: usize,
}

impl FlowTable {
    pub fn record_codes(&self, r: &FlowRecord) -> (&str, &str, &str, &str) {
        (
            self.index.country_code(r.supplier),
            self.index.sector_code(r.supplier),
            self.index.country_code(r.user),
            self.index.sector_code(r.user),
        )
    }
}

/// Clamps negative raw values, counting them. Non-finite values are rejected
/// by the caller before they reach this point.
pub(crate) fn clamp_negative(value: f64, clamped: &mut usize) -> f64 {
    if value < 0.0 {
        *clamped += 1;
        0.0
    } else {
        value
    }
}

/// Intermediate flows `X` (user rows × supplier columns) and final use `F`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowMatrix {
    pub x: CscMatrix,
    pub final_use: Vec<f64>,
}

impl FlowMatrix {
    pub fn len(&self) -> usize {
        self.final_use.len()
    }

    pub fn is_empty(&self) -> bool {
        self.final_use.is_empty()
    }
}

/// Total intermediate output per supplier, the diagonal of `Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeWeights {
    pub z: Vec<f64>,
}

impl SizeWeights {
    pub fn active(&self) -> Vec<bool> {
        self.z.iter().map(|&z| z > 0.0).collect()
    }

    /// Every size multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        SizeWeights {
            z: self.z.iter().map(|z| z * factor).collect(),
        }
    }
}

/// Column-stochastic allocation shares; inactive columns are all zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationMatrix {
    pub a: CscMatrix,
    pub active: Vec<bool>,
}

impl AllocationMatrix {
    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }
}

/// Leakage rate per supplier; 1 for suppliers with no output at all.
#[derive(Debug, Clone, PartialEq)]
pub struct LeakageRates {
    pub beta: Vec<f64>,
}

impl LeakageRates {
    pub fn retention(&self) -> Vec<f64> {
        self.beta.iter().map(|b| 1.0 - b).collect()
    }
}

/// Input file layout.
#[derive(Debug, Clone, PartialEq)]
pub enum FormatAdapter {
    /// Long-format flows plus an optional final-use companion file.
    Canonical { final_use: Option<PathBuf> },
    /// OECD-style wide matrix with `COUNTRY_SECTOR` labels.
    Oecd(OecdOptions),
}

pub fn parse_icio(path: &Path, adapter: &FormatAdapter) -> Result<FlowTable> {
    match adapter {
        FormatAdapter::Canonical { final_use } => read_canonical(path, final_use.as_deref()),
        FormatAdapter::Oecd(options) => read_oecd(path, options),
    }
}

pub fn build_flow_matrix(table: &FlowTable, index: &CountrySectorIndex) -> Result<FlowMatrix> {
    let n = index.len();
    let remap: Vec<usize> = if table.index == *index {
        (0..n).collect()
    } else {
        (0..table.index.len())
            .map(|k| {
                index
                    .node(table.index.country_code(k), table.index.sector_code(k))
                    .map_err(|e| Error::Schema(e.to_string()))
            })
            .collect::<Result<_>>()?
    };
    let triplets: Vec<(usize, usize, f64)> = table
        .records
        .iter()
        .map(|r| (remap[r.user], remap[r.supplier], r.value))
        .collect();
    let x = CscMatrix::from_triplets(n, n, &triplets)?;
    let mut final_use = vec![0.0; n];
    for (k, &f) in table.final_use.iter().enumerate() {
        final_use[remap[k]] += f;
    }
    Ok(FlowMatrix { x, final_use })
}

pub fn compute_sizes(flows: &FlowMatrix) -> SizeWeights {
    SizeWeights {
        z: flows.x.column_sums(),
    }
}

pub fn compute_allocation(flows: &FlowMatrix, sizes: &SizeWeights) -> Result<AllocationMatrix> {
    let n = flows.x.n_cols();
    if sizes.z.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: sizes.z.len(),
        });
    }
    let active = sizes.active();
    let mut columns = Vec::with_capacity(n);
    for j in 0..n {
        let col = flows.x.column(j);
        let mut out = crate::sparse::SparseColumn::default();
        if active[j] {
            for (i, v) in col.iter() {
                out.rows.push(i as u32);
                out.values.push(v / sizes.z[j]);
            }
        }
        columns.push(out);
    }
    Ok(AllocationMatrix {
        a: CscMatrix::from_columns(flows.x.n_rows(), columns),
        active,
    })
}

pub fn compute_leakage(flows: &FlowMatrix) -> LeakageRates {
    let z = flows.x.column_sums();
    let beta = z
        .iter()
        .zip(&flows.final_use)
        .map(|(&z, &f)| {
            let total = z + f;
            if total > 0.0 {
                f / total
            } else {
                1.0
            }
        })
        .collect();
    LeakageRates { beta }
}

/// Everything the model needs from one table.
#[derive(Debug, Clone)]
pub struct Calibration {
    pub index: CountrySectorIndex,
    pub flows: FlowMatrix,
    pub sizes: SizeWeights,
    pub allocation: AllocationMatrix,
    pub leakage: LeakageRates,
    pub clamped: usize,
    pub metadata: TableMetadata,
}

impl Calibration {
    pub fn from_table(table: &FlowTable) -> Result<Self> {
        let flows = build_flow_matrix(table, &table.index)?;
        let sizes = compute_sizes(&flows);
        let allocation = compute_allocation(&flows, &sizes)?;
        let leakage = compute_leakage(&flows);
        Ok(Calibration {
            index: table.index.clone(),
            flows,
            sizes,
            allocation,
            leakage,
            clamped: table.clamped,
            metadata: table.metadata.clone(),
        })
    }
}

impl fmt::Display for CountrySectorIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} countries x {} sectors = {} nodes",
            self.n_countries(),
            self.n_sectors(),
            self.len()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn idx(c: usize, s: usize) -> CountrySectorIndex {
        CountrySectorIndex::new(
            (0..c).map(|k| format!("C{k}")).collect(),
            (0..s).map(|k| format!("S{k}")).collect(),
        )
        .unwrap()
    }

    #[test]
    fn flat_index_is_a_bijection() {
        let index = idx(4, 3);
        assert_eq!(index.len(), 12);
        assert_eq!(index.flat(0, 0), 0);
        assert_eq!(index.flat(3, 2), 11);
        let mut seen = [false; 12];
        for c in 0..4 {
            for s in 0..3 {
                let k = index.flat(c, s);
                assert!(!seen[k]);
                seen[k] = true;
                assert_eq!(index.unflat(k), (c, s));
            }
        }
        assert_eq!(index.country_nodes(1), 3..6);
        assert_eq!(index.label(5), "C1_S2");
    }

    #[test]
    fn index_rejects_bad_codes() {
        assert!(CountrySectorIndex::new(vec!["A".into(), "A".into()], vec!["s".into()]).is_err());
        assert!(CountrySectorIndex::new(vec!["A B".into()], vec!["s".into()]).is_err());
        assert!(CountrySectorIndex::new(vec![], vec!["s".into()]).is_err());
        let index = idx(2, 1);
        assert!(matches!(index.node("ZZ", "S0"), Err(Error::UnknownCode(_))));
    }

    fn table(index: CountrySectorIndex, records: &[(usize, usize, f64)], f: Vec<f64>) -> FlowTable {
        FlowTable {
            index,
            records: records
                .iter()
                .map(|&(supplier, user, value)| FlowRecord {
                    supplier,
                    user,
                    value,
                })
                .collect(),
            final_use: f,
            metadata: TableMetadata::default(),
            clamped: 0,
        }
    }

    #[test]
    fn duplicate_records_are_summed() {
        let t = table(idx(2, 1), &[(0, 1, 3.0), (0, 1, 4.0)], vec![0.0, 0.0]);
        let m = build_flow_matrix(&t, &t.index).unwrap();
        assert_eq!(m.x.get(1, 0), 7.0);
        assert_eq!(m.x.nnz(), 1);
    }

    #[test]
    fn empty_table_gives_zero_matrix() {
        let t = table(idx(2, 2), &[], vec![0.0; 4]);
        let m = build_flow_matrix(&t, &t.index).unwrap();
        assert_eq!(m.x.nnz(), 0);
        assert_eq!(m.final_use, vec![0.0; 4]);
    }

    #[test]
    fn build_remaps_into_a_larger_index() {
        let small = CountrySectorIndex::new(vec!["B".into()], vec!["x".into()]).unwrap();
        let big = CountrySectorIndex::new(vec!["A".into(), "B".into()], vec!["x".into()]).unwrap();
        let t = table(small, &[(0, 0, 2.0)], vec![5.0]);
        let m = build_flow_matrix(&t, &big).unwrap();
        assert_eq!(m.x.get(1, 1), 2.0);
        assert_eq!(m.final_use, vec![0.0, 5.0]);
        let other = CountrySectorIndex::new(vec!["A".into()], vec!["x".into()]).unwrap();
        assert!(matches!(build_flow_matrix(&t, &other), Err(Error::Schema(_))));
    }

    fn flows(dense: &[f64], n: usize, f: Vec<f64>) -> FlowMatrix {
        FlowMatrix {
            x: CscMatrix::from_dense(&DMatrix::from_row_slice(n, n, dense)),
            final_use: f,
        }
    }

    #[test]
    fn sizes_are_column_sums() {
        let m = flows(&[1.0, 0.0, 0.0, 2.0, 0.0, 0.0, 3.0, 0.0, 0.0], 3, vec![0.0; 3]);
        let z = compute_sizes(&m);
        assert_eq!(z.z, vec![6.0, 0.0, 0.0]);
        assert_eq!(z.active(), vec![true, false, false]);
    }

    #[test]
    fn allocation_divides_by_size() {
        let m = flows(&[1.0, 0.0, 3.0, 0.0], 2, vec![0.0; 2]);
        let z = compute_sizes(&m);
        let a = compute_allocation(&m, &z).unwrap();
        assert_eq!(a.a.get(0, 0), 0.25);
        assert_eq!(a.a.get(1, 0), 0.75);
        assert!(a.a.column(1).is_empty());
        assert_eq!(a.active, vec![true, false]);
        assert!(compute_allocation(&m, &SizeWeights { z: vec![1.0] }).is_err());
    }

    #[test]
    fn leakage_is_final_share_of_total_output() {
        let m = flows(&[60.0, 0.0, 0.0, 0.0], 2, vec![40.0, 0.0]);
        let beta = compute_leakage(&m);
        assert!((beta.beta[0] - 0.4).abs() < 1e-15);
        assert_eq!(beta.beta[1], 1.0);
    }

    #[test]
    fn clamp_counts_negatives() {
        let mut n = 0;
        assert_eq!(clamp_negative(-5.0, &mut n), 0.0);
        assert_eq!(clamp_negative(2.0, &mut n), 2.0);
        assert_eq!(n, 1);
    }
}
