//! Seeded synthetic economies for tests and benchmarks.
//!
//! Every supplier sells to itself and to the next node in flat order, so the
//! flow graph contains a Hamiltonian cycle (irreducible) with self-loops
//! (aperiodic). Every supplier has a domestic buyer, so no foreign supplier
//! ever depends totally on one target country. Leakage is drawn from
//! `[min_leakage, hi)`, which bounds every kernel column sum by
//! `1 - min_leakage`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

use crate::error::{Error, Result};
use crate::sparse::{CscMatrix, SparseColumn};

use super::{write_canonical, CountrySectorIndex, FlowRecord, FlowTable, TableMetadata};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticParams {
    pub seed: u64,
    pub countries: usize,
    pub sectors: usize,
    /// Probability that a given supplier sells to a given non-adjacent user.
    pub density: f64,
    pub min_leakage: f64,
}

impl SyntheticParams {
    pub const DEFAULT_DENSITY: f64 = 0.05;
    pub const DEFAULT_MIN_LEAKAGE: f64 = 0.05;

    pub fn new(seed: u64, countries: usize, sectors: usize) -> Self {
        SyntheticParams {
            seed,
            countries,
            sectors,
            density: Self::DEFAULT_DENSITY,
            min_leakage: Self::DEFAULT_MIN_LEAKAGE,
        }
    }

    pub fn with_density(mut self, density: f64) -> Self {
        self.density = density;
        self
    }

    pub fn with_min_leakage(mut self, min_leakage: f64) -> Self {
        self.min_leakage = min_leakage;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.countries < 2 {
            return Err(Error::Argument("synthetic economy needs C >= 2".into()));
        }
        if self.sectors < 1 {
            return Err(Error::Argument("synthetic economy needs S >= 1".into()));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::Argument(format!(
                "density {} outside (0, 1]",
                self.density
            )));
        }
        if !(self.min_leakage > 0.0 && self.min_leakage < 1.0) {
            return Err(Error::Argument(format!(
                "min_leakage {} outside (0, 1)",
                self.min_leakage
            )));
        }
        Ok(())
    }
}

/// Quantities the generator knows before any calibration runs.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub x: CscMatrix,
    pub z: Vec<f64>,
    pub a: CscMatrix,
    pub a_colsums: Vec<f64>,
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SyntheticFixture {
    pub params: SyntheticParams,
    pub table: FlowTable,
    pub truth: GroundTruth,
}

fn codes(prefix: char, n: usize) -> Vec<String> {
    let width = n.saturating_sub(1).to_string().len().max(2);
    (0..n).map(|k| format!("{prefix}{k:0width$}")).collect()
}

pub fn generate_synthetic(params: SyntheticParams) -> Result<SyntheticFixture> {
    params.validate()?;
    let index = CountrySectorIndex::new(
        codes('C', params.countries),
        codes('S', params.sectors),
    )?;
    let n = index.len();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let lognormal = LogNormal::new(0.0, 1.0).expect("valid lognormal");
    let hi = if params.min_leakage < 0.6 {
        0.6
    } else {
        0.5 * (1.0 + params.min_leakage)
    };

    let mut x_cols = Vec::with_capacity(n);
    let mut a_cols = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    let mut beta = Vec::with_capacity(n);
    let mut final_use = Vec::with_capacity(n);
    let mut records = Vec::new();
    for j in 0..n {
        let scale = 100.0 * lognormal.sample(&mut rng);
        let next = (j + 1) % n;
        let mut col = SparseColumn::default();
        for i in 0..n {
            let draw: f64 = rng.random();
            if i == j || i == next || draw < params.density {
                let w: f64 = lognormal.sample(&mut rng);
                col.rows.push(i as u32);
                col.values.push(scale * w);
            }
        }
        let zj: f64 = col.values.iter().sum();
        let a = SparseColumn {
            rows: col.rows.clone(),
            values: col.values.iter().map(|v| v / zj).collect(),
        };
        let bj = rng.random_range(params.min_leakage..hi);
        for (&i, &v) in col.rows.iter().zip(&col.values) {
            records.push(FlowRecord {
                supplier: j,
                user: i as usize,
                value: v,
            });
        }
        final_use.push(zj * bj / (1.0 - bj));
        z.push(zj);
        beta.push(bj);
        x_cols.push(col);
        a_cols.push(a);
    }
    let x = CscMatrix::from_columns(n, x_cols);
    let a = CscMatrix::from_columns(n, a_cols);
    let a_colsums = a.column_sums();
    let table = FlowTable {
        index,
        records,
        final_use,
        metadata: TableMetadata {
            source: format!(
                "synthetic(seed={}, C={}, S={}, density={}, min_leakage={})",
                params.seed, params.countries, params.sectors, params.density, params.min_leakage
            ),
            year: None,
        },
        clamped: 0,
    };
    Ok(SyntheticFixture {
        params,
        table,
        truth: GroundTruth {
            x,
            z,
            a,
            a_colsums,
            beta,
        },
    })
}

/// Writes the canonical files plus `truth.csv` (z, A column sums and beta per
/// node).
pub fn write_fixture(fixture: &SyntheticFixture, dir: &Path) -> Result<()> {
    write_canonical(&fixture.table, dir)?;
    let path = dir.join("truth.csv");
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(&path, e);
    writeln!(w, "country,sector,z,a_colsum,beta").map_err(io)?;
    let index = &fixture.table.index;
    let t = &fixture.truth;
    for k in 0..index.len() {
        writeln!(
            w,
            "{},{},{},{},{}",
            index.country_code(k),
            index.sector_code(k),
            t.z[k],
            t.a_colsums[k],
            t.beta[k]
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}
