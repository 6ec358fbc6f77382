//! Independent dense reference path, built straight from the flow records.
//!
//! Nothing here reuses the library's calibration, restriction or solver
//! code: allocation shares, leakage, the restricted allocation (flows to the
//! target deleted, column re-divided by what remains) and both resolvents
//! are recomputed with nalgebra.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use supplynet_core::icio::FlowTable;
use supplynet_core::restriction::{RestrictionSpec, SectorSelection};

pub struct DenseModel {
    pub x: DMatrix<f64>,
    pub z: Vec<f64>,
    pub beta: Vec<f64>,
    pub a: DMatrix<f64>,
}

impl DenseModel {
    pub fn from_table(table: &FlowTable) -> Self {
        let n = table.index.len();
        let mut x = DMatrix::zeros(n, n);
        for r in &table.records {
            x[(r.user, r.supplier)] += r.value;
        }
        let z: Vec<f64> = (0..n).map(|j| (0..n).map(|i| x[(i, j)]).sum()).collect();
        let beta = (0..n)
            .map(|j| {
                let total = z[j] + table.final_use[j];
                if total > 0.0 {
                    table.final_use[j] / total
                } else {
                    1.0
                }
            })
            .collect();
        let mut a = DMatrix::zeros(n, n);
        for j in 0..n {
            if z[j] > 0.0 {
                for i in 0..n {
                    a[(i, j)] = x[(i, j)] / z[j];
                }
            }
        }
        DenseModel { x, z, beta, a }
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn kernel(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let mut k = a.clone();
        for j in 0..self.n() {
            let keep = 1.0 - self.beta[j];
            for i in 0..self.n() {
                k[(i, j)] *= keep;
            }
        }
        k
    }

    /// Allocation after deleting flows from `columns` to `target_rows`.
    pub fn restricted_allocation(&self, target_rows: &[bool], columns: &[usize]) -> DMatrix<f64> {
        let mut a = self.a.clone();
        for &l in columns {
            if self.z[l] <= 0.0 {
                continue;
            }
            let remaining: f64 = (0..self.n())
                .filter(|&i| !target_rows[i])
                .map(|i| self.x[(i, l)])
                .sum();
            for i in 0..self.n() {
                a[(i, l)] = if target_rows[i] {
                    0.0
                } else {
                    self.x[(i, l)] / remaining
                };
            }
        }
        a
    }
}

pub fn resolvent(k: &DMatrix<f64>) -> DMatrix<f64> {
    let n = k.nrows();
    (DMatrix::identity(n, n) - k)
        .lu()
        .try_inverse()
        .expect("I - K is nonsingular")
}

pub struct OracleScenario {
    pub delta_y: Vec<f64>,
    pub gamma: f64,
}

/// Target rows and restricted columns for `spec`, from the table's codes.
pub fn selectors(table: &FlowTable, spec: &RestrictionSpec) -> (Vec<bool>, Vec<usize>) {
    let idx = &table.index;
    let n = idx.len();
    let target: Vec<bool> = (0..n).map(|k| idx.country_code(k) == spec.target).collect();
    let columns = (0..n)
        .filter(|&k| {
            idx.country_code(k) == spec.source
                && match &spec.sectors {
                    SectorSelection::All => true,
                    SectorSelection::Listed(l) => l.iter().any(|s| s == idx.sector_code(k)),
                }
        })
        .collect();
    (target, columns)
}

/// `Δy = μᵀ[(I − K)^-1 − (I − K°)^-1]` and `γ = Σ_{ℓ restricted} Δy_ℓ z_ℓ`.
pub fn oracle_scenario(model: &DenseModel, table: &FlowTable, spec: &RestrictionSpec) -> OracleScenario {
    let (target, columns) = selectors(table, spec);
    let mu = DVector::from_iterator(
        model.n(),
        target.iter().map(|&t| if t { 1.0 } else { 0.0 }),
    );
    let r = resolvent(&model.kernel(&model.a));
    let a_circ = model.restricted_allocation(&target, &columns);
    let r_circ = resolvent(&model.kernel(&a_circ));
    let y = r.tr_mul(&mu);
    let y_circ = r_circ.tr_mul(&mu);
    let delta_y: Vec<f64> = (0..model.n()).map(|l| y[l] - y_circ[l]).collect();
    let gamma = columns.iter().map(|&l| delta_y[l] * model.z[l]).sum();
    OracleScenario { delta_y, gamma }
}

/// `|a − b| / max(|a|, |b|)`, zero when the two are equal.
pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Induced 1-norm: largest absolute column sum.
pub fn norm1(m: &DMatrix<f64>) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}
