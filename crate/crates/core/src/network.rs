//! Benchmark propagation kernel `K = A (I - β)`, its stability certificate,
//! and the linear-algebra primitives every downstream statistic uses.
//!
//! The production solver never forms `(I - K)^-1`. A statistic of the form
//! `mᵀ (I - K)^-1` is one row of the resolvent, obtained by solving the
//! transposed system `(I - K)ᵀ v = m`. Row `j` of `(I - K)ᵀ` is column `j` of
//! `I - K`, so with `K` stored by columns the solve is a Gauss–Seidel sweep
//! over columns:
//!
//! > v_j ← (m_j + Σ_{i≠j} K_ij v_i) / (1 − K_jj)
//!
//! `I - Kᵀ` is a nonsingular M-matrix whenever `ρ(K) < 1`, so the sweep
//! converges from any start, and monotonically from zero when `m ≥ 0`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::icio::{AllocationMatrix, LeakageRates};
use crate::sparse::{ColumnRef, CscMatrix, SparseColumn};

/// Power-iteration tolerance on the averaged growth ratio.
pub const POWER_TOLERANCE: f64 = 1e-10;
pub const POWER_MAX_ITERATIONS: usize = 10_000;
/// Window of growth ratios averaged for the spectral-radius estimate.
pub const POWER_WINDOW: usize = 10;
/// A kernel certified by power iteration needs `ρ < 1 - STABILITY_MARGIN`.
pub const STABILITY_MARGIN: f64 = 1e-8;
/// Largest `N` accepted by the dense oracles.
pub const DENSE_ORACLE_LIMIT: usize = 512;
/// Residual contract: `‖(I−K)ᵀv − m‖∞ ≤ RESIDUAL_TOLERANCE · (1 + ‖m‖∞)`.
pub const RESIDUAL_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_MAX_SWEEPS: usize = 50_000;

/// Outcome of [`assess_stability`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// `‖K‖₁`, the largest column sum.
    pub colsum_bound: f64,
    /// Power-iteration estimate of `ρ(K)`; only computed when the column-sum
    /// bound does not already certify the kernel.
    pub spectral_radius: Option<f64>,
    pub certified: bool,
    /// Columns whose sum is `≥ 1`.
    pub offending: Vec<usize>,
}

impl fmt::Display for StabilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let estimate = match self.spectral_radius {
            Some(r) => r.to_string(),
            None => "NA".to_string(),
        };
        let offending: Vec<String> = self.offending.iter().map(|c| c.to_string()).collect();
        write!(
            f,
            "bound={} estimate={} certified={} offending={}",
            self.colsum_bound,
            estimate,
            self.certified,
            offending.join(",")
        )
    }
}

impl FromStr for StabilityReport {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut bound = None;
        let mut estimate = None;
        let mut certified = None;
        let mut offending = None;
        let bad = |msg: String| Error::Schema(format!("stability record: {msg}"));
        for token in s.split_whitespace() {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, got {token:?}")))?;
            match key {
                "bound" => bound = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                "estimate" => {
                    estimate = Some(if value == "NA" {
                        None
                    } else {
                        Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?)
                    })
                }
                "certified" => {
                    certified = Some(value.parse::<bool>().map_err(|e| bad(e.to_string()))?)
                }
                "offending" => {
                    offending = Some(if value.is_empty() {
                        Vec::new()
                    } else {
                        value
                            .split(',')
                            .map(|c| c.parse::<usize>().map_err(|e| bad(e.to_string())))
                            .collect::<Result<Vec<_>>>()?
                    })
                }
                other => return Err(bad(format!("unknown key {other}"))),
            }
        }
        Ok(StabilityReport {
            colsum_bound: bound.ok_or_else(|| bad("missing bound".into()))?,
            spectral_radius: estimate.ok_or_else(|| bad("missing estimate".into()))?,
            certified: certified.ok_or_else(|| bad("missing certified".into()))?,
            offending: offending.unwrap_or_default(),
        })
    }
}

/// Column-substochastic propagation kernel.
///
/// A kernel is a shared base matrix plus an optional set of replacement
/// columns. Benchmark kernels have no patches; restricted kernels share the
/// benchmark base and patch only the restricted supplier columns, so building
/// one costs O(restricted nnz + N) rather than O(nnz).
#[derive(Debug, Clone)]
pub struct PropagationKernel {
    base: Arc<CscMatrix>,
    base_colsums: Arc<Vec<f64>>,
    retention: Arc<Vec<f64>>,
    patches: Vec<(usize, SparseColumn)>,
    patch_slot: Vec<u32>,
    certificate: Option<StabilityReport>,
}

const NO_PATCH: u32 = u32::MAX;

impl PropagationKernel {
    /// Wraps an arbitrary nonnegative square matrix. Retention rates are
    /// taken to be the column sums.
    pub fn from_matrix(k: CscMatrix) -> Result<Self> {
        if k.n_rows() != k.n_cols() {
            return Err(Error::DimensionMismatch {
                expected: k.n_rows(),
                found: k.n_cols(),
            });
        }
        let sums = k.column_sums();
        Ok(PropagationKernel {
            base: Arc::new(k),
            retention: Arc::new(sums.clone()),
            base_colsums: Arc::new(sums),
            patches: Vec::new(),
            patch_slot: Vec::new(),
            certificate: None,
        })
    }

    pub fn from_dense(k: &DMatrix<f64>) -> Result<Self> {
        Self::from_matrix(CscMatrix::from_dense(k))
    }

    /// Same base and retention, with `patches` replacing whole columns.
    /// The certificate is not inherited; see [`PropagationKernel::certify`].
    pub fn with_patches(&self, mut patches: Vec<(usize, SparseColumn)>) -> Result<Self> {
        let n = self.len();
        patches.sort_by_key(|(j, _)| *j);
        if patches.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Argument("duplicate patched column".into()));
        }
        let mut merged = self.patches.clone();
        for (j, col) in patches {
            if j >= n || col.rows.iter().any(|&r| r as usize >= n) {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: j.max(col.rows.iter().map(|&r| r as usize + 1).max().unwrap_or(0)),
                });
            }
            match merged.binary_search_by_key(&j, |(k, _)| *k) {
                Ok(pos) => merged[pos].1 = col,
                Err(pos) => merged.insert(pos, (j, col)),
            }
        }
        let mut patch_slot = Vec::new();
        if !merged.is_empty() {
            patch_slot = vec![NO_PATCH; n];
            for (slot, (j, _)) in merged.iter().enumerate() {
                patch_slot[*j] = slot as u32;
            }
        }
        Ok(PropagationKernel {
            base: Arc::clone(&self.base),
            base_colsums: Arc::clone(&self.base_colsums),
            retention: Arc::clone(&self.retention),
            patches: merged,
            patch_slot,
            certificate: None,
        })
    }

    pub fn len(&self) -> usize {
        self.base.n_cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `1 - β_j` per column.
    pub fn retention(&self) -> &[f64] {
        &self.retention
    }

    pub fn patched_columns(&self) -> impl Iterator<Item = usize> + '_ {
        self.patches.iter().map(|(j, _)| *j)
    }

    pub fn is_patched(&self, j: usize) -> bool {
        !self.patch_slot.is_empty() && self.patch_slot[j] != NO_PATCH
    }

    /// True when both kernels share one base matrix.
    pub fn shares_base_with(&self, other: &PropagationKernel) -> bool {
        Arc::ptr_eq(&self.base, &other.base)
    }

    #[inline]
    pub fn column(&self, j: usize) -> ColumnRef<'_> {
        if !self.patch_slot.is_empty() {
            let slot = self.patch_slot[j];
            if slot != NO_PATCH {
                return self.patches[slot as usize].1.as_ref();
            }
        }
        self.base.column(j)
    }

    pub fn column_sum(&self, j: usize) -> f64 {
        if self.is_patched(j) {
            self.column(j).sum()
        } else {
            self.base_colsums[j]
        }
    }

    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.column_sum(j)).collect()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.column(col).get(row)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut d = DMatrix::zeros(n, n);
        for j in 0..n {
            for (i, v) in self.column(j).iter() {
                d[(i, j)] = v;
            }
        }
        d
    }

    /// Materializes patches into a standalone matrix.
    pub fn to_csc(&self) -> CscMatrix {
        let cols = (0..self.len())
            .map(|j| {
                let c = self.column(j);
                SparseColumn {
                    rows: c.rows.to_vec(),
                    values: c.values.to_vec(),
                }
            })
            .collect();
        CscMatrix::from_columns(self.len(), cols)
    }

    /// `y = K x`.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            for (i, v) in self.column(j).iter() {
                y[i] += v * xj;
            }
        }
    }

    pub fn certificate(&self) -> Option<&StabilityReport> {
        self.certificate.as_ref()
    }

    pub fn is_certified(&self) -> bool {
        self.certificate.as_ref().is_some_and(|c| c.certified)
    }

    /// Runs [`validate_kernel`] and stores the certificate.
    pub fn certify(&mut self) -> Result<&StabilityReport> {
        let report = validate_kernel(self)?;
        self.certificate = Some(report);
        Ok(self.certificate.as_ref().unwrap())
    }

    /// Stores a certificate computed by the caller.
    pub(crate) fn set_certificate(&mut self, report: StabilityReport) {
        debug_assert!(report.certified);
        self.certificate = Some(report);
    }
}

/// `K = A (I - β)`: column `j` of `A` scaled by `1 - β_j`.
pub fn build_kernel(a: &AllocationMatrix, beta: &LeakageRates) -> Result<PropagationKernel> {
    let n = a.a.n_cols();
    if beta.beta.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: beta.beta.len(),
        });
    }
    if a.a.n_rows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: a.a.n_rows(),
        });
    }
    let retention = beta.retention();
    let k = a.a.scale_columns(&retention)?;
    let sums = k.column_sums();
    Ok(PropagationKernel {
        base: Arc::new(k),
        base_colsums: Arc::new(sums),
        retention: Arc::new(retention),
        patches: Vec::new(),
        patch_slot: Vec::new(),
        certificate: None,
    })
}

/// Power-iteration estimate of the spectral radius of a nonnegative kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerEstimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Estimates `ρ(K)` from the 1-norm growth ratio `‖K x‖₁ / ‖x‖₁`, averaged
/// over the last [`POWER_WINDOW`] iterations so periodic kernels settle too.
pub fn spectral_radius_estimate(k: &PropagationKernel) -> PowerEstimate {
    let n = k.len();
    if n == 0 {
        return PowerEstimate {
            value: 0.0,
            iterations: 0,
            converged: true,
        };
    }
    let mut x = vec![1.0 / n as f64; n];
    let mut y = vec![0.0; n];
    let mut window = [0.0f64; POWER_WINDOW];
    let mut prev_avg = f64::NAN;
    let mut avg = 0.0;
    for it in 1..=POWER_MAX_ITERATIONS {
        k.mul_vec(&x, &mut y);
        let growth: f64 = y.iter().map(|v| v.abs()).sum();
        if growth == 0.0 {
            return PowerEstimate {
                value: 0.0,
                iterations: it,
                converged: true,
            };
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / growth;
        }
        window[(it - 1) % POWER_WINDOW] = growth;
        if it >= POWER_WINDOW {
            avg = window.iter().sum::<f64>() / POWER_WINDOW as f64;
            if it > POWER_WINDOW && (avg - prev_avg).abs() <= POWER_TOLERANCE {
                return PowerEstimate {
                    value: avg,
                    iterations: it,
                    converged: true,
                };
            }
            prev_avg = avg;
        }
    }
    PowerEstimate {
        value: avg,
        iterations: POWER_MAX_ITERATIONS,
        converged: false,
    }
}

/// Column-sum bound first, power iteration only when the bound is `≥ 1`.
pub fn assess_stability(k: &PropagationKernel) -> StabilityReport {
    let sums = k.column_sums();
    let bound = sums.iter().cloned().fold(0.0, f64::max);
    let offending: Vec<usize> = sums
        .iter()
        .enumerate()
        .filter(|(_, &s)| s >= 1.0)
        .map(|(j, _)| j)
        .collect();
    if bound == 0.0 {
        return StabilityReport {
            colsum_bound: 0.0,
            spectral_radius: Some(0.0),
            certified: true,
            offending,
        };
    }
    if bound < 1.0 {
        return StabilityReport {
            colsum_bound: bound,
            spectral_radius: None,
            certified: true,
            offending,
        };
    }
    let est = spectral_radius_estimate(k);
    StabilityReport {
        colsum_bound: bound,
        spectral_radius: Some(est.value),
        certified: est.value < 1.0 - STABILITY_MARGIN,
        offending,
    }
}

pub fn validate_kernel(k: &PropagationKernel) -> Result<StabilityReport> {
    let report = assess_stability(k);
    if report.certified {
        Ok(report)
    } else {
        Err(Error::Stability {
            bound: report.colsum_bound,
            estimate: report.spectral_radius,
            offending: report.offending,
        })
    }
}

/// Row vector `vᵀ = mᵀ (I - K)^-1`, indexed by origin node.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureVector {
    pub values: Vec<f64>,
    /// Gauss–Seidel sweeps used.
    pub sweeps: usize,
    /// Final `‖(I−K)ᵀv − m‖∞`.
    pub residual: f64,
}

impl ExposureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions<'a> {
    /// Initial iterate; zero when absent.
    pub warm_start: Option<&'a [f64]>,
    /// Sweep order over unknowns; ascending when absent.
    pub order: Option<&'a [usize]>,
    pub max_sweeps: usize,
}

impl Default for SolveOptions<'_> {
    fn default() -> Self {
        SolveOptions {
            warm_start: None,
            order: None,
            max_sweeps: DEFAULT_MAX_SWEEPS,
        }
    }
}

/// `‖(I−K)ᵀ v − m‖∞`.
pub fn transposed_residual(k: &PropagationKernel, m: &[f64], v: &[f64]) -> f64 {
    (0..k.len())
        .map(|j| {
            let kv: f64 = k.column(j).iter().map(|(i, kij)| kij * v[i]).sum();
            (m[j] - v[j] + kv).abs()
        })
        .fold(0.0, f64::max)
}

pub fn leontief_row_solve(k: &PropagationKernel, m: &[f64]) -> Result<ExposureVector> {
    leontief_row_solve_with(k, m, SolveOptions::default())
}

pub fn leontief_row_solve_with(
    k: &PropagationKernel,
    m: &[f64],
    opts: SolveOptions<'_>,
) -> Result<ExposureVector> {
    if !k.is_certified() {
        return Err(Error::Uncertified);
    }
    let n = k.len();
    if m.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: m.len(),
        });
    }
    let mut v = match opts.warm_start {
        Some(w) if w.len() == n => w.to_vec(),
        Some(w) => {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: w.len(),
            })
        }
        None => vec![0.0; n],
    };
    let ascending: Vec<usize>;
    let order = match opts.order {
        Some(o) => {
            if o.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: o.len(),
                });
            }
            o
        }
        None => {
            ascending = (0..n).collect();
            &ascending
        }
    };
    let diag: Vec<f64> = (0..n).map(|j| k.get(j, j)).collect();

    // Sweep until the update falls to roundoff level. Once it is below
    // COARSE_STOP, a few sweeps without a new minimum means we are sitting
    // on the floating-point floor.
    const FINE_STOP: f64 = 1e-15;
    const COARSE_STOP: f64 = 1e-12;
    const STALL_SWEEPS: usize = 3;
    let mut best = f64::INFINITY;
    let mut stalled = 0;
    let mut sweeps = 0;
    loop {
        if sweeps >= opts.max_sweeps {
            return Err(Error::NonConvergence {
                sweeps,
                residual: transposed_residual(k, m, &v),
            });
        }
        sweeps += 1;
        let mut delta = 0.0f64;
        let mut scale = 0.0f64;
        for &j in order {
            let col = k.column(j);
            let mut acc = m[j];
            for (&i, &kij) in col.rows.iter().zip(col.values) {
                let i = i as usize;
                if i != j {
                    acc += kij * v[i];
                }
            }
            let new = acc / (1.0 - diag[j]);
            delta = delta.max((new - v[j]).abs());
            scale = scale.max(new.abs());
            v[j] = new;
        }
        let scale = scale.max(f64::MIN_POSITIVE);
        if delta <= FINE_STOP * scale {
            break;
        }
        if delta <= COARSE_STOP * scale {
            if delta < best {
                best = delta;
                stalled = 0;
            } else {
                stalled += 1;
                if stalled >= STALL_SWEEPS {
                    break;
                }
            }
        }
    }
    let residual = transposed_residual(k, m, &v);
    let m_norm = m.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if residual.is_nan() || residual > RESIDUAL_TOLERANCE * (1.0 + m_norm) {
        return Err(Error::NonConvergence { sweeps, residual });
    }
    Ok(ExposureVector {
        values: v,
        sweeps,
        residual,
    })
}

/// `Σ_{t=0}^{T-1} K^t` as a dense matrix. This is an oracle for small
/// kernels, not a production path.
///
/// The partial sums are accumulated by binary splitting on `T`:
/// `S_{2m} = S_m + K^m S_m` and `S_{m+1} = S_m + K^m`, which needs
/// O(log T) products instead of T.
pub fn neumann_cumulative(k: &PropagationKernel, horizon: usize) -> Result<DMatrix<f64>> {
    let n = k.len();
    if n > DENSE_ORACLE_LIMIT {
        return Err(Error::SizeGuard {
            n,
            limit: DENSE_ORACLE_LIMIT,
        });
    }
    if horizon == 0 {
        return Err(Error::Argument("horizon T must be at least 1".into()));
    }
    let kd = k.to_dense();
    let mut sum = DMatrix::<f64>::zeros(n, n);
    let mut power = DMatrix::<f64>::identity(n, n);
    let bits = usize::BITS - horizon.leading_zeros();
    for b in (0..bits).rev() {
        // m -> 2m
        sum = &sum + &power * &sum;
        power = &power * &power;
        if (horizon >> b) & 1 == 1 {
            // m -> m + 1
            sum += &power;
            power = &power * &kd;
        }
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::CscMatrix;

    fn kernel(rows: usize, data: &[f64]) -> PropagationKernel {
        PropagationKernel::from_dense(&DMatrix::from_row_slice(rows, rows, data)).unwrap()
    }

    #[test]
    fn kernel_scales_columns_by_retention() {
        let a = AllocationMatrix {
            a: CscMatrix::from_dense(&DMatrix::from_row_slice(2, 2, &[0.25, 0.0, 0.75, 0.0])),
            active: vec![true, false],
        };
        let beta = LeakageRates {
            beta: vec![0.2, 1.0],
        };
        let k = build_kernel(&a, &beta).unwrap();
        assert!((k.get(0, 0) - 0.2).abs() < 1e-15);
        assert!((k.get(1, 0) - 0.6).abs() < 1e-15);
        assert!((k.column_sum(0) - 0.8).abs() < 1e-15);
        assert!(k.column(1).is_empty());
        let short = LeakageRates { beta: vec![0.2] };
        assert!(matches!(
            build_kernel(&a, &short),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn zero_kernel_is_certified_with_zero_radius() {
        let k = kernel(3, &[0.0; 9]);
        let r = validate_kernel(&k).unwrap();
        assert!(r.certified);
        assert_eq!(r.spectral_radius, Some(0.0));
        assert_eq!(spectral_radius_estimate(&k).value, 0.0);
    }

    #[test]
    fn unit_kernel_fails_certification() {
        let k = kernel(1, &[1.0]);
        match validate_kernel(&k) {
            Err(Error::Stability {
                offending,
                estimate,
                ..
            }) => {
                assert_eq!(offending, vec![0]);
                assert!((estimate.unwrap() - 1.0).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn power_iteration_rescues_a_column_sum_of_one() {
        // column 1 sums to 1 but the matrix is nilpotent-ish: ρ = sqrt(0.5 * 0.5)
        let k = kernel(2, &[0.0, 0.5, 0.5, 0.5]);
        let r = assess_stability(&k);
        assert_eq!(r.colsum_bound, 1.0);
        assert_eq!(r.offending, vec![1]);
        assert!(r.certified);
        let rho = r.spectral_radius.unwrap();
        // eigenvalues of [[0, .5], [.5, .5]] are (1 ± sqrt 5) / 4
        assert!((rho - (1.0 + 5f64.sqrt()) / 4.0).abs() < 1e-8);
    }

    #[test]
    fn periodic_kernel_estimate_settles() {
        // 2-cycle with weight 0.9 each way: ρ = 0.9, growth alternates
        let k = kernel(2, &[0.0, 0.9, 0.9, 0.0]);
        let est = spectral_radius_estimate(&k);
        assert!(est.converged);
        assert!((est.value - 0.9).abs() < 1e-9);
    }

    #[test]
    fn stability_record_round_trips() {
        let r = StabilityReport {
            colsum_bound: 1.0,
            spectral_radius: Some(0.75),
            certified: true,
            offending: vec![3, 9],
        };
        let text = r.to_string();
        assert_eq!(text, "bound=1 estimate=0.75 certified=true offending=3,9");
        assert_eq!(text.parse::<StabilityReport>().unwrap(), r);
        let r2 = StabilityReport {
            colsum_bound: 0.5,
            spectral_radius: None,
            certified: true,
            offending: vec![],
        };
        assert_eq!(r2.to_string().parse::<StabilityReport>().unwrap(), r2);
        assert!("bound=x".parse::<StabilityReport>().is_err());
    }

    #[test]
    fn solve_refuses_uncertified_kernel() {
        let k = kernel(2, &[0.0; 4]);
        assert!(matches!(
            leontief_row_solve(&k, &[1.0, 0.0]),
            Err(Error::Uncertified)
        ));
    }

    #[test]
    fn zero_kernel_solve_is_identity() {
        let mut k = kernel(3, &[0.0; 9]);
        k.certify().unwrap();
        let v = leontief_row_solve(&k, &[1.0, -2.0, 3.5]).unwrap();
        assert_eq!(v.values, vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn two_by_two_closed_form() {
        // vᵀ (I − K) = mᵀ with K = [[0, .5], [.4, 0]], m = (1, 0):
        // v1 − .4 v2 = 1, −.5 v1 + v2 = 0  →  v = (1.25, 0.625)
        let mut k = kernel(2, &[0.0, 0.5, 0.4, 0.0]);
        k.certify().unwrap();
        let v = leontief_row_solve(&k, &[1.0, 0.0]).unwrap();
        assert!((v.values[0] - 1.25).abs() < 1e-14);
        assert!((v.values[1] - 0.625).abs() < 1e-14);
        assert!(v.residual <= 1e-14);
    }

    #[test]
    fn solver_reports_non_convergence() {
        let mut k = kernel(2, &[0.0, 0.9, 0.9, 0.0]);
        k.certify().unwrap();
        let err = leontief_row_solve_with(
            &k,
            &[1.0, 1.0],
            SolveOptions {
                max_sweeps: 2,
                ..Default::default()
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonConvergence { sweeps: 2, .. }));
    }

    #[test]
    fn neumann_small_horizons() {
        let k = kernel(2, &[0.1, 0.2, 0.3, 0.4]);
        let kd = k.to_dense();
        assert_eq!(neumann_cumulative(&k, 1).unwrap(), DMatrix::identity(2, 2));
        assert_eq!(
            neumann_cumulative(&k, 2).unwrap(),
            DMatrix::identity(2, 2) + &kd
        );
        let s3 = neumann_cumulative(&k, 3).unwrap();
        let expect = DMatrix::identity(2, 2) + &kd + &kd * &kd;
        assert!((s3 - expect).abs().max() < 1e-15);
        // against a plain loop for an awkward horizon
        let mut acc = DMatrix::<f64>::identity(2, 2);
        let mut p = DMatrix::<f64>::identity(2, 2);
        for _ in 1..37 {
            p = &p * &kd;
            acc += &p;
        }
        assert!((neumann_cumulative(&k, 37).unwrap() - acc).abs().max() < 1e-13);
        assert!(neumann_cumulative(&k, 0).is_err());
    }

    #[test]
    fn neumann_size_guard() {
        let k = PropagationKernel::from_matrix(CscMatrix::zeros(513, 513)).unwrap();
        assert!(matches!(
            neumann_cumulative(&k, 2),
            Err(Error::SizeGuard { n: 513, .. })
        ));
    }

    #[test]
    fn patches_replace_columns_without_touching_base() {
        let k = kernel(2, &[0.1, 0.2, 0.3, 0.4]);
        let patched = k
            .with_patches(vec![(
                1,
                SparseColumn {
                    rows: vec![1],
                    values: vec![0.6],
                },
            )])
            .unwrap();
        assert!(patched.shares_base_with(&k));
        assert_eq!(patched.get(0, 1), 0.0);
        assert_eq!(patched.get(1, 1), 0.6);
        assert_eq!(patched.get(1, 0), 0.3);
        assert_eq!(k.get(0, 1), 0.2);
        assert!(patched.is_patched(1) && !patched.is_patched(0));
        assert!(patched.certificate().is_none());
    }
}
