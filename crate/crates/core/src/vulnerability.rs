//! Propagation differences, the vulnerability index, and the distributional
//! statistics over a class of scenarios.
//!
//! With μ selecting the target country's sectors, `y = μᵀ (I − K)^-1` and
//! `y° = μᵀ (I − K°)^-1` are the target's long-run exposure to a unit impulse
//! at each origin under the benchmark and restricted networks. The index is
//! the size-weighted exposure change over the restricted origins:
//!
//! > γ = Σ_{ℓ : ν_ℓ = 1} (y_ℓ − y°_ℓ) z_ℓ

use log::warn;
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::icio::SizeWeights;
use crate::network::{
    leontief_row_solve, leontief_row_solve_with, neumann_cumulative, ExposureVector,
    PropagationKernel, SolveOptions,
};
use crate::sparse::{CscMatrix, SparseColumn};

/// Cut-offs for [`ConcentrationStats::shares`].
pub const CONCENTRATION_GRID: [usize; 5] = [1, 5, 10, 20, 100];
/// Negative scores above `-TINY_NEGATIVE * max` are treated as zero.
pub const TINY_NEGATIVE: f64 = 1e-9;

/// `ΔK = K° − K`.
pub fn kernel_delta(k: &PropagationKernel, k_circ: &PropagationKernel) -> Result<CscMatrix> {
    let n = k.len();
    if k_circ.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: k_circ.len(),
        });
    }
    let shared = k.shares_base_with(k_circ);
    let columns = (0..n)
        .map(|j| {
            if shared && !k.is_patched(j) && !k_circ.is_patched(j) {
                return SparseColumn::default();
            }
            let (a, b) = (k_circ.column(j), k.column(j));
            let mut out = SparseColumn::default();
            let (mut p, mut q) = (0, 0);
            while p < a.rows.len() || q < b.rows.len() {
                let ra = a.rows.get(p).copied().unwrap_or(u32::MAX);
                let rb = b.rows.get(q).copied().unwrap_or(u32::MAX);
                let (row, v) = if ra == rb {
                    p += 1;
                    q += 1;
                    (ra, a.values[p - 1] - b.values[q - 1])
                } else if ra < rb {
                    p += 1;
                    (ra, a.values[p - 1])
                } else {
                    q += 1;
                    (rb, -b.values[q - 1])
                };
                if v != 0.0 {
                    out.rows.push(row);
                    out.values.push(v);
                }
            }
            out
        })
        .collect();
    Ok(CscMatrix::from_columns(n, columns))
}

/// `Φ_T = Σ_{t<T} K^t − Σ_{t<T} (K°)^t`, dense. Oracle only.
pub fn phi_finite(
    k: &PropagationKernel,
    k_circ: &PropagationKernel,
    horizon: usize,
) -> Result<DMatrix<f64>> {
    Ok(neumann_cumulative(k, horizon)? - neumann_cumulative(k_circ, horizon)?)
}

/// Exposure change and the resulting index for one restriction.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationDelta {
    pub delta_y: Vec<f64>,
    pub gamma: f64,
    /// Set once the whole class is known.
    pub gamma_normalized: Option<f64>,
}

/// `Δy = y − y°` from two independent row solves.
pub fn exposure_delta(
    k: &PropagationKernel,
    k_circ: &PropagationKernel,
    mu: &[f64],
) -> Result<Vec<f64>> {
    let y = leontief_row_solve(k, mu)?;
    let y_circ = leontief_row_solve(k_circ, mu)?;
    Ok(difference(&y.values, &y_circ.values))
}

/// `Δy` reusing a benchmark solve `y`; the restricted solve starts from `y`.
pub fn exposure_delta_cached(
    y: &ExposureVector,
    k_circ: &PropagationKernel,
    mu: &[f64],
) -> Result<Vec<f64>> {
    if y.len() != k_circ.len() {
        return Err(Error::DimensionMismatch {
            expected: k_circ.len(),
            found: y.len(),
        });
    }
    if k_circ.patched_columns().next().is_none() {
        // K° is the benchmark kernel itself
        return Ok(vec![0.0; y.len()]);
    }
    let y_circ = leontief_row_solve_with(
        k_circ,
        mu,
        SolveOptions {
            warm_start: Some(&y.values),
            ..Default::default()
        },
    )?;
    Ok(difference(&y.values, &y_circ.values))
}

fn difference(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `γ = Δyᵀ diag(z) ν`, summed in ascending node order.
pub fn gamma(delta_y: &[f64], sizes: &SizeWeights, nu: &[f64]) -> Result<f64> {
    let n = delta_y.len();
    for len in [sizes.z.len(), nu.len()] {
        if len != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: len,
            });
        }
    }
    Ok(delta_y
        .iter()
        .zip(&sizes.z)
        .zip(nu)
        .filter(|(_, &w)| w != 0.0)
        .map(|((d, z), w)| d * z * w)
        .sum())
}

/// Divides every score by the class maximum, which maps to exactly 1.
pub fn normalize_scores(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::DegenerateClass("no scores to normalize".into()));
    }
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() || max <= 0.0 {
        return Err(Error::DegenerateClass(format!(
            "largest score is {max}, cannot normalize"
        )));
    }
    Ok(scores.iter().map(|s| s / max).collect())
}

/// Descending scores with cumulative top-k shares.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationStats<L> {
    /// Retained scores, descending; ties in label order.
    pub sorted: Vec<(L, f64)>,
    /// Sum of retained scores.
    pub total: f64,
    /// `(k, share of top k)` for each k in [`CONCENTRATION_GRID`] not
    /// exceeding the class size, followed by the full class (share 1).
    pub shares: Vec<(usize, f64)>,
    /// Tiny negatives that were zeroed.
    pub clamped: usize,
    /// Negative scores left out of the shares.
    pub excluded: Vec<(L, f64)>,
}

impl<L> ConcentrationStats<L> {
    /// Share of the total held by the `k` largest scores.
    pub fn top_share(&self, k: usize) -> f64 {
        let k = k.min(self.sorted.len());
        if k == self.sorted.len() {
            return 1.0;
        }
        self.sorted[..k].iter().map(|(_, s)| s).sum::<f64>() / self.total
    }
}

pub fn concentration<L: Ord + Clone + std::fmt::Debug>(
    scores: &[(L, f64)],
) -> Result<ConcentrationStats<L>> {
    let max = scores.iter().map(|(_, s)| *s).fold(0.0, f64::max);
    if max.is_nan() || max <= 0.0 {
        return Err(Error::DegenerateClass(
            "no positive scores, shares are undefined".into(),
        ));
    }
    let mut sorted = Vec::with_capacity(scores.len());
    let mut excluded = Vec::new();
    let mut clamped = 0;
    for (label, s) in scores {
        if *s >= 0.0 {
            sorted.push((label.clone(), *s));
        } else if *s > -TINY_NEGATIVE * max {
            clamped += 1;
            sorted.push((label.clone(), 0.0));
        } else {
            warn!("score {s} for {label:?} is negative; excluded from concentration shares");
            excluded.push((label.clone(), *s));
        }
    }
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let total: f64 = sorted.iter().map(|(_, s)| s).sum();
    let mut stats = ConcentrationStats {
        sorted,
        total,
        shares: Vec::new(),
        clamped,
        excluded,
    };
    let n = stats.sorted.len();
    stats.shares = CONCENTRATION_GRID
        .iter()
        .copied()
        .filter(|&k| k < n)
        .chain(std::iter::once(n))
        .map(|k| (k, stats.top_share(k)))
        .collect();
    Ok(stats)
}
