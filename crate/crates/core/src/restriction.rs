//! Supply restrictions: a source country stops delivering selected sectors'
//! output to every sector of a target country, and each affected supplier
//! redirects the lost share to its remaining buyers pro rata.
//!
//! For a restricted, active supplier column `ℓ` with target share
//! `ψ_ℓ = Σ_{i ∈ target} a_iℓ`, the restricted column is
//!
//! > a°_iℓ = 0 for target rows, a_iℓ / (1 − ψ_ℓ) otherwise,
//!
//! so the column still sums to one. Every other column is left untouched.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::icio::{AllocationMatrix, CountrySectorIndex, LeakageRates};
use crate::network::{assess_stability, PropagationKernel, StabilityReport};
use crate::sparse::{ColumnRef, SparseColumn};

/// Restricted columns with `ψ > 1 − RENORM_EPSILON` are refused.
pub const RENORM_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SectorSelection {
    All,
    Listed(Vec<String>),
}

impl fmt::Display for SectorSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SectorSelection::All => f.write_str("ALL"),
            SectorSelection::Listed(s) => f.write_str(&s.join(",")),
        }
    }
}

impl FromStr for SectorSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "ALL" {
            return Ok(SectorSelection::All);
        }
        let list: Vec<String> = s
            .split(',')
            .map(|x| x.trim())
            .filter(|x| !x.is_empty())
            .map(String::from)
            .collect();
        if list.is_empty() {
            return Err(Error::Spec("restricted sector list is empty".into()));
        }
        Ok(SectorSelection::Listed(list))
    }
}

/// `target=<code> source=<code> sectors=<list|ALL>`
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RestrictionSpec {
    pub target: String,
    pub source: String,
    pub sectors: SectorSelection,
}

impl RestrictionSpec {
    pub fn new(
        target: impl Into<String>,
        source: impl Into<String>,
        sectors: SectorSelection,
    ) -> Result<Self> {
        let spec = RestrictionSpec {
            target: target.into(),
            source: source.into(),
            sectors,
        };
        if spec.target == spec.source {
            return Err(Error::Spec(format!(
                "target and source are both {}",
                spec.target
            )));
        }
        if matches!(&spec.sectors, SectorSelection::Listed(l) if l.is_empty()) {
            return Err(Error::Spec("restricted sector list is empty".into()));
        }
        Ok(spec)
    }

    /// Sector label used in reports: the single sector, the list, or `ALL`.
    pub fn sector_label(&self) -> String {
        self.sectors.to_string()
    }
}

impl fmt::Display for RestrictionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "target={} source={} sectors={}",
            self.target, self.source, self.sectors
        )
    }
}

impl FromStr for RestrictionSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (mut target, mut source, mut sectors) = (None, None, None);
        for token in s.split_whitespace() {
            let (k, v) = token
                .split_once('=')
                .ok_or_else(|| Error::Spec(format!("expected key=value, got {token:?}")))?;
            match k {
                "target" => target = Some(v.to_string()),
                "source" => source = Some(v.to_string()),
                "sectors" => sectors = Some(v.parse::<SectorSelection>()?),
                other => return Err(Error::Spec(format!("unknown key {other}"))),
            }
        }
        RestrictionSpec::new(
            target.ok_or_else(|| Error::Spec("missing target".into()))?,
            source.ok_or_else(|| Error::Spec("missing source".into()))?,
            sectors.ok_or_else(|| Error::Spec("missing sectors".into()))?,
        )
    }
}

/// Target-row and restricted-column indicators.
///
/// `q` marks the target country's rows and doubles as the aggregation
/// selector μ; `r` marks the restricted supplier columns and doubles as ν.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectorSet {
    pub q: Vec<bool>,
    pub r: Vec<bool>,
    /// Flat indices where `r` is set, ascending.
    pub restricted: Vec<usize>,
    /// `COUNTRY_SECTOR` labels of `restricted`.
    pub labels: Vec<String>,
}

impl SelectorSet {
    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn mu(&self) -> Vec<f64> {
        self.q.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    pub fn nu(&self) -> Vec<f64> {
        self.r.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    /// Same target rows, no restricted columns.
    pub fn without_restriction(&self) -> Self {
        SelectorSet {
            q: self.q.clone(),
            r: vec![false; self.r.len()],
            restricted: Vec::new(),
            labels: Vec::new(),
        }
    }
}

pub fn make_selectors(spec: &RestrictionSpec, index: &CountrySectorIndex) -> Result<SelectorSet> {
    if spec.target == spec.source {
        return Err(Error::Spec(format!(
            "target and source are both {}",
            spec.target
        )));
    }
    let target = index.country_index(&spec.target)?;
    let source = index.country_index(&spec.source)?;
    let sectors: BTreeSet<usize> = match &spec.sectors {
        SectorSelection::All => (0..index.n_sectors()).collect(),
        SectorSelection::Listed(list) => {
            if list.is_empty() {
                return Err(Error::Spec("restricted sector list is empty".into()));
            }
            list.iter()
                .map(|s| index.sector_index(s))
                .collect::<Result<_>>()?
        }
    };
    let n = index.len();
    let mut q = vec![false; n];
    for k in index.country_nodes(target) {
        q[k] = true;
    }
    let mut r = vec![false; n];
    let restricted: Vec<usize> = sectors.iter().map(|&s| index.flat(source, s)).collect();
    for &k in &restricted {
        r[k] = true;
    }
    let labels = restricted.iter().map(|&k| index.label(k)).collect();
    Ok(SelectorSet {
        q,
        r,
        restricted,
        labels,
    })
}

/// `ψ_ℓ = Σ_i q_i a_iℓ` on restricted columns, zero elsewhere.
pub fn target_shares(a: &AllocationMatrix, sel: &SelectorSet) -> Vec<f64> {
    let mut psi = vec![0.0; a.len()];
    for &l in &sel.restricted {
        psi[l] = column_target_share(a.a.column(l), &sel.q);
    }
    psi
}

fn column_target_share(col: ColumnRef<'_>, q: &[bool]) -> f64 {
    col.iter().filter(|(i, _)| q[*i]).map(|(_, v)| v).sum()
}

/// `A°`, stored as the benchmark plus replacement columns.
#[derive(Debug, Clone)]
pub struct RestrictedAllocation<'a> {
    base: &'a AllocationMatrix,
    patches: Vec<(usize, SparseColumn)>,
    pub psi: Vec<f64>,
    pub normalizers: Vec<f64>,
    /// Restricted columns skipped because the supplier has no output.
    pub skipped_inactive: usize,
}

impl<'a> RestrictedAllocation<'a> {
    pub fn base(&self) -> &'a AllocationMatrix {
        self.base
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    pub fn patches(&self) -> &[(usize, SparseColumn)] {
        &self.patches
    }

    pub fn column(&self, j: usize) -> ColumnRef<'_> {
        match self.patches.binary_search_by_key(&j, |(k, _)| *k) {
            Ok(pos) => self.patches[pos].1.as_ref(),
            Err(_) => self.base.a.column(j),
        }
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
}

pub fn apply_restriction<'a>(
    a: &'a AllocationMatrix,
    sel: &SelectorSet,
) -> Result<RestrictedAllocation<'a>> {
    let n = a.len();
    if sel.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: sel.len(),
        });
    }
    let mut psi = vec![0.0; n];
    let mut normalizers = vec![1.0; n];
    let mut patches = Vec::new();
    let mut skipped_inactive = 0;
    for (k, &l) in sel.restricted.iter().enumerate() {
        if !a.active[l] {
            skipped_inactive += 1;
            continue;
        }
        let col = a.a.column(l);
        let share = column_target_share(col, &sel.q);
        if share > 1.0 - RENORM_EPSILON {
            return Err(Error::TotalDependence {
                column: l,
                label: sel.labels.get(k).cloned().unwrap_or_else(|| l.to_string()),
                psi: share,
            });
        }
        psi[l] = share;
        let keep = 1.0 - share;
        normalizers[l] = 1.0 / keep;
        if share == 0.0 {
            // nothing flows to the target; the column stays bitwise equal
            continue;
        }
        let mut patched = SparseColumn::default();
        for (i, v) in col.iter() {
            if !sel.q[i] {
                patched.rows.push(i as u32);
                patched.values.push(v / keep);
            }
        }
        patches.push((l, patched));
    }
    Ok(RestrictedAllocation {
        base: a,
        patches,
        psi,
        normalizers,
        skipped_inactive,
    })
}

/// `K° = A° (I − β)` with the benchmark leakage. Shares the benchmark
/// kernel's storage and re-checks stability: when every column sum stays
/// below one the certificate follows directly, otherwise power iteration
/// runs on the restricted kernel.
pub fn restricted_kernel(
    benchmark: &PropagationKernel,
    restricted: &RestrictedAllocation<'_>,
    beta: &LeakageRates,
) -> Result<PropagationKernel> {
    let n = benchmark.len();
    if restricted.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: restricted.len(),
        });
    }
    if beta.beta.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: beta.beta.len(),
        });
    }
    let patches = restricted
        .patches
        .iter()
        .map(|(l, col)| {
            let keep = 1.0 - beta.beta[*l];
            let mut out = SparseColumn::default();
            for (&i, &v) in col.rows.iter().zip(&col.values) {
                let kv = v * keep;
                if kv != 0.0 {
                    out.rows.push(i);
                    out.values.push(kv);
                }
            }
            (*l, out)
        })
        .collect();
    let mut kernel = benchmark.with_patches(patches)?;
    let sums = kernel.column_sums();
    let bound = sums.iter().cloned().fold(0.0, f64::max);
    let report = if bound < 1.0 && bound > 0.0 {
        StabilityReport {
            colsum_bound: bound,
            spectral_radius: None,
            certified: true,
            offending: Vec::new(),
        }
    } else {
        assess_stability(&kernel)
    };
    if !report.certified {
        return Err(Error::Stability {
            bound: report.colsum_bound,
            estimate: report.spectral_radius,
            offending: report.offending,
        });
    }
    kernel.set_certificate(report);
    Ok(kernel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::CscMatrix;

    fn index(c: usize, s: usize) -> CountrySectorIndex {
        CountrySectorIndex::new(
            (1..=c).map(|k| format!("K{k}")).collect(),
            (1..=s).map(|k| format!("s{k}")).collect(),
        )
        .unwrap()
    }

    fn bits(v: &[bool]) -> Vec<u8> {
        v.iter().map(|&b| b as u8).collect()
    }

    #[test]
    fn selector_layout_follows_flat_index() {
        let idx = index(3, 2);
        let all = RestrictionSpec::new("K2", "K3", SectorSelection::All).unwrap();
        let sel = make_selectors(&all, &idx).unwrap();
        assert_eq!(bits(&sel.q), vec![0, 0, 1, 1, 0, 0]);
        assert_eq!(bits(&sel.r), vec![0, 0, 0, 0, 1, 1]);
        let one = RestrictionSpec::new("K2", "K3", SectorSelection::Listed(vec!["s1".into()]))
            .unwrap();
        let sel = make_selectors(&one, &idx).unwrap();
        assert_eq!(bits(&sel.r), vec![0, 0, 0, 0, 1, 0]);
        assert_eq!(sel.labels, vec!["K3_s1".to_string()]);
        assert_eq!(sel.mu(), vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn selector_errors() {
        let idx = index(3, 2);
        assert!(matches!(
            RestrictionSpec::new("K1", "K1", SectorSelection::All),
            Err(Error::Spec(_))
        ));
        let spec = RestrictionSpec {
            target: "K1".into(),
            source: "K1".into(),
            sectors: SectorSelection::All,
        };
        assert!(matches!(make_selectors(&spec, &idx), Err(Error::Spec(_))));
        let spec = RestrictionSpec::new("K1", "ZZ", SectorSelection::All).unwrap();
        assert!(matches!(
            make_selectors(&spec, &idx),
            Err(Error::UnknownCode(_))
        ));
        let spec =
            RestrictionSpec::new("K1", "K2", SectorSelection::Listed(vec!["nope".into()])).unwrap();
        assert!(matches!(
            make_selectors(&spec, &idx),
            Err(Error::UnknownCode(_))
        ));
    }

    #[test]
    fn spec_text_round_trip() {
        let spec: RestrictionSpec = "target=IND source=CHN sectors=ALL".parse().unwrap();
        assert_eq!(spec.sectors, SectorSelection::All);
        assert_eq!(spec.to_string(), "target=IND source=CHN sectors=ALL");
        let spec: RestrictionSpec = "target=IND source=SAU sectors=B05,B06".parse().unwrap();
        assert_eq!(
            spec.sectors,
            SectorSelection::Listed(vec!["B05".into(), "B06".into()])
        );
        assert_eq!(spec.to_string(), "target=IND source=SAU sectors=B05,B06");
        assert!("target=IND source=IND sectors=ALL"
            .parse::<RestrictionSpec>()
            .is_err());
        assert!("target=IND source=CHN sectors=".parse::<RestrictionSpec>().is_err());
        assert!("target=IND".parse::<RestrictionSpec>().is_err());
    }

    /// 3 countries x 1 sector; target K1 is row 0.
    fn alloc(columns: &[[f64; 3]]) -> AllocationMatrix {
        let mut d = DMatrix::zeros(3, 3);
        for (j, col) in columns.iter().enumerate() {
            for i in 0..3 {
                d[(i, j)] = col[i];
            }
        }
        let active = (0..3).map(|j| d.column(j).sum() > 0.0).collect();
        AllocationMatrix {
            a: CscMatrix::from_dense(&d),
            active,
        }
    }

    fn sel_for(source: &str) -> SelectorSet {
        let spec = RestrictionSpec::new("K1", source, SectorSelection::All).unwrap();
        make_selectors(&spec, &index(3, 1)).unwrap()
    }

    #[test]
    fn target_share_sums_target_rows() {
        let a = alloc(&[[0.5, 0.5, 0.0], [0.3, 0.0, 0.7], [0.0, 0.4, 0.6]]);
        let psi = target_shares(&a, &sel_for("K2"));
        assert_eq!(psi, vec![0.0, 0.3, 0.0]);
        let psi = target_shares(&a, &sel_for("K3"));
        assert_eq!(psi, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn renormalizes_restricted_column() {
        let a = alloc(&[[0.5, 0.5, 0.0], [0.2, 0.3, 0.5], [0.0, 0.4, 0.6]]);
        let r = apply_restriction(&a, &sel_for("K2")).unwrap();
        assert_eq!(r.get(0, 1), 0.0);
        assert!((r.get(1, 1) - 0.375).abs() < 1e-15);
        assert!((r.get(2, 1) - 0.625).abs() < 1e-15);
        assert!((r.psi[1] - 0.2).abs() < 1e-15);
        assert!((r.normalizers[1] - 1.25).abs() < 1e-15);
        assert_eq!(r.normalizers[0], 1.0);
        // untouched columns are the same storage
        assert_eq!(r.column(0).values.as_ptr(), a.a.column(0).values.as_ptr());
    }

    #[test]
    fn empty_restriction_is_identity() {
        let a = alloc(&[[0.5, 0.5, 0.0], [0.2, 0.3, 0.5], [0.0, 0.4, 0.6]]);
        let r = apply_restriction(&a, &sel_for("K2").without_restriction()).unwrap();
        assert!(r.patches().is_empty());
        assert_eq!(r.to_dense(), a.a.to_dense());
    }

    #[test]
    fn inactive_columns_are_skipped() {
        let a = alloc(&[[0.5, 0.5, 0.0], [0.0, 0.0, 0.0], [0.0, 0.4, 0.6]]);
        let r = apply_restriction(&a, &sel_for("K2")).unwrap();
        assert_eq!(r.skipped_inactive, 1);
        assert!(r.column(1).is_empty());
    }

    #[test]
    fn total_dependence_is_refused() {
        let a = alloc(&[[0.5, 0.5, 0.0], [1.0, 0.0, 0.0], [0.0, 0.4, 0.6]]);
        match apply_restriction(&a, &sel_for("K2")) {
            Err(Error::TotalDependence { column, label, psi }) => {
                assert_eq!(column, 1);
                assert_eq!(label, "K2_s1");
                assert_eq!(psi, 1.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn restricted_kernel_keeps_column_mass() {
        let a = alloc(&[[0.5, 0.5, 0.0], [0.2, 0.3, 0.5], [0.0, 0.4, 0.6]]);
        let beta = LeakageRates {
            beta: vec![0.3, 0.5, 0.1],
        };
        let mut k = crate::network::build_kernel(&a, &beta).unwrap();
        k.certify().unwrap();
        let r = apply_restriction(&a, &sel_for("K2")).unwrap();
        let kc = restricted_kernel(&k, &r, &beta).unwrap();
        assert!(kc.is_certified());
        assert_eq!(kc.get(0, 1), 0.0);
        for j in 0..3 {
            assert!((kc.column_sum(j) - (1.0 - beta.beta[j])).abs() < 1e-12);
        }
        let none = apply_restriction(&a, &sel_for("K2").without_restriction()).unwrap();
        let same = restricted_kernel(&k, &none, &beta).unwrap();
        assert_eq!(same.to_dense(), k.to_dense());
    }
}
