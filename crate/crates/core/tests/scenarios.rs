mod common;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use supplynet_core::icio::{
    generate_synthetic, CountrySectorIndex, FlowRecord, FlowTable, SyntheticParams, TableMetadata,
};
use supplynet_core::network::{leontief_row_solve_with, SolveOptions};
use supplynet_core::restriction::{apply_restriction, make_selectors, restricted_kernel};
use supplynet_core::runner::{
    enumerate_sector_scenarios, evaluate_scenario, evaluate_scenario_uncached, run_batch,
    TargetContext,
};
use supplynet_core::vulnerability::{exposure_delta, gamma};
use supplynet_core::{Economy, Error, RestrictionSpec, ScenarioClass, ScenarioKind, SectorSelection};

use common::{oracle_scenario, rel_err, DenseModel};

fn fixture(seed: u64, c: usize, s: usize, density: f64) -> (FlowTable, Economy) {
    let table = generate_synthetic(SyntheticParams::new(seed, c, s).with_density(density))
        .unwrap()
        .table;
    let eco = Economy::from_table(&table).unwrap();
    (table, eco)
}

#[test]
fn sector_batch_matches_dense_oracle() {
    let (table, eco) = fixture(4, 4, 3, 0.3);
    let dense = DenseModel::from_table(&table);
    let report = run_batch(&eco, &ScenarioClass::new(ScenarioKind::SectorLevel, "C01"), 3).unwrap();
    assert_eq!(report.results.len(), 9);
    assert!(report.failures.is_empty());
    assert_eq!(
        report.results.iter().filter(|r| r.gamma_normalized == 1.0).count(),
        1
    );
    for r in &report.results {
        let oracle = oracle_scenario(&dense, &table, &r.spec).gamma;
        assert!(rel_err(r.gamma, oracle) <= 1e-6, "{}: {} vs {oracle}", r.spec, r.gamma);
        assert!((0.0..=1.0).contains(&r.gamma_normalized));
    }
}

#[test]
fn country_batch_matches_dense_oracle() {
    let (table, eco) = fixture(4, 4, 3, 0.3);
    let dense = DenseModel::from_table(&table);
    let report = run_batch(&eco, &ScenarioClass::new(ScenarioKind::CountryLevel, "C01"), 1).unwrap();
    assert_eq!(report.results.len(), 3);
    for r in &report.results {
        let oracle = oracle_scenario(&dense, &table, &r.spec).gamma;
        assert!(rel_err(r.gamma, oracle) <= 1e-6, "{}: {} vs {oracle}", r.spec, r.gamma);
    }
}

/// Two countries A (target) and B, two sectors; B_s1 sells only to A.
fn dependent_table() -> FlowTable {
    let index = CountrySectorIndex::new(
        vec!["A".into(), "B".into()],
        vec!["s1".into(), "s2".into()],
    )
    .unwrap();
    // nodes: A_s1 = 0, A_s2 = 1, B_s1 = 2, B_s2 = 3
    let flows = [
        (0, 0, 5.0),
        (0, 1, 2.0),
        (1, 1, 4.0),
        (1, 3, 1.0),
        (2, 0, 3.0),
        (2, 1, 1.0),
        (3, 2, 2.0),
        (3, 3, 6.0),
        (3, 0, 1.0),
    ];
    FlowTable {
        index,
        records: flows
            .iter()
            .map(|&(supplier, user, value)| FlowRecord {
                supplier,
                user,
                value,
            })
            .collect(),
        final_use: vec![10.0, 10.0, 10.0, 10.0],
        metadata: TableMetadata::default(),
        clamped: 0,
    }
}

#[test]
fn total_dependence_is_contained() {
    let eco = Economy::from_table(&dependent_table()).unwrap();
    let report = run_batch(&eco, &ScenarioClass::new(ScenarioKind::SectorLevel, "A"), 2).unwrap();
    assert_eq!(report.scenario_count(), 2);
    assert_eq!(report.failures.len(), 1);
    assert_eq!(report.failures[0].tag, "total_dependence");
    assert_eq!(report.failures[0].spec.sector_label(), "s1");
    assert_eq!(report.results.len(), 1);
    assert_eq!(report.results[0].rank, 1);
    assert_eq!(report.results[0].gamma_normalized, 1.0);

    let spec = RestrictionSpec::new("A", "B", SectorSelection::All).unwrap();
    assert!(matches!(
        evaluate_scenario_uncached(&eco, &spec),
        Err(Error::TotalDependence { column: 2, .. })
    ));
}

#[test]
fn cached_path_matches_two_solves_on_sampled_scenarios() {
    let (_, eco) = fixture(9, 20, 10, 0.05);
    let specs = enumerate_sector_scenarios(eco.index(), "C03").unwrap();
    let ctx = TargetContext::new(&eco, "C03").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let picked = sample(&mut rng, specs.len(), 25);
    for k in picked {
        let spec = &specs[k];
        let cached = evaluate_scenario(&ctx, spec).unwrap().delta.gamma;
        let fresh = evaluate_scenario_uncached(&eco, spec).unwrap().delta.gamma;
        assert!(rel_err(cached, fresh) <= 1e-10, "{spec}: {cached} vs {fresh}");
    }
}

#[test]
fn permuted_solve_order_gives_same_exposure() {
    let (_, eco) = fixture(13, 6, 5, 0.2);
    let c = &eco.calibration;
    let spec = RestrictionSpec::new("C02", "C04", SectorSelection::All).unwrap();
    let sel = make_selectors(&spec, &c.index).unwrap();
    let ra = apply_restriction(&c.allocation, &sel).unwrap();
    let kc = restricted_kernel(&eco.kernel, &ra, &c.leakage).unwrap();
    let mu = sel.mu();
    let forward = exposure_delta(&eco.kernel, &kc, &mu).unwrap();

    let mut order: Vec<usize> = (0..mu.len()).collect();
    order.reverse();
    order.rotate_left(7);
    let opts = SolveOptions {
        order: Some(&order),
        ..Default::default()
    };
    let y = leontief_row_solve_with(&eco.kernel, &mu, opts).unwrap();
    let yc = leontief_row_solve_with(&kc, &mu, opts).unwrap();
    for l in 0..mu.len() {
        let permuted = y.values[l] - yc.values[l];
        assert!(
            (permuted - forward[l]).abs() <= 1e-10 * forward[l].abs().max(1e-300),
            "node {l}: {permuted} vs {}",
            forward[l]
        );
    }
    let g = gamma(&forward, &c.sizes, &sel.nu()).unwrap();
    assert!(g > 0.0);
}

#[test]
fn restriction_without_target_flows_leaves_exposure_unchanged() {
    // drop B_s2's only sale to A; restricting it then moves nothing
    let mut t = dependent_table();
    t.records.retain(|r| !(r.supplier == 3 && r.user == 0));
    let eco = Economy::from_table(&t).unwrap();
    let spec = RestrictionSpec::new("A", "B", SectorSelection::Listed(vec!["s2".into()])).unwrap();
    let ctx = TargetContext::new(&eco, "A").unwrap();
    let o = evaluate_scenario(&ctx, &spec).unwrap();
    assert_eq!(o.delta.gamma, 0.0);
    assert!(o.delta.delta_y.iter().all(|&d| d == 0.0));
    assert_eq!(o.diagnostics.psi, vec![("B_s2".to_string(), 0.0)]);
}

#[test]
fn scale_covariance_of_sizes() {
    let (_, eco) = fixture(8, 4, 3, 0.3);
    let class = ScenarioClass::new(ScenarioKind::SectorLevel, "C00");
    let base = run_batch(&eco, &class, 1).unwrap();
    for c in [0.125, 3.0, 1e4] {
        let mut scaled = eco.clone();
        scaled.calibration.sizes = eco.calibration.sizes.scaled(c);
        let r = run_batch(&scaled, &class, 1).unwrap();
        for (a, b) in base.results.iter().zip(&r.results) {
            assert_eq!(a.spec, b.spec);
            assert_eq!(a.rank, b.rank);
            assert!(rel_err(b.gamma, c * a.gamma) <= 1e-14);
            assert!((a.gamma_normalized - b.gamma_normalized).abs() <= 1e-14);
        }
    }
}
