//! Production-network propagation and supply-restriction vulnerability
//! analysis over inter-country input-output tables.
//!
//! The pipeline runs `icio` (parse and calibrate a table) → `network`
//! (benchmark kernel, stability, row solves) → `restriction` (restricted
//! allocation and kernel) → `vulnerability` (exposure change, index,
//! concentration) → `runner` (scenario classes, batches) → `report` (files).

pub mod cli;
pub mod error;
pub mod icio;
pub mod network;
pub mod report;
pub mod restriction;
pub mod runner;
pub mod sparse;
pub mod vulnerability;

pub use error::{Error, Result};
pub use icio::{
    generate_synthetic, parse_icio, Calibration, CountrySectorIndex, FlowTable, FormatAdapter,
    SyntheticParams,
};
pub use network::{PropagationKernel, StabilityReport};
pub use restriction::{RestrictionSpec, SectorSelection};
pub use runner::{run_batch, BatchReport, Economy, ScenarioClass, ScenarioKind, ScenarioResult};
pub use vulnerability::{ConcentrationStats, PropagationDelta};

use sha2::{Digest, Sha256};

const MODULES: [&str; 7] = [
    "icio",
    "network",
    "restriction",
    "vulnerability",
    "runner",
    "report",
    "cli",
];

const SOURCES: [&str; 13] = [
    include_str!("lib.rs"),
    include_str!("error.rs"),
    include_str!("sparse.rs"),
    include_str!("icio/mod.rs"),
    include_str!("icio/canonical.rs"),
    include_str!("icio/oecd.rs"),
    include_str!("icio/synthetic.rs"),
    include_str!("network.rs"),
    include_str!("restriction.rs"),
    include_str!("vulnerability.rs"),
    include_str!("runner.rs"),
    include_str!("report.rs"),
    include_str!("cli.rs"),
];

/// `(module, version)` pairs recorded in report provenance.
pub fn module_versions() -> Vec<(String, String)> {
    MODULES
        .iter()
        .map(|m| (m.to_string(), env!("CARGO_PKG_VERSION").to_string()))
        .collect()
}

/// SHA-256 over the library sources this binary was built from.
pub fn build_digest() -> String {
    let mut h = Sha256::new();
    for s in SOURCES {
        h.update(s.as_bytes());
    }
    hex::encode(h.finalize())
}
