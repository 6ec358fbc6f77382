//! Command-line front end.
//!
//! Exit status: 0 success, 2 input error, 3 stability or solver failure,
//! 4 total dependence, 5 unknown code or invalid restriction, 6 degenerate
//! class, 64 usage error. Files are written only under `--out`.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::icio::{
    generate_synthetic, parse_icio, write_canonical, write_fixture, Calibration, FormatAdapter,
    OecdOptions, SyntheticParams,
};
use crate::network::validate_kernel;
use crate::report::{emit_all, emit_country_flows, Binning, EmitOptions, DEFAULT_BINS, OIL_GAS_MINING};
use crate::restriction::{RestrictionSpec, SectorSelection};
use crate::runner::{
    digest_file, evaluate_scenario, run_batch, BatchConfig, Economy, ScenarioClass, ScenarioKind,
    TargetContext,
};

#[derive(Debug, Parser)]
#[command(
    name = "supplynet",
    about = "Supply-restriction vulnerability analysis on inter-country input-output tables",
    disable_version_flag = true
)]
pub struct Cli {
    /// Print module versions and the build digest.
    #[arg(short = 'V', long)]
    pub version: bool,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and calibrate a table, certify its kernel, write canonical files.
    Ingest(IngestArgs),
    /// Evaluate a single restriction.
    Run(RunArgs),
    /// Evaluate every restriction of one class against a target.
    Batch(BatchArgs),
    /// Generate a seeded synthetic table.
    Fixture(FixtureArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Canonical,
    Oecd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Class {
    Sector,
    Country,
}

impl From<Class> for ScenarioKind {
    fn from(c: Class) -> Self {
        match c {
            Class::Sector => ScenarioKind::SectorLevel,
            Class::Country => ScenarioKind::CountryLevel,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Flow table (canonical long CSV or OECD wide CSV).
    #[arg(long)]
    pub flows: Option<PathBuf>,
    /// Final-use file for the canonical layout.
    #[arg(long)]
    pub final_use: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Table vintage, recorded in metadata.
    #[arg(long)]
    pub year: Option<i32>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub target: String,
    #[arg(long)]
    pub source: String,
    /// Comma-separated sector codes, or ALL.
    #[arg(long)]
    pub sectors: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BatchArgs {
    /// TOML file with any of the settings below; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum)]
    pub class: Option<Class>,
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Rows kept in ranking tables.
    #[arg(long)]
    pub top_n: Option<usize>,
    /// Comma-separated sector codes left out of the filtered ranking. Defaults
    /// to the oil, gas and mining codes of the 45-industry ICIO taxonomy; pass
    /// an empty list to skip the filtered ranking.
    #[arg(long, value_delimiter = ',')]
    pub exclude_sectors: Option<Vec<String>>,
    /// Log-spaced histogram bins between the smallest and largest score.
    #[arg(long, conflicts_with = "bins_per_decade")]
    pub bins: Option<usize>,
    /// Decade-aligned histogram with this many bins per decade.
    #[arg(long)]
    pub bins_per_decade: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub countries: usize,
    #[arg(long)]
    pub sectors: usize,
    #[arg(long, default_value_t = SyntheticParams::DEFAULT_DENSITY)]
    pub density: f64,
    #[arg(long, default_value_t = SyntheticParams::DEFAULT_MIN_LEAKAGE)]
    pub min_leakage: f64,
    #[arg(long)]
    pub out: PathBuf,
}

fn version_text() -> String {
    let mut s = format!("supplynet {}\n", env!("CARGO_PKG_VERSION"));
    for (m, v) in crate::module_versions() {
        s.push_str(&format!("  {m} {v}\n"));
    }
    s.push_str(&format!("build {}\n", crate::build_digest()));
    s
}

/// Parses `args` and runs the command, writing human-readable output to
/// `out` and diagnostics to `err`. Returns the exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    if cli.version {
        let _ = write!(out, "{}", version_text());
        return 0;
    }
    let Some(command) = cli.command else {
        let _ = writeln!(err, "error: no command given; see --help");
        return 64;
    };
    let result = match command {
        Command::Ingest(a) => cmd_ingest(&a, out),
        Command::Run(a) => cmd_run(&a, out),
        Command::Batch(a) => cmd_batch(&a, out),
        Command::Fixture(a) => cmd_fixture(&a, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn adapter(input: &InputArgs) -> Result<(PathBuf, FormatAdapter)> {
    let flows = input
        .flows
        .clone()
        .ok_or_else(|| Error::Usage("--flows is required".into()))?;
    let adapter = match input.format.unwrap_or(Format::Canonical) {
        Format::Canonical => FormatAdapter::Canonical {
            final_use: input.final_use.clone(),
        },
        Format::Oecd => {
            if input.final_use.is_some() {
                return Err(Error::Usage(
                    "--final-use applies to the canonical format only".into(),
                ));
            }
            FormatAdapter::Oecd(OecdOptions { year: input.year })
        }
    };
    Ok((flows, adapter))
}

fn load(input: &InputArgs) -> Result<Economy> {
    let (flows, adapter) = adapter(input)?;
    let mut economy = Economy::load(&flows, &adapter)?;
    if input.year.is_some() {
        economy.calibration.metadata.year = input.year;
    }
    Ok(economy)
}

fn io_out(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Schema(format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct CalibrationSummary<'a> {
    source: &'a str,
    year: Option<i32>,
    countries: usize,
    sectors: usize,
    nodes: usize,
    active: usize,
    colsum_bound: f64,
    spectral_radius: Option<f64>,
    clamped_negative_cells: usize,
    inputs: Vec<crate::runner::InputDigest>,
}

pub fn cmd_ingest(args: &IngestArgs, out: &mut dyn Write) -> Result<()> {
    let (flows, adapter) = adapter(&args.input)?;
    let mut table = parse_icio(&flows, &adapter)?;
    if args.input.year.is_some() {
        table.metadata.year = args.input.year;
    }
    let cal = Calibration::from_table(&table)?;
    let kernel = crate::network::build_kernel(&cal.allocation, &cal.leakage)?;
    let cert = validate_kernel(&kernel)?;

    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    write_canonical(&table, &args.out)?;
    emit_country_flows(&cal.flows, &cal.index, &args.out)?;
    let mut inputs = vec![digest_file(&flows)?];
    if let Some(f) = &args.input.final_use {
        inputs.push(digest_file(f)?);
    }
    let summary = CalibrationSummary {
        source: &cal.metadata.source,
        year: cal.metadata.year,
        countries: cal.index.n_countries(),
        sectors: cal.index.n_sectors(),
        nodes: cal.index.len(),
        active: cal.allocation.active_count(),
        colsum_bound: cert.colsum_bound,
        spectral_radius: cert.spectral_radius,
        clamped_negative_cells: cal.clamped,
        inputs,
    };
    write_json(&args.out.join("calibration.json"), &summary)?;
    writeln!(
        out,
        "C={} S={} N={} active={} colsum_bound={} clamped={}",
        summary.countries,
        summary.sectors,
        summary.nodes,
        summary.active,
        summary.colsum_bound,
        summary.clamped_negative_cells
    )
    .map_err(io_out)?;
    writeln!(out, "stability: {cert}").map_err(io_out)?;
    writeln!(out, "wrote {}", args.out.display()).map_err(io_out)
}

#[derive(Serialize)]
struct RunRecord<'a> {
    target: &'a str,
    source: &'a str,
    sectors: String,
    gamma: f64,
    psi: Vec<(String, f64)>,
    skipped_inactive: usize,
    data_digest: String,
}

pub fn cmd_run(args: &RunArgs, out: &mut dyn Write) -> Result<()> {
    if args.sectors.trim().is_empty() {
        return Err(Error::Usage(
            "--sectors needs a comma-separated list of sector codes or ALL".into(),
        ));
    }
    let sectors: SectorSelection = args.sectors.parse()?;
    let spec = RestrictionSpec::new(&args.target, &args.source, sectors)?;
    let economy = load(&args.input)?;
    let ctx = TargetContext::new(&economy, &args.target)?;
    let outcome = evaluate_scenario(&ctx, &spec)?;

    writeln!(out, "{spec}").map_err(io_out)?;
    writeln!(out, "gamma = {}", outcome.delta.gamma).map_err(io_out)?;
    for (label, psi) in &outcome.diagnostics.psi {
        writeln!(out, "  psi[{label}] = {psi}").map_err(io_out)?;
    }
    if outcome.diagnostics.skipped_inactive > 0 {
        writeln!(
            out,
            "  {} inactive supplier(s) skipped",
            outcome.diagnostics.skipped_inactive
        )
        .map_err(io_out)?;
    }
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let digest = economy.data_digest();
        let record = RunRecord {
            target: &spec.target,
            source: &spec.source,
            sectors: spec.sector_label(),
            gamma: outcome.delta.gamma,
            psi: outcome.diagnostics.psi.clone(),
            skipped_inactive: outcome.diagnostics.skipped_inactive,
            data_digest: digest.clone(),
        };
        let name = format!(
            "run_{}_{}_{}_{}.json",
            spec.target,
            spec.source,
            spec.sector_label().replace(',', "+"),
            &digest[..crate::report::DIGEST_PREFIX]
        );
        let path = dir.join(name);
        write_json(&path, &record)?;
        writeln!(out, "wrote {}", path.display()).map_err(io_out)?;
    }
    Ok(())
}

pub fn cmd_batch(args: &BatchArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = match &args.config {
        Some(p) => BatchConfig::from_path(p)?,
        None => BatchConfig::default(),
    };
    let format = match (&args.input.format, cfg.format.as_deref()) {
        (Some(f), _) => Some(*f),
        (None, Some("canonical")) => Some(Format::Canonical),
        (None, Some("oecd")) => Some(Format::Oecd),
        (None, Some(other)) => {
            return Err(Error::Usage(format!(
                "format must be canonical or oecd, got {other}"
            )))
        }
        (None, None) => None,
    };
    let input = InputArgs {
        flows: args.input.flows.clone().or(cfg.flows),
        final_use: args.input.final_use.clone().or(cfg.final_use),
        format,
        year: args.input.year.or(cfg.year),
    };
    let kind: ScenarioKind = match (args.class, cfg.class) {
        (Some(c), _) => c.into(),
        (None, Some(k)) => k,
        (None, None) => return Err(Error::Usage("--class is required".into())),
    };
    let target = args
        .target
        .clone()
        .or(cfg.target)
        .ok_or_else(|| Error::Usage("--target is required".into()))?;
    let out_dir = args
        .out
        .clone()
        .or(cfg.out)
        .ok_or_else(|| Error::Usage("--out is required".into()))?;
    let workers = args
        .workers
        .or(cfg.workers)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        return Err(Error::Usage("--workers must be at least 1".into()));
    }
    let binning = match (args.bins, args.bins_per_decade, cfg.bins) {
        (Some(n), _, _) => Binning::Count(n),
        (None, Some(b), _) => Binning::PerDecade(b),
        (None, None, Some(n)) => Binning::Count(n),
        (None, None, None) => Binning::Count(DEFAULT_BINS),
    };
    let explicit: Option<BTreeSet<String>> = args
        .exclude_sectors
        .clone()
        .or(cfg.exclude_sectors)
        .map(|list| {
            list.into_iter()
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect()
        });

    let economy = load(&input)?;
    let exclude = match explicit {
        Some(set) => {
            for s in &set {
                economy.index().sector_index(s)?;
            }
            set
        }
        // the default set only applies to tables that use its codes
        None => OIL_GAS_MINING
            .iter()
            .filter(|s| economy.index().sector_index(s).is_ok())
            .map(|s| s.to_string())
            .collect(),
    };
    let class = ScenarioClass::new(kind, target);
    let report = run_batch(&economy, &class, workers)?;
    let opts = EmitOptions {
        top_n: args.top_n.or(cfg.top_n),
        exclude_sectors: exclude,
        binning,
    };
    let paths = emit_all(&report, &opts, &out_dir)?;

    writeln!(
        out,
        "{class}: {} scenarios, {} ranked, {} failed",
        report.scenario_count(),
        report.results.len(),
        report.failures.len()
    )
    .map_err(io_out)?;
    for r in report.results.iter().take(5) {
        writeln!(
            out,
            "  {:>4}  {}  {}  gamma={}  score={}",
            r.rank,
            r.spec.source,
            r.spec.sector_label(),
            r.gamma,
            r.gamma_normalized
        )
        .map_err(io_out)?;
    }
    for (k, share) in &report.concentration.shares {
        writeln!(out, "  top-{k} share {share:.4}").map_err(io_out)?;
    }
    for p in paths {
        writeln!(out, "wrote {}", p.display()).map_err(io_out)?;
    }
    Ok(())
}

pub fn cmd_fixture(args: &FixtureArgs, out: &mut dyn Write) -> Result<()> {
    let params = SyntheticParams::new(args.seed, args.countries, args.sectors)
        .with_density(args.density)
        .with_min_leakage(args.min_leakage);
    let fx = generate_synthetic(params)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    write_fixture(&fx, &args.out)?;
    writeln!(
        out,
        "{} records, N={} written to {}",
        fx.table.records.len(),
        fx.table.index.len(),
        args.out.display()
    )
    .map_err(io_out)
}
