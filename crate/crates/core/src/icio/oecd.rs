//! OECD ICIO wide layout.
//!
//! Rows are supplying country-sectors and columns are users. A label of the
//! form `COUNTRY_SECTOR` that appears both as a row label and as a column label
//! is a network node; the country code is everything before the first `_`.
//! Every other column whose prefix is a known country (`CHN_HFCE`,
//! `USA_GFCF`, ...) is a final-demand category and is summed into the row
//! supplier's final use. Total-output columns ([`TOTAL_COLUMN_LABELS`]) and
//! unprefixed columns are skipped. Rows that are not nodes (value added,
//! taxes, totals) are skipped. Empty cells read as zero.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::path::Path;

use crate::error::{Error, Result};

use super::canonical::parse_value;
use super::{clamp_negative, CountrySectorIndex, FlowRecord, FlowTable, TableMetadata};

/// Column labels (or `COUNTRY_` suffixes) treated as totals and ignored.
pub const TOTAL_COLUMN_LABELS: [&str; 4] = ["OUT", "TOTAL", "TOT", "OUTPUT"];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OecdOptions {
    pub year: Option<i32>,
}

#[derive(Debug, Clone, Copy)]
enum ColumnRole {
    Node(usize),
    FinalDemand,
    Ignored,
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: err.position().map(|p| p.line()).unwrap_or(0),
        column: String::new(),
        message: err.to_string(),
    }
}

fn is_total(label: &str) -> bool {
    let suffix = label.split_once('_').map(|(_, s)| s).unwrap_or(label);
    TOTAL_COLUMN_LABELS
        .iter()
        .any(|t| t.eq_ignore_ascii_case(label) || t.eq_ignore_ascii_case(suffix))
}

pub fn read_oecd(path: &Path, options: &OecdOptions) -> Result<FlowTable> {
    // pass 1: row labels only
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.len() < 2 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            column: String::new(),
            message: "expected a row-label column followed by data columns".into(),
        });
    }
    let mut row_labels = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        if let Some(l) = rec.get(0) {
            row_labels.insert(l.to_string());
        }
    }

    let mut countries: Vec<String> = Vec::new();
    let mut sectors: Vec<String> = Vec::new();
    let mut node_cols: Vec<(usize, String, String)> = Vec::new();
    for (k, label) in headers.iter().enumerate().skip(1) {
        if !row_labels.contains(label) || is_total(label) {
            continue;
        }
        if let Some((c, s)) = label.split_once('_') {
            if !countries.iter().any(|x| x == c) {
                countries.push(c.to_string());
            }
            if !sectors.iter().any(|x| x == s) {
                sectors.push(s.to_string());
            }
            node_cols.push((k, c.to_string(), s.to_string()));
        }
    }
    if node_cols.is_empty() {
        return Err(Error::Schema(format!(
            "{}: no COUNTRY_SECTOR labels shared by rows and columns",
            path.display()
        )));
    }
    let index = CountrySectorIndex::new(countries, sectors)?;

    let mut roles = vec![ColumnRole::Ignored; headers.len()];
    let mut seen_nodes = vec![false; index.len()];
    for (k, c, s) in &node_cols {
        let node = index.node(c, s)?;
        if seen_nodes[node] {
            return Err(Error::Schema(format!("duplicate column label {c}_{s}")));
        }
        seen_nodes[node] = true;
        roles[*k] = ColumnRole::Node(node);
    }
    if let Some(missing) = seen_nodes.iter().position(|&s| !s) {
        return Err(Error::Schema(format!(
            "country-sector grid is incomplete: no row/column pair for {}",
            index.label(missing)
        )));
    }
    for (k, label) in headers.iter().enumerate().skip(1) {
        if matches!(roles[k], ColumnRole::Node(_)) || is_total(label) {
            continue;
        }
        if let Some((c, _)) = label.split_once('_') {
            if index.country_index(c).is_err() {
                return Err(Error::Schema(format!(
                    "final-demand column {label} names unknown country {c}"
                )));
            }
            roles[k] = ColumnRole::FinalDemand;
        }
    }

    // pass 2: values
    let mut rdr = reader(path)?;
    let mut clamped = 0usize;
    let mut records = Vec::new();
    let mut final_use = vec![0.0; index.len()];
    let mut seen_rows = vec![false; index.len()];
    let node_of_label: HashMap<String, usize> =
        (0..index.len()).map(|k| (index.label(k), k)).collect();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let Some(&supplier) = rec.get(0).and_then(|l| node_of_label.get(l)) else {
            continue;
        };
        if seen_rows[supplier] {
            return Err(Error::Schema(format!(
                "duplicate row label {}",
                index.label(supplier)
            )));
        }
        seen_rows[supplier] = true;
        for (k, role) in roles.iter().enumerate().skip(1) {
            if matches!(role, ColumnRole::Ignored) {
                continue;
            }
            let raw = rec.get(k).unwrap_or("");
            if raw.is_empty() {
                continue;
            }
            let v = parse_value(path, line, &headers[k], raw)?;
            let v = clamp_negative(v, &mut clamped);
            match *role {
                ColumnRole::Node(user) => {
                    if v != 0.0 {
                        records.push(FlowRecord {
                            supplier,
                            user,
                            value: v,
                        });
                    }
                }
                ColumnRole::FinalDemand => final_use[supplier] += v,
                ColumnRole::Ignored => {}
            }
        }
    }

    Ok(FlowTable {
        index,
        records,
        final_use,
        metadata: TableMetadata {
            source: path.display().to_string(),
            year: options.year,
        },
        clamped,
    })
}
