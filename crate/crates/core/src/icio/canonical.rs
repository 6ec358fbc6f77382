//! Canonical long format: one flow per line plus a final-use companion file.
//!
//! Country and sector order in the resulting index is order of first
//! appearance, scanning the final-use file (when given) before the flows file.
//! [`write_canonical`] lists every node in the final-use file, so a written
//! table re-reads with the same index.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::{clamp_negative, CountrySectorIndex, FlowRecord, FlowTable, TableMetadata};

pub const FLOWS_HEADER: [&str; 5] = [
    "supplier_country",
    "supplier_sector",
    "user_country",
    "user_sector",
    "value",
];
pub const FINAL_USE_HEADER: [&str; 3] = ["supplier_country", "supplier_sector", "final_use"];

#[derive(Default)]
struct Interner {
    codes: Vec<String>,
    pos: HashMap<String, u32>,
}

impl Interner {
    fn intern(&mut self, code: &str) -> u32 {
        if let Some(&k) = self.pos.get(code) {
            return k;
        }
        let k = self.codes.len() as u32;
        self.codes.push(code.to_string());
        self.pos.insert(code.to_string(), k);
        k
    }
}

fn open_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    Error::Parse {
        path: path.to_path_buf(),
        line,
        column: String::new(),
        message: err.to_string(),
    }
}

fn header_positions(
    path: &Path,
    reader: &mut csv::Reader<File>,
    wanted: &[&str],
) -> Result<Vec<usize>> {
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    wanted
        .iter()
        .map(|w| {
            headers
                .iter()
                .position(|h| h == *w)
                .ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    line: 1,
                    column: w.to_string(),
                    message: "missing required header".into(),
                })
        })
        .collect()
}

pub(crate) fn parse_value(path: &Path, line: u64, column: &str, raw: &str) -> Result<f64> {
    let v: f64 = raw.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        column: column.to_string(),
        message: format!("not a decimal number: {raw:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            column: column.to_string(),
            message: format!("non-finite value {raw:?}"),
        });
    }
    Ok(v)
}

fn field<'r>(
    path: &Path,
    record: &'r csv::StringRecord,
    line: u64,
    pos: usize,
    name: &str,
) -> Result<&'r str> {
    match record.get(pos) {
        Some(s) if !s.is_empty() => Ok(s),
        _ => Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            column: name.to_string(),
            message: "missing value".into(),
        }),
    }
}

/// Reads a canonical flows file and optional final-use file.
pub fn read_canonical(flows: &Path, final_use: Option<&Path>) -> Result<FlowTable> {
    let mut countries = Interner::default();
    let mut sectors = Interner::default();
    let mut clamped = 0usize;

    let mut fu_rows: Vec<(u32, u32, f64)> = Vec::new();
    if let Some(fu_path) = final_use {
        let mut rdr = open_reader(fu_path)?;
        let pos = header_positions(fu_path, &mut rdr, &FINAL_USE_HEADER)?;
        for rec in rdr.records() {
            let rec = rec.map_err(|e| csv_error(fu_path, e))?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let c = field(fu_path, &rec, line, pos[0], FINAL_USE_HEADER[0])?;
            let s = field(fu_path, &rec, line, pos[1], FINAL_USE_HEADER[1])?;
            let raw = field(fu_path, &rec, line, pos[2], FINAL_USE_HEADER[2])?;
            let v = parse_value(fu_path, line, FINAL_USE_HEADER[2], raw)?;
            let v = clamp_negative(v, &mut clamped);
            fu_rows.push((countries.intern(c), sectors.intern(s), v));
        }
    }

    let mut raw_records: Vec<[u32; 4]> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut rdr = open_reader(flows)?;
    let pos = header_positions(flows, &mut rdr, &FLOWS_HEADER)?;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(flows, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let mut ids = [0u32; 4];
        for (k, id) in ids.iter_mut().enumerate() {
            let code = field(flows, &rec, line, pos[k], FLOWS_HEADER[k])?;
            *id = if k % 2 == 0 {
                countries.intern(code)
            } else {
                sectors.intern(code)
            };
        }
        let raw = field(flows, &rec, line, pos[4], FLOWS_HEADER[4])?;
        let v = parse_value(flows, line, FLOWS_HEADER[4], raw)?;
        raw_records.push(ids);
        values.push(clamp_negative(v, &mut clamped));
    }

    if countries.codes.is_empty() {
        return Err(Error::Schema(format!(
            "{}: no records, cannot infer country and sector codes",
            flows.display()
        )));
    }
    let index = CountrySectorIndex::new(countries.codes, sectors.codes)?;
    let records = raw_records
        .iter()
        .zip(values)
        .map(|(ids, value)| FlowRecord {
            supplier: index.flat(ids[0] as usize, ids[1] as usize),
            user: index.flat(ids[2] as usize, ids[3] as usize),
            value,
        })
        .collect();
    let mut fu = vec![0.0; index.len()];
    for (c, s, v) in fu_rows {
        fu[index.flat(c as usize, s as usize)] += v;
    }
    Ok(FlowTable {
        index,
        records,
        final_use: fu,
        metadata: TableMetadata {
            source: flows.display().to_string(),
            year: None,
        },
        clamped,
    })
}

/// Writes `flows.csv` and `final_use.csv` into `dir`. Values use the
/// shortest decimal representation that parses back to the same `f64`.
pub fn write_canonical(table: &FlowTable, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let flows_path = dir.join("flows.csv");
    let fu_path = dir.join("final_use.csv");
    let index = &table.index;

    let file = File::create(&flows_path).map_err(|e| Error::io(&flows_path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(&flows_path, e);
    writeln!(w, "{}", FLOWS_HEADER.join(",")).map_err(io)?;
    let mut order: Vec<&FlowRecord> = table.records.iter().collect();
    order.sort_by_key(|r| (r.supplier, r.user));
    for r in order {
        let (sc, ss, uc, us) = table.record_codes(r);
        writeln!(w, "{sc},{ss},{uc},{us},{}", r.value).map_err(io)?;
    }
    w.flush().map_err(io)?;

    let file = File::create(&fu_path).map_err(|e| Error::io(&fu_path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(&fu_path, e);
    writeln!(w, "{}", FINAL_USE_HEADER.join(",")).map_err(io)?;
    for (k, f) in table.final_use.iter().enumerate() {
        writeln!(w, "{},{},{}", index.country_code(k), index.sector_code(k), f).map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok((flows_path, fu_path))
}
