//! CSV input and report output.

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use l0robust::Dataset;
use serde::Serialize;

use crate::error::CliError;

pub const INTERCEPT_NAME: &str = "(intercept)";

/// A parsed input file: the response is the first column.
pub struct Table {
    pub response: String,
    pub regressors: Vec<String>,
    pub data: Dataset,
}

impl Table {
    pub fn coefficient_names(&self) -> Vec<String> {
        std::iter::once(INTERCEPT_NAME.to_string()).chain(self.regressors.iter().cloned()).collect()
    }
}

pub fn read_table(path: &Path) -> Result<Table, CliError> {
    let file = File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    parse_table(file, &path.display().to_string())
}

pub fn parse_table(reader: impl io::Read, source: &str) -> Result<Table, CliError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| CliError::Data(format!("{source}: header: {e}")))?.clone();
    if headers.len() < 2 {
        return Err(CliError::Data(format!(
            "{source}: need a response column and at least one regressor, found {} column(s)",
            headers.len()
        )));
    }
    let mut y = Vec::new();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| CliError::Data(format!("{source}: row {row}: {e}")))?;
        let mut vals = Vec::with_capacity(rec.len());
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                CliError::Data(format!("{source}: row {row}, column {} ({}): cannot parse {field:?} as a number", j + 1, &headers[j]))
            })?;
            if !v.is_finite() {
                return Err(CliError::Data(format!("{source}: row {row}, column {} ({}): value is not finite", j + 1, &headers[j])));
            }
            vals.push(v);
        }
        y.push(vals[0]);
        rows.push(vals[1..].to_vec());
    }
    if y.is_empty() {
        return Err(CliError::Data(format!("{source}: no data rows")));
    }
    let data = Dataset::new(y, &rows, true).map_err(|e| CliError::from_core(source, e))?;
    Ok(Table {
        response: headers[0].to_string(),
        regressors: headers.iter().skip(1).map(str::to_string).collect(),
        data,
    })
}

/// Writes pretty JSON to `path`, or to stdout when absent.
pub fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<(), CliError> {
    let out_err = |e: &dyn std::fmt::Display| CliError::Data(format!("writing report: {e}"));
    match path {
        Some(p) => {
            let f = File::create(p).map_err(|e| out_err(&format!("{}: {e}", p.display())))?;
            let mut w = io::BufWriter::new(f);
            serde_json::to_writer_pretty(&mut w, value).map_err(|e| out_err(&e))?;
            writeln!(w).map_err(|e| out_err(&e))
        }
        None => {
            let mut w = io::stdout().lock();
            serde_json::to_writer_pretty(&mut w, value).map_err(|e| out_err(&e))?;
            writeln!(w).map_err(|e| out_err(&e))
        }
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), CliError> {
    let err = |e: csv::Error| CliError::Data(format!("writing {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for row in rows {
        w.serialize(row).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::Data(format!("writing {}: {e}", path.display())))
}

/// Writes a CSV with an explicit header, for tables that may be empty.
pub fn write_csv_with_header<T: Serialize>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = T>) -> Result<(), CliError> {
    let err = |e: csv::Error| CliError::Data(format!("writing {}: {e}", path.display()));
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(err)?;
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.serialize(row).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::Data(format!("writing {}: {e}", path.display())))
}

/// `dir/report.json` with `tag` gives `dir/report.tag.csv`.
pub fn companion(path: &Path, tag: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
    path.with_file_name(format!("{stem}.{tag}.csv"))
}
