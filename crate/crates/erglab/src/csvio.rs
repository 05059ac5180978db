//! Schema-versioned CSV artifacts.
//!
//! Every file starts with the comment line `# erglab-schema-v1 <command>`
//! followed by a header row. Values are numeric, '.' decimal, UTF-8,
//! comma-separated; floats are written in shortest round-trip form so that
//! identical runs produce byte-identical files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

pub const SCHEMA_PREFIX: &str = "# erglab-schema-v1";

#[derive(Debug, Error)]
pub enum CsvError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("missing schema line")]
    MissingSchema,
    #[error("missing header row")]
    MissingHeader,
    #[error("row {row} has {got} fields, expected {want}")]
    RaggedRow { row: usize, got: usize, want: usize },
    #[error("unparseable numeric field {0:?}")]
    BadNumber(String),
}

/// A parsed erglab CSV file.
#[derive(Debug, Clone)]
pub struct CsvTable {
    pub command: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn write_csv(
    path: &Path,
    command: &str,
    columns: &[&str],
    rows: &[Vec<f64>],
) -> Result<(), CsvError> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{SCHEMA_PREFIX} {command}")?;
    writeln!(out, "{}", columns.join(","))?;
    for row in rows {
        let fields: Vec<String> = row.iter().map(|v| format_value(*v)).collect();
        writeln!(out, "{}", fields.join(","))?;
    }
    out.flush()?;
    Ok(())
}

fn format_value(v: f64) -> String {
    format!("{v}")
}

pub fn read_csv(path: &Path) -> Result<CsvTable, CsvError> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();

    let schema = lines.next().ok_or(CsvError::MissingSchema)??;
    let command = schema
        .strip_prefix(SCHEMA_PREFIX)
        .ok_or(CsvError::MissingSchema)?
        .trim()
        .to_string();

    let header = lines.next().ok_or(CsvError::MissingHeader)??;
    let columns: Vec<String> = header.split(',').map(|s| s.to_string()).collect();

    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            return Err(CsvError::RaggedRow { row: i + 3, got: fields.len(), want: columns.len() });
        }
        let parsed: Result<Vec<f64>, CsvError> = fields
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| CsvError::BadNumber(f.to_string())))
            .collect();
        rows.push(parsed?);
    }
    Ok(CsvTable { command, columns, rows })
}
