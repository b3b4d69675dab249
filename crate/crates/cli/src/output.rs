//! Tabular datasets: CSV with a `#` header block, or a JSON mirror with the
//! same field names. Files are written to a temporary sibling and renamed.

use std::io::Write;
use std::path::Path;

use serde::ser::{SerializeMap, SerializeStruct};
use serde::{Serialize, Serializer};

use crate::config::Format;
use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Bool(bool),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => v.to_string(),
            Cell::Int(v) => v.to_string(),
            Cell::Bool(v) => v.to_string(),
            Cell::Text(v) => v.clone(),
        }
    }
}

impl Serialize for Cell {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            // JSON has no NaN/inf; keep them as strings rather than nulls
            Cell::Num(v) if !v.is_finite() => s.serialize_str(&v.to_string()),
            Cell::Num(v) => s.serialize_f64(*v),
            Cell::Int(v) => s.serialize_u64(*v),
            Cell::Bool(v) => s.serialize_bool(*v),
            Cell::Text(v) => s.serialize_str(v),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// A dataset with ordered columns and free-form `key: value` metadata.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub metadata: Vec<(String, String)>,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self {
            metadata: vec![("schema_version".into(), SCHEMA_VERSION.to_string())],
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn meta(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        self.metadata.push((key.into(), value.to_string()));
        self
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self, format: Format) -> Result<Vec<u8>, CliError> {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => {
                let mut buf = serde_json::to_vec_pretty(self)?;
                buf.push(b'\n');
                Ok(buf)
            }
        }
    }

    fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut buf = Vec::new();
        for (k, v) in &self.metadata {
            writeln!(buf, "# {k}: {}", v.replace('\n', " "))?;
        }
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.into_inner().map_err(|e| CliError::Io(e.into_error()))
    }
}

struct Row<'a>(&'a [&'static str], &'a [Cell]);

impl Serialize for Row<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in self.0.iter().zip(self.1) {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

struct Metadata<'a>(&'a [(String, String)]);

impl Serialize for Metadata<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

impl Serialize for Table {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Row> = self.rows.iter().map(|r| Row(&self.columns, r)).collect();
        let mut st = s.serialize_struct("Table", 3)?;
        st.serialize_field("metadata", &Metadata(&self.metadata))?;
        st.serialize_field("columns", &self.columns)?;
        st.serialize_field("rows", &rows)?;
        st.end()
    }
}

/// Writes `bytes` to `path` atomically, or to stdout when no path is given.
pub fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(path) => write_atomic(path, bytes),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
    log::info!("wrote {}", path.display());
    Ok(())
}
