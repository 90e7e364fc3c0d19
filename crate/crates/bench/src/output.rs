//! Result tables and their CSV and JSON encodings.
//!
//! CSV output starts with `# key = value` comment lines carrying the run's
//! metadata, followed by a header row and the data rows. Values in the
//! comments are JSON literals. Floats use the shortest representation that
//! parses back to the same `f64`; missing values are `NaN`.
//!
//! JSON output is a single object:
//!
//! ```text
//! { "metadata": { ... }, "columns": ["a", "b"], "rows": [[1, 0.5], ...] }
//! ```
//!
//! Every row has one entry per column; entries are numbers, strings, or
//! `null` for missing values.

use std::io::Write;
use std::path::Path;

use serde_json::{Map, Value};

use crate::config::Format;
use crate::error::{BenchError, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(u64),
    Float(f64),
    Text(String),
}

impl Cell {
    fn to_csv_field(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Int(v) => Value::from(*v),
            Cell::Float(v) => serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number),
            Cell::Text(s) => Value::from(s.as_str()),
        }
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub metadata: Map<String, Value>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            metadata: Map::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    /// Merges the entries of a JSON object into the metadata.
    pub fn with_metadata(mut self, meta: Value) -> Self {
        if let Value::Object(map) = meta {
            self.metadata.extend(map);
        }
        self
    }

    pub fn meta(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.metadata.insert(key.to_string(), value.into());
        self
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(BenchError::Serialize(format!(
                "row has {} cells for {} columns",
                row.len(),
                self.columns.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            out.push_str(&format!("# {k} = {v}\n"));
        }
        let mut body = Vec::new();
        {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(&mut body);
            let ser = |e: csv::Error| BenchError::Serialize(e.to_string());
            w.write_record(&self.columns).map_err(ser)?;
            for row in &self.rows {
                w.write_record(row.iter().map(Cell::to_csv_field)).map_err(ser)?;
            }
            w.flush().map_err(|e| BenchError::Serialize(e.to_string()))?;
        }
        out.push_str(std::str::from_utf8(&body).map_err(|e| BenchError::Serialize(e.to_string()))?);
        Ok(out)
    }

    pub fn to_json_value(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| Value::Array(r.iter().map(Cell::to_json).collect()))
            .collect();
        serde_json::json!({
            "metadata": Value::Object(self.metadata.clone()),
            "columns": self.columns,
            "rows": rows,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.to_json_value())
            .map_err(|e| BenchError::Serialize(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        }
    }
}

/// Writes the table to `path`, or to standard output when `path` is `None`.
pub fn write_results(table: &Table, path: Option<&Path>, format: Format) -> Result<()> {
    let text = table.render(format)?;
    match path {
        Some(p) => std::fs::write(p, text).map_err(|source| BenchError::Io {
            path: p.to_path_buf(),
            source,
        }),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|source| BenchError::Io {
                path: "<stdout>".into(),
                source,
            }),
    }
}

/// A CSV table read back as text.
#[derive(Clone, Debug, PartialEq)]
pub struct ParsedTable {
    /// `(key, value)` pairs from the comment lines, in file order.
    pub metadata: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl ParsedTable {
    pub fn column(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| BenchError::Config(format!("no column {name:?}")))
    }

    pub fn f64_column(&self, name: &str) -> Result<Vec<f64>> {
        let c = self.column(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(r, row)| {
                row[c].parse().map_err(|_| BenchError::Parse {
                    row: r + 1,
                    col: c + 1,
                    text: row[c].clone(),
                })
            })
            .collect()
    }

    pub fn metadata_value(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

pub fn parse_csv(text: &str) -> Result<ParsedTable> {
    let metadata = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .filter_map(|l| {
            let (k, v) = l.trim_start_matches('#').split_once('=')?;
            Some((k.trim().to_string(), v.trim().to_string()))
        })
        .collect();
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let ser = |e: csv::Error| BenchError::Serialize(e.to_string());
    let columns = reader.headers().map_err(ser)?.iter().map(str::to_string).collect();
    let rows = reader
        .records()
        .map(|r| r.map(|r| r.iter().map(str::to_string).collect()).map_err(ser))
        .collect::<Result<_>>()?;
    Ok(ParsedTable {
        metadata,
        columns,
        rows,
    })
}

/// Checks a JSON document against the documented result schema.
pub fn validate_json(doc: &Value) -> Result<()> {
    let bad = |msg: &str| Err(BenchError::Serialize(format!("schema: {msg}")));
    let Value::Object(top) = doc else {
        return bad("top level must be an object");
    };
    let mut keys: Vec<&str> = top.keys().map(String::as_str).collect();
    keys.sort_unstable();
    if keys != ["columns", "metadata", "rows"] {
        return bad("expected exactly the keys metadata, columns, rows");
    }
    if !top["metadata"].is_object() {
        return bad("metadata must be an object");
    }
    let Some(columns) = top["columns"].as_array() else {
        return bad("columns must be an array");
    };
    let mut names = Vec::new();
    for c in columns {
        match c.as_str() {
            Some(s) if !names.contains(&s) => names.push(s),
            _ => return bad("columns must be distinct strings"),
        }
    }
    let Some(rows) = top["rows"].as_array() else {
        return bad("rows must be an array");
    };
    for row in rows {
        match row.as_array() {
            Some(cells) if cells.len() == names.len() => {
                if !cells
                    .iter()
                    .all(|c| c.is_number() || c.is_string() || c.is_null())
                {
                    return bad("cells must be numbers, strings or null");
                }
            }
            _ => return bad("each row must be an array with one cell per column"),
        }
    }
    Ok(())
}
