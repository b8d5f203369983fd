//! Typed result tables with CSV and JSON writers.

use std::io::Write;

use serde::ser::{SerializeMap, SerializeSeq};
use serde::{Serialize, Serializer};

use crate::error::{NtkError, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Leading columns present in every table.
pub const KEY_COLUMNS: [&str; 3] = ["cell", "rep", "filtered"];

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    Bool(bool),
    Text(String),
}

impl Value {
    /// Shortest round-trip text; never empty.
    pub fn render(&self) -> String {
        match self {
            Value::Int(v) => v.to_string(),
            Value::Float(v) => format!("{v:?}"),
            Value::Bool(v) => v.to_string(),
            Value::Text(s) if s.is_empty() => "-".into(),
            Value::Text(s) => s.clone(),
        }
    }
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Int(v as i64)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Value::Int(v) => s.serialize_i64(*v),
            // JSON has no NaN/inf; keep the value readable instead of null
            Value::Float(v) if !v.is_finite() => s.serialize_str(&format!("{v:?}")),
            Value::Float(v) => s.serialize_f64(*v),
            Value::Bool(v) => s.serialize_bool(*v),
            Value::Text(v) => s.serialize_str(v),
        }
    }
}

/// One output row: the `(cell, rep, filtered)` key plus the measured columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub cell: usize,
    pub rep: usize,
    /// Training did not reach the loss threshold.
    pub filtered: bool,
    pub values: Vec<Value>,
}

impl Row {
    pub fn new(cell: usize, rep: usize, values: Vec<Value>) -> Self {
        Row { cell, rep, filtered: false, values }
    }

    pub fn filtered(mut self, filtered: bool) -> Self {
        self.filtered = filtered;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub schema: String,
    /// Measured columns, after [`KEY_COLUMNS`].
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
}

impl Table {
    pub fn new(schema: &str, columns: &[&str]) -> Self {
        Table { schema: schema.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Row) -> Result<()> {
        if row.values.len() != self.columns.len() {
            return Err(NtkError::DimensionMismatch { expected: self.columns.len(), got: row.values.len() });
        }
        self.rows.push(row);
        Ok(())
    }

    /// Index of a measured column.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// All values of a numeric column, in row order.
    pub fn floats(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.column(name)?;
        self.rows
            .iter()
            .map(|r| match r.values[k] {
                Value::Float(v) => Some(v),
                Value::Int(v) => Some(v as f64),
                _ => None,
            })
            .collect()
    }

    pub fn header(&self) -> Vec<String> {
        KEY_COLUMNS.iter().map(|s| s.to_string()).chain(self.columns.iter().cloned()).collect()
    }

    /// `# schema=<id> version=1`, the header line, then one line per row.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# schema={} version={SCHEMA_VERSION}", self.schema)?;
        let mut csv = csv::Writer::from_writer(w);
        let io = |e: csv::Error| NtkError::Io(std::io::Error::other(e));
        csv.write_record(self.header()).map_err(io)?;
        for r in &self.rows {
            let key = [r.cell.to_string(), r.rep.to_string(), r.filtered.to_string()];
            csv.write_record(key.into_iter().chain(r.values.iter().map(Value::render))).map_err(io)?;
        }
        csv.flush()?;
        Ok(())
    }

    /// An array of objects with keys in header order.
    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self).map_err(|e| NtkError::Io(std::io::Error::other(e)))
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| NtkError::Io(std::io::Error::other(e)))
    }
}

struct RowView<'a> {
    columns: &'a [String],
    row: &'a Row,
}

impl Serialize for RowView<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(KEY_COLUMNS.len() + self.columns.len()))?;
        m.serialize_entry("cell", &self.row.cell)?;
        m.serialize_entry("rep", &self.row.rep)?;
        m.serialize_entry("filtered", &self.row.filtered)?;
        for (c, v) in self.columns.iter().zip(&self.row.values) {
            m.serialize_entry(c, v)?;
        }
        m.end()
    }
}

impl Serialize for Table {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.rows.len()))?;
        for row in &self.rows {
            seq.serialize_element(&RowView { columns: &self.columns, row })?;
        }
        seq.end()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Table {
        let mut t = Table::new("demo", &["r", "name", "norm"]);
        t.push(Row::new(0, 0, vec![1usize.into(), "a,b".into(), 0.1.into()])).unwrap();
        t.push(Row::new(0, 1, vec![2usize.into(), "".into(), f64::NAN.into()]).filtered(true)).unwrap();
        t
    }

    #[test]
    fn csv_layout() {
        let s = sample().to_csv_string().unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "# schema=demo version=1");
        assert_eq!(lines[1], "cell,rep,filtered,r,name,norm");
        assert_eq!(lines[2], "0,0,false,1,\"a,b\",0.1");
        assert_eq!(lines[3], "0,1,true,2,-,NaN");
        assert!(lines[2..].iter().all(|l| !l.contains(",,") && !l.ends_with(',')));
    }

    #[test]
    fn json_keeps_column_order() {
        let mut buf = Vec::new();
        sample().write_json(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let (c, f, n) = (s.find("\"cell\"").unwrap(), s.find("\"filtered\"").unwrap(), s.find("\"norm\"").unwrap());
        assert!(c < f && f < n);
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v.as_array().unwrap().len(), 2);
        assert_eq!(v[1]["filtered"], serde_json::Value::Bool(true));
        assert_eq!(v[1]["norm"], serde_json::Value::String("NaN".into()));
    }

    #[test]
    fn ragged_row_rejected() {
        let mut t = Table::new("demo", &["a"]);
        assert!(t.push(Row::new(0, 0, vec![])).is_err());
    }
}
