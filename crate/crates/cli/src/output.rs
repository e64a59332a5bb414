//! Column-ordered tables rendered as CSV or JSON with 6 significant digits.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde_json::{Map, Number, Value};
use sparsity_roofline::report::{fmt_sig6, round_sig6};

#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Text(String),
    Int(u64),
    Float(f64),
    Empty,
}

impl From<&str> for Field {
    fn from(s: &str) -> Self {
        Field::Text(s.to_string())
    }
}

impl From<String> for Field {
    fn from(s: String) -> Self {
        Field::Text(s)
    }
}

impl From<u64> for Field {
    fn from(v: u64) -> Self {
        Field::Int(v)
    }
}

impl From<usize> for Field {
    fn from(v: usize) -> Self {
        Field::Int(v as u64)
    }
}

impl From<f64> for Field {
    fn from(v: f64) -> Self {
        Field::Float(v)
    }
}

impl<T: Into<Field>> From<Option<T>> for Field {
    fn from(v: Option<T>) -> Self {
        v.map_or(Field::Empty, Into::into)
    }
}

impl Field {
    fn csv(&self) -> String {
        match self {
            Field::Text(s) => s.clone(),
            Field::Int(v) => v.to_string(),
            Field::Float(v) => fmt_sig6(*v),
            Field::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Field::Text(s) => Value::String(s.clone()),
            Field::Int(v) => Value::Number((*v).into()),
            Field::Float(v) => Number::from_f64(round_sig6(*v)).map_or(Value::Null, Value::Number),
            Field::Empty => Value::Null,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    headers: Vec<&'static str>,
    rows: Vec<Vec<Field>>,
}

impl Table {
    pub fn new(headers: &[&'static str]) -> Self {
        Self {
            headers: headers.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Field>) {
        assert_eq!(row.len(), self.headers.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> anyhow::Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.headers)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Field::csv))?;
        }
        Ok(w.into_inner().map_err(|e| e.into_error())?)
    }

    /// An array of objects; keys come out sorted, which keeps the bytes stable.
    pub fn to_json(&self) -> anyhow::Result<Vec<u8>> {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let obj: Map<String, Value> = self
                    .headers
                    .iter()
                    .zip(row)
                    .map(|(h, f)| (h.to_string(), f.json()))
                    .collect();
                Value::Object(obj)
            })
            .collect();
        let mut buf = serde_json::to_vec_pretty(&rows)?;
        buf.push(b'\n');
        Ok(buf)
    }
}

/// Writes `bytes` to `dir/name`, creating `dir` if needed.
pub fn write_output(dir: &Path, name: &str, bytes: &[u8]) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    log::info!("wrote {}", path.display());
    Ok(path)
}
