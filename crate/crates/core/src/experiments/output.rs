//! Result tables (CSV) and run metadata (JSON).

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use super::ScalingFit;
use crate::error::Result;
use crate::io::write_atomic;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    F(f64),
    I(i64),
    S(String),
    B(bool),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(x) => format!("{x:e}"),
            Cell::I(i) => i.to_string(),
            Cell::S(s) => s.clone(),
            Cell::B(b) => b.to_string(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::F(x) => Some(*x),
            Cell::I(i) => Some(*i as f64),
            _ => None,
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::F(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::I(x as i64)
    }
}

impl From<i64> for Cell {
    fn from(x: i64) -> Self {
        Cell::I(x)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::B(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::S(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::S(x)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Table { name: name.to_string(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width in table {}", self.name);
        self.rows.push(row);
    }

    /// Numeric column by name.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.iter().position(|h| h == name)?;
        self.rows.iter().map(|r| r[j].as_f64()).collect()
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::render))?;
        }
        w.into_inner().map_err(|e| crate::Error::Io(e.into_error()))
    }
}

/// Long-form table of fit points plus a table of fitted coefficients.
pub fn fit_tables(fits: &[(String, &ScalingFit)]) -> (Table, Table) {
    let mut pts = Table::new("fit_points", &["fit", "x", "y"]);
    let mut coef = Table::new("fits", &["fit", "slope", "intercept", "r2", "points"]);
    for (name, f) in fits {
        for (x, y) in f.xs.iter().zip(&f.ys) {
            pts.push(vec![name.as_str().into(), (*x).into(), (*y).into()]);
        }
        coef.push(vec![name.as_str().into(), f.slope.into(), f.intercept.into(), f.r2.into(), f.xs.len().into()]);
    }
    (pts, coef)
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub scenario: String,
    pub parameters: Value,
    pub seed: u64,
    /// `key=value` overrides as given on the command line
    pub overrides: Vec<String>,
    pub tables: Vec<Table>,
    pub summary: Value,
}

impl RunOutput {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn metadata(&self) -> Value {
        json!({
            "scenario": self.scenario,
            "version": concat!("spectral-lab ", env!("CARGO_PKG_VERSION")),
            "seed": self.seed,
            "parameters": self.parameters,
            "overrides": self.overrides,
            "tables": self.tables.iter().map(|t| format!("{}.csv", t.name)).collect::<Vec<_>>(),
            "summary": self.summary,
        })
    }

    /// `<dir>/<scenario>/<table>.csv` and `metadata.json`, each written atomically;
    /// the wall time goes to `timing.json` so the rest stays byte-identical across runs.
    pub fn write(&self, dir: &Path, wall_seconds: Option<f64>) -> Result<Vec<PathBuf>> {
        let root = dir.join(&self.scenario);
        let mut written = Vec::new();
        for t in &self.tables {
            let p = root.join(format!("{}.csv", t.name));
            write_atomic(&p, &t.to_csv()?)?;
            written.push(p);
        }
        let p = root.join("metadata.json");
        let mut bytes = serde_json::to_vec_pretty(&self.metadata())?;
        bytes.push(b'\n');
        write_atomic(&p, &bytes)?;
        written.push(p);
        if let Some(w) = wall_seconds {
            let p = root.join("timing.json");
            write_atomic(&p, serde_json::to_string(&json!({ "wall_seconds": w }))?.as_bytes())?;
            written.push(p);
        }
        Ok(written)
    }
}
