//! Comma-separated tables with a `#` preamble, and run manifests.
//!
//! Every float is written with 17 significant digits so tables round-trip
//! exactly and compare byte-for-byte between identical runs.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Formats a float with 17 significant digits; `nan` for missing values.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.16e}")
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), fmt_f64)
}

/// A table under construction. Cells are already formatted.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub preamble: Vec<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            preamble: Vec::new(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn note(mut self, line: impl Into<String>) -> Self {
        self.preamble.push(line.into());
        self
    }

    pub fn push_floats(&mut self, row: &[f64]) {
        self.rows.push(row.iter().map(|v| fmt_f64(*v)).collect());
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for line in &self.preamble {
            s.push_str("# ");
            s.push_str(line);
            s.push('\n');
        }
        s.push_str(&self.header.join(","));
        s.push('\n');
        for row in &self.rows {
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.render())
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Parses a table written by [`Table::write`] back into its numeric rows.
pub fn read_table(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines
        .next()
        .ok_or_else(|| Error::Invalid("table has no header".into()))?
        .split(',')
        .map(str::to_string)
        .collect::<Vec<_>>();
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let row = line
            .split(',')
            .map(|c| c.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                line: k + 2,
                reason: e.to_string(),
            })?;
        if row.len() != header.len() {
            return Err(Error::Parse {
                line: k + 2,
                reason: format!("{} cells for {} columns", row.len(), header.len()),
            });
        }
        rows.push(row);
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_keep_seventeen_digits() {
        let v = 0.1 + 0.2;
        let s = fmt_f64(v);
        assert_eq!(s, "3.0000000000000004e-1");
        assert_eq!(s.parse::<f64>().unwrap(), v);
        assert_eq!(fmt_f64(f64::NAN), "nan");
        assert_eq!(fmt_opt(None), "nan");
    }

    #[test]
    fn table_round_trip() {
        let mut t = Table::new(&["z", "j"]).note("depth profile");
        t.push_floats(&[0.5, 1.0 / 3.0]);
        t.push_floats(&[1.5, f64::NAN]);
        let text = t.render();
        assert!(text.starts_with("# depth profile\nz,j\n"));
        let (header, rows) = read_table(&text).unwrap();
        assert_eq!(header, vec!["z", "j"]);
        assert_eq!(rows[0], vec![0.5, 1.0 / 3.0]);
        assert!(rows[1][1].is_nan());
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("missing").join("t.csv");
        assert!(matches!(Table::new(&["a"]).write(&path), Err(Error::Io { .. })));
    }
}
