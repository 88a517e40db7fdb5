use crate::CliError;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

/// Columns excluded from reproducibility comparisons.
pub const TIMING_COLUMNS: [&str; 1] = ["wall_ms"];

/// Float rendering with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// A CSV artifact held as text cells.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(
            row.len(),
            self.header.len(),
            "row width does not match the header"
        );
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        fs::write(path, self.to_csv()).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }

    /// The table without timing columns.
    pub fn deterministic(&self) -> Table {
        let keep: Vec<usize> = (0..self.header.len())
            .filter(|&j| !TIMING_COLUMNS.contains(&self.header[j].as_str()))
            .collect();
        Table {
            header: keep.iter().map(|&j| self.header[j].clone()).collect(),
            rows: self
                .rows
                .iter()
                .map(|r| keep.iter().map(|&j| r[j].clone()).collect())
                .collect(),
        }
    }
}

/// Parses a CSV artifact with a header row and rectangular records.
pub fn parse_csv(text: &str) -> Result<Table, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Artifact(format!("header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(CliError::Artifact("missing header row".into()));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Artifact(format!("record {}: {e}", i + 1)))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok(Table { header, rows })
}

pub fn read_table(path: &Path) -> Result<Table, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|_| CliError::MissingArtifact(path.display().to_string()))?;
    parse_csv(&text)
}

/// Run record written next to the artifacts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub study: String,
    pub seed: u64,
    pub config: serde_json::Value,
    /// CSV artifacts, relative to the output directory.
    pub artifacts: Vec<String>,
    /// `pass`, `fail` or `error`.
    pub status: String,
    pub failures: Vec<String>,
    pub wall_ms: f64,
}

pub const MANIFEST: &str = "manifest.json";

impl Manifest {
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join(MANIFEST);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }

    pub fn read(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path)
            .map_err(|_| CliError::MissingArtifact(path.display().to_string()))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Artifact(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, 6.02214076e23, -2.5e-300] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
    }

    #[test]
    fn table_round_trip_and_timing_strip() {
        let mut t = Table::new(&["d", "wall_ms", "x"]);
        t.push(vec!["2".into(), "13.5".into(), "a,b".into()]);
        let back = parse_csv(&t.to_csv()).unwrap();
        assert_eq!(back, t);
        let det = back.deterministic();
        assert_eq!(det.header, vec!["d", "x"]);
        assert_eq!(det.rows[0], vec!["2", "a,b"]);
    }

    #[test]
    fn ragged_rows_are_rejected() {
        assert!(parse_csv("a,b\n1,2\n3\n").is_err());
        assert!(parse_csv("").is_err());
    }
}
