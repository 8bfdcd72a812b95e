//! Delimited-text tables and atomic file output.
//!
//! Tables are comma-separated with a `# config-hash: <hex>` first line and
//! a header row. Outputs are written to a temporary file in the target
//! directory and renamed into place only after every output of a command
//! is ready.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use mfuq_core::predict::MarginalXSamples;
use tempfile::NamedTempFile;

use crate::error::{CliError, Result};

/// Training pairs as read from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct Pairs {
    pub dim: usize,
    pub rows: Vec<(Vec<f64>, f64)>,
}

fn open_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(file))
}

fn predictor_header(path: &Path, header: &[&str]) -> Result<usize> {
    let dim = header.iter().take_while(|h| h.starts_with('x')).count();
    let ok = dim >= 1 && header[..dim].iter().enumerate().all(|(i, h)| *h == format!("x{}", i + 1));
    if !ok {
        return Err(CliError::Data(format!(
            "{}: header must start with x1..xM, found {:?}",
            path.display(),
            header
        )));
    }
    Ok(dim)
}

/// Read every data row as numbers, with row/column-addressed errors.
fn read_numeric(path: &Path, reader: &mut csv::Reader<File>, header: &[String]) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            CliError::Data(format!("{}: line {line}: {e}", path.display()))
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row = record
            .iter()
            .enumerate()
            .map(|(c, field)| {
                field.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    CliError::Data(format!(
                        "{}: line {line}, column {} ('{}'): '{field}' is not a finite number",
                        path.display(),
                        c + 1,
                        header[c]
                    ))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn header_of(path: &Path, reader: &mut csv::Reader<File>) -> Result<Vec<String>> {
    let h = reader.headers().map_err(|e| CliError::Data(format!("{}: header: {e}", path.display())))?;
    Ok(h.iter().map(str::to_string).collect())
}

/// Columns `x1..xM, y`.
pub fn read_pairs(path: &Path) -> Result<Pairs> {
    let mut reader = open_reader(path)?;
    let header = header_of(path, &mut reader)?;
    let names: Vec<&str> = header.iter().map(String::as_str).collect();
    let dim = predictor_header(path, &names)?;
    if names.len() != dim + 1 || names[dim] != "y" {
        return Err(CliError::Data(format!("{}: header must be x1..xM,y, found {names:?}", path.display())));
    }
    let rows = read_numeric(path, &mut reader, &header)?;
    Ok(Pairs { dim, rows: rows.into_iter().map(|mut r| (r.drain(..dim).collect(), r[0])).collect() })
}

/// Columns `x1..xM` with an optional trailing `weight`.
pub fn read_pi_x(path: &Path) -> Result<MarginalXSamples> {
    let mut reader = open_reader(path)?;
    let header = header_of(path, &mut reader)?;
    let names: Vec<&str> = header.iter().map(String::as_str).collect();
    let dim = predictor_header(path, &names)?;
    let weighted = match &names[dim..] {
        [] => false,
        ["weight"] => true,
        other => {
            return Err(CliError::Data(format!(
                "{}: unexpected columns {other:?} after x1..x{dim}",
                path.display()
            )))
        }
    };
    let rows = read_numeric(path, &mut reader, &header)?;
    if rows.is_empty() {
        return Err(CliError::Data(format!("{}: no samples", path.display())));
    }
    if weighted {
        let (points, weights) = rows.into_iter().map(|mut r| (r.drain(..dim).collect(), r[0])).unzip();
        Ok(MarginalXSamples::with_weights(points, weights)?)
    } else {
        Ok(MarginalXSamples::new(rows)?)
    }
}

/// A rectangular table with a header.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self, config_hash: &str) -> Vec<u8> {
        let mut out = format!("# config-hash: {config_hash}\n").into_bytes();
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.flush().expect("in-memory flush");
        drop(w);
        out
    }
}

/// Shortest round-trip decimal text; scientific notation for very small or
/// very large magnitudes.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Level `0.01` → `q01`, `0.5` → `q50`, `0.001` → `q0.1`.
pub fn level_name(level: f64) -> String {
    let pct = level * 100.0;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("q{:02}", pct.round() as u64)
    } else {
        format!("q{}", num(pct))
    }
}

/// Outputs of one command, committed together.
#[derive(Default)]
pub struct Staged {
    files: Vec<(NamedTempFile, PathBuf)>,
}

impl Staged {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        let dir = match path.parent() {
            Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
            _ => PathBuf::from("."),
        };
        let io_err = |e: std::io::Error| CliError::Data(format!("{}: {e}", path.display()));
        let mut tmp = NamedTempFile::new_in(&dir).map_err(io_err)?;
        tmp.write_all(bytes).map_err(io_err)?;
        tmp.flush().map_err(io_err)?;
        self.files.push((tmp, path.to_path_buf()));
        Ok(())
    }

    pub fn commit(self) -> Result<()> {
        for (tmp, path) in self.files {
            tmp.persist(&path).map_err(|e| CliError::Data(format!("{}: {}", path.display(), e.error)))?;
        }
        Ok(())
    }
}

/// Sidecar path next to an output: `<file>.provenance.toml`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".provenance.toml");
    path.with_file_name(name)
}

/// Path with a suffix appended to the file name.
pub fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}
