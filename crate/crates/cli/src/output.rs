//! CSV tables and atomic file writes.
//!
//! Numbers are written with Rust's `Display`, which is the shortest decimal
//! string that parses back to the same `f64`. A table is rendered fully in
//! memory and lands on disk through a same-directory temp file and rename,
//! so a reader never observes a partial file and a failed run leaves none.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::CliError;

/// One CSV cell.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    /// Written as an empty field.
    Missing,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Float)
    }
}

macro_rules! int_cell {
    ($($t:ty),*) => {$(
        impl From<$t> for Cell {
            fn from(v: $t) -> Self {
                Cell::Int(v as i64)
            }
        }
    )*};
}
int_cell!(i8, i32, i64, u32, usize);

#[derive(Clone, Debug)]
pub struct CsvTable {
    header: Vec<&'static str>,
    body: String,
    rows: usize,
}

impl CsvTable {
    pub fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            body: String::new(),
            rows: 0,
        }
    }

    /// Appends a row; panics when the width differs from the header.
    pub fn push(&mut self, row: impl IntoIterator<Item = Cell>) {
        let mut width = 0;
        for (k, cell) in row.into_iter().enumerate() {
            if k > 0 {
                self.body.push(',');
            }
            match cell {
                Cell::Int(v) => write!(self.body, "{v}").unwrap(),
                Cell::Float(v) => write!(self.body, "{v}").unwrap(),
                Cell::Missing => {}
            }
            width += 1;
        }
        assert_eq!(width, self.header.len(), "row width differs from header");
        self.body.push('\n');
        self.rows += 1;
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn render(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        s.push_str(&self.body);
        s
    }
}

/// Row builder: `row![a, b, c]`.
#[macro_export]
macro_rules! row {
    ($($x:expr),* $(,)?) => {
        [$($crate::output::Cell::from($x)),*]
    };
}

/// Writes `bytes` to `path` by temp file and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(CliError::io(dir))?;
    tmp.write_all(bytes).map_err(CliError::io(path))?;
    tmp.as_file().sync_all().map_err(CliError::io(path))?;
    tmp.persist(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Parsed CSV: header and rows of raw fields.
#[derive(Clone, Debug)]
pub struct CsvData {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvData {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| CliError::Config(format!("{} is empty", path.display())))?
            .split(',')
            .map(str::to_owned)
            .collect();
        let rows = lines.map(|l| l.split(',').map(str::to_owned).collect()).collect();
        Ok(Self { header, rows })
    }

    /// Column `name` parsed as `f64`.
    pub fn column(&self, name: &str) -> Result<Vec<f64>, CliError> {
        let k = self
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Config(format!("missing column {name:?}")))?;
        self.rows
            .iter()
            .map(|r| {
                r.get(k)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| CliError::Config(format!("bad value in column {name:?}")))
            })
            .collect()
    }
}
