//! Output layout, CSV writing and the run manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ppgage_core::nn::LossKind;
use ppgage_core::numfmt::fmt_sig;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};

/// File names inside the output directory. Per-model artifacts carry the
/// loss name so dist and mae runs can share one directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
    pub loss: LossKind,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>, loss: LossKind) -> Self {
        Self { root: root.into(), loss }
    }

    pub fn cohort(&self) -> PathBuf {
        self.root.join("cohort.jsonl")
    }
    pub fn split(&self) -> PathBuf {
        self.root.join("split.csv")
    }
    pub fn checkpoint(&self) -> PathBuf {
        self.root.join(format!("checkpoint_{}.bin", self.loss))
    }
    pub fn train_log(&self) -> PathBuf {
        self.root.join(format!("train_{}.csv", self.loss))
    }
    pub fn predictions(&self) -> PathBuf {
        self.root.join(format!("predictions_{}.csv", self.loss))
    }
    pub fn metrics(&self) -> PathBuf {
        self.root.join(format!("metrics_{}.csv", self.loss))
    }
    pub fn analysis_dir(&self) -> PathBuf {
        self.root.join(format!("analysis_{}", self.loss))
    }
    pub fn analysis(&self, name: &str) -> PathBuf {
        self.analysis_dir().join(name)
    }
    pub fn saliency(&self) -> PathBuf {
        self.root.join(format!("saliency_{}.csv", self.loss))
    }
    pub fn saliency_peaks(&self) -> PathBuf {
        self.root.join(format!("saliency_peaks_{}.csv", self.loss))
    }
    pub fn report(&self) -> PathBuf {
        self.root.join(format!("report_{}.txt", self.loss))
    }
    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    /// Path relative to the output directory, with `/` separators.
    pub fn relative(&self, path: &Path) -> String {
        let rel = path.strip_prefix(&self.root).unwrap_or(path);
        rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
    }
}

pub fn require(path: &Path, stage: &'static str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingArtifact { path: path.to_path_buf(), stage })
    }
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(io_err(path))
}

/// One CSV cell. Numbers go through the fixed-precision formatter.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}
impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}
impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}
impl From<u8> for Cell {
    fn from(v: u8) -> Self {
        Cell::Int(v.into())
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
impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => fmt_sig(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

/// Builds a CSV table in memory, then writes it in one go.
pub struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(io_err(path))
    }
}

/// Reads a CSV file into header-keyed rows.
pub fn read_csv(path: &Path) -> Result<Vec<BTreeMap<String, String>>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    reader
        .records()
        .map(|r| {
            let r = r.map_err(|e| csv_err(path, e))?;
            Ok(header.iter().zip(r.iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect())
        })
        .collect()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Format { path: path.to_path_buf(), message: e.to_string() }
}

pub fn field<'a>(row: &'a BTreeMap<String, String>, name: &str, path: &Path) -> Result<&'a str> {
    row.get(name)
        .map(String::as_str)
        .ok_or_else(|| Error::Format { path: path.to_path_buf(), message: format!("missing column {name}") })
}

pub fn parse_field<T: std::str::FromStr>(row: &BTreeMap<String, String>, name: &str, path: &Path) -> Result<T> {
    let raw = field(row, name, path)?;
    raw.parse().map_err(|_| Error::Format { path: path.to_path_buf(), message: format!("bad {name} value '{raw}'") })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub config_hash: String,
    /// Paths relative to the output directory.
    pub artifacts: Vec<String>,
    pub wall_time_seconds: f64,
}

/// Index of what each stage produced. Rewritten after every stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub stages: BTreeMap<String, StageRecord>,
}

impl RunManifest {
    pub fn load_or_default(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Ok(Self::default());
        }
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| Error::Format { path: path.to_path_buf(), message: e.to_string() })
    }

    pub fn record(
        layout: &Layout,
        stage: &'static str,
        config_hash: &str,
        artifacts: &[PathBuf],
        seconds: f64,
    ) -> Result<()> {
        for a in artifacts {
            require(a, stage)?;
        }
        let path = layout.manifest();
        let mut m = Self::load_or_default(&path)?;
        m.tool_version = env!("CARGO_PKG_VERSION").to_string();
        m.config_hash = config_hash.to_string();
        // Per-model stages are keyed by loss so dist and mae runs coexist.
        let key = if stage == "generate" { stage.to_string() } else { format!("{stage}_{}", layout.loss) };
        m.stages.insert(
            key,
            StageRecord {
                config_hash: config_hash.to_string(),
                artifacts: artifacts.iter().map(|p| layout.relative(p)).collect(),
                wall_time_seconds: seconds,
            },
        );
        let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(io_err(&path))
    }
}
