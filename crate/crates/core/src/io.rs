//! File formats: dense CSV matrices, point clouds, factor files with a `{n, r}`
//! sidecar, operator files, and the metadata header stamped on every output.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ambient::Factor;
use crate::error::{Error, Result};
use crate::graph::{AdjacencyOperator, CloudSource, OperatorRule, PointCloud};
use crate::linalg::{matrix_to_rows, rows_to_matrix, SymMatrix};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Seed, config hash and tool version, embedded in every output artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMeta {
    pub seed: Option<u64>,
    pub config_hash: String,
    pub version: String,
}

impl RunMeta {
    /// Hashes `config` (any serializable description of the run).
    pub fn new<T: Serialize>(seed: Option<u64>, config: &T) -> Result<Self> {
        let text = serde_json::to_string(config)?;
        Ok(RunMeta { seed, config_hash: config_hash(&text), version: VERSION.to_string() })
    }

    /// `# `-comment lines for CSV outputs (without the `# ` prefix).
    pub fn header_lines(&self) -> Vec<String> {
        let seed = self.seed.map_or_else(|| "none".to_string(), |s| s.to_string());
        vec![format!("seed={seed},config_hash={},version={}", self.config_hash, self.version)]
    }
}

/// First 16 hex digits of the SHA-256 of `text`.
pub fn config_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Opens `path` for reading; `-` means standard input.
pub fn open_input(path: &Path) -> Result<Box<dyn BufRead>> {
    if path.as_os_str() == "-" {
        Ok(Box::new(BufReader::new(std::io::stdin())))
    } else {
        let f = fs::File::open(path).map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
        Ok(Box::new(BufReader::new(f)))
    }
}

/// Opens `path` for writing; `-` means standard output.
pub fn open_output(path: &Path) -> Result<Box<dyn Write>> {
    if path.as_os_str() == "-" {
        Ok(Box::new(std::io::stdout()))
    } else {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        Ok(Box::new(std::io::BufWriter::new(fs::File::create(path)?)))
    }
}

/// Reads a headerless comma-separated matrix. Blank lines and lines starting
/// with `#` are skipped.
pub fn read_csv_matrix<R: BufRead>(r: R) -> Result<DMatrix<f64>> {
    let mut rows = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: '{}': {e}", lineno + 1, f.trim())))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    rows_to_matrix(&rows)
}

pub fn write_csv_matrix<W: Write>(mut w: W, m: &DMatrix<f64>, meta: Option<&RunMeta>) -> Result<()> {
    if let Some(meta) = meta {
        for l in meta.header_lines() {
            writeln!(w, "# {l}")?;
        }
    }
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn read_points(path: &Path) -> Result<PointCloud> {
    PointCloud::new(read_csv_matrix(open_input(path)?)?, CloudSource::File)
}

pub fn write_points(path: &Path, cloud: &PointCloud, meta: Option<&RunMeta>) -> Result<()> {
    let mut w = open_output(path)?;
    write_csv_matrix(&mut w, cloud.points(), meta)?;
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorShape {
    pub n: usize,
    pub r: usize,
}

/// `y.csv` -> `y.csv.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes the factor as CSV and, for real files, a `{n, r}` sidecar.
pub fn write_factor(path: &Path, y: &Factor, meta: Option<&RunMeta>) -> Result<()> {
    let mut w = open_output(path)?;
    write_csv_matrix(&mut w, y.matrix(), meta)?;
    w.flush()?;
    if path.as_os_str() != "-" {
        let shape = FactorShape { n: y.n(), r: y.r() };
        fs::write(sidecar_path(path), serde_json::to_string(&shape)? + "\n")?;
    }
    Ok(())
}

/// Reads a factor CSV, checking it against the sidecar when one exists.
pub fn read_factor(path: &Path) -> Result<Factor> {
    let m = read_csv_matrix(open_input(path)?)?;
    let side = sidecar_path(path);
    if path.as_os_str() != "-" && side.exists() {
        let shape: FactorShape = serde_json::from_str(&fs::read_to_string(&side)?)?;
        if shape.n != m.nrows() || shape.r != m.ncols() {
            return Err(Error::dims(format!(
                "factor is {}x{} but sidecar says {}x{}",
                m.nrows(),
                m.ncols(),
                shape.n,
                shape.r
            )));
        }
    }
    Factor::new(m)
}

/// Operator file: the rule header, the shift, the size and the matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OperatorFile {
    #[serde(flatten)]
    pub rule: OperatorRule,
    pub a: f64,
    pub n: usize,
    pub dim: usize,
    pub data: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<RunMeta>,
}

impl OperatorFile {
    pub fn from_operator(op: &AdjacencyOperator, meta: Option<RunMeta>) -> Self {
        OperatorFile {
            rule: op.rule,
            a: op.shift,
            n: op.n(),
            dim: op.n(),
            data: matrix_to_rows(op.matrix.matrix()),
            meta,
        }
    }

    pub fn into_operator(self) -> Result<AdjacencyOperator> {
        if self.n != self.dim || self.data.len() != self.dim || self.data.iter().any(|r| r.len() != self.dim)
        {
            return Err(Error::dims(format!(
                "operator file declares n={} dim={} but data does not match",
                self.n, self.dim
            )));
        }
        let m = SymMatrix::new(rows_to_matrix(&self.data)?)?;
        AdjacencyOperator::from_matrix(m, self.a, self.rule)
    }
}

/// Parses an operator file; a bare `{dim, data}` envelope is accepted as a
/// custom operator with no shift.
pub fn parse_operator(text: &str) -> Result<AdjacencyOperator> {
    let mut v: serde_json::Value = serde_json::from_str(text)?;
    if let Some(obj) = v.as_object_mut() {
        if !obj.contains_key("rule") {
            obj.insert("rule".into(), "custom".into());
            obj.entry("a").or_insert(0.0.into());
            if let Some(dim) = obj.get("dim").cloned() {
                obj.entry("n").or_insert(dim);
            }
        }
    }
    let file: OperatorFile =
        serde_json::from_value(v).map_err(|e| Error::Parse(format!("operator file: {e}")))?;
    file.into_operator()
}

pub fn read_operator(path: &Path) -> Result<AdjacencyOperator> {
    let mut text = String::new();
    open_input(path)?.read_to_string(&mut text)?;
    parse_operator(&text)
}

pub fn write_operator(path: &Path, op: &AdjacencyOperator, meta: Option<RunMeta>) -> Result<()> {
    let mut w = open_output(path)?;
    serde_json::to_writer(&mut w, &OperatorFile::from_operator(op, meta))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = open_output(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}
