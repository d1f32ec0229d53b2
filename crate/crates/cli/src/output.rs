//! Artifact formatting and all-or-nothing commit.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, Dim, Matrix, RawStorage};
use serde::Serialize;
use serde_json::{json, Map, Value};

use youngflow::holder_paths::{sidecar_of, sidecar_path, to_csv_string, PathMeta, SampledPath};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

/// A named residual compared against a limit after the run.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

/// Everything a command produces; nothing touches the disk until [`commit`].
pub struct Artifacts {
    command: &'static str,
    files: Vec<(PathBuf, Vec<u8>)>,
    results: Map<String, Value>,
    checks: Vec<Check>,
}

impl Artifacts {
    pub fn new(command: &'static str) -> Self {
        Self {
            command,
            files: Vec::new(),
            results: Map::new(),
            checks: Vec::new(),
        }
    }

    pub fn file(&mut self, path: &Path, bytes: Vec<u8>) {
        self.files.push((path.to_path_buf(), bytes));
    }

    pub fn json_file<T: Serialize>(&mut self, path: &Path, value: &T) -> CliResult<()> {
        self.file(path, pretty(value)?);
        Ok(())
    }

    /// Path CSV plus its JSON sidecar.
    pub fn path_file(&mut self, path: &Path, data: &SampledPath, meta: PathMeta) -> CliResult<()> {
        let data = data.clone().with_meta(meta);
        self.file(path, to_csv_string(&data).into_bytes());
        self.json_file(&sidecar_path(path), &sidecar_of(&data))
    }

    pub fn result<T: Serialize>(&mut self, key: &str, value: T) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.results.insert(key.to_string(), v);
    }

    /// `--tol` overrides the command's default limit.
    pub fn check(&mut self, name: &str, value: f64, default_limit: f64, tol: Option<f64>) {
        let limit = tol.unwrap_or(default_limit);
        self.checks.push(Check {
            name: name.to_string(),
            value,
            limit,
            pass: value <= limit,
        });
    }

    fn summary(&self, seed: Option<u64>) -> Value {
        json!({
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "seed": seed,
            "outputs": self.files.iter().map(|(p, _)| p.display().to_string()).collect::<Vec<_>>(),
            "results": self.results,
            "checks": self.checks,
        })
    }

    fn failed_checks(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }
}

pub fn pretty<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Module(e.to_string()))?;
    s.push('\n');
    Ok(s.into_bytes())
}

/// Row-major nested arrays.
pub fn rows<R: Dim, C: Dim, S: RawStorage<f64, R, C>>(m: &Matrix<f64, R, C, S>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Long-format table: `node,t,quantity,row,col,value`.
pub struct LongTable {
    buf: String,
}

impl LongTable {
    pub fn new() -> Self {
        Self {
            buf: String::from("node,t,quantity,row,col,value\n"),
        }
    }

    pub fn push_matrix(&mut self, node: usize, t: f64, quantity: &str, m: &DMatrix<f64>) {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                self.buf.push_str(&format!(
                    "{node},{},{quantity},{i},{j},{}\n",
                    fmt_f64(t),
                    fmt_f64(m[(i, j)])
                ));
            }
        }
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf.into_bytes()
    }
}

fn temp_name(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".partial");
    path.with_file_name(name)
}

/// Write every artifact, or none of them. The summary goes to `summary_path`
/// when given, else to stdout.
pub fn commit(art: Artifacts, summary_path: Option<&Path>, seed: Option<u64>) -> CliResult<()> {
    let failed = art.failed_checks();
    if !failed.is_empty() {
        let detail: Vec<String> = failed
            .iter()
            .map(|c| format!("{} = {:.3e} > {:.3e}", c.name, c.value, c.limit))
            .collect();
        return Err(CliError::Invariant(detail.join("; ")));
    }
    let summary = pretty(&art.summary(seed))?;
    let mut files = art.files;
    if let Some(p) = summary_path {
        files.push((p.to_path_buf(), summary.clone()));
    }
    for (i, (p, _)) in files.iter().enumerate() {
        if files[..i].iter().any(|(q, _)| q == p) {
            return Err(CliError::Range(format!("output {} would be written twice", p.display())));
        }
    }
    let mut staged: Vec<PathBuf> = Vec::new();
    let result = (|| -> std::io::Result<()> {
        for (p, bytes) in &files {
            let tmp = temp_name(p);
            staged.push(tmp.clone());
            fs::write(&tmp, bytes)?;
        }
        Ok(())
    })();
    if let Err(e) = result {
        for tmp in &staged {
            let _ = fs::remove_file(tmp);
        }
        return Err(e.into());
    }
    for (p, _) in &files {
        fs::rename(temp_name(p), p)?;
    }
    if summary_path.is_none() {
        std::io::stdout().write_all(&summary)?;
    }
    Ok(())
}
