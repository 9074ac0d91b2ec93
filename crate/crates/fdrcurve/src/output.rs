//! Run directories and the CSV/JSON artifacts written into them.
//!
//! Every artifact is a pure function of the command's inputs. Wall-clock
//! data lives only in `timing.json` and in the default directory name.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use fdrcurve_core::{CurveSnapshot, PathBundle};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::MarketError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub struct RunDir {
    path: PathBuf,
    files: Vec<String>,
}

impl RunDir {
    /// Uses `exact` when given, otherwise a fresh `run-<unix seconds>[-k]`
    /// directory below `base`.
    pub fn create(base: &Path, exact: Option<&Path>) -> Result<Self, MarketError> {
        let path = match exact {
            Some(p) => p.to_path_buf(),
            None => {
                let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
                let mut candidate = base.join(format!("run-{secs}"));
                let mut k = 1;
                while candidate.exists() {
                    candidate = base.join(format!("run-{secs}-{k}"));
                    k += 1;
                }
                candidate
            }
        };
        fs::create_dir_all(&path).map_err(|e| io_err(&path, e))?;
        Ok(Self { path, files: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Artifact names written so far, in order.
    pub fn files(&self) -> &[String] {
        &self.files
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<(), MarketError> {
        let p = self.path.join(name);
        fs::write(&p, text).map_err(|e| io_err(&p, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), MarketError> {
        self.write_text(name, &to_json(value))
    }

    /// CSV with a header row; every value goes through [`fmt_f64`].
    pub fn write_csv(&mut self, name: &str, header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> Result<(), MarketError> {
        let p = self.path.join(name);
        let file = fs::File::create(&p).map_err(|e| io_err(&p, e))?;
        let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
        let csv_err = |e: csv::Error| MarketError::Io(format!("{}: {e}", p.display()));
        w.write_record(header).map_err(csv_err)?;
        for row in rows {
            w.write_record(row.iter().map(|v| fmt_f64(*v))).map_err(csv_err)?;
        }
        let mut inner = w.into_inner().map_err(|e| MarketError::Io(format!("{}: {e}", p.display())))?;
        inner.flush().map_err(|e| io_err(&p, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Timing goes outside the deterministic artifact list.
    pub fn write_timing(&self, seconds: f64, threads: usize) -> Result<(), MarketError> {
        let p = self.path.join("timing.json");
        let v = serde_json::json!({ "seconds": seconds, "threads": threads });
        fs::write(&p, to_json(&v)).map_err(|e| io_err(&p, e))
    }

    pub fn write_manifest(&mut self, command: &str, spec_sha256: &str, seed: Option<u64>, args: Value) -> Result<(), MarketError> {
        let manifest = serde_json::json!({
            "command": command,
            "spec_sha256": spec_sha256,
            "seed": seed,
            "versions": {
                "fdrcurve": env!("CARGO_PKG_VERSION"),
                "fdrcurve-core": fdrcurve_core::VERSION,
            },
            "args": args,
            "files": self.files,
        });
        let p = self.path.join("manifest.json");
        fs::write(&p, to_json(&manifest)).map_err(|e| io_err(&p, e))
    }
}

fn io_err(p: &Path, e: std::io::Error) -> MarketError {
    MarketError::Io(format!("{}: {e}", p.display()))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:?}")
    }
}

/// Rows `path, t, z1..zd`.
pub fn z_rows(paths: &[PathBundle]) -> (Vec<String>, impl Iterator<Item = Vec<f64>> + '_) {
    let d = paths.first().map(|p| p.dim()).unwrap_or(0);
    let mut header = vec!["path".to_string(), "t".to_string()];
    header.extend((1..=d).map(|i| format!("z{i}")));
    let rows = paths.iter().flat_map(|p| {
        (0..=p.steps()).map(move |k| {
            let mut row = vec![p.path_index as f64, p.times[k]];
            row.extend_from_slice(p.z(k));
            row
        })
    });
    (header, rows)
}

/// Rows `t, y, f`.
pub fn curve_rows(snaps: &[CurveSnapshot]) -> (Vec<String>, impl Iterator<Item = Vec<f64>> + '_) {
    let header = vec!["t".to_string(), "y".to_string(), "f".to_string()];
    let rows = snaps
        .iter()
        .flat_map(|s| s.maturities.iter().zip(&s.values).map(move |(y, f)| vec![s.t, *y, *f]));
    (header, rows)
}

/// Rows `path, t, x`.
pub fn wealth_rows<'a>(paths: &'a [PathBundle], wealth: &'a [Vec<f64>]) -> (Vec<String>, impl Iterator<Item = Vec<f64>> + 'a) {
    let header = vec!["path".to_string(), "t".to_string(), "x".to_string()];
    let rows = paths
        .iter()
        .zip(wealth)
        .flat_map(|(p, x)| x.iter().enumerate().map(move |(k, v)| vec![p.path_index as f64, p.times[k], *v]));
    (header, rows)
}
