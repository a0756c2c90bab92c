//! Deterministic file emission: CSV with 17 significant digits, pretty JSON
//! and the per-run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use lqt_ioc::linalg::Mat;
use serde::Serialize;

use crate::config::{sha256_hex, LoadedConfig};
use crate::CliError;

/// `v` with 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Config(format!("cannot create output directory `{}`: {e}", dir.display())))
}

/// CSV writer that records the file it produced.
pub struct Csv {
    path: PathBuf,
    inner: csv::Writer<fs::File>,
}

impl Csv {
    pub fn create(path: PathBuf, header: &[String]) -> Result<Self, CliError> {
        let mut inner = csv::Writer::from_path(&path).map_err(csv_err)?;
        inner.write_record(header).map_err(csv_err)?;
        Ok(Self { path, inner })
    }

    pub fn row(&mut self, fields: &[String]) -> Result<(), CliError> {
        self.inner.write_record(fields).map_err(csv_err)
    }

    pub fn finish(mut self) -> Result<PathBuf, CliError> {
        self.inner.flush()?;
        Ok(self.path)
    }
}

fn csv_err(e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::Io(io),
        other => CliError::Numeric(format!("csv: {other:?}")),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Numeric(format!("json: {e}")))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config: String,
    config_sha256: &'a str,
    seed: u64,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    details: serde_json::Value,
}

/// Writes `manifest.json` with file hashes of every input and output.
///
/// Paths are recorded relative to the output directory where possible so the
/// manifest does not change when the same run is repeated elsewhere.
pub fn write_manifest(
    dir: &Path,
    command: &str,
    cfg: &LoadedConfig,
    seed: u64,
    inputs: &[&Path],
    outputs: &[PathBuf],
    details: serde_json::Value,
) -> Result<PathBuf, CliError> {
    let hash = |p: &Path| -> Result<String, CliError> { Ok(sha256_hex(&fs::read(p)?)) };
    let name = |p: &Path| -> String {
        p.strip_prefix(dir).unwrap_or(p).to_string_lossy().replace('\\', "/")
    };
    let mut ins = BTreeMap::new();
    for p in inputs {
        let label = p.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
        ins.insert(label, hash(p)?);
    }
    let mut outs = BTreeMap::new();
    for p in outputs {
        outs.insert(name(p), hash(p)?);
    }
    let config = cfg.path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    let manifest = Manifest {
        command,
        config,
        config_sha256: &cfg.sha256,
        seed,
        inputs: ins,
        outputs: outs,
        details,
    };
    let path = dir.join("manifest.json");
    write_json(&path, &manifest)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(num(0.1), "1.0000000000000001e-1");
        assert_eq!(num(-2.0), "-2.0000000000000000e0");
        for v in [std::f64::consts::PI, 1e-300, 6.8062e-4] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }
}
