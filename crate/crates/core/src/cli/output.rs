//! Atomic CSV/JSON emission and the run manifest.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, SCHEMA_VERSION};
use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.json";

/// Shortest decimal that parses back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.display().to_string(), source }
}

/// Write through a temporary file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| Error::Io { path: path.display().to_string(), source: e.error })?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub wall_clock_seconds: f64,
    /// SHA-256 of every file written, keyed by file name.
    pub outputs: BTreeMap<String, String>,
}

/// Files produced by one command, tracked for the manifest.
pub struct OutputSet {
    dir: PathBuf,
    command: String,
    config_hash: String,
    seed: u64,
    started: Instant,
    outputs: BTreeMap<String, String>,
}

impl OutputSet {
    pub fn create(config: &ExperimentConfig, command: &str) -> Result<Self> {
        std::fs::create_dir_all(&config.out).map_err(io_err(&config.out))?;
        Ok(OutputSet {
            dir: config.out.clone(),
            command: command.to_string(),
            config_hash: config.hash(),
            seed: config.seed,
            started: Instant::now(),
            outputs: BTreeMap::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.dir.join(name), bytes)?;
        self.outputs.insert(name.to_string(), hex::encode(Sha256::digest(bytes)));
        log::info!("wrote {}", self.dir.join(name).display());
        Ok(())
    }

    pub fn csv<R, S>(&mut self, name: &str, header: &[&str], rows: R) -> Result<()>
    where
        R: IntoIterator<Item = Vec<S>>,
        S: AsRef<str>,
    {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::invalid(format!("csv encoding of {name}: {e}"));
        w.write_record(header).map_err(csv_err)?;
        for row in rows {
            let row: Vec<&str> = row.iter().map(AsRef::as_ref).collect();
            w.write_record(&row).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(format!("csv buffer of {name}: {e}")))?;
        self.put(name, &bytes)
    }

    /// Pretty JSON wrapped with the schema version and config hash.
    pub fn json<T: Serialize>(&mut self, name: &str, result: &T) -> Result<()> {
        let doc = serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "result": result,
        });
        let mut bytes = serde_json::to_vec_pretty(&doc).map_err(|e| Error::invalid(e.to_string()))?;
        bytes.push(b'\n');
        self.put(name, &bytes)
    }

    pub fn finish(self) -> Result<RunManifest> {
        let m = RunManifest {
            schema_version: SCHEMA_VERSION,
            command: self.command,
            config_hash: self.config_hash,
            seed: self.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            outputs: self.outputs,
        };
        let mut bytes = serde_json::to_vec_pretty(&m).map_err(|e| Error::invalid(e.to_string()))?;
        bytes.push(b'\n');
        write_atomic(&self.dir.join(MANIFEST), &bytes)?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_is_lf_terminated_and_checksummed() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig { out: dir.path().to_path_buf(), ..Default::default() };
        let mut o = OutputSet::create(&cfg, "test").unwrap();
        o.csv("a.csv", &["x", "y"], vec![vec![num(0.1), num(1.0 / 3.0)]]).unwrap();
        let m = o.finish().unwrap();
        let text = std::fs::read_to_string(dir.path().join("a.csv")).unwrap();
        assert_eq!(text, "x,y\n0.1,0.3333333333333333\n");
        assert_eq!(m.outputs["a.csv"], hex::encode(Sha256::digest(text.as_bytes())));
        assert!(dir.path().join(MANIFEST).exists());
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1e-300, -2.5e17, std::f64::consts::PI] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }
}
