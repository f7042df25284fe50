//! Output directory: CSV and JSON artifacts plus the run manifest with SHA-256 digests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

pub struct OutDir {
    dir: PathBuf,
    digests: BTreeMap<String, String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config: &'a RunConfig,
    seed: u64,
    tool_version: &'static str,
    threads: usize,
    wall_clock_seconds: f64,
    outputs: &'a BTreeMap<String, String>,
}

impl OutDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(OutDir { dir: dir.to_path_buf(), digests: BTreeMap::new() })
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.digests.insert(name.to_string(), format!("{:x}", Sha256::digest(bytes)));
        Ok(())
    }

    /// CSV with a header row; fields are quoted per RFC 4180 when needed.
    pub fn write_csv<R, I>(&mut self, name: &str, header: &[&str], rows: R) -> Result<(), CliError>
    where
        R: IntoIterator<Item = I>,
        I: IntoIterator<Item = String>,
    {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(csv_err)?;
        for row in rows {
            w.write_record(row).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        self.write_bytes(name, &bytes)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    pub fn finish(self, command: &str, config: &RunConfig, threads: usize, seconds: f64) -> Result<(), CliError> {
        let manifest = Manifest {
            command,
            config,
            seed: config.noise.seed,
            tool_version: env!("CARGO_PKG_VERSION"),
            threads,
            wall_clock_seconds: seconds,
            outputs: &self.digests,
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
        let path = self.dir.join("manifest.json");
        std::fs::write(&path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

/// Shortest round-trip formatting for CSV cells.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn bit_string(bits: &[u8]) -> String {
    bits.iter().map(|b| if *b != 0 { '1' } else { '0' }).collect()
}
