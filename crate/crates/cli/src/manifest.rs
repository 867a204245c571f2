use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;

/// Record of one run, written next to its primary output.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub threads: usize,
    pub params: serde_json::Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// Anything the subcommand reports beyond its files.
    pub results: serde_json::Value,
    pub runtime_seconds: f64,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }
}

/// `out.csv` -> `out.csv.manifest.json`
pub fn default_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}
