use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use rfkde::ConfigFile;

use crate::Failure;

/// A fresh output directory; existing non-empty directories are refused so
/// earlier runs are never modified.
pub struct RunDir {
    root: PathBuf,
    files: Vec<String>,
}

impl RunDir {
    pub fn create(path: &Path) -> Result<RunDir, Failure> {
        if path.exists() {
            let mut entries = fs::read_dir(path).map_err(|e| Failure::Runtime(format!("cannot read {}: {e}", path.display())))?;
            if entries.next().is_some() {
                return Err(Failure::Runtime(format!(
                    "output directory {} exists and is not empty",
                    path.display()
                )));
            }
        }
        fs::create_dir_all(path).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", path.display())))?;
        Ok(RunDir {
            root: path.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn writer(&mut self, name: &str) -> Result<BufWriter<File>, Failure> {
        let p = self.root.join(name);
        let f = File::create(&p).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", p.display())))?;
        self.files.push(name.to_string());
        Ok(BufWriter::new(f))
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        let mut w = self.writer(name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| Failure::Runtime(e.to_string()))?;
        std::io::Write::write_all(&mut w, b"\n").map_err(|e| Failure::Runtime(e.to_string()))?;
        Ok(())
    }

    pub fn finish(mut self, manifest: Manifest) -> Result<(), Failure> {
        let mut m = manifest;
        m.outputs = self.files.clone();
        m.finished_unix_s = unix_now();
        self.write_json("manifest.json", &m)
    }
}

/// Everything needed to repeat a run: the effective config (seed overrides
/// applied), the artifact version, and the outcome of each check.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub artifact: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub base_seed: u64,
    pub threads: Option<usize>,
    pub started_unix_s: u64,
    pub finished_unix_s: u64,
    pub outputs: Vec<String>,
    pub checks: BTreeMap<String, bool>,
    pub config: ConfigFile,
}

impl Manifest {
    pub fn new(command: &'static str, config: &ConfigFile, threads: Option<usize>) -> Manifest {
        Manifest {
            artifact: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            base_seed: config.seed,
            threads,
            started_unix_s: unix_now(),
            finished_unix_s: 0,
            outputs: Vec::new(),
            checks: BTreeMap::new(),
            config: config.clone(),
        }
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}
