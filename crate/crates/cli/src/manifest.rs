use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SNAPSHOT_FILE: &str = "config.snapshot";

#[derive(Debug, Serialize)]
pub struct OutputDigest {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

/// Everything needed to reproduce an output directory: replaying
/// `config.snapshot` regenerates the same bytes.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub started: String,
    pub config: RunConfig,
    pub snapshot: PathBuf,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<OutputDigest>,
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        RunManifest {
            tool: "loopcascade",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            seed: config.sim.seed,
            started: chrono::Utc::now().to_rfc3339(),
            config: config.clone(),
            snapshot: PathBuf::from(SNAPSHOT_FILE),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Writes the snapshot and the manifest into `dir`, digesting `outputs`
    /// (paths relative to `dir`).
    pub fn write(mut self, dir: &Path, outputs: &[&str]) -> Result<(), CliError> {
        fs::write(dir.join(SNAPSHOT_FILE), self.config.snapshot()).map_err(|e| CliError::io(dir, e))?;
        for name in outputs.iter().copied().chain([SNAPSHOT_FILE]) {
            let path = dir.join(name);
            let (sha256, bytes) = digest_file(&path)?;
            self.outputs.push(OutputDigest {
                path: PathBuf::from(name),
                sha256,
                bytes,
            });
        }
        let json = serde_json::to_string_pretty(&self).expect("plain data");
        fs::write(dir.join(MANIFEST_FILE), json + "\n").map_err(|e| CliError::io(dir, e))
    }
}

pub fn digest_file(path: &Path) -> Result<(String, u64), CliError> {
    let mut file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut total = 0;
    loop {
        let n = file.read(&mut buf).map_err(|e| CliError::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        total += n as u64;
    }
    Ok((hex::encode(hasher.finalize()), total))
}
