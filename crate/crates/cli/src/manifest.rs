use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::Cli;

/// Run record written to `manifest.json` on every exit path.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub argv: Vec<String>,
    pub version: String,
    pub config_path: Option<String>,
    /// SHA-256 of the raw config bytes.
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub exit_status: u8,
    pub outputs: Vec<String>,
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl Manifest {
    pub fn start(cli: &Cli) -> Self {
        let config_hash = cli
            .config
            .as_ref()
            .and_then(|p| std::fs::read(p).ok())
            .map(|b| sha256_hex(&b));
        Manifest {
            argv: std::env::args().collect(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_path: cli.config.as_ref().map(|p| p.display().to_string()),
            config_hash,
            seed: cli.seed,
            workers: cli.workers,
            started_unix: now(),
            finished_unix: 0.0,
            exit_status: 0,
            outputs: Vec::new(),
        }
    }

    pub fn record(&mut self, name: &str) {
        self.outputs.push(name.to_string());
    }

    pub fn finish(&mut self, dir: &Path, code: u8) -> std::io::Result<()> {
        self.finished_unix = now();
        self.exit_status = code;
        std::fs::create_dir_all(dir)?;
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(dir.join("manifest.json"), text)
    }
}
