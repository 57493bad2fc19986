use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Provenance written next to every output file as `<output>.manifest.json`.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub parameters: serde_json::Value,
    pub seed: Option<u64>,
    pub version: String,
    /// SHA-256 of the input file, hex encoded.
    pub input_digest: Option<String>,
    pub started_unix: f64,
    pub finished_unix: f64,
}

impl RunManifest {
    pub fn new<P: Serialize>(
        command: &str,
        params: &P,
        seed: Option<u64>,
    ) -> Result<Self, CliError> {
        Ok(Self {
            command: command.to_string(),
            parameters: serde_json::to_value(params)
                .map_err(|e| CliError::Output(e.to_string()))?,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            input_digest: None,
            started_unix: unix_now(),
            finished_unix: 0.0,
        })
    }

    pub fn with_input(mut self, path: &Path) -> Result<Self, CliError> {
        let bytes =
            fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        self.input_digest = Some(hex(&Sha256::digest(&bytes)));
        Ok(self)
    }

    /// Stamps the finish time and writes one sidecar per output.
    pub fn finish(mut self, outputs: &[&PathBuf]) -> Result<(), CliError> {
        self.finished_unix = unix_now();
        for out in outputs {
            let path = sidecar(out);
            let text =
                serde_json::to_string_pretty(&self).map_err(|e| CliError::Output(e.to_string()))?;
            fs::write(&path, text + "\n")
                .map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
        }
        Ok(())
    }
}

pub fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
