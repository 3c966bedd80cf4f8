use std::path::{Path, PathBuf};

use drachma::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";

const FLOAT_ENVIRONMENT: &str = "IEEE-754 binary64, no fast-math; per-shot ChaCha8 streams keyed by \
(seed, prepared state, shot index), so thread count does not change results. \
Outputs are bitwise reproducible for the same binary on the same target.";

#[derive(Debug, Serialize)]
pub struct ConfigRef {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config: ConfigRef,
    pub seed: Option<u64>,
    pub version: String,
    pub outputs: Vec<String>,
    pub float_environment: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects output files of one run and writes the manifest last.
pub struct Run {
    pub out_dir: PathBuf,
    command: String,
    config: ConfigRef,
    seed: Option<u64>,
    outputs: Vec<String>,
}

impl Run {
    pub fn new(command: &str, config_path: &Path, config_bytes: &[u8], out_dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        Ok(Self {
            out_dir: out_dir.to_path_buf(),
            command: command.to_string(),
            config: ConfigRef {
                path: config_path.to_path_buf(),
                sha256: sha256_hex(config_bytes),
            },
            seed: None,
            outputs: Vec::new(),
        })
    }

    pub fn seed(&mut self, seed: u64) {
        self.seed = Some(seed);
    }

    /// Path for output `name`, recorded in the manifest.
    pub fn output(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.out_dir.join(name)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.output(name);
        write_json(&path, value)
    }

    pub fn finish(self) -> Result<()> {
        let manifest = RunManifest {
            command: self.command,
            args: std::env::args().skip(1).collect(),
            config: self.config,
            seed: self.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: self.outputs,
            float_environment: FLOAT_ENVIRONMENT.to_string(),
        };
        write_json(&self.out_dir.join(MANIFEST), &manifest)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse {
        what: path.display().to_string(),
        reason: e.to_string(),
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
