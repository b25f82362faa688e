use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::settings::Settings;

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Everything needed to repeat a run.
#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub command: &'a str,
    pub tool_version: &'static str,
    pub seed: u64,
    pub argv: Vec<String>,
    pub settings: &'a Settings,
    pub inputs: Vec<InputDigest>,
}

pub fn digest_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl<'a> RunManifest<'a> {
    pub fn new(command: &'a str, settings: &'a Settings, inputs: &[&Path]) -> Result<Self> {
        let mut all: Vec<PathBuf> = inputs.iter().map(|p| p.to_path_buf()).collect();
        all.extend(settings.implicit_inputs());
        let inputs = all
            .into_iter()
            .map(|path| {
                Ok(InputDigest {
                    sha256: digest_file(&path)?,
                    path,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            command,
            tool_version: env!("CARGO_PKG_VERSION"),
            seed: settings.seed,
            argv: std::env::args().collect(),
            settings,
            inputs,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json + "\n").with_context(|| format!("cannot write {}", path.display()))
    }
}
