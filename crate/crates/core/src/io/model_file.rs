//! Versioned JSON model files with a SHA-256 content checksum.
//!
//! Layout:
//!
//! ```json
//! {
//!   "format": "icae-model",
//!   "format_version": 1,
//!   "created_unix": 1760000000,
//!   "checksum": "<sha256 of the compact JSON encoding of `content`>",
//!   "content": { "arch": {..}, "model_kind": "siamese", ..., "networks": {..} }
//! }
//! ```
//!
//! The timestamp sits outside `content`, so two trainings with the same
//! configuration produce the same checksum.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::write_atomic;
use crate::error::{Error, Result};
use crate::models::{ArchitectureSpec, ModelKind, TrainedPair, FORMAT_VERSION};
use crate::nn::Network;

pub const FORMAT_NAME: &str = "icae-model";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Networks {
    pub encoder1: Network,
    pub decoder1: Network,
    pub encoder2: Network,
    pub decoder2: Network,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelContent {
    pub arch: ArchitectureSpec,
    pub model_kind: ModelKind,
    pub train_alpha: f64,
    pub train_snr_range_db: (f64, f64),
    pub seed: u64,
    pub networks: Networks,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format: String,
    pub format_version: u32,
    pub created_unix: u64,
    pub checksum: String,
    pub content: ModelContent,
}

impl ModelContent {
    pub fn from_pair(pair: &TrainedPair) -> Self {
        ModelContent {
            arch: pair.arch,
            model_kind: pair.model_kind,
            train_alpha: pair.train_alpha,
            train_snr_range_db: pair.train_snr_range_db,
            seed: pair.seed,
            networks: Networks {
                encoder1: pair.encoder1.clone(),
                decoder1: pair.decoder1.clone(),
                encoder2: pair.encoder2.clone(),
                decoder2: pair.decoder2.clone(),
            },
        }
    }

    pub fn checksum(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("model content always serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn into_pair(self, format_version: u32) -> Result<TrainedPair> {
        let pair = TrainedPair {
            encoder1: self.networks.encoder1,
            decoder1: self.networks.decoder1,
            encoder2: self.networks.encoder2,
            decoder2: self.networks.decoder2,
            arch: self.arch,
            train_alpha: self.train_alpha,
            train_snr_range_db: self.train_snr_range_db,
            seed: self.seed,
            model_kind: self.model_kind,
            format_version,
        };
        pair.validate()
            .map_err(|e| Error::ModelFile(format!("shape inconsistency: {e}")))?;
        Ok(pair)
    }
}

impl ModelFile {
    pub fn new(pair: &TrainedPair) -> Self {
        let content = ModelContent::from_pair(pair);
        ModelFile {
            format: FORMAT_NAME.to_string(),
            format_version: FORMAT_VERSION,
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            checksum: content.checksum(),
            content,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model file always serializes")
    }

    /// Parses and verifies a model file document.
    pub fn parse(text: &str) -> Result<Self> {
        // peek at the header first so version errors win over schema errors
        let raw: serde_json::Value = serde_json::from_str(text).map_err(|e| {
            Error::ModelFile(format!(
                "checksum cannot be verified, file is truncated or corrupt: {e}"
            ))
        })?;
        if raw.get("format").and_then(|v| v.as_str()) != Some(FORMAT_NAME) {
            return Err(Error::ModelFile(format!("not an {FORMAT_NAME} document")));
        }
        match raw.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(FORMAT_VERSION) => {}
            Some(v) => return Err(Error::ModelFile(format!("unknown format_version {v}"))),
            None => return Err(Error::ModelFile("missing format_version".into())),
        }
        let file: ModelFile = serde_json::from_value(raw)
            .map_err(|e| Error::ModelFile(format!("malformed model file: {e}")))?;
        let actual = file.content.checksum();
        if actual != file.checksum {
            return Err(Error::ModelFile(format!(
                "checksum mismatch: file says {}, content hashes to {actual}",
                file.checksum
            )));
        }
        Ok(file)
    }

    pub fn into_pair(self) -> Result<TrainedPair> {
        self.content.into_pair(self.format_version)
    }
}

pub fn save_model(pair: &TrainedPair, path: &Path) -> Result<ModelFile> {
    let file = ModelFile::new(pair);
    write_atomic(path, file.to_json().as_bytes())?;
    Ok(file)
}

pub fn load_model(path: &Path) -> Result<TrainedPair> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::ModelFile(format!("cannot read {}: {e}", path.display())))?;
    ModelFile::parse(&text)?.into_pair()
}
