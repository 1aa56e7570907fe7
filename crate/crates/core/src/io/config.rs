use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::StopRule;
use crate::models::{ArchitectureSpec, ModelKind};
use crate::nn::{OptimizerConfig, PowerMode};
use crate::training::TrainingConfig;

/// Everything a CLI run needs. Parsed from TOML; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub model_kind: ModelKind,
    pub alpha: f64,
    pub snr_range_db: (f64, f64),
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub batch_size: usize,
    pub seed: u64,

    pub k: usize,
    pub n: usize,
    pub encoder_hidden: usize,
    pub decoder_hidden: usize,
    pub power_mode: PowerMode,

    /// Eb/N0 grid (dB) for `evaluate` and `sweep`.
    pub eval_snrs_db: Vec<f64>,
    /// Evaluation alpha for `evaluate`; the model's training alpha if unset.
    pub eval_alpha: Option<f64>,
    /// Evaluation alphas for `sweep`.
    pub sweep_alphas: Vec<f64>,
    pub output_dir: PathBuf,

    pub optimizer: OptimizerConfig,
    pub stop: StopRule,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let t = TrainingConfig::default();
        let a = ArchitectureSpec::default();
        ExperimentConfig {
            model_kind: t.model_kind,
            alpha: t.alpha,
            snr_range_db: t.snr_range_db,
            epochs: t.epochs,
            batches_per_epoch: t.batches_per_epoch,
            batch_size: t.batch_size,
            seed: t.seed,
            k: a.k,
            n: a.n,
            encoder_hidden: a.encoder_hidden,
            decoder_hidden: a.decoder_hidden,
            power_mode: a.power_mode,
            eval_snrs_db: (0..=8).map(f64::from).collect(),
            eval_alpha: None,
            sweep_alphas: vec![1.0, 10.0, 20.0],
            output_dir: PathBuf::from("runs"),
            optimizer: t.optimizer,
            stop: StopRule::default(),
        }
    }
}

fn key_err(key: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{key}: {msg}"))
}

impl ExperimentConfig {
    pub fn arch(&self) -> ArchitectureSpec {
        ArchitectureSpec {
            k: self.k,
            n: self.n,
            encoder_hidden: self.encoder_hidden,
            decoder_hidden: self.decoder_hidden,
            power_mode: self.power_mode,
        }
    }

    pub fn training(&self) -> TrainingConfig {
        TrainingConfig {
            model_kind: self.model_kind,
            arch: self.arch(),
            alpha: self.alpha,
            snr_range_db: self.snr_range_db,
            epochs: self.epochs,
            batches_per_epoch: self.batches_per_epoch,
            batch_size: self.batch_size,
            optimizer: self.optimizer,
            seed: self.seed,
        }
    }

    /// Range checks, each failure naming the offending key.
    pub fn validate(&self) -> Result<()> {
        if self.model_kind == ModelKind::Untrained {
            return Err(key_err("model_kind", "must be \"twin\" or \"siamese\""));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(key_err("alpha", "must be a non-negative number"));
        }
        let (lo, hi) = self.snr_range_db;
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(key_err(
                "snr_range_db",
                format!("range violation, low {lo} exceeds high {hi}"),
            ));
        }
        for (key, v) in [
            ("epochs", self.epochs),
            ("batches_per_epoch", self.batches_per_epoch),
        ] {
            if v == 0 {
                return Err(key_err(key, "must be at least 1"));
            }
        }
        if self.batch_size < 2 {
            return Err(key_err("batch_size", "must be at least 2"));
        }
        if self.k < 1 || self.k > crate::models::MAX_K {
            return Err(key_err(
                "k",
                format!("must lie in 1..={}", crate::models::MAX_K),
            ));
        }
        if self.n < self.k {
            return Err(key_err("n", "must be at least k"));
        }
        if self.encoder_hidden == 0 {
            return Err(key_err("encoder_hidden", "must be at least 1"));
        }
        if self.decoder_hidden == 0 {
            return Err(key_err("decoder_hidden", "must be at least 1"));
        }
        check_list("eval_snrs_db", &self.eval_snrs_db, false)?;
        check_list("sweep_alphas", &self.sweep_alphas, true)?;
        if let Some(a) = self.eval_alpha {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(key_err("eval_alpha", "must be a non-negative number"));
            }
        }
        self.optimizer
            .validate()
            .map_err(|e| key_err("optimizer", e))?;
        self.stop.validate().map_err(|e| key_err("stop", e))?;
        Ok(())
    }

    /// Parses TOML text, applies `key=value` overrides, fills defaults and
    /// validates.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        for ov in overrides {
            apply_override(&mut table, ov)?;
        }
        let cfg: ExperimentConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` (if given) and applies overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml_str(&text, overrides)
    }

    /// The effective configuration as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }
}

fn check_list(key: &str, values: &[f64], non_negative: bool) -> Result<()> {
    if values.is_empty() {
        return Err(key_err(key, "must not be empty"));
    }
    for (i, v) in values.iter().enumerate() {
        if !v.is_finite() || (non_negative && *v < 0.0) {
            return Err(key_err(key, format!("invalid entry {v}")));
        }
        if values[..i].contains(v) {
            return Err(key_err(key, format!("duplicate entry {v}")));
        }
    }
    Ok(())
}

/// `a.b.c=value`; the value is parsed as a TOML literal, falling back to a
/// bare string.
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));

    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts
        .pop()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::Config(format!("override {spec:?} has an empty key")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| key_err(p, "is not a table"))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
