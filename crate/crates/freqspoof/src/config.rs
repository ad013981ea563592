//! `key=value` run configuration.
//!
//! Blank lines and `#` comments are skipped. Values from a file override the
//! defaults and command-line flags override the file. Unknown keys are
//! rejected.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use freqspoof_core::model::NetworkConfig;
use freqspoof_core::training::TrainConfig;

use crate::error::{Error, Result};

pub const KEYS: [&str; 13] = [
    "epochs",
    "warmup_epochs",
    "lr_spatial",
    "lr_freq",
    "wd_spatial",
    "wd_freq",
    "batch_size",
    "seq_len",
    "seed",
    "lambda_depth",
    "freeze_ratio",
    "image_size",
    "width_multiplier",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub image_size: usize,
    pub width_multiplier: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let net = NetworkConfig::default();
        RunConfig {
            train: TrainConfig {
                seq_len: net.seq_len,
                ..TrainConfig::default()
            },
            image_size: net.image_size,
            width_multiplier: net.width_multiplier,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| Error::Config(format!("{key}={value}: {e}")))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "epochs" => t.epochs = parse(key, value)?,
            "warmup_epochs" => t.warmup_epochs = parse(key, value)?,
            "lr_spatial" => t.lr_spatial = parse(key, value)?,
            "lr_freq" => t.lr_freq = parse(key, value)?,
            "wd_spatial" => t.wd_spatial = parse(key, value)?,
            "wd_freq" => t.wd_freq = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "seq_len" => t.seq_len = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "lambda_depth" => t.lambda_depth = parse(key, value)?,
            "freeze_ratio" => t.freeze_ratio = parse(key, value)?,
            "image_size" => self.image_size = parse(key, value)?,
            "width_multiplier" => self.width_multiplier = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("{origin}:{}: expected key=value", n + 1)))?;
            self.set(k.trim(), v)
                .map_err(|e| Error::Config(format!("{origin}:{}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn network(&self) -> Result<NetworkConfig> {
        Ok(NetworkConfig::new(
            self.image_size,
            self.train.seq_len,
            self.width_multiplier,
        )?)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.network().map(|_| ())
    }

    /// Every key with its current value, in [`KEYS`] order.
    pub fn entries(&self) -> Vec<(String, String)> {
        let t = &self.train;
        let values = [
            t.epochs.to_string(),
            t.warmup_epochs.to_string(),
            t.lr_spatial.to_string(),
            t.lr_freq.to_string(),
            t.wd_spatial.to_string(),
            t.wd_freq.to_string(),
            t.batch_size.to_string(),
            t.seq_len.to_string(),
            t.seed.to_string(),
            t.lambda_depth.to_string(),
            t.freeze_ratio.to_string(),
            self.image_size.to_string(),
            self.width_multiplier.to_string(),
        ];
        KEYS.iter().map(|k| k.to_string()).zip(values).collect()
    }
}
