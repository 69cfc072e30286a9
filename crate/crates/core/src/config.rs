//! Training configuration and its TOML file form.
//!
//! Model keys sit at the top level (`channels`, `point_count`,
//! `arm.projection_variant`, `point.centers`, ...), loss keys under `loss.`.
//! Unknown keys are rejected so a typo never silently falls back to a
//! default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::SplitTag;
use crate::error::{IagError, Result};
use crate::losses::LossConfig;
use crate::model::ModelConfig;

/// How the losses of one image's paired clouds are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Accumulation {
    #[default]
    Sum,
    Mean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub dataset_root: PathBuf,
    pub split: SplitTag,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub pairing_n: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint_dir: Option<PathBuf>,
    pub accumulation: Accumulation,
    /// Random box-preserving crops on training images.
    pub augment: bool,
    #[serde(flatten)]
    pub model: ModelConfig,
    pub loss: LossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dataset_root: PathBuf::from("data"),
            split: SplitTag::SeenTrain,
            epochs: 60,
            batch_size: 8,
            learning_rate: 1e-3,
            pairing_n: 2,
            seed: 0,
            checkpoint_dir: None,
            accumulation: Accumulation::Sum,
            augment: true,
            model: ModelConfig::desk(),
            loss: LossConfig::default(),
        }
    }
}

fn unknown_keys(given: &toml::Value, known: &toml::Value, prefix: &str, out: &mut Vec<String>) {
    if let (toml::Value::Table(g), toml::Value::Table(k)) = (given, known) {
        for (key, value) in g {
            let path = if prefix.is_empty() {
                key.clone()
            } else {
                format!("{prefix}.{key}")
            };
            match k.get(key) {
                Some(kv) => unknown_keys(value, kv, &path, out),
                None => out.push(path),
            }
        }
    }
}

impl TrainConfig {
    /// Full-scale recipe; not exercised by the test suite.
    pub fn full() -> Self {
        Self {
            epochs: 80,
            batch_size: 16,
            learning_rate: 1e-4,
            model: ModelConfig::full(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.pairing_n == 0 {
            return Err(IagError::Config("epochs, batch_size and pairing_n must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(IagError::Config(format!("learning_rate {} must be finite and >= 0", self.learning_rate)));
        }
        self.model.validate()?;
        self.loss.validate()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let given: toml::Value = toml::from_str(text).map_err(|e| IagError::Config(e.to_string()))?;
        let config: TrainConfig = given
            .clone()
            .try_into()
            .map_err(|e: toml::de::Error| IagError::Config(e.to_string()))?;
        let known = toml::Value::try_from(&config).map_err(|e| IagError::Config(e.to_string()))?;
        let mut unknown = Vec::new();
        unknown_keys(&given, &known, "", &mut unknown);
        if let Some(key) = unknown.first() {
            return Err(IagError::Config(format!("unknown config key `{key}`")));
        }
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file; a relative `dataset_root` / `checkpoint_dir` is
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| IagError::io(path, e))?;
        let mut config = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if config.dataset_root.is_relative() {
            config.dataset_root = base.join(&config.dataset_root);
        }
        if let Some(dir) = config.checkpoint_dir.as_mut().filter(|d| d.is_relative()) {
            *dir = base.join(&*dir);
        }
        Ok(config)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| IagError::Config(e.to_string()))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        format!("{:x}", Sha256::digest(json.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arm::ProjectionVariant;

    #[test]
    fn dotted_keys_override_defaults() {
        let cfg = TrainConfig::from_toml_str(
            r#"
            epochs = 3
            loss.lambda_kl = 0.0
            arm.projection_variant = "literal"
            point.centers = [64, 16, 8]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.loss.lambda_kl, 0.0);
        assert_eq!(cfg.loss.lambda_ce, 0.3);
        assert_eq!(cfg.model.arm.projection_variant, ProjectionVariant::Literal);
        assert_eq!(cfg.model.point.centers, vec![64, 16, 8]);
        assert_eq!(cfg.model.channels, 64);
    }

    #[test]
    fn unknown_and_invalid_keys_are_rejected() {
        let err = TrainConfig::from_toml_str("loss.lamda_kl = 0.1").unwrap_err();
        assert!(err.to_string().contains("loss.lamda_kl"));
        assert!(TrainConfig::from_toml_str("pairing_n = 0").is_err());
        assert!(TrainConfig::from_toml_str("arm.projection_variant = \"both\"").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = TrainConfig::default();
        cfg.checkpoint_dir = Some("ckpt".into());
        let back = TrainConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.fingerprint(), cfg.fingerprint());
    }
}
