use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::train::EpochLog;
use crate::config::TrainConfig;
use crate::data::{write_file, Vocabulary};
use crate::error::{IagError, Result};
use crate::model::Network;
use crate::nn::{Adam, ParamStore};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to rebuild the network and continue training.
/// Stored as JSON; floats round-trip exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: TrainConfig,
    pub vocabulary: Vocabulary,
    pub params: ParamStore,
    pub optimizer: Adam,
    pub epoch: usize,
    /// SHA-256 of the config this checkpoint was trained with.
    pub fingerprint: String,
    /// Data-order generator state after the last completed epoch.
    pub rng: ChaCha8Rng,
    pub history: Vec<EpochLog>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec(self).map_err(|e| IagError::format(path.display(), "checkpoint", e.to_string()))?;
        write_file(path, &json)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| IagError::io(path, e))?;
        let ckpt: Checkpoint =
            serde_json::from_slice(&bytes).map_err(|e| IagError::format(path.display(), "checkpoint", e.to_string()))?;
        if ckpt.format_version != CHECKPOINT_VERSION {
            return Err(IagError::format(
                path.display(),
                "format_version",
                format!("expected {CHECKPOINT_VERSION}, found {}", ckpt.format_version),
            ));
        }
        if ckpt.fingerprint != ckpt.config.fingerprint() {
            return Err(IagError::Validation(format!(
                "{}: config fingerprint does not match the stored config",
                path.display()
            )));
        }
        Ok(ckpt)
    }

    /// Rebuilds the network and checks the stored parameters against its
    /// layout (names and shapes).
    pub fn restore(&self) -> Result<(Network, ParamStore)> {
        let (net, fresh) = Network::new(&self.config.model, self.vocabulary.num_affordances(), self.config.seed)?;
        if fresh.len() != self.params.len() {
            return Err(IagError::Validation(format!(
                "checkpoint has {} parameter tensors, the network expects {}",
                self.params.len(),
                fresh.len()
            )));
        }
        for (a, b) in fresh.ids().zip(self.params.ids()) {
            if fresh.name(a) != self.params.name(b) || fresh.value(a).shape() != self.params.value(b).shape() {
                return Err(IagError::Validation(format!(
                    "checkpoint parameter `{}` {:?} does not match `{}` {:?}",
                    self.params.name(b),
                    self.params.value(b).shape(),
                    fresh.name(a),
                    fresh.value(a).shape()
                )));
            }
        }
        Ok((net, self.params.clone()))
    }
}
