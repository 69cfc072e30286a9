use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, CHECKPOINT_VERSION};
use crate::backbones::{build_hierarchy, Point3, PointHierarchy};
use crate::config::{Accumulation, TrainConfig};
use crate::data::{random_crop_resize, resample_indices, resize_image, sample_pairs, write_file, Dataset, InteractionImage, PairUnit, RawCloud};
use crate::error::{IagError, Result};
use crate::losses::{LossBreakdown, LossConfig};
use crate::model::{ModelConfig, ModelInput, Network};
use crate::nn::{Adam, ParamId, ParamStore};
use crate::tensor::Matrix;

/// Mean per-image accumulated losses of one epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub l_ce: f64,
    pub l_kl: f64,
    pub l_hm: f64,
    pub total: f64,
}

/// A cloud resampled to the model's point count with its hierarchy built
/// once up front.
#[derive(Clone, Debug)]
pub struct PreparedCloud {
    /// Rows of the raw cloud kept by resampling.
    pub indices: Vec<usize>,
    pub coords: Vec<Point3>,
    pub hierarchy: Arc<PointHierarchy>,
}

impl PreparedCloud {
    pub fn new(raw: &RawCloud, model: &ModelConfig, seed: u64) -> Result<Self> {
        let indices = resample_indices(&raw.coords, model.point_count, seed)?;
        let coords: Vec<Point3> = indices.iter().map(|&i| raw.coords[i]).collect();
        let hierarchy = Arc::new(build_hierarchy(&coords, &model.point)?);
        Ok(Self {
            indices,
            coords,
            hierarchy,
        })
    }

    /// Ground-truth channel `affordance` at the kept rows.
    pub fn target(&self, raw: &RawCloud, affordance: &str) -> Result<Vec<f64>> {
        let channel = raw.channel(affordance).ok_or_else(|| {
            IagError::Validation(format!("cloud of `{}` has no label channel `{affordance}`", raw.meta.object))
        })?;
        Ok(self.indices.iter().map(|&i| channel[i]).collect())
    }
}

/// Resamples every cloud of a split; cloud `k` uses seed `seed + k`.
pub fn prepare_clouds(dataset: &Dataset, model: &ModelConfig, seed: u64) -> Result<Vec<PreparedCloud>> {
    dataset
        .clouds
        .par_iter()
        .enumerate()
        .map(|(k, raw)| PreparedCloud::new(raw, model, seed.wrapping_add(k as u64)))
        .collect()
}

/// One (image, cloud) forward/backward unit. `weight` scales its loss
/// inside the batch objective.
#[derive(Clone, Debug)]
pub struct PairJob {
    pub input: ModelInput,
    pub target: Arc<Matrix>,
    pub class: usize,
    pub weight: f64,
}

fn scaled(b: LossBreakdown, w: f64) -> LossBreakdown {
    LossBreakdown {
        l_ce: w * b.l_ce,
        l_kl: w * b.l_kl,
        l_hm: w * b.l_hm,
        total: w * b.total,
        weights: b.weights,
    }
}

/// Weighted losses of one pair and the gradient of the weighted total.
pub fn pair_loss_gradient(
    net: &Network,
    store: &ParamStore,
    job: &PairJob,
    loss: &LossConfig,
) -> Result<(LossBreakdown, Vec<(ParamId, Matrix)>)> {
    let mut g = crate::graph::Graph::with_params(store);
    let trace = net.forward(&mut g, &job.input)?;
    let vars = net.loss(&mut g, &trace, &job.target, job.class, loss)?;
    let breakdown = scaled(vars.breakdown(&g, loss.weights()), job.weight);
    let objective = g.scale(vars.total, job.weight);
    g.backward(objective);
    Ok((breakdown, g.param_grads()))
}

/// Gradient of the summed weighted losses of `jobs`. Pairs run in
/// parallel; the reduction follows job order so the result does not depend
/// on the thread count.
pub fn batch_gradient(
    net: &Network,
    store: &ParamStore,
    jobs: &[PairJob],
    loss: &LossConfig,
) -> Result<(Vec<Option<Matrix>>, Vec<LossBreakdown>)> {
    let per_pair: Vec<(LossBreakdown, Vec<(ParamId, Matrix)>)> = jobs
        .par_iter()
        .map(|job| pair_loss_gradient(net, store, job, loss))
        .collect::<Result<_>>()?;
    let mut grads: Vec<Option<Matrix>> = vec![None; store.len()];
    let mut losses = Vec::with_capacity(per_pair.len());
    for (breakdown, pair_grads) in per_pair {
        losses.push(breakdown);
        for (id, grad) in pair_grads {
            match &mut grads[id.index()] {
                Some(acc) => acc.add_assign(&grad),
                slot => *slot = Some(grad),
            }
        }
    }
    Ok((grads, losses))
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
}

/// Loads `config.dataset_root` / `config.split` and trains on it.
pub fn train(config: &TrainConfig) -> Result<TrainOutcome> {
    let dataset = Dataset::load(&config.dataset_root, config.split)?;
    train_on(config, &dataset)
}

struct Trainer<'a> {
    config: &'a TrainConfig,
    dataset: &'a Dataset,
    clouds: Vec<PreparedCloud>,
    resized: Vec<InteractionImage>,
}

impl Trainer<'_> {
    fn jobs(&self, units: &[PairUnit], rng: &mut ChaCha8Rng) -> Result<Vec<PairJob>> {
        let side = self.config.model.image_size as u32;
        let weight = match self.config.accumulation {
            Accumulation::Sum => 1.0,
            Accumulation::Mean => 1.0 / self.config.pairing_n as f64,
        };
        let mut jobs = Vec::new();
        for unit in units {
            let image = if self.config.augment {
                random_crop_resize(&self.dataset.images[unit.image], (side, side), rng)
            } else {
                self.resized[unit.image].clone()
            };
            let affordance = &self.dataset.annotations[unit.image].affordance;
            for &c in &unit.clouds {
                let cloud = &self.clouds[c];
                let target = cloud.target(&self.dataset.clouds[c], affordance)?;
                jobs.push(PairJob {
                    input: ModelInput::new(&image, Arc::clone(&cloud.hierarchy)),
                    target: Arc::new(Matrix::from_vec(1, target.len(), target)),
                    class: image.affordance,
                    weight,
                });
            }
        }
        Ok(jobs)
    }

    fn nan_dump(&self, epoch: usize, batch: usize, units: &[PairUnit], losses: &[LossBreakdown]) -> IagError {
        let images: Vec<&str> = units
            .iter()
            .map(|u| self.dataset.manifest.entries[u.image].image.as_str())
            .collect();
        let message = format!("non-finite loss at epoch {epoch}, batch {batch} (images {images:?})");
        if let Some(dir) = &self.config.checkpoint_dir {
            let clouds: Vec<Vec<&str>> = units
                .iter()
                .map(|u| u.clouds.iter().map(|&c| self.dataset.cloud_paths[c].as_str()).collect())
                .collect();
            let dump = serde_json::json!({
                "epoch": epoch,
                "batch": batch,
                "images": images,
                "clouds": clouds,
                "losses": losses,
            });
            let path = dir.join("nan_batch.json");
            if write_file(&path, dump.to_string().as_bytes()).is_ok() {
                return IagError::Numeric(format!("{message}; batch dumped to {}", path.display()));
            }
        }
        IagError::Numeric(message)
    }
}

/// Trains on an already loaded split. Each step forwards every (image,
/// cloud) pair of `batch_size` images, sums their losses and takes one
/// Adam step.
pub fn train_on(config: &TrainConfig, dataset: &Dataset) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(IagError::Manifest("training split is empty".into()));
    }
    let (net, mut store) = Network::new(&config.model, dataset.vocab.num_affordances(), config.seed)?;
    let mut optimizer = Adam::new(&store, config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);

    let side = config.model.image_size as u32;
    let trainer = Trainer {
        config,
        dataset,
        clouds: prepare_clouds(dataset, &config.model, config.seed)?,
        resized: if config.augment {
            Vec::new()
        } else {
            dataset.images.iter().map(|im| resize_image(im, side, side)).collect()
        },
    };

    let mut log = Vec::with_capacity(config.epochs);
    let mut checkpoint = None;
    for epoch in 1..=config.epochs {
        let units = sample_pairs(dataset, config.pairing_n, &mut rng)?;
        let mut sums = [0.0; 4];
        for (batch, chunk) in units.chunks(config.batch_size).enumerate() {
            let jobs = trainer.jobs(chunk, &mut rng)?;
            let (grads, losses) = batch_gradient(&net, &store, &jobs, &config.loss)?;
            if losses.iter().any(|l| !l.total.is_finite()) || grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(trainer.nan_dump(epoch, batch, chunk, &losses));
            }
            for l in &losses {
                sums[0] += l.l_ce;
                sums[1] += l.l_kl;
                sums[2] += l.l_hm;
                sums[3] += l.total;
            }
            optimizer.update(&mut store, &grads);
        }
        let n = units.len() as f64;
        let entry = EpochLog {
            epoch,
            l_ce: sums[0] / n,
            l_kl: sums[1] / n,
            l_hm: sums[2] / n,
            total: sums[3] / n,
        };
        log::info!(
            "epoch {epoch}: total {:.5} (ce {:.5}, kl {:.5}, hm {:.5})",
            entry.total,
            entry.l_ce,
            entry.l_kl,
            entry.l_hm
        );
        log.push(entry);
        let ckpt = Checkpoint {
            format_version: CHECKPOINT_VERSION,
            fingerprint: config.fingerprint(),
            config: config.clone(),
            vocabulary: dataset.vocab.clone(),
            params: store.clone(),
            optimizer: optimizer.clone(),
            epoch,
            rng: rng.clone(),
            history: log.clone(),
        };
        if let Some(dir) = &config.checkpoint_dir {
            ckpt.save(&dir.join("last.json"))?;
        }
        checkpoint = Some(ckpt);
    }
    Ok(TrainOutcome {
        checkpoint: checkpoint.expect("at least one epoch"),
        log,
    })
}
