use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;

use super::format::{image_from_annotation, load_annotation, load_image, load_raw_cloud, Annotation, RawCloud};
use super::{DatasetManifest, InteractionImage, PointCloudSample, SplitTag, Vocabulary};
use crate::error::{IagError, Result};

/// One split held in memory. Clouds are shared between images; each image
/// keeps the indices of the clouds it may be paired with (same object
/// category, affording the image's class).
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
    pub vocab: Vocabulary,
    pub images: Vec<InteractionImage>,
    pub annotations: Vec<Annotation>,
    pub clouds: Vec<RawCloud>,
    pub cloud_paths: Vec<String>,
    pub candidates: Vec<Vec<usize>>,
}

impl Dataset {
    pub fn load(root: &Path, split: SplitTag) -> Result<Self> {
        let manifest = DatasetManifest::load(root, split)?;
        let vocab = manifest.vocabulary()?;
        let mut cloud_index: HashMap<String, usize> = HashMap::new();
        let mut clouds = Vec::new();
        let mut cloud_paths = Vec::new();
        let mut images = Vec::with_capacity(manifest.entries.len());
        let mut annotations = Vec::with_capacity(manifest.entries.len());
        let mut candidates = Vec::with_capacity(manifest.entries.len());
        for entry in &manifest.entries {
            let annotation = load_annotation(&root.join(&entry.annotation))?;
            let image = image_from_annotation(load_image(&root.join(&entry.image))?, &annotation, &vocab)?;
            let mut valid = Vec::new();
            for rel in &entry.clouds {
                let idx = match cloud_index.get(rel) {
                    Some(&i) => i,
                    None => {
                        let raw = load_raw_cloud(&root.join(rel))?;
                        vocab.object_id(&raw.meta.object)?;
                        clouds.push(raw);
                        cloud_paths.push(rel.clone());
                        cloud_index.insert(rel.clone(), clouds.len() - 1);
                        clouds.len() - 1
                    }
                };
                let meta = &clouds[idx].meta;
                if meta.object == annotation.object && meta.afforded().contains(&annotation.affordance) {
                    valid.push(idx);
                }
            }
            if valid.is_empty() {
                return Err(IagError::Manifest(format!(
                    "image {} has no candidate cloud of `{}` affording `{}`",
                    entry.image, annotation.object, annotation.affordance
                )));
            }
            images.push(image);
            annotations.push(annotation);
            candidates.push(valid);
        }
        Ok(Self {
            root: root.to_path_buf(),
            manifest,
            vocab,
            images,
            annotations,
            clouds,
            cloud_paths,
            candidates,
        })
    }

    pub fn split(&self) -> SplitTag {
        self.manifest.split
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Cloud `cloud` reduced to the affordance channel of image `image`.
    pub fn cloud_for_image(&self, image: usize, cloud: usize, point_count: usize, seed: u64) -> Result<PointCloudSample> {
        let affordance = &self.annotations[image].affordance;
        self.clouds[cloud].to_sample(affordance, &self.vocab, point_count, seed)
    }
}

/// One training unit: an image and the clouds it is paired with this step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairUnit {
    pub image: usize,
    pub clouds: Vec<usize>,
}

fn draw_clouds<R: Rng + ?Sized>(candidates: &[usize], n: usize, rng: &mut R) -> Vec<usize> {
    if candidates.len() >= n {
        candidates.choose_multiple(rng, n).copied().collect()
    } else {
        (0..n).map(|_| *candidates.choose(rng).expect("non-empty candidates")).collect()
    }
}

/// One epoch of pairings in shuffled image order. Each image gets
/// `pairing_n` clouds, drawn without replacement when enough candidates
/// exist and with replacement otherwise.
pub fn sample_pairs<R: Rng + ?Sized>(dataset: &Dataset, pairing_n: usize, rng: &mut R) -> Result<Vec<PairUnit>> {
    if pairing_n == 0 {
        return Err(IagError::Argument("pairing count must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(rng);
    Ok(order
        .into_iter()
        .map(|image| PairUnit {
            image,
            clouds: draw_clouds(&dataset.candidates[image], pairing_n, rng),
        })
        .collect())
}

/// Endless single-consumer stream of [`PairUnit`]s, reshuffled every epoch.
pub struct PairStream<'d, R> {
    dataset: &'d Dataset,
    pairing_n: usize,
    rng: R,
    pending: std::vec::IntoIter<PairUnit>,
    epoch: usize,
}

impl<'d, R: Rng> PairStream<'d, R> {
    pub fn new(dataset: &'d Dataset, pairing_n: usize, rng: R) -> Result<Self> {
        if pairing_n == 0 {
            return Err(IagError::Argument("pairing count must be at least 1".into()));
        }
        if dataset.is_empty() {
            return Err(IagError::Manifest("cannot stream pairs from an empty split".into()));
        }
        Ok(Self {
            dataset,
            pairing_n,
            rng,
            pending: Vec::new().into_iter(),
            epoch: 0,
        })
    }

    /// Number of completed reshuffles.
    pub fn epoch(&self) -> usize {
        self.epoch
    }
}

impl<R: Rng> Iterator for PairStream<'_, R> {
    type Item = PairUnit;

    fn next(&mut self) -> Option<PairUnit> {
        if let Some(unit) = self.pending.next() {
            return Some(unit);
        }
        let units = sample_pairs(self.dataset, self.pairing_n, &mut self.rng).ok()?;
        self.epoch += 1;
        self.pending = units.into_iter();
        self.pending.next()
    }
}
