use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::checkpoint::Checkpoint;
use super::train::prepare_clouds;
use crate::data::{load_pair, resize_image, Dataset, LoadOptions, PiadPair, SplitTag};
use crate::error::Result;
use crate::metrics::{MetricReport, SampleMetrics};
use crate::model::{AffordancePrediction, ModelInput};

/// Scores every image of a split against each of its candidate clouds.
/// Images whose class is unknown to the checkpoint are counted as skipped.
pub fn evaluate(checkpoint: &Checkpoint, dataset: &Dataset) -> Result<MetricReport> {
    let (net, store) = checkpoint.restore()?;
    let model = &checkpoint.config.model;
    let clouds = prepare_clouds(dataset, model, checkpoint.config.seed)?;
    let side = model.image_size as u32;
    let mut jobs = Vec::new();
    let mut skipped = 0;
    for (i, image) in dataset.images.iter().enumerate() {
        let name = &dataset.annotations[i].affordance;
        let Ok(class) = checkpoint.vocabulary.affordance_id(name) else {
            skipped += dataset.candidates[i].len();
            continue;
        };
        let resized = resize_image(image, side, side);
        for &c in &dataset.candidates[i] {
            let gt = clouds[c].target(&dataset.clouds[c], name)?;
            jobs.push((class, ModelInput::new(&resized, clouds[c].hierarchy.clone()), gt));
        }
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} pairs whose affordance is not in the checkpoint vocabulary");
    }
    let samples: Vec<(usize, SampleMetrics)> = jobs
        .par_iter()
        .map(|(class, input, gt)| {
            let pred = net.predict(&store, input)?;
            Ok((*class, SampleMetrics::compute(&pred.heatmap, gt)?))
        })
        .collect::<Result<_>>()?;
    Ok(MetricReport::from_samples(&checkpoint.vocabulary.affordances, &samples, skipped))
}

pub fn evaluate_split(checkpoint: &Checkpoint, root: &Path, split: SplitTag) -> Result<MetricReport> {
    let dataset = Dataset::load(root, split)?;
    evaluate(checkpoint, &dataset)
}

/// Result of running the network on one loaded pair.
#[derive(Clone, Debug, Serialize)]
pub struct Inference {
    #[serde(skip)]
    pub pair: PiadPair,
    pub prediction: AffordancePrediction,
    /// Vocabulary name of the arg-max class.
    pub class_name: String,
}

pub fn infer(checkpoint: &Checkpoint, image: &Path, annotation: &Path, cloud: &Path) -> Result<Inference> {
    let (net, store) = checkpoint.restore()?;
    let options = LoadOptions {
        point_count: checkpoint.config.model.point_count,
        seed: checkpoint.config.seed,
        split: SplitTag::SeenTest,
    };
    let pair = load_pair(image, annotation, cloud, &checkpoint.vocabulary, &options)?;
    let input = ModelInput::prepare(&pair.image, &pair.cloud.coords, &net.config)?;
    let prediction = net.predict(&store, &input)?;
    let class_name = checkpoint.vocabulary.affordances[prediction.class].clone();
    Ok(Inference {
        pair,
        prediction,
        class_name,
    })
}
