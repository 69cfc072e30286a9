//! Fixtures shared by the benchmarks.

use iag_core::data::synthetic::{make_cloud, render_image, Family, Instance};
use iag_core::nn::ParamStore;
use iag_core::{BBox, InteractionImage, ModelConfig, ModelInput, Network, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A freshly initialised network and one synthetic mug pair at `config`.
pub fn fixture(config: &ModelConfig, seed: u64) -> Result<(Network, ParamStore, ModelInput)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let instance = Instance::random(Family::Mug, &mut rng);
    let cloud = make_cloud(&instance, config.point_count, &mut rng);
    let (pixels, annotation) = render_image(&instance, "grasp", config.image_size as u32, &mut rng);
    let image = InteractionImage {
        pixels,
        box_subject: BBox::from_array(annotation.box_subject),
        box_object: BBox::from_array(annotation.box_object),
        affordance: 0,
    };
    let input = ModelInput::prepare(&image, &cloud.coords, config)?;
    let (net, store) = Network::new(config, 3, seed)?;
    Ok((net, store, input))
}
