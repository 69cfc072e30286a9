//! The full network: encoders, region extraction, alignment, affordance
//! revealing and decoding, with every intermediate exposed.

use std::sync::Arc;

use image::Rgb32FImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arm::{AffordanceFeature, Arm, ArmTrace, ProjectionVariant};
use crate::backbones::{
    build_hierarchy, image_to_matrix, GridVar, ImageEncoder, ImageEncoderConfig, Point3, PointEncoder,
    PointEncoderConfig, PointFeatureSeq, PointHierarchy, RegionVars,
};
use crate::data::{resize_image, BBox, InteractionImage};
use crate::decoder::{split_features, Decoder, SplitFeatures};
use crate::error::{IagError, Result};
use crate::graph::{Graph, Var};
use crate::jra::{AttentionConfig, JointFeature, Jra, JraTrace};
use crate::losses::{ce_var, focal_dice_var, kl_var, total_var, LossConfig, LossVars};
use crate::nn::ParamStore;
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArmConfig {
    pub projection_variant: ProjectionVariant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Width `C` of the aligned and affordance sequences.
    pub channels: usize,
    pub point_count: usize,
    /// Square input side in pixels.
    pub image_size: usize,
    /// ROI-Align output side; `N_i = roi_size^2`.
    pub roi_size: usize,
    pub image: ImageEncoderConfig,
    pub point: PointEncoderConfig,
    pub jra: AttentionConfig,
    pub arm: ArmConfig,
    /// When false, the joint sequence is the plain concatenation of the
    /// projected regions.
    pub use_jra: bool,
    /// When false, the affordance sequence is the joint sequence itself.
    pub use_arm: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ModelConfig {
    pub fn desk() -> Self {
        Self {
            channels: 64,
            point_count: 512,
            image_size: 64,
            roi_size: 2,
            image: ImageEncoderConfig::default(),
            point: PointEncoderConfig::default(),
            jra: AttentionConfig::default(),
            arm: ArmConfig::default(),
            use_jra: true,
            use_arm: true,
        }
    }

    pub fn full() -> Self {
        Self {
            channels: 512,
            point_count: 2048,
            image_size: 224,
            roi_size: 4,
            image: ImageEncoderConfig {
                widths: vec![64, 128, 256, 512, 512],
                bias: true,
            },
            point: PointEncoderConfig {
                centers: vec![512, 128, 64],
                radii: vec![0.1, 0.2, 0.4],
                neighbor_cap: 32,
                mlps: vec![vec![64, 64, 128], vec![128, 128, 256], vec![256, 512, 512]],
            },
            jra: AttentionConfig::default(),
            arm: ArmConfig::default(),
            use_jra: true,
            use_arm: true,
        }
    }

    /// Minimal dimensions for checks and unit tests.
    pub fn tiny() -> Self {
        Self {
            channels: 8,
            point_count: 24,
            image_size: 16,
            roi_size: 2,
            image: ImageEncoderConfig {
                widths: vec![4, 6],
                bias: true,
            },
            point: PointEncoderConfig {
                centers: vec![12, 6, 3],
                radii: vec![0.4, 0.6, 1.0],
                neighbor_cap: 6,
                mlps: vec![vec![5], vec![6], vec![6]],
            },
            jra: AttentionConfig { heads: 2, ffn_mult: 2 },
            arm: ArmConfig::default(),
            use_jra: true,
            use_arm: true,
        }
    }

    /// Channel count of the raw region features fed to the projection.
    pub fn region_channels(&self) -> usize {
        self.point.out_channels()
    }

    pub fn image_regions(&self) -> usize {
        self.roi_size * self.roi_size
    }

    pub fn point_regions(&self) -> usize {
        *self.point.centers.last().unwrap_or(&0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(IagError::Config(m));
        self.point.validate().map_err(|e| IagError::Config(e.to_string()))?;
        if self.channels == 0 || self.jra.heads == 0 || self.channels % self.jra.heads != 0 {
            return bad(format!("channels {} must be a positive multiple of heads {}", self.channels, self.jra.heads));
        }
        if self.jra.ffn_mult == 0 || self.roi_size == 0 {
            return bad("ffn_mult and roi_size must be positive".into());
        }
        if self.image.widths.is_empty() {
            return bad("image encoder needs at least one block".into());
        }
        let img_c = *self.image.widths.last().unwrap_or(&0);
        if img_c != self.region_channels() {
            return bad(format!(
                "image encoder ends with {img_c} channels but the point encoder with {}",
                self.region_channels()
            ));
        }
        if self.image_size < (1 << self.image.widths.len()) {
            return bad(format!("image_size {} is below the encoder stride", self.image_size));
        }
        if self.point_count < self.point.centers[0] {
            return bad(format!(
                "point_count {} is below the first abstraction width {}",
                self.point_count, self.point.centers[0]
            ));
        }
        Ok(())
    }
}

/// Everything the network consumes for one image / cloud pair.
#[derive(Clone, Debug)]
pub struct ModelInput {
    /// `3 x (H*W)` pixels in `[0, 1]`.
    pub pixels: Matrix,
    pub height: usize,
    pub width: usize,
    pub box_subject: BBox,
    pub box_object: BBox,
    pub hierarchy: Arc<PointHierarchy>,
}

impl ModelInput {
    /// Uses the image as given; it must already be at the model's size.
    pub fn new(image: &InteractionImage, hierarchy: Arc<PointHierarchy>) -> Self {
        Self {
            pixels: image_to_matrix(&image.pixels),
            height: image.height() as usize,
            width: image.width() as usize,
            box_subject: image.box_subject,
            box_object: image.box_object,
            hierarchy,
        }
    }

    /// Resizes the image to the configured size and builds the cloud hierarchy.
    pub fn prepare(image: &InteractionImage, coords: &[Point3], config: &ModelConfig) -> Result<Self> {
        let side = config.image_size as u32;
        let resized = if image.pixels.dimensions() == (side, side) {
            image.clone()
        } else {
            resize_image(image, side, side)
        };
        let hierarchy = build_hierarchy(coords, &config.point)?;
        Ok(Self::new(&resized, Arc::new(hierarchy)))
    }
}

/// Handles to every intermediate of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub grid: GridVar,
    pub regions: RegionVars,
    pub points: PointFeatureSeq,
    pub p: Var,
    pub i: Var,
    pub jra: Option<JraTrace>,
    pub joint: JointFeature,
    pub arm: Option<ArmTrace>,
    pub affordance: AffordanceFeature,
    pub split: SplitFeatures,
    pub upsampled: Var,
    /// `1 x N` per-point scores in `(0, 1)`.
    pub heatmap: Var,
    /// `K x 1` class logits.
    pub logits: Var,
}

/// Per-point heatmap and class logits for one pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffordancePrediction {
    pub heatmap: Vec<f64>,
    pub logits: Vec<f64>,
    pub class: usize,
}

impl AffordancePrediction {
    pub fn from_trace(g: &Graph, trace: &ForwardTrace) -> Self {
        let logits = g.value(trace.logits).as_slice().to_vec();
        let class = logits
            .iter()
            .enumerate()
            .fold(0, |best, (k, v)| if *v > logits[best] { k } else { best });
        Self {
            heatmap: g.value(trace.heatmap).as_slice().to_vec(),
            logits,
            class,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Network {
    pub config: ModelConfig,
    pub num_classes: usize,
    pub image: ImageEncoder,
    pub point: PointEncoder,
    pub jra: Jra,
    pub arm: Arm,
    pub decoder: Decoder,
}

impl Network {
    /// Builds the layer structure and a freshly initialised parameter store.
    pub fn new(config: &ModelConfig, num_classes: usize, seed: u64) -> Result<(Self, ParamStore)> {
        config.validate()?;
        if num_classes == 0 {
            return Err(IagError::Config("the affordance vocabulary is empty".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let image = ImageEncoder::new(&mut store, "image", &config.image, &mut rng);
        let point = PointEncoder::new(&mut store, "point", &config.point, &mut rng)?;
        let c = config.channels;
        let jra = Jra::new(&mut store, "jra", config.region_channels(), c, &config.jra, &mut rng);
        let arm = Arm::new(&mut store, "arm", c, config.region_channels(), config.arm.projection_variant, &mut rng);
        let level_channels: Vec<usize> = (0..config.point.centers.len()).map(|l| point.level_channels(l)).collect();
        let decoder = Decoder::new(&mut store, "decoder", c, num_classes, &level_channels, &mut rng);
        Ok((
            Self {
                config: config.clone(),
                num_classes,
                image,
                point,
                jra,
                arm,
                decoder,
            },
            store,
        ))
    }

    pub fn forward(&self, g: &mut Graph, input: &ModelInput) -> Result<ForwardTrace> {
        let pixels = g.input(input.pixels.clone());
        let grid = self.image.forward(g, pixels, input.height, input.width)?;
        let roi = (self.config.roi_size, self.config.roi_size);
        let regions = RegionVars::extract(g, &grid, &input.box_object, &input.box_subject, roi)?;
        let points = self.point.forward(g, &input.hierarchy)?;
        let f_p = points.deepest();

        let (p, i, jra, joint) = if self.config.use_jra {
            let t = self.jra.forward(g, f_p, regions.f_obj)?;
            (t.p, t.i, Some(t.clone()), t.joint)
        } else {
            let (p, i) = self.jra.project_shared(g, f_p, regions.f_obj)?;
            let split_index = g.shape(p).1;
            let values = g.concat_cols(&[p, i]);
            (p, i, None, JointFeature { values, split_index })
        };

        let (arm, affordance) = if self.config.use_arm {
            let t = self.arm.reveal_affordance(g, &joint, regions.f_sub, regions.f_sce)?;
            (Some(t), t.affordance)
        } else {
            (
                None,
                AffordanceFeature {
                    values: joint.values,
                    split_index: joint.split_index,
                },
            )
        };

        let split = split_features(g, &joint, &affordance)?;
        let logits = self.decoder.classify_affordance(g, split.f_p_alpha, split.f_i_alpha)?;
        let upsampled = self.decoder.propagate_features(g, split.f_p_hat, &input.hierarchy, &points)?;
        let heatmap = self.decoder.predict_heatmap(g, upsampled, split.f_p_alpha)?;
        Ok(ForwardTrace {
            grid,
            regions,
            points,
            p,
            i,
            jra,
            joint,
            arm,
            affordance,
            split,
            upsampled,
            heatmap,
            logits,
        })
    }

    /// The three loss terms of one pair and their weighted total.
    pub fn loss(
        &self,
        g: &mut Graph,
        trace: &ForwardTrace,
        target: &Arc<Matrix>,
        class: usize,
        config: &LossConfig,
    ) -> Result<LossVars> {
        let l_ce = ce_var(g, trace.logits, class)?;
        let l_kl = kl_var(g, trace.split.f_i_alpha, trace.split.f_i_hat, config.eps_kl)?;
        let l_hm = focal_dice_var(g, trace.heatmap, target, config)?;
        Ok(total_var(g, l_ce, l_kl, l_hm, config.weights()))
    }

    pub fn predict(&self, store: &ParamStore, input: &ModelInput) -> Result<AffordancePrediction> {
        let mut g = Graph::with_params(store);
        let trace = self.forward(&mut g, input)?;
        Ok(AffordancePrediction::from_trace(&g, &trace))
    }

    /// Convenience: predict directly from an image and raw coordinates.
    pub fn predict_pair(
        &self,
        store: &ParamStore,
        pixels: &Rgb32FImage,
        box_subject: BBox,
        box_object: BBox,
        coords: &[Point3],
    ) -> Result<AffordancePrediction> {
        let image = InteractionImage {
            pixels: pixels.clone(),
            box_subject,
            box_object,
            affordance: 0,
        };
        let input = ModelInput::prepare(&image, coords, &self.config)?;
        self.predict(store, &input)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn input(config: &ModelConfig, rng: &mut ChaCha8Rng) -> ModelInput {
        let side = config.image_size as u32;
        let pixels = Rgb32FImage::from_fn(side, side, |_, _| image::Rgb([rng.gen(), rng.gen(), rng.gen()]));
        let image = InteractionImage {
            pixels,
            box_subject: BBox::new(1.0, 2.0, 9.0, 12.0),
            box_object: BBox::new(5.0, 4.0, 15.0, 15.0),
            affordance: 0,
        };
        let coords: Vec<Point3> = (0..config.point_count)
            .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        ModelInput::prepare(&image, &coords, config).unwrap()
    }

    #[test]
    fn forward_shapes_follow_the_config() {
        let cfg = ModelConfig::tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (net, store) = Network::new(&cfg, 3, 1).unwrap();
        let inp = input(&cfg, &mut rng);
        let mut g = Graph::with_params(&store);
        let t = net.forward(&mut g, &inp).unwrap();
        assert_eq!(g.shape(t.joint.values), (8, 7));
        assert_eq!(g.shape(t.heatmap), (1, 24));
        assert_eq!(g.shape(t.logits), (3, 1));
        assert!(g.value(t.heatmap).as_slice().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn baseline_skips_both_modules() {
        let cfg = ModelConfig {
            use_jra: false,
            use_arm: false,
            ..ModelConfig::tiny()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (net, store) = Network::new(&cfg, 3, 1).unwrap();
        let inp = input(&cfg, &mut rng);
        let mut g = Graph::with_params(&store);
        let t = net.forward(&mut g, &inp).unwrap();
        assert!(t.jra.is_none() && t.arm.is_none());
        assert_eq!(t.affordance.values, t.joint.values);
    }

    #[test]
    fn mismatched_encoders_are_rejected() {
        let mut cfg = ModelConfig::tiny();
        cfg.image.widths = vec![4, 7];
        assert!(matches!(Network::new(&cfg, 3, 0), Err(IagError::Config(_))));
    }
}
