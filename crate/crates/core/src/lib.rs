//! Interaction-driven 3D affordance grounding: a point-cloud and image
//! network with joint region alignment and an affordance-revealing
//! cross-attention module, plus data tooling, losses, metrics and a
//! training harness.

pub mod arm;
pub mod backbones;
pub mod config;
pub mod data;
pub mod decoder;
pub mod error;
pub mod graph;
pub mod harness;
pub mod jra;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod oracle;
pub mod tensor;

pub use arm::ProjectionVariant;
pub use config::{Accumulation, TrainConfig};
pub use data::{BBox, Dataset, InteractionImage, PiadPair, PointCloudSample, SplitTag, Vocabulary};
pub use error::{IagError, Result};
pub use harness::{evaluate, export_heatmap, infer, train, Checkpoint, EpochLog};
pub use losses::{LossBreakdown, LossConfig, LossWeights};
pub use metrics::{MetricReport, SampleMetrics};
pub use model::{AffordancePrediction, ModelConfig, ModelInput, Network};
pub use tensor::Matrix;
