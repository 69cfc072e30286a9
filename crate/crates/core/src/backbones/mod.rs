//! Image and point-cloud encoders plus region extraction.

mod fps;
mod image;
mod point;

pub use self::image::{
    conv_im2col_index, extract_regions, image_to_matrix, roi_align, roi_align_mix, scene_mask, ConvBlock,
    GridVar, ImageEncoder, ImageEncoderConfig, ImageFeatureGrid, RegionFeatureSet, RegionVars, ROI_SUBSAMPLES,
};
pub use fps::{centroid, farthest_point_sample, squared_distance, start_index, Point3, StartRule};
pub use point::{
    build_hierarchy, LevelGeometry, PointEncoder, PointEncoderConfig, PointFeatureSeq, PointHierarchy,
    SetAbstraction,
};
