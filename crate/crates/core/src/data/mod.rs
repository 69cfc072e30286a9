//! Paired image / point-cloud samples: on-disk formats, loading and
//! validation, resampling, augmentation, online pairing and a synthetic
//! dataset generator.

mod augment;
mod format;
mod pairing;
mod resample;
pub mod synthetic;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use image::Rgb32FImage;
use serde::{Deserialize, Serialize};

use crate::backbones::Point3;
use crate::error::{IagError, Result};

pub use augment::{random_crop_resize, resize_image, CropRect, MIN_CROP_AREA_FRACTION};
pub use format::{
    load_annotation, load_image, load_pair, load_raw_cloud, save_annotation, save_image, save_raw_cloud,
    Annotation, CloudMeta, LoadOptions, RawCloud,
};
pub(crate) use format::write_file;
pub use pairing::{sample_pairs, Dataset, PairStream, PairUnit};
pub use resample::{resample_indices, resample_points};

/// Pixel-space box `(x0, y0, x1, y1)` with `x0 < x1`, `y0 < y1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn full(width: u32, height: u32) -> Self {
        Self::new(0.0, 0.0, width as f64, height as f64)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox::new(
            self.x0.min(other.x0),
            self.y0.min(other.y0),
            self.x1.max(other.x1),
            self.y1.max(other.y1),
        )
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }

    pub fn is_well_formed(&self) -> bool {
        [self.x0, self.y0, self.x1, self.y1].iter().all(|v| v.is_finite()) && self.x0 < self.x1 && self.y0 < self.y1
    }

    pub fn fits_in(&self, width: u32, height: u32) -> bool {
        self.x0 >= 0.0 && self.y0 >= 0.0 && self.x1 <= width as f64 && self.y1 <= height as f64
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x0, self.y0, self.x1, self.y1]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }
}

/// Benchmark partition of a manifest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SplitTag {
    #[serde(rename = "seen-train")]
    SeenTrain,
    #[serde(rename = "seen-test")]
    SeenTest,
    #[serde(rename = "unseen-train")]
    UnseenTrain,
    #[serde(rename = "unseen-test")]
    UnseenTest,
    #[serde(rename = "unseen2-train")]
    Unseen2Train,
    #[serde(rename = "unseen2-test")]
    Unseen2Test,
}

impl SplitTag {
    pub const ALL: [SplitTag; 6] = [
        SplitTag::SeenTrain,
        SplitTag::SeenTest,
        SplitTag::UnseenTrain,
        SplitTag::UnseenTest,
        SplitTag::Unseen2Train,
        SplitTag::Unseen2Test,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::SeenTrain => "seen-train",
            SplitTag::SeenTest => "seen-test",
            SplitTag::UnseenTrain => "unseen-train",
            SplitTag::UnseenTest => "unseen-test",
            SplitTag::Unseen2Train => "unseen2-train",
            SplitTag::Unseen2Test => "unseen2-test",
        }
    }

    pub fn is_train(self) -> bool {
        matches!(self, SplitTag::SeenTrain | SplitTag::UnseenTrain | SplitTag::Unseen2Train)
    }
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitTag {
    type Err = IagError;

    fn from_str(s: &str) -> Result<Self> {
        SplitTag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| IagError::Argument(format!("unknown split `{s}`")))
    }
}

/// Dense affordance and object vocabularies (index = class id).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub affordances: Vec<String>,
    pub objects: Vec<String>,
}

impl Vocabulary {
    pub fn new(affordances: Vec<String>, objects: Vec<String>) -> Result<Self> {
        let v = Self { affordances, objects };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        for (kind, names) in [("affordance", &self.affordances), ("object", &self.objects)] {
            let unique: BTreeSet<&String> = names.iter().collect();
            if unique.len() != names.len() {
                return Err(IagError::Validation(format!("duplicate {kind} names in vocabulary")));
            }
            if names.is_empty() {
                return Err(IagError::Validation(format!("empty {kind} vocabulary")));
            }
        }
        Ok(())
    }

    pub fn affordance_id(&self, name: &str) -> Result<usize> {
        self.affordances
            .iter()
            .position(|a| a == name)
            .ok_or_else(|| IagError::Vocabulary {
                kind: "affordance",
                name: name.to_string(),
            })
    }

    pub fn object_id(&self, name: &str) -> Result<usize> {
        self.objects
            .iter()
            .position(|a| a == name)
            .ok_or_else(|| IagError::Vocabulary {
                kind: "object",
                name: name.to_string(),
            })
    }

    pub fn num_affordances(&self) -> usize {
        self.affordances.len()
    }
}

/// A point cloud reduced to a single affordance channel.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloudSample {
    pub coords: Vec<Point3>,
    /// Per-point score in `[0, 1]` for the selected affordance.
    pub label: Vec<f64>,
    pub object_class: usize,
    pub affordances_available: BTreeSet<usize>,
}

impl PointCloudSample {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.coords.len() != self.label.len() {
            return Err(IagError::Validation(format!(
                "{} coordinates but {} labels",
                self.coords.len(),
                self.label.len()
            )));
        }
        if let Some(i) = self.coords.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(IagError::Validation(format!("non-finite coordinate at point {i}")));
        }
        if let Some(i) = self.label.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(IagError::Validation(format!("label {} at point {i} outside [0, 1]", self.label[i])));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct InteractionImage {
    /// RGB in `[0, 1]`.
    pub pixels: Rgb32FImage,
    pub box_subject: BBox,
    pub box_object: BBox,
    pub affordance: usize,
}

impl InteractionImage {
    pub fn width(&self) -> u32 {
        self.pixels.width()
    }

    pub fn height(&self) -> u32 {
        self.pixels.height()
    }

    pub fn validate(&self) -> Result<()> {
        let (w, h) = (self.width(), self.height());
        for (name, b) in [("box_subject", self.box_subject), ("box_object", self.box_object)] {
            if !b.is_well_formed() {
                return Err(IagError::Validation(format!("{name} {:?} is degenerate", b.to_array())));
            }
            if !b.fits_in(w, h) {
                return Err(IagError::Validation(format!(
                    "{name} {:?} exceeds the {w}x{h} image",
                    b.to_array()
                )));
            }
        }
        if self.pixels.as_raw().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(IagError::Validation("pixel values outside [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct PiadPair {
    pub image: InteractionImage,
    pub cloud: PointCloudSample,
    pub split: SplitTag,
}

impl PiadPair {
    pub fn validate(&self) -> Result<()> {
        self.image.validate()?;
        self.cloud.validate()?;
        if !self.cloud.affordances_available.contains(&self.image.affordance) {
            return Err(IagError::Validation(format!(
                "image affordance {} is not afforded by the paired cloud",
                self.image.affordance
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image: String,
    pub annotation: String,
    pub clouds: Vec<String>,
}

/// Index of one split, stored as `splits/<split>.toml` under the dataset
/// root. All paths are relative to the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub split: SplitTag,
    pub affordances: Vec<String>,
    pub objects: Vec<String>,
    #[serde(rename = "entry", default)]
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn vocabulary(&self) -> Result<Vocabulary> {
        Vocabulary::new(self.affordances.clone(), self.objects.clone())
    }

    pub fn path_for(root: &std::path::Path, split: SplitTag) -> std::path::PathBuf {
        root.join("splits").join(format!("{split}.toml"))
    }

    pub fn load(root: &std::path::Path, split: SplitTag) -> Result<Self> {
        let path = Self::path_for(root, split);
        let text = std::fs::read_to_string(&path).map_err(|e| IagError::io(&path, e))?;
        let manifest: DatasetManifest =
            toml::from_str(&text).map_err(|e| IagError::format(path.display(), "manifest", e.to_string()))?;
        if manifest.split != split {
            return Err(IagError::Manifest(format!(
                "{} declares split {} but was loaded as {split}",
                path.display(),
                manifest.split
            )));
        }
        manifest.vocabulary()?;
        for entry in &manifest.entries {
            for rel in std::iter::once(&entry.image).chain([&entry.annotation]).chain(&entry.clouds) {
                if !root.join(rel).exists() {
                    return Err(IagError::Manifest(format!("missing file {rel} listed in {split}")));
                }
            }
            if entry.clouds.is_empty() {
                return Err(IagError::Manifest(format!("image {} has no candidate clouds", entry.image)));
            }
        }
        Ok(manifest)
    }

    pub fn save(&self, root: &std::path::Path) -> Result<()> {
        let path = Self::path_for(root, self.split);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| IagError::io(dir, e))?;
        }
        let text = toml::to_string(self).map_err(|e| IagError::Config(e.to_string()))?;
        std::fs::write(&path, text).map_err(|e| IagError::io(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_tags_round_trip_through_strings() {
        for tag in SplitTag::ALL {
            assert_eq!(tag.as_str().parse::<SplitTag>().unwrap(), tag);
        }
        assert!("seen".parse::<SplitTag>().is_err());
    }

    #[test]
    fn vocabulary_lookup_errors_name_the_class() {
        let v = Vocabulary::new(vec!["grasp".into(), "sit".into()], vec!["mug".into()]).unwrap();
        assert_eq!(v.affordance_id("sit").unwrap(), 1);
        let err = v.affordance_id("fly").unwrap_err();
        assert!(err.to_string().contains("fly"));
        assert!(Vocabulary::new(vec!["a".into(), "a".into()], vec!["o".into()]).is_err());
    }

    #[test]
    fn box_checks() {
        assert!(BBox::new(0.0, 0.0, 1.0, 1.0).is_well_formed());
        assert!(!BBox::new(1.0, 0.0, 1.0, 1.0).is_well_formed());
        assert!(!BBox::new(0.0, 0.0, 11.0, 1.0).fits_in(10, 10));
        let u = BBox::new(1.0, 2.0, 3.0, 4.0).union(&BBox::new(0.0, 3.0, 2.0, 6.0));
        assert_eq!(u, BBox::new(0.0, 2.0, 3.0, 6.0));
    }
}
