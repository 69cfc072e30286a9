//! File formats.
//!
//! * Point file (`*.pts`): UTF-8, LF line endings, one point per line as
//!   whitespace-separated floats `x y z v_1 .. v_K`, where the `K` label
//!   columns are named by the sidecar.
//! * Sidecar (`*.meta.toml`, same stem): `object`, `channels` (names of the
//!   label columns, in order) and `affordances` (what the object affords).
//! * Annotation (`*.toml`): `object`, `affordance`, `box_subject`,
//!   `box_object`, boxes as `[x0, y0, x1, y1]` in pixels.
//! * Image: any 8-bit RGB(A) PNG.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use image::Rgb32FImage;
use serde::{Deserialize, Serialize};

use super::{resample_indices, BBox, InteractionImage, PiadPair, PointCloudSample, SplitTag, Vocabulary};
use crate::backbones::Point3;
use crate::error::{IagError, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CloudMeta {
    pub object: String,
    pub channels: Vec<String>,
    #[serde(default)]
    pub affordances: Vec<String>,
}

impl CloudMeta {
    /// Affordances the object supports; defaults to every labelled channel.
    pub fn afforded(&self) -> &[String] {
        if self.affordances.is_empty() {
            &self.channels
        } else {
            &self.affordances
        }
    }
}

/// A point cloud as stored on disk, with every label channel.
#[derive(Clone, Debug, PartialEq)]
pub struct RawCloud {
    pub coords: Vec<Point3>,
    /// `labels[i][k]` is the score of point `i` for channel `k`.
    pub labels: Vec<Vec<f64>>,
    pub meta: CloudMeta,
}

impl RawCloud {
    pub fn channel(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.meta.channels.iter().position(|c| c == name)?;
        Some(self.labels.iter().map(|row| row[k]).collect())
    }

    /// Selects the channel for `affordance` and resamples to `point_count`.
    pub fn to_sample(
        &self,
        affordance: &str,
        vocab: &Vocabulary,
        point_count: usize,
        seed: u64,
    ) -> Result<PointCloudSample> {
        let object_class = vocab.object_id(&self.meta.object)?;
        let affordances_available = self
            .meta
            .afforded()
            .iter()
            .map(|a| vocab.affordance_id(a))
            .collect::<Result<BTreeSet<_>>>()?;
        let label = self.channel(affordance).ok_or_else(|| {
            IagError::Validation(format!(
                "cloud of `{}` has no label channel for `{affordance}`",
                self.meta.object
            ))
        })?;
        let idx = resample_indices(&self.coords, point_count, seed)?;
        let sample = PointCloudSample {
            coords: idx.iter().map(|&i| self.coords[i]).collect(),
            label: idx.iter().map(|&i| label[i]).collect(),
            object_class,
            affordances_available,
        };
        sample.validate()?;
        Ok(sample)
    }
}

pub fn sidecar_path(cloud_path: &Path) -> PathBuf {
    cloud_path.with_extension("meta.toml")
}

pub fn load_raw_cloud(path: &Path) -> Result<RawCloud> {
    let meta_path = sidecar_path(path);
    let meta_text = std::fs::read_to_string(&meta_path).map_err(|e| IagError::io(&meta_path, e))?;
    let meta: CloudMeta = toml::from_str(&meta_text)
        .map_err(|e| IagError::format(meta_path.display(), "metadata", e.message().to_string()))?;
    let text = std::fs::read_to_string(path).map_err(|e| IagError::io(path, e))?;
    let width = 3 + meta.channels.len();
    let mut coords = Vec::new();
    let mut labels = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let values = line
            .split_whitespace()
            .enumerate()
            .map(|(col, tok)| {
                tok.parse::<f64>().map_err(|_| {
                    IagError::format(path.display(), &format!("line {} column {}", line_no + 1, col + 1), tok)
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != width {
            return Err(IagError::format(
                path.display(),
                &format!("line {}", line_no + 1),
                format!("expected {width} values, found {}", values.len()),
            ));
        }
        coords.push([values[0], values[1], values[2]]);
        labels.push(values[3..].to_vec());
    }
    if coords.is_empty() {
        return Err(IagError::Validation(format!("{} contains no points", path.display())));
    }
    Ok(RawCloud { coords, labels, meta })
}

pub fn save_raw_cloud(path: &Path, cloud: &RawCloud) -> Result<()> {
    let mut text = String::with_capacity(cloud.coords.len() * 48);
    for (p, row) in cloud.coords.iter().zip(&cloud.labels) {
        let _ = write!(text, "{} {} {}", p[0], p[1], p[2]);
        for v in row {
            let _ = write!(text, " {v}");
        }
        text.push('\n');
    }
    write_file(path, text.as_bytes())?;
    let meta = toml::to_string(&cloud.meta).map_err(|e| IagError::Config(e.to_string()))?;
    write_file(&sidecar_path(path), meta.as_bytes())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub object: String,
    pub affordance: String,
    pub box_subject: [f64; 4],
    pub box_object: [f64; 4],
}

pub fn load_annotation(path: &Path) -> Result<Annotation> {
    let text = std::fs::read_to_string(path).map_err(|e| IagError::io(path, e))?;
    let value: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| IagError::format(path.display(), "document", e.message().to_string()))?;
    for key in ["object", "affordance", "box_subject", "box_object"] {
        if !value.contains_key(key) {
            return Err(IagError::format(path.display(), key, "missing"));
        }
    }
    let field_str = |key: &str| -> Result<String> {
        value[key]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| IagError::format(path.display(), key, "expected a string"))
    };
    let field_box = |key: &str| -> Result<[f64; 4]> {
        let arr = value[key]
            .as_array()
            .ok_or_else(|| IagError::format(path.display(), key, "expected [x0, y0, x1, y1]"))?;
        let nums: Vec<f64> = arr
            .iter()
            .filter_map(|v| v.as_float().or_else(|| v.as_integer().map(|i| i as f64)))
            .collect();
        if nums.len() != 4 || arr.len() != 4 {
            return Err(IagError::format(path.display(), key, "expected four numbers"));
        }
        Ok([nums[0], nums[1], nums[2], nums[3]])
    };
    Ok(Annotation {
        object: field_str("object")?,
        affordance: field_str("affordance")?,
        box_subject: field_box("box_subject")?,
        box_object: field_box("box_object")?,
    })
}

pub fn save_annotation(path: &Path, annotation: &Annotation) -> Result<()> {
    let text = toml::to_string(annotation).map_err(|e| IagError::Config(e.to_string()))?;
    write_file(path, text.as_bytes())
}

pub fn load_image(path: &Path) -> Result<Rgb32FImage> {
    let img = image::open(path).map_err(|source| IagError::Image {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(img.to_rgb32f())
}

/// Writes 8-bit RGB; values are clamped to `[0, 1]` and rounded.
pub fn save_image(path: &Path, pixels: &Rgb32FImage) -> Result<()> {
    let rgb8 = image::RgbImage::from_fn(pixels.width(), pixels.height(), |x, y| {
        let p = pixels.get_pixel(x, y);
        image::Rgb(p.0.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8))
    });
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| IagError::io(dir, e))?;
    }
    rgb8.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| IagError::Image {
            path: path.to_path_buf(),
            source,
        })
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| IagError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| IagError::io(path, e))
}

#[derive(Clone, Debug)]
pub struct LoadOptions {
    pub point_count: usize,
    pub seed: u64,
    pub split: SplitTag,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            point_count: 2048,
            seed: 0,
            split: SplitTag::SeenTest,
        }
    }
}

pub(crate) fn image_from_annotation(
    pixels: Rgb32FImage,
    annotation: &Annotation,
    vocab: &Vocabulary,
) -> Result<InteractionImage> {
    let image = InteractionImage {
        pixels,
        box_subject: BBox::from_array(annotation.box_subject),
        box_object: BBox::from_array(annotation.box_object),
        affordance: vocab.affordance_id(&annotation.affordance)?,
    };
    image.validate()?;
    Ok(image)
}

/// Loads and validates one image / cloud pair, selecting the cloud's label
/// channel for the image's affordance.
pub fn load_pair(
    image_path: &Path,
    annotation_path: &Path,
    cloud_path: &Path,
    vocab: &Vocabulary,
    options: &LoadOptions,
) -> Result<PiadPair> {
    let annotation = load_annotation(annotation_path)?;
    let image = image_from_annotation(load_image(image_path)?, &annotation, vocab)?;
    let raw = load_raw_cloud(cloud_path)?;
    if raw.meta.object != annotation.object {
        return Err(IagError::Validation(format!(
            "image shows `{}` but the cloud is a `{}`",
            annotation.object, raw.meta.object
        )));
    }
    if !raw.meta.afforded().contains(&annotation.affordance) {
        return Err(IagError::Validation(format!(
            "`{}` does not afford `{}`",
            raw.meta.object, annotation.affordance
        )));
    }
    let cloud = raw.to_sample(&annotation.affordance, vocab, options.point_count, options.seed)?;
    let pair = PiadPair {
        image,
        cloud,
        split: options.split,
    };
    pair.validate()?;
    Ok(pair)
}
