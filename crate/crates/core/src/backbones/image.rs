use std::sync::Arc;

use image::Rgb32FImage;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::BBox;
use crate::error::{arg_err, Result};
use crate::graph::{ColumnMix, Graph, Var};
use crate::nn::{he, ParamId, ParamStore};
use crate::tensor::Matrix;

/// Sub-bin samples per axis inside each ROI bin.
pub const ROI_SUBSAMPLES: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImageEncoderConfig {
    /// Output channels of each stride-2 3x3 block.
    pub widths: Vec<usize>,
    pub bias: bool,
}

impl Default for ImageEncoderConfig {
    fn default() -> Self {
        Self {
            widths: vec![16, 32, 64, 64],
            bias: true,
        }
    }
}

/// Flattens an RGB image to a `3 x (H*W)` channels-first matrix.
pub fn image_to_matrix(pixels: &Rgb32FImage) -> Matrix {
    let (w, h) = pixels.dimensions();
    let n = (w * h) as usize;
    let mut m = Matrix::zeros(3, n);
    for (x, y, p) in pixels.enumerate_pixels() {
        let col = (y * w + x) as usize;
        for c in 0..3 {
            m[(c, col)] = p.0[c] as f64;
        }
    }
    m
}

/// im2col gather for a 3x3, stride-2, pad-1 convolution over a
/// `channels x (h*w)` input. Row `ci*9 + ky*3 + kx`, column `oy*ow + ox`.
pub fn conv_im2col_index(channels: usize, h: usize, w: usize) -> (Arc<Vec<Option<usize>>>, usize, usize) {
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let mut index = Vec::with_capacity(channels * 9 * oh * ow);
    for ci in 0..channels {
        for ky in 0..3 {
            for kx in 0..3 {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let iy = (2 * oy + ky) as isize - 1;
                        let ix = (2 * ox + kx) as isize - 1;
                        let inside = iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w;
                        index.push(inside.then(|| ci * h * w + iy as usize * w + ix as usize));
                    }
                }
            }
        }
    }
    (Arc::new(index), oh, ow)
}

#[derive(Clone, Debug)]
pub struct ConvBlock {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl ConvBlock {
    fn forward(&self, g: &mut Graph, x: Var, h: usize, w: usize) -> (Var, usize, usize) {
        let (index, oh, ow) = conv_im2col_index(self.in_channels, h, w);
        let cols = g.gather(x, self.in_channels * 9, oh * ow, index);
        let weight = g.param(self.weight);
        let mut y = g.matmul(weight, cols);
        if let Some(b) = self.bias {
            let b = g.param(b);
            y = g.add_column(y, b);
        }
        (g.relu(y), oh, ow)
    }
}

/// Stack of stride-2 3x3 conv + ReLU blocks.
#[derive(Clone, Debug)]
pub struct ImageEncoder {
    pub blocks: Vec<ConvBlock>,
}

/// A feature grid living on a graph tape.
#[derive(Clone, Copy, Debug)]
pub struct GridVar {
    pub var: Var,
    pub height: usize,
    pub width: usize,
    pub stride_y: f64,
    pub stride_x: f64,
}

/// `C x (H'*W')` feature grid (row-major cells) with its pixel stride.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageFeatureGrid {
    pub values: Matrix,
    pub height: usize,
    pub width: usize,
    pub stride_y: f64,
    pub stride_x: f64,
}

impl ImageFeatureGrid {
    pub fn from_graph(g: &Graph, grid: &GridVar) -> Self {
        Self {
            values: g.value(grid.var).clone(),
            height: grid.height,
            width: grid.width,
            stride_y: grid.stride_y,
            stride_x: grid.stride_x,
        }
    }

    pub fn channels(&self) -> usize {
        self.values.rows()
    }
}

impl ImageEncoder {
    pub fn new(store: &mut ParamStore, name: &str, config: &ImageEncoderConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut in_c = 3;
        let blocks = config
            .widths
            .iter()
            .enumerate()
            .map(|(i, &out_c)| {
                let weight = store.add(format!("{name}.conv{i}.weight"), he(out_c, in_c * 9, rng));
                let bias = config
                    .bias
                    .then(|| store.add(format!("{name}.conv{i}.bias"), Matrix::zeros(out_c, 1)));
                let block = ConvBlock {
                    weight,
                    bias,
                    in_channels: in_c,
                    out_channels: out_c,
                };
                in_c = out_c;
                block
            })
            .collect();
        Self { blocks }
    }

    pub fn out_channels(&self) -> usize {
        self.blocks.last().map_or(3, |b| b.out_channels)
    }

    /// Total downsampling factor per axis.
    pub fn total_stride(&self) -> usize {
        1 << self.blocks.len()
    }

    /// Encodes a `3 x (h*w)` pixel matrix.
    pub fn forward(&self, g: &mut Graph, pixels: Var, h: usize, w: usize) -> Result<GridVar> {
        let stride = self.total_stride();
        if h < stride || w < stride {
            return arg_err(format!("image {w}x{h} is smaller than the encoder stride {stride}"));
        }
        if g.shape(pixels) != (3, h * w) {
            return arg_err(format!("pixel matrix {:?} does not match 3x{}", g.shape(pixels), h * w));
        }
        let (mut x, mut ch, mut cw) = (pixels, h, w);
        for block in &self.blocks {
            (x, ch, cw) = block.forward(g, x, ch, cw);
        }
        Ok(GridVar {
            var: x,
            height: ch,
            width: cw,
            stride_y: h as f64 / ch as f64,
            stride_x: w as f64 / cw as f64,
        })
    }

    /// Convenience evaluation outside of training.
    pub fn encode(&self, store: &ParamStore, pixels: &Rgb32FImage) -> Result<ImageFeatureGrid> {
        let mut g = Graph::with_params(store);
        let (w, h) = pixels.dimensions();
        let x = g.input(image_to_matrix(pixels));
        let grid = self.forward(&mut g, x, h as usize, w as usize)?;
        Ok(ImageFeatureGrid::from_graph(&g, &grid))
    }
}

/// Grid cells whose centre pixel falls inside any of `boxes`.
pub fn scene_mask(height: usize, width: usize, stride_y: f64, stride_x: f64, boxes: &[BBox]) -> Vec<bool> {
    let mut mask = Vec::with_capacity(height * width);
    for i in 0..height {
        for j in 0..width {
            let (px, py) = ((j as f64 + 0.5) * stride_x, (i as f64 + 0.5) * stride_y);
            mask.push(boxes.iter().any(|b| b.contains_point(px, py)));
        }
    }
    mask
}

/// ROI-Align as constant column-mixing weights from grid cells to the
/// `out_h * out_w` bins. Cells flagged in `masked` contribute zero.
#[allow(clippy::too_many_arguments)]
pub fn roi_align_mix(
    height: usize,
    width: usize,
    stride_y: f64,
    stride_x: f64,
    bbox: &BBox,
    out_hw: (usize, usize),
    masked: Option<&[bool]>,
) -> Result<ColumnMix> {
    let (out_h, out_w) = out_hw;
    if !(bbox.width() > 0.0 && bbox.height() > 0.0) {
        return arg_err(format!("degenerate ROI box {bbox:?}"));
    }
    if out_h == 0 || out_w == 0 {
        return arg_err("ROI output size must be positive");
    }
    let (bin_h, bin_w) = (bbox.height() / out_h as f64, bbox.width() / out_w as f64);
    let s = ROI_SUBSAMPLES;
    let share = 1.0 / (s * s) as f64;
    let axis = |pixel: f64, stride: f64, size: usize| -> [(usize, f64); 2] {
        let g = (pixel / stride - 0.5).clamp(0.0, (size - 1) as f64);
        let lo = g.floor() as usize;
        let hi = (lo + 1).min(size - 1);
        let t = g - lo as f64;
        [(lo, 1.0 - t), (hi, t)]
    };
    let mut entries = Vec::with_capacity(out_h * out_w);
    for by in 0..out_h {
        for bx in 0..out_w {
            let mut acc: Vec<(usize, f64)> = Vec::new();
            for sy in 0..s {
                let py = bbox.y0 + (by as f64 + (sy as f64 + 0.5) / s as f64) * bin_h;
                for sx in 0..s {
                    let px = bbox.x0 + (bx as f64 + (sx as f64 + 0.5) / s as f64) * bin_w;
                    for (iy, wy) in axis(py, stride_y, height) {
                        for (ix, wx) in axis(px, stride_x, width) {
                            let cell = iy * width + ix;
                            let w = wy * wx * share;
                            if w == 0.0 || masked.is_some_and(|m| m[cell]) {
                                continue;
                            }
                            match acc.iter_mut().find(|(c, _)| *c == cell) {
                                Some(e) => e.1 += w,
                                None => acc.push((cell, w)),
                            }
                        }
                    }
                }
            }
            acc.sort_by_key(|e| e.0);
            entries.push(acc);
        }
    }
    Ok(ColumnMix {
        input_cols: height * width,
        entries,
    })
}

/// ROI-Align of a plain grid to `C x (out_h*out_w)`.
pub fn roi_align(grid: &ImageFeatureGrid, bbox: &BBox, out_hw: (usize, usize)) -> Result<Matrix> {
    let mix = roi_align_mix(grid.height, grid.width, grid.stride_y, grid.stride_x, bbox, out_hw, None)?;
    Ok(mix.apply(&grid.values))
}

/// Object, subject and scene region features, each `C x N_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionFeatureSet {
    pub f_obj: Matrix,
    pub f_sub: Matrix,
    pub f_sce: Matrix,
}

#[derive(Clone, Copy, Debug)]
pub struct RegionVars {
    pub f_obj: Var,
    pub f_sub: Var,
    pub f_sce: Var,
}

fn region_mixes(
    height: usize,
    width: usize,
    stride_y: f64,
    stride_x: f64,
    box_obj: &BBox,
    box_sub: &BBox,
    out_hw: (usize, usize),
) -> Result<[ColumnMix; 3]> {
    let mask = scene_mask(height, width, stride_y, stride_x, &[*box_obj, *box_sub]);
    let full = BBox::new(0.0, 0.0, width as f64 * stride_x, height as f64 * stride_y);
    Ok([
        roi_align_mix(height, width, stride_y, stride_x, box_obj, out_hw, None)?,
        roi_align_mix(height, width, stride_y, stride_x, box_sub, out_hw, None)?,
        roi_align_mix(height, width, stride_y, stride_x, &full, out_hw, Some(&mask))?,
    ])
}

impl RegionVars {
    pub fn extract(g: &mut Graph, grid: &GridVar, box_obj: &BBox, box_sub: &BBox, out_hw: (usize, usize)) -> Result<Self> {
        let [obj, sub, sce] = region_mixes(grid.height, grid.width, grid.stride_y, grid.stride_x, box_obj, box_sub, out_hw)?;
        Ok(Self {
            f_obj: g.mix_cols(grid.var, Arc::new(obj)),
            f_sub: g.mix_cols(grid.var, Arc::new(sub)),
            f_sce: g.mix_cols(grid.var, Arc::new(sce)),
        })
    }
}

/// Region extraction on a plain grid. The scene features pool the whole
/// image after zeroing cells whose centre lies in either box.
pub fn extract_regions(
    grid: &ImageFeatureGrid,
    box_obj: &BBox,
    box_sub: &BBox,
    out_hw: (usize, usize),
) -> Result<RegionFeatureSet> {
    let [obj, sub, sce] = region_mixes(grid.height, grid.width, grid.stride_y, grid.stride_x, box_obj, box_sub, out_hw)?;
    Ok(RegionFeatureSet {
        f_obj: obj.apply(&grid.values),
        f_sub: sub.apply(&grid.values),
        f_sce: sce.apply(&grid.values),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn grid(values: Matrix, h: usize, w: usize, stride: f64) -> ImageFeatureGrid {
        ImageFeatureGrid {
            values,
            height: h,
            width: w,
            stride_y: stride,
            stride_x: stride,
        }
    }

    #[test]
    fn conv_matches_direct_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let cfg = ImageEncoderConfig {
            widths: vec![4, 5],
            bias: true,
        };
        let enc = ImageEncoder::new(&mut store, "img", &cfg, &mut rng);
        for b in &enc.blocks {
            let bias = b.bias.unwrap();
            *store.value_mut(bias) = Matrix::from_fn(b.out_channels, 1, |_, _| rng.gen_range(-0.5..0.5));
        }
        let (h, w) = (9, 7);
        let input = Matrix::from_fn(3, h * w, |_, _| rng.gen_range(0.0..1.0));

        let mut x = input.clone();
        let (mut ch, mut cw) = (h, w);
        for b in &enc.blocks {
            let (oh, ow) = (ch.div_ceil(2), cw.div_ceil(2));
            let wt = store.value(b.weight);
            let bias = store.value(b.bias.unwrap());
            let mut y = Matrix::zeros(b.out_channels, oh * ow);
            for co in 0..b.out_channels {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = bias[(co, 0)];
                        for ci in 0..b.in_channels {
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    let (iy, ix) = ((2 * oy + ky) as isize - 1, (2 * ox + kx) as isize - 1);
                                    if iy < 0 || ix < 0 || iy as usize >= ch || ix as usize >= cw {
                                        continue;
                                    }
                                    acc += wt[(co, ci * 9 + ky * 3 + kx)] * x[(ci, iy as usize * cw + ix as usize)];
                                }
                            }
                        }
                        y[(co, oy * ow + ox)] = acc.max(0.0);
                    }
                }
            }
            (x, ch, cw) = (y, oh, ow);
        }

        let mut g = Graph::with_params(&store);
        let xv = g.input(input);
        let out = enc.forward(&mut g, xv, h, w).unwrap();
        assert_eq!((out.height, out.width), (3, 2));
        let got = g.value(out.var);
        for (a, b) in got.as_slice().iter().zip(x.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn too_small_image_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        let enc = ImageEncoder::new(&mut store, "img", &ImageEncoderConfig::default(), &mut rng);
        let mut g = Graph::with_params(&store);
        let x = g.input(Matrix::zeros(3, 64));
        assert!(enc.forward(&mut g, x, 8, 8).is_err());
    }

    #[test]
    fn constant_grid_gives_constant_bins() {
        let gr = grid(Matrix::filled(2, 16, 3.5), 4, 4, 16.0);
        for b in [BBox::new(0.0, 0.0, 64.0, 64.0), BBox::new(3.2, 10.0, 17.9, 60.0), BBox::new(60.0, 60.0, 64.0, 64.0)] {
            let out = roi_align(&gr, &b, (2, 2)).unwrap();
            assert!(out.as_slice().iter().all(|v| (v - 3.5).abs() < 1e-12));
        }
    }

    #[test]
    fn linear_grid_matches_bilinear_samples() {
        // value = column index; away from the clamped border bilinear is exact
        let gr = grid(Matrix::from_fn(1, 16, |_, c| (c % 4) as f64), 4, 4, 16.0);
        let b = BBox::new(16.0, 16.0, 48.0, 48.0);
        let out = roi_align(&gr, &b, (2, 2)).unwrap();
        // bin 0 sub-samples at x = 20, 28 -> grid 0.75, 1.25
        assert!((out[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((out[(0, 1)] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_box_is_an_error() {
        let gr = grid(Matrix::zeros(1, 4), 2, 2, 8.0);
        assert!(roi_align(&gr, &BBox::new(3.0, 3.0, 3.0, 9.0), (2, 2)).is_err());
    }

    #[test]
    fn full_boxes_zero_the_scene() {
        let gr = grid(Matrix::filled(3, 16, 1.0), 4, 4, 16.0);
        let full = BBox::new(0.0, 0.0, 64.0, 64.0);
        let r = extract_regions(&gr, &full, &full, (2, 2)).unwrap();
        assert!(r.f_sce.as_slice().iter().all(|&v| v == 0.0));
        assert!(r.f_obj.as_slice().iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }
}
