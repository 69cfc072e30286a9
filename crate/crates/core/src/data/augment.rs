use image::imageops::{self, FilterType};
use image::Rgb32FImage;
use rand::Rng;

use super::{BBox, InteractionImage};

/// Crops must cover at least this fraction of the source image area.
pub const MIN_CROP_AREA_FRACTION: f64 = 0.6;

const MAX_CROP_DRAWS: usize = 64;

/// Integer pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropRect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl CropRect {
    pub fn width(&self) -> u32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0
    }
}

/// Resizes the image (bilinear) and maps both boxes into the new frame.
pub fn resize_image(image: &InteractionImage, out_h: u32, out_w: u32) -> InteractionImage {
    let full = CropRect {
        x0: 0,
        y0: 0,
        x1: image.width(),
        y1: image.height(),
    };
    crop_and_resize(image, full, out_h, out_w)
}

fn crop_and_resize(image: &InteractionImage, rect: CropRect, out_h: u32, out_w: u32) -> InteractionImage {
    let cropped = imageops::crop_imm(&image.pixels, rect.x0, rect.y0, rect.width(), rect.height()).to_image();
    let pixels: Rgb32FImage = if cropped.dimensions() == (out_w, out_h) {
        cropped
    } else {
        imageops::resize(&cropped, out_w, out_h, FilterType::Triangle)
    };
    let pixels = Rgb32FImage::from_fn(out_w, out_h, |x, y| {
        image::Rgb(pixels.get_pixel(x, y).0.map(|v| v.clamp(0.0, 1.0)))
    });
    let sx = out_w as f64 / rect.width() as f64;
    let sy = out_h as f64 / rect.height() as f64;
    let remap = |b: BBox| {
        BBox::new(
            ((b.x0 - rect.x0 as f64) * sx).clamp(0.0, out_w as f64),
            ((b.y0 - rect.y0 as f64) * sy).clamp(0.0, out_h as f64),
            ((b.x1 - rect.x0 as f64) * sx).clamp(0.0, out_w as f64),
            ((b.y1 - rect.y0 as f64) * sy).clamp(0.0, out_h as f64),
        )
    };
    InteractionImage {
        pixels,
        box_subject: remap(image.box_subject),
        box_object: remap(image.box_object),
        affordance: image.affordance,
    }
}

/// Draws a crop uniformly among integer rectangles that contain both boxes
/// and cover at least [`MIN_CROP_AREA_FRACTION`] of the image. Returns `None`
/// when the box union does not fit inside the image.
pub fn sample_crop<R: Rng + ?Sized>(image: &InteractionImage, rng: &mut R) -> Option<CropRect> {
    let (w, h) = (image.width(), image.height());
    let union = image.box_subject.union(&image.box_object);
    if !union.is_well_formed() || !union.fits_in(w, h) {
        return None;
    }
    let max_x0 = union.x0.floor() as u32;
    let min_x1 = (union.x1.ceil() as u32).max(max_x0 + 1);
    let max_y0 = union.y0.floor() as u32;
    let min_y1 = (union.y1.ceil() as u32).max(max_y0 + 1);
    let min_area = MIN_CROP_AREA_FRACTION * (w as f64) * (h as f64);
    for _ in 0..MAX_CROP_DRAWS {
        let rect = CropRect {
            x0: rng.gen_range(0..=max_x0),
            x1: rng.gen_range(min_x1..=w),
            y0: rng.gen_range(0..=max_y0),
            y1: rng.gen_range(min_y1..=h),
        };
        if (rect.width() as f64) * (rect.height() as f64) >= min_area {
            return Some(rect);
        }
    }
    Some(CropRect { x0: 0, y0: 0, x1: w, y1: h })
}

/// Box-preserving random crop followed by a resize to `(out_h, out_w)`.
/// If the boxes do not fit inside the image the crop is skipped.
pub fn random_crop_resize<R: Rng + ?Sized>(
    image: &InteractionImage,
    out_hw: (u32, u32),
    rng: &mut R,
) -> InteractionImage {
    let (out_h, out_w) = out_hw;
    match sample_crop(image, rng) {
        Some(rect) => crop_and_resize(image, rect, out_h, out_w),
        None => resize_image(image, out_h, out_w),
    }
}
