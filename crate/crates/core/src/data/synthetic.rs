//! Procedural desk-scale dataset with exact ground truth.
//!
//! Three object families are built from parametric surfaces, and every
//! sampled point remembers the part it came from, so affordance regions are
//! known exactly:
//!
//! | family | affordances     | positive parts             |
//! |--------|-----------------|----------------------------|
//! | mug    | grasp, contain  | handle / inner wall+floor  |
//! | box    | open, contain   | lid / inner wall+floor     |
//! | kettle | grasp, open     | handle / lid               |
//!
//! Images are flat side-view renderings of a *different* random instance of
//! the same family, with a skin-coloured "hand" blob (and arm) touching the
//! region that matches the image's affordance.

use std::f64::consts::PI;
use std::path::Path;

use image::Rgb32FImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::format::{save_annotation, save_image, save_raw_cloud, Annotation, CloudMeta, RawCloud};
use super::{DatasetManifest, ManifestEntry, SplitTag};
use crate::backbones::Point3;
use crate::error::{IagError, Result};

pub const AFFORDANCES: [&str; 3] = ["grasp", "open", "contain"];
pub const OBJECTS: [&str; 3] = ["mug", "box", "kettle"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub train_images: usize,
    pub train_clouds: usize,
    pub test_images: usize,
    pub test_clouds: usize,
    /// Points written per cloud (the loader resamples to the model's count).
    pub cloud_points: usize,
    pub image_size: u32,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            train_images: 20,
            train_clouds: 30,
            test_images: 12,
            test_clouds: 12,
            cloud_points: 640,
            image_size: 96,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    Mug,
    Box,
    Kettle,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Mug, Family::Box, Family::Kettle];

    pub fn name(self) -> &'static str {
        match self {
            Family::Mug => "mug",
            Family::Box => "box",
            Family::Kettle => "kettle",
        }
    }

    pub fn affordances(self) -> [&'static str; 2] {
        match self {
            Family::Mug => ["grasp", "contain"],
            Family::Box => ["open", "contain"],
            Family::Kettle => ["grasp", "open"],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Part {
    OuterWall,
    InnerWall,
    Bottom,
    InnerBottom,
    Rim,
    Handle,
    Lid,
    Spout,
}

impl Part {
    /// Ground-truth predicate: does this part carry `affordance` on `family`?
    pub fn affords(self, family: Family, affordance: &str) -> bool {
        if !family.affordances().contains(&affordance) {
            return false;
        }
        match affordance {
            "grasp" => self == Part::Handle,
            "open" => self == Part::Lid,
            "contain" => matches!(self, Part::InnerWall | Part::InnerBottom),
            _ => false,
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Surface {
    /// Vertical cylinder wall around the z axis.
    Cylinder { r: f64, z0: f64, z1: f64 },
    /// Horizontal annulus at height `z`.
    Annulus { r_in: f64, r_out: f64, z: f64 },
    /// Torus arc in the xz plane, opening toward `dir` (+1 = +x side).
    Handle {
        cx: f64,
        cz: f64,
        major: f64,
        minor: f64,
        half_arc: f64,
        dir: f64,
    },
    /// Parallelogram `origin + s u + t v`.
    Patch { origin: Point3, u: Point3, v: Point3 },
    /// Tube of radius `r` along `axis` (unit) from `base`.
    Tube { base: Point3, axis: Point3, r: f64, len: f64 },
}

fn cross(a: Point3, b: Point3) -> Point3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn norm(a: Point3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

impl Surface {
    fn area(&self) -> f64 {
        match *self {
            Surface::Cylinder { r, z0, z1 } => 2.0 * PI * r * (z1 - z0),
            Surface::Annulus { r_in, r_out, .. } => PI * (r_out * r_out - r_in * r_in),
            Surface::Handle {
                major, minor, half_arc, ..
            } => 2.0 * PI * minor * major * 2.0 * half_arc,
            Surface::Patch { u, v, .. } => norm(cross(u, v)),
            Surface::Tube { r, len, .. } => 2.0 * PI * r * len,
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> Point3 {
        match *self {
            Surface::Cylinder { r, z0, z1 } => {
                let t = rng.gen_range(0.0..2.0 * PI);
                [r * t.cos(), r * t.sin(), rng.gen_range(z0..z1)]
            }
            Surface::Annulus { r_in, r_out, z } => {
                let t = rng.gen_range(0.0..2.0 * PI);
                let rr = (rng.gen_range(0.0..1.0) * (r_out * r_out - r_in * r_in) + r_in * r_in).sqrt();
                [rr * t.cos(), rr * t.sin(), z]
            }
            Surface::Handle {
                cx,
                cz,
                major,
                minor,
                half_arc,
                dir,
            } => {
                let phi = rng.gen_range(-half_arc..half_arc);
                let psi = rng.gen_range(0.0..2.0 * PI);
                let ring = major + minor * psi.cos();
                [cx + dir * ring * phi.cos(), minor * psi.sin(), cz + ring * phi.sin()]
            }
            Surface::Patch { origin, u, v } => {
                let (s, t) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
                [0, 1, 2].map(|k| origin[k] + s * u[k] + t * v[k])
            }
            Surface::Tube { base, axis, r, len } => {
                let helper = if axis[2].abs() < 0.9 { [0.0, 0.0, 1.0] } else { [1.0, 0.0, 0.0] };
                let e1 = cross(axis, helper);
                let n1 = norm(e1);
                let e1 = e1.map(|v| v / n1);
                let e2 = cross(axis, e1);
                let t = rng.gen_range(0.0..2.0 * PI);
                let l = rng.gen_range(0.0..len);
                [0, 1, 2].map(|k| base[k] + l * axis[k] + r * (t.cos() * e1[k] + t.sin() * e2[k]))
            }
        }
    }
}

/// One random object of a family, in object-local units (z up).
#[derive(Clone, Debug)]
pub struct Instance {
    pub family: Family,
    pub radius: f64,
    pub height: f64,
    pub wall: f64,
    pub handle_major: f64,
    pub handle_minor: f64,
    pub width: f64,
    pub depth: f64,
    pub lid_angle: f64,
}

impl Instance {
    pub fn random<R: Rng>(family: Family, rng: &mut R) -> Self {
        let radius = rng.gen_range(0.28..0.38);
        Self {
            family,
            radius,
            height: match family {
                Family::Mug => rng.gen_range(0.6..0.9),
                Family::Kettle => rng.gen_range(0.5..0.7),
                Family::Box => rng.gen_range(0.35..0.6),
            },
            wall: 0.1,
            handle_major: rng.gen_range(0.14..0.2),
            handle_minor: 0.05,
            width: rng.gen_range(0.55..0.85),
            depth: rng.gen_range(0.45..0.7),
            lid_angle: rng.gen_range(0.5..1.2),
        }
    }

    fn surfaces(&self) -> Vec<(Part, Surface)> {
        let (r, h, t) = (self.radius, self.height, self.wall);
        let (rh, a) = (self.handle_major, self.handle_minor);
        match self.family {
            Family::Mug => vec![
                (Part::OuterWall, Surface::Cylinder { r, z0: 0.0, z1: h }),
                (Part::InnerWall, Surface::Cylinder { r: r - t, z0: t, z1: h }),
                (Part::Bottom, Surface::Annulus { r_in: 0.0, r_out: r, z: 0.0 }),
                (Part::InnerBottom, Surface::Annulus { r_in: 0.0, r_out: r - t, z: t }),
                (Part::Rim, Surface::Annulus { r_in: r - t, r_out: r, z: h }),
                (
                    Part::Handle,
                    Surface::Handle {
                        cx: r + 0.3 * rh,
                        cz: 0.5 * h,
                        major: rh,
                        minor: a,
                        half_arc: 1.9,
                        dir: 1.0,
                    },
                ),
            ],
            Family::Kettle => vec![
                (Part::OuterWall, Surface::Cylinder { r, z0: 0.0, z1: h }),
                (Part::Bottom, Surface::Annulus { r_in: 0.0, r_out: r, z: 0.0 }),
                (Part::Rim, Surface::Annulus { r_in: 0.8 * r, r_out: r, z: h }),
                (Part::Lid, Surface::Annulus { r_in: 0.0, r_out: 0.8 * r, z: h + 0.02 }),
                (
                    Part::Handle,
                    Surface::Handle {
                        cx: -(r + 0.3 * rh),
                        cz: 0.55 * h,
                        major: rh,
                        minor: a,
                        half_arc: 1.9,
                        dir: -1.0,
                    },
                ),
                (
                    Part::Spout,
                    Surface::Tube {
                        base: [0.85 * r, 0.0, 0.3 * h],
                        axis: [0.707_106_781, 0.0, 0.707_106_781],
                        r: 0.05,
                        len: 0.3,
                    },
                ),
            ],
            Family::Box => {
                let (w, d, hh) = (self.width, self.depth, self.height);
                let (x0, x1, y0, y1) = (-w / 2.0, w / 2.0, -d / 2.0, d / 2.0);
                let (ix0, ix1, iy0, iy1) = (x0 + t, x1 - t, y0 + t, y1 - t);
                let patch = |origin: Point3, u: Point3, v: Point3| Surface::Patch { origin, u, v };
                let alpha = self.lid_angle;
                vec![
                    (Part::OuterWall, patch([x0, y0, 0.0], [w, 0.0, 0.0], [0.0, 0.0, hh])),
                    (Part::OuterWall, patch([x0, y1, 0.0], [w, 0.0, 0.0], [0.0, 0.0, hh])),
                    (Part::OuterWall, patch([x0, y0, 0.0], [0.0, d, 0.0], [0.0, 0.0, hh])),
                    (Part::OuterWall, patch([x1, y0, 0.0], [0.0, d, 0.0], [0.0, 0.0, hh])),
                    (Part::Bottom, patch([x0, y0, 0.0], [w, 0.0, 0.0], [0.0, d, 0.0])),
                    (Part::InnerWall, patch([ix0, iy0, t], [w - 2.0 * t, 0.0, 0.0], [0.0, 0.0, hh - t])),
                    (Part::InnerWall, patch([ix0, iy1, t], [w - 2.0 * t, 0.0, 0.0], [0.0, 0.0, hh - t])),
                    (Part::InnerWall, patch([ix0, iy0, t], [0.0, d - 2.0 * t, 0.0], [0.0, 0.0, hh - t])),
                    (Part::InnerWall, patch([ix1, iy0, t], [0.0, d - 2.0 * t, 0.0], [0.0, 0.0, hh - t])),
                    (Part::InnerBottom, patch([ix0, iy0, t], [w - 2.0 * t, 0.0, 0.0], [0.0, d - 2.0 * t, 0.0])),
                    (
                        Part::Lid,
                        patch([x0, y1, hh], [w, 0.0, 0.0], [0.0, -d * alpha.cos(), d * alpha.sin()]),
                    ),
                ]
            }
        }
    }

    /// Area-weighted surface samples tagged with their part, normalised to
    /// the unit sphere after a random yaw.
    pub fn sample_surface<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<(Point3, Part)> {
        let surfaces = self.surfaces();
        let areas: Vec<f64> = surfaces.iter().map(|(_, s)| s.area()).collect();
        let counts = apportion(&areas, n);
        let mut out = Vec::with_capacity(n);
        for ((part, surface), count) in surfaces.iter().zip(counts) {
            for _ in 0..count {
                out.push((surface.sample(rng), *part));
            }
        }
        let yaw = rng.gen_range(0.0..2.0 * PI);
        let (s, c) = yaw.sin_cos();
        let n_f = out.len() as f64;
        let mut centre = [0.0; 3];
        for (p, _) in &out {
            for k in 0..3 {
                centre[k] += p[k] / n_f;
            }
        }
        let mut radius: f64 = 0.0;
        for (p, _) in out.iter_mut() {
            let q = [p[0] - centre[0], p[1] - centre[1], p[2] - centre[2]];
            *p = [c * q[0] - s * q[1], s * q[0] + c * q[1], q[2]];
            radius = radius.max(norm(*p));
        }
        for (p, _) in out.iter_mut() {
            *p = p.map(|v| v / radius);
        }
        out
    }
}

/// Largest-remainder split of `n` items proportional to `weights`.
fn apportion(weights: &[f64], n: usize) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / total * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let assigned: usize = counts.iter().sum();
    for &i in order.iter().take(n - assigned) {
        counts[i] += 1;
    }
    counts
}

/// Builds the multi-channel cloud for one instance.
pub fn make_cloud<R: Rng>(instance: &Instance, n: usize, rng: &mut R) -> RawCloud {
    let samples = instance.sample_surface(n, rng);
    let coords = samples.iter().map(|(p, _)| *p).collect();
    let labels = samples
        .iter()
        .map(|(_, part)| {
            AFFORDANCES
                .iter()
                .map(|a| if part.affords(instance.family, a) { 1.0 } else { 0.0 })
                .collect()
        })
        .collect();
    RawCloud {
        coords,
        labels,
        meta: CloudMeta {
            object: instance.family.name().to_string(),
            channels: AFFORDANCES.iter().map(|s| s.to_string()).collect(),
            affordances: instance.family.affordances().iter().map(|s| s.to_string()).collect(),
        },
    }
}

struct Canvas {
    w: usize,
    h: usize,
    rgb: Vec<[f32; 3]>,
    mask: Vec<bool>,
}

impl Canvas {
    fn new(w: usize, h: usize, bg: [f32; 3]) -> Self {
        Self {
            w,
            h,
            rgb: vec![bg; w * h],
            mask: vec![false; w * h],
        }
    }

    /// Paints every pixel whose centre satisfies `inside`.
    fn paint(&mut self, color: [f32; 3], track: bool, inside: impl Fn(f64, f64) -> bool) {
        for y in 0..self.h {
            for x in 0..self.w {
                if inside(x as f64 + 0.5, y as f64 + 0.5) {
                    self.rgb[y * self.w + x] = color;
                    if track {
                        self.mask[y * self.w + x] = true;
                    }
                }
            }
        }
    }

    fn take_mask_box(&mut self) -> Option<[f64; 4]> {
        let mut b: Option<[usize; 4]> = None;
        for y in 0..self.h {
            for x in 0..self.w {
                if self.mask[y * self.w + x] {
                    b = Some(match b {
                        None => [x, y, x, y],
                        Some([x0, y0, x1, y1]) => [x0.min(x), y0.min(y), x1.max(x), y1.max(y)],
                    });
                }
            }
        }
        self.mask.iter_mut().for_each(|m| *m = false);
        b.map(|[x0, y0, x1, y1]| [x0 as f64, y0 as f64, (x1 + 1) as f64, (y1 + 1) as f64])
    }

    fn into_image(self) -> Rgb32FImage {
        Rgb32FImage::from_fn(self.w as u32, self.h as u32, |x, y| image::Rgb(self.rgb[y as usize * self.w + x as usize]))
    }
}

fn jitter<R: Rng>(rng: &mut R, base: [f32; 3], amount: f32) -> [f32; 3] {
    base.map(|c| (c + rng.gen_range(-amount..amount)).clamp(0.0, 1.0))
}

fn in_rect(x: f64, y: f64, x0: f64, y0: f64, x1: f64, y1: f64) -> bool {
    x >= x0 && x <= x1 && y >= y0 && y <= y1
}

fn in_ellipse(x: f64, y: f64, cx: f64, cy: f64, rx: f64, ry: f64) -> bool {
    let (dx, dy) = ((x - cx) / rx, (y - cy) / ry);
    dx * dx + dy * dy <= 1.0
}

/// Renders an interaction image and its annotation boxes.
pub fn render_image<R: Rng>(instance: &Instance, affordance: &str, size: u32, rng: &mut R) -> (Rgb32FImage, Annotation) {
    let s = size as f64;
    let mut canvas = Canvas::new(size as usize, size as usize, jitter(rng, [0.85, 0.85, 0.82], 0.1));

    // scene: table and a couple of clutter blocks
    let base = s * rng.gen_range(0.8..0.9);
    let table = jitter(rng, [0.55, 0.4, 0.3], 0.08);
    canvas.paint(table, false, |_, y| y >= base);
    for _ in 0..rng.gen_range(1..=2) {
        let (cw, ch) = (s * rng.gen_range(0.08..0.16), s * rng.gen_range(0.1..0.25));
        let cx = if rng.gen_bool(0.5) { s * rng.gen_range(0.02..0.12) } else { s * rng.gen_range(0.82..0.9) };
        let color = jitter(rng, [0.3, 0.5, 0.4], 0.25);
        canvas.paint(color, false, |x, y| in_rect(x, y, cx, base - ch, cx + cw, base));
    }

    let body = jitter(rng, [0.35, 0.45, 0.65], 0.15);
    let dark = body.map(|c| c * 0.55);
    let lid_color = jitter(rng, [0.7, 0.3, 0.25], 0.1);
    let cx = s * rng.gen_range(0.42..0.58);
    let inst = instance;
    let (r, h) = (inst.radius, inst.height);
    let (rh, a) = (inst.handle_major, inst.handle_minor);

    // pixel scale: fit the tallest / widest extent into the frame
    let extent_w = match inst.family {
        Family::Box => inst.width,
        _ => 2.0 * (r + 1.3 * rh),
    };
    let extent_h = match inst.family {
        Family::Box => h + inst.depth * inst.lid_angle.sin(),
        _ => h + 0.05,
    };
    let px = (s * 0.5 / extent_h).min(s * 0.6 / extent_w);
    let top = base - h * px;

    let hand_point = match inst.family {
        Family::Mug => {
            let hcx = cx + (r + 0.3 * rh) * px;
            let hcy = base - 0.5 * h * px;
            let (ro, ri) = (rh * px + a * px, (rh - 2.0 * a) * px);
            canvas.paint(dark, true, |x, y| {
                let d = ((x - hcx).powi(2) + (y - hcy).powi(2)).sqrt();
                x > cx + r * px - 1.0 && d <= ro && d >= ri
            });
            canvas.paint(body, true, |x, y| in_rect(x, y, cx - r * px, top, cx + r * px, base));
            canvas.paint(dark, true, |x, y| in_ellipse(x, y, cx, top, (r - inst.wall) * px, 0.15 * r * px));
            match affordance {
                "grasp" => (hcx + rh * px, hcy),
                _ => (cx, top - 0.06 * s),
            }
        }
        Family::Kettle => {
            let hcx = cx - (r + 0.3 * rh) * px;
            let hcy = base - 0.55 * h * px;
            let (ro, ri) = (rh * px + a * px, (rh - 2.0 * a) * px);
            canvas.paint(dark, true, |x, y| {
                let d = ((x - hcx).powi(2) + (y - hcy).powi(2)).sqrt();
                x < cx - r * px + 1.0 && d <= ro && d >= ri
            });
            let (sx0, sy0) = (cx + 0.8 * r * px, base - 0.3 * h * px);
            let spout_len = 0.3 * px;
            canvas.paint(dark, true, |x, y| {
                let (u, v) = ((x - sx0) / spout_len, (sy0 - y) / spout_len);
                u >= 0.0 && u <= 0.75 && (v - u).abs() <= 0.18
            });
            canvas.paint(body, true, |x, y| in_rect(x, y, cx - r * px, top, cx + r * px, base));
            let lid_h = 0.12 * s;
            canvas.paint(lid_color, true, |x, y| in_ellipse(x, y, cx, top, 0.8 * r * px, lid_h * 0.35));
            canvas.paint(lid_color, true, |x, y| in_rect(x, y, cx - 0.08 * r * px - 2.0, top - lid_h * 0.5, cx + 0.08 * r * px + 2.0, top));
            match affordance {
                "grasp" => (hcx - rh * px, hcy),
                _ => (cx, top - lid_h * 0.5 - 0.04 * s),
            }
        }
        Family::Box => {
            let half = 0.5 * inst.width * px;
            let lid_rise = inst.depth * inst.lid_angle.sin() * px;
            canvas.paint(lid_color, true, |x, y| in_rect(x, y, cx - half, top - lid_rise, cx + half, top));
            canvas.paint(body, true, |x, y| in_rect(x, y, cx - half, top, cx + half, base));
            canvas.paint(dark, true, |x, y| in_rect(x, y, cx - half + 2.0, top, cx + half - 2.0, top + 0.1 * s));
            match affordance {
                "open" => (cx + half * rng.gen_range(-0.4..0.4), top - lid_rise - 0.03 * s),
                _ => (cx + half * rng.gen_range(-0.3..0.3), top + 0.08 * s),
            }
        }
    };
    let object_box = canvas.take_mask_box().expect("object covers pixels");

    let skin = jitter(rng, [0.92, 0.72, 0.58], 0.05);
    let (hx, hy) = hand_point;
    let hand_r = s * rng.gen_range(0.05..0.07);
    let arm_half = hand_r * 0.65;
    let sideways = affordance == "grasp";
    canvas.paint(skin, true, |x, y| {
        let arm = if sideways {
            let right = inst.family == Family::Mug;
            (y - hy).abs() <= arm_half && if right { x >= hx } else { x <= hx }
        } else {
            (x - hx).abs() <= arm_half && y <= hy
        };
        arm || in_ellipse(x, y, hx, hy, hand_r, hand_r)
    });
    let subject_box = canvas.take_mask_box().expect("subject covers pixels");

    let annotation = Annotation {
        object: inst.family.name().to_string(),
        affordance: affordance.to_string(),
        box_subject: subject_box,
        box_object: object_box,
    };
    (canvas.into_image(), annotation)
}

fn generate_split<R: Rng>(
    root: &Path,
    split: SplitTag,
    prefix: &str,
    images: usize,
    clouds: usize,
    config: &SyntheticConfig,
    rng: &mut R,
) -> Result<DatasetManifest> {
    let mut cloud_paths: Vec<(Family, String)> = Vec::with_capacity(clouds);
    for i in 0..clouds {
        let family = Family::ALL[i % Family::ALL.len()];
        let instance = Instance::random(family, rng);
        let cloud = make_cloud(&instance, config.cloud_points, rng);
        let rel = format!("clouds/{prefix}_{i:03}.pts");
        save_raw_cloud(&root.join(&rel), &cloud)?;
        cloud_paths.push((family, rel));
    }
    let combos: Vec<(Family, &str)> = Family::ALL
        .iter()
        .flat_map(|&f| f.affordances().into_iter().map(move |a| (f, a)))
        .collect();
    let mut entries = Vec::with_capacity(images);
    for i in 0..images {
        let (family, affordance) = combos[i % combos.len()];
        let instance = Instance::random(family, rng);
        let (pixels, annotation) = render_image(&instance, affordance, config.image_size, rng);
        let image = format!("images/{prefix}_{i:03}.png");
        let ann = format!("images/{prefix}_{i:03}.toml");
        save_image(&root.join(&image), &pixels)?;
        save_annotation(&root.join(&ann), &annotation)?;
        let candidates: Vec<String> = cloud_paths
            .iter()
            .filter(|(f, _)| *f == family)
            .map(|(_, p)| p.clone())
            .collect();
        if candidates.is_empty() {
            return Err(IagError::Argument(format!(
                "split {split} has no `{}` clouds; use at least {} clouds",
                family.name(),
                Family::ALL.len()
            )));
        }
        entries.push(ManifestEntry {
            image,
            annotation: ann,
            clouds: candidates,
        });
    }
    let manifest = DatasetManifest {
        split,
        affordances: AFFORDANCES.iter().map(|s| s.to_string()).collect(),
        objects: OBJECTS.iter().map(|s| s.to_string()).collect(),
        entries,
    };
    manifest.save(root)?;
    Ok(manifest)
}

/// Writes a seen-train / seen-test dataset under `out_dir` and returns the
/// two manifests. The output is a pure function of `(config, seed)`.
pub fn generate_synthetic_dataset(config: &SyntheticConfig, seed: u64, out_dir: &Path) -> Result<Vec<DatasetManifest>> {
    if config.cloud_points == 0 || config.image_size < 16 {
        return Err(IagError::Argument("synthetic clouds need points and images need >= 16 px".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = generate_split(
        out_dir,
        SplitTag::SeenTrain,
        "train",
        config.train_images,
        config.train_clouds,
        config,
        &mut rng,
    )?;
    let test = generate_split(
        out_dir,
        SplitTag::SeenTest,
        "test",
        config.test_images,
        config.test_clouds,
        config,
        &mut rng,
    )?;
    Ok(vec![train, test])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apportion_hits_the_total() {
        assert_eq!(apportion(&[1.0, 1.0, 1.0], 10).iter().sum::<usize>(), 10);
        assert_eq!(apportion(&[3.0, 1.0], 4), vec![3, 1]);
    }

    #[test]
    fn handle_labels_follow_the_geometry_predicate() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mug = Instance::random(Family::Mug, &mut rng);
        let mut rng_a = ChaCha8Rng::seed_from_u64(10);
        let mut rng_b = ChaCha8Rng::seed_from_u64(10);
        let parts = mug.sample_surface(500, &mut rng_a);
        let cloud = make_cloud(&mug, 500, &mut rng_b);
        let grasp = cloud.channel("grasp").unwrap();
        for ((_, part), v) in parts.iter().zip(&grasp) {
            assert_eq!(*v == 1.0, *part == Part::Handle);
        }
        assert!(grasp.iter().any(|&v| v == 1.0));
        assert!(cloud.channel("open").unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn clouds_are_unit_normalised() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for family in Family::ALL {
            let inst = Instance::random(family, &mut rng);
            let pts = inst.sample_surface(300, &mut rng);
            assert_eq!(pts.len(), 300);
            let max = pts.iter().map(|(p, _)| norm(*p)).fold(0.0, f64::max);
            assert!((max - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rendered_boxes_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for family in Family::ALL {
            for aff in family.affordances() {
                let inst = Instance::random(family, &mut rng);
                let (img, ann) = render_image(&inst, aff, 64, &mut rng);
                assert_eq!(img.dimensions(), (64, 64));
                for b in [ann.box_subject, ann.box_object] {
                    let b = super::super::BBox::from_array(b);
                    assert!(b.is_well_formed() && b.fits_in(64, 64), "{family:?} {aff} {b:?}");
                }
            }
        }
    }
}
