use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::fps::{centroid, farthest_point_sample, squared_distance, Point3, StartRule};
use crate::error::{arg_err, Result};
use crate::graph::{Graph, Var};
use crate::nn::{ParamStore, PointwiseMlp};
use crate::tensor::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PointEncoderConfig {
    /// FPS centres per set-abstraction level.
    pub centers: Vec<usize>,
    /// Ball radius per level as a fraction of the bounding-sphere radius.
    pub radii: Vec<f64>,
    pub neighbor_cap: usize,
    /// Pointwise MLP widths per level; the last width of the last level is
    /// the output channel count.
    pub mlps: Vec<Vec<usize>>,
}

impl Default for PointEncoderConfig {
    fn default() -> Self {
        Self {
            centers: vec![128, 32, 16],
            radii: vec![0.1, 0.2, 0.4],
            neighbor_cap: 32,
            mlps: vec![vec![32, 32], vec![64, 64], vec![64, 64]],
        }
    }
}

impl PointEncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.centers.len();
        if n == 0 || self.radii.len() != n || self.mlps.len() != n {
            return arg_err("point encoder needs matching centers / radii / mlps per level");
        }
        if self.neighbor_cap == 0 || self.mlps.iter().any(|m| m.is_empty()) {
            return arg_err("point encoder neighbour cap and MLP widths must be non-empty");
        }
        if self.centers.windows(2).any(|w| w[1] > w[0]) || self.centers.contains(&0) {
            return arg_err("set-abstraction widths must be positive and non-increasing");
        }
        if self.radii.iter().any(|r| !(*r > 0.0)) {
            return arg_err("grouping radii must be positive");
        }
        Ok(())
    }

    pub fn out_channels(&self) -> usize {
        *self.mlps.last().and_then(|m| m.last()).unwrap_or(&0)
    }
}

/// Parameter-free grouping geometry of one set-abstraction level.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelGeometry {
    /// Centre indices into the previous level's points.
    pub centers: Vec<usize>,
    pub coords: Vec<Point3>,
    /// Flattened neighbour indices (previous level), grouped per centre.
    pub members: Vec<usize>,
    /// `offsets[c]..offsets[c + 1]` spans centre `c`'s members.
    pub offsets: Vec<usize>,
    /// `3 x members.len()` member offsets from their centre, over the radius.
    pub relative: Matrix,
}

/// Sampling and grouping for every level, computed once per cloud.
#[derive(Clone, Debug, PartialEq)]
pub struct PointHierarchy {
    pub input: Vec<Point3>,
    pub levels: Vec<LevelGeometry>,
}

impl PointHierarchy {
    /// Coordinates of level `l`, where level 0 is the input cloud and level
    /// `l >= 1` is the `l`-th set of abstraction centres.
    pub fn coords(&self, level: usize) -> &[Point3] {
        if level == 0 {
            &self.input
        } else {
            &self.levels[level - 1].coords
        }
    }
}

/// FPS centres and radius-limited k-nearest groups for each level.
pub fn build_hierarchy(coords: &[Point3], config: &PointEncoderConfig) -> Result<PointHierarchy> {
    config.validate()?;
    let deepest = *config.centers.last().unwrap_or(&0);
    if coords.len() < config.centers[0] || coords.len() < deepest {
        return arg_err(format!(
            "cloud has {} points but the first level samples {}",
            coords.len(),
            config.centers[0]
        ));
    }
    let c = centroid(coords);
    let sphere = coords
        .iter()
        .map(|p| squared_distance(p, &c))
        .fold(0.0, f64::max)
        .sqrt();
    let sphere = if sphere > 0.0 { sphere } else { 1.0 };

    let mut prev: Vec<Point3> = coords.to_vec();
    let mut levels = Vec::with_capacity(config.centers.len());
    for (&k, &frac) in config.centers.iter().zip(&config.radii) {
        let radius = frac * sphere;
        let centers = farthest_point_sample(&prev, k, StartRule::FarthestFromCentroid)?;
        let center_coords: Vec<Point3> = centers.iter().map(|&i| prev[i]).collect();
        let mut members = Vec::new();
        let mut offsets = vec![0];
        let mut rel = Vec::new();
        let r2 = radius * radius;
        for cc in &center_coords {
            let mut near: Vec<(f64, usize)> = prev
                .iter()
                .enumerate()
                .map(|(i, p)| (squared_distance(p, cc), i))
                .filter(|(d, _)| *d <= r2)
                .collect();
            near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            near.truncate(config.neighbor_cap);
            for &(_, i) in &near {
                members.push(i);
                rel.push([0, 1, 2].map(|d| (prev[i][d] - cc[d]) / radius));
            }
            offsets.push(members.len());
        }
        let relative = Matrix::from_fn(3, rel.len(), |d, m| rel[m][d]);
        levels.push(LevelGeometry {
            centers,
            coords: center_coords.clone(),
            members,
            offsets,
            relative,
        });
        prev = center_coords;
    }
    Ok(PointHierarchy {
        input: coords.to_vec(),
        levels,
    })
}

/// One level: shared pointwise MLP over `[relative xyz; previous features]`
/// followed by a max over each group.
#[derive(Clone, Debug)]
pub struct SetAbstraction {
    pub mlp: PointwiseMlp,
}

#[derive(Clone, Debug)]
pub struct PointEncoder {
    pub levels: Vec<SetAbstraction>,
    pub config: PointEncoderConfig,
}

/// Per-level features on the tape; `levels[l]` is `C_l x centers_l`.
#[derive(Clone, Debug)]
pub struct PointFeatureSeq {
    pub levels: Vec<Var>,
}

impl PointFeatureSeq {
    pub fn deepest(&self) -> Var {
        *self.levels.last().expect("at least one level")
    }
}

impl PointEncoder {
    pub fn new(store: &mut ParamStore, name: &str, config: &PointEncoderConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let mut in_c = 0;
        let levels = config
            .mlps
            .iter()
            .enumerate()
            .map(|(l, widths)| {
                let mlp = PointwiseMlp::new(store, &format!("{name}.sa{l}"), 3 + in_c, widths, true, rng);
                in_c = mlp.out_dim();
                SetAbstraction { mlp }
            })
            .collect();
        Ok(Self {
            levels,
            config: config.clone(),
        })
    }

    pub fn out_channels(&self) -> usize {
        self.config.out_channels()
    }

    pub fn level_channels(&self, level: usize) -> usize {
        self.levels[level].mlp.out_dim()
    }

    pub fn forward(&self, g: &mut Graph, hierarchy: &PointHierarchy) -> Result<PointFeatureSeq> {
        if hierarchy.levels.len() != self.levels.len() {
            return arg_err(format!(
                "hierarchy has {} levels, encoder expects {}",
                hierarchy.levels.len(),
                self.levels.len()
            ));
        }
        let mut out = Vec::with_capacity(self.levels.len());
        let mut prev: Option<Var> = None;
        for (sa, geo) in self.levels.iter().zip(&hierarchy.levels) {
            let rel = g.input(geo.relative.clone());
            let x = match prev {
                None => rel,
                Some(p) => {
                    let gathered = g.gather_cols(p, &geo.members);
                    g.concat_rows(&[rel, gathered])
                }
            };
            let h = sa.mlp.forward(g, x);
            let pooled = g.group_max(h, &geo.offsets);
            out.push(pooled);
            prev = Some(pooled);
        }
        Ok(PointFeatureSeq { levels: out })
    }

    /// Deepest-level features outside of training.
    pub fn encode(&self, store: &ParamStore, coords: &[Point3]) -> Result<(PointHierarchy, Matrix)> {
        let hierarchy = build_hierarchy(coords, &self.config)?;
        let mut g = Graph::with_params(store);
        let seq = self.forward(&mut g, &hierarchy)?;
        let deepest = g.value(seq.deepest()).clone();
        Ok((hierarchy, deepest))
    }
}
