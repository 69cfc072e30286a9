use crate::error::{arg_err, Result};

pub type Point3 = [f64; 3];

/// How the first farthest-point-sampling index is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum StartRule {
    /// The point farthest from the centroid; ties go to the lowest index.
    #[default]
    FarthestFromCentroid,
    Index(usize),
}

pub fn squared_distance(a: &Point3, b: &Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

pub fn centroid(points: &[Point3]) -> Point3 {
    let n = points.len().max(1) as f64;
    let mut c = [0.0; 3];
    for p in points {
        for k in 0..3 {
            c[k] += p[k];
        }
    }
    c.map(|v| v / n)
}

pub fn start_index(coords: &[Point3], rule: StartRule) -> Result<usize> {
    match rule {
        StartRule::Index(i) if i < coords.len() => Ok(i),
        StartRule::Index(i) => arg_err(format!("start index {i} out of range for {} points", coords.len())),
        StartRule::FarthestFromCentroid => {
            let c = centroid(coords);
            let mut best = 0;
            let mut best_d = f64::NEG_INFINITY;
            for (i, p) in coords.iter().enumerate() {
                let d = squared_distance(p, &c);
                if d > best_d {
                    best = i;
                    best_d = d;
                }
            }
            Ok(best)
        }
    }
}

/// Greedy farthest point sampling. Each new index maximises the minimum
/// squared distance to the already selected set; ties go to the lowest index.
pub fn farthest_point_sample(coords: &[Point3], k: usize, rule: StartRule) -> Result<Vec<usize>> {
    if k == 0 || k > coords.len() {
        return arg_err(format!("cannot sample {k} of {} points", coords.len()));
    }
    let first = start_index(coords, rule)?;
    let mut selected = Vec::with_capacity(k);
    selected.push(first);
    let mut min_dist: Vec<f64> = coords.iter().map(|p| squared_distance(p, &coords[first])).collect();
    let mut taken = vec![false; coords.len()];
    taken[first] = true;
    while selected.len() < k {
        let mut best = usize::MAX;
        let mut best_d = f64::NEG_INFINITY;
        for (i, &d) in min_dist.iter().enumerate() {
            if !taken[i] && d > best_d {
                best = i;
                best_d = d;
            }
        }
        taken[best] = true;
        selected.push(best);
        let chosen = coords[best];
        for (d, p) in min_dist.iter_mut().zip(coords) {
            let nd = squared_distance(p, &chosen);
            if nd < *d {
                *d = nd;
            }
        }
    }
    Ok(selected)
}
