use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backbones::{farthest_point_sample, Point3, StartRule};
use crate::error::{IagError, Result};

/// Row indices that bring a cloud of `coords.len()` points to exactly
/// `target_n`: farthest point sampling when shrinking, and every original
/// point followed by uniform draws with replacement when growing.
pub fn resample_indices(coords: &[Point3], target_n: usize, seed: u64) -> Result<Vec<usize>> {
    let n = coords.len();
    if n == 0 {
        return Err(IagError::Validation("cannot resample an empty cloud".into()));
    }
    if target_n == 0 {
        return Err(IagError::Argument("target point count must be at least 1".into()));
    }
    if n >= target_n {
        return farthest_point_sample(coords, target_n, StartRule::FarthestFromCentroid);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.extend((n..target_n).map(|_| rng.gen_range(0..n)));
    Ok(idx)
}

pub fn resample_points(
    coords: &[Point3],
    label: &[f64],
    target_n: usize,
    seed: u64,
) -> Result<(Vec<Point3>, Vec<f64>)> {
    if coords.len() != label.len() {
        return Err(IagError::Argument(format!(
            "{} coordinates but {} labels",
            coords.len(),
            label.len()
        )));
    }
    let idx = resample_indices(coords, target_n, seed)?;
    Ok((
        idx.iter().map(|&i| coords[i]).collect(),
        idx.iter().map(|&i| label[i]).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_size_keeps_the_point_set() {
        let coords: Vec<Point3> = (0..20).map(|i| [i as f64, (i * i) as f64 * 0.1, 0.0]).collect();
        let label: Vec<f64> = (0..20).map(|i| i as f64 / 20.0).collect();
        let (c, l) = resample_points(&coords, &label, 20, 3).unwrap();
        let mut got: Vec<(u64, u64)> = c.iter().zip(&l).map(|(p, v)| (p[0].to_bits(), v.to_bits())).collect();
        got.sort_unstable();
        let mut want: Vec<(u64, u64)> = coords.iter().zip(&label).map(|(p, v)| (p[0].to_bits(), v.to_bits())).collect();
        want.sort_unstable();
        assert_eq!(got, want);
    }

    #[test]
    fn collinear_downsample() {
        let coords: Vec<Point3> = (0..4).map(|i| [i as f64, 0.0, 0.0]).collect();
        let idx = resample_indices(&coords, 2, 0).unwrap();
        assert_eq!(idx, vec![0, 3]);
    }

    #[test]
    fn single_point_is_repeated() {
        let (c, l) = resample_points(&[[1.0, 2.0, 3.0]], &[0.5], 3, 11).unwrap();
        assert_eq!(c, vec![[1.0, 2.0, 3.0]; 3]);
        assert_eq!(l, vec![0.5; 3]);
    }

    #[test]
    fn empty_cloud_is_rejected() {
        assert!(matches!(resample_indices(&[], 3, 0), Err(IagError::Validation(_))));
    }

    #[test]
    fn labels_travel_with_points() {
        let coords: Vec<Point3> = (0..7).map(|i| [i as f64, 1.0, 0.0]).collect();
        let label: Vec<f64> = (0..7).map(|i| i as f64 / 10.0).collect();
        let (c, l) = resample_points(&coords, &label, 19, 5).unwrap();
        for (p, v) in c.iter().zip(&l) {
            assert_eq!(p[0] / 10.0, *v);
        }
    }
}
