use std::collections::BTreeMap;
use std::path::Path;

use iag_core::data::synthetic::{generate_synthetic_dataset, SyntheticConfig};
use iag_core::data::{load_pair, sample_pairs, Dataset, LoadOptions, PairStream};
use iag_core::{IagError, SplitTag};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn small() -> SyntheticConfig {
    SyntheticConfig {
        train_images: 6,
        train_clouds: 6,
        test_images: 3,
        test_clouds: 3,
        cloud_points: 96,
        image_size: 32,
    }
}

#[test]
fn generation_is_byte_identical_for_a_seed() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = SyntheticConfig::default();
    generate_synthetic_dataset(&cfg, 7, a.path()).unwrap();
    generate_synthetic_dataset(&cfg, 7, b.path()).unwrap();
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    assert_eq!(ta.len(), 2 + 2 * (20 + 12) + 2 * (30 + 12));
    assert_eq!(ta, tb);

    let c = tempfile::tempdir().unwrap();
    generate_synthetic_dataset(&cfg, 8, c.path()).unwrap();
    assert_ne!(ta, tree(c.path()));
}

#[test]
fn generated_splits_load_with_valid_candidates() {
    let dir = tempfile::tempdir().unwrap();
    generate_synthetic_dataset(&small(), 3, dir.path()).unwrap();
    for split in [SplitTag::SeenTrain, SplitTag::SeenTest] {
        let ds = Dataset::load(dir.path(), split).unwrap();
        assert!(!ds.is_empty());
        for (i, cands) in ds.candidates.iter().enumerate() {
            let ann = &ds.annotations[i];
            for &c in cands {
                let meta = &ds.clouds[c].meta;
                assert_eq!(meta.object, ann.object);
                assert!(meta.afforded().contains(&ann.affordance));
            }
        }
    }
    assert!(matches!(
        Dataset::load(dir.path(), SplitTag::UnseenTest),
        Err(IagError::Io { .. })
    ));
}

#[test]
fn pairing_counts_replay_and_classes() {
    let dir = tempfile::tempdir().unwrap();
    generate_synthetic_dataset(&small(), 4, dir.path()).unwrap();
    let ds = Dataset::load(dir.path(), SplitTag::SeenTrain).unwrap();
    for n in [1, 2, 5] {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let units = sample_pairs(&ds, n, &mut rng).unwrap();
        assert_eq!(units.len(), ds.len());
        let mut seen: Vec<usize> = units.iter().map(|u| u.image).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..ds.len()).collect::<Vec<_>>());
        for u in &units {
            assert_eq!(u.clouds.len(), n);
            assert!(u.clouds.iter().all(|c| ds.candidates[u.image].contains(c)));
            if ds.candidates[u.image].len() >= n {
                let mut distinct = u.clouds.clone();
                distinct.sort_unstable();
                distinct.dedup();
                assert_eq!(distinct.len(), n);
            }
        }
        let mut replay = ChaCha8Rng::seed_from_u64(11);
        assert_eq!(units, sample_pairs(&ds, n, &mut replay).unwrap());
    }
    assert!(sample_pairs(&ds, 0, &mut ChaCha8Rng::seed_from_u64(0)).is_err());

    let stream = PairStream::new(&ds, 2, ChaCha8Rng::seed_from_u64(5)).unwrap();
    let units: Vec<_> = stream.take(3 * ds.len()).collect();
    assert_eq!(units.len(), 3 * ds.len());
    for chunk in units.chunks(ds.len()) {
        let mut images: Vec<usize> = chunk.iter().map(|u| u.image).collect();
        images.sort_unstable();
        assert_eq!(images, (0..ds.len()).collect::<Vec<_>>());
    }
}

#[test]
fn load_pair_selects_the_image_affordance_channel() {
    let dir = tempfile::tempdir().unwrap();
    generate_synthetic_dataset(&small(), 5, dir.path()).unwrap();
    let ds = Dataset::load(dir.path(), SplitTag::SeenTrain).unwrap();
    let entry = &ds.manifest.entries[0];
    let opts = LoadOptions {
        point_count: 64,
        seed: 1,
        split: SplitTag::SeenTrain,
    };
    let root = dir.path();
    let pair = load_pair(
        &root.join(&entry.image),
        &root.join(&entry.annotation),
        &root.join(&entry.clouds[0]),
        &ds.vocab,
        &opts,
    )
    .unwrap();
    assert_eq!(pair.cloud.len(), 64);
    assert_eq!(pair.image.affordance, ds.vocab.affordance_id(&ds.annotations[0].affordance).unwrap());
    assert!(pair.cloud.label.iter().any(|&v| v > 0.5));

    // a cloud of another object category is refused
    let other = ds
        .cloud_paths
        .iter()
        .zip(&ds.clouds)
        .find(|(_, c)| c.meta.object != ds.annotations[0].object)
        .map(|(p, _)| p.clone())
        .unwrap();
    let err = load_pair(
        &root.join(&entry.image),
        &root.join(&entry.annotation),
        &root.join(other),
        &ds.vocab,
        &opts,
    )
    .unwrap_err();
    assert!(matches!(err, IagError::Validation(_)));
}
