use std::path::Path;
use std::sync::Arc;

use iag_core::data::synthetic::{generate_synthetic_dataset, SyntheticConfig};
use iag_core::data::resize_image;
use iag_core::harness::{
    batch_gradient, evaluate, export_heatmap, infer, prepare_clouds, read_heatmap_ply, train_on, PairJob,
};
use iag_core::model::ModelInput;
use iag_core::{Accumulation, Checkpoint, Dataset, IagError, Matrix, ModelConfig, SplitTag, TrainConfig};

fn dataset(seed: u64) -> (tempfile::TempDir, Dataset) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SyntheticConfig {
        train_images: 6,
        train_clouds: 6,
        test_images: 3,
        test_clouds: 3,
        cloud_points: 96,
        image_size: 32,
    };
    generate_synthetic_dataset(&cfg, seed, dir.path()).unwrap();
    let ds = Dataset::load(dir.path(), SplitTag::SeenTrain).unwrap();
    (dir, ds)
}

fn config(root: &Path) -> TrainConfig {
    TrainConfig {
        dataset_root: root.to_path_buf(),
        epochs: 2,
        batch_size: 4,
        model: ModelConfig::tiny(),
        ..TrainConfig::default()
    }
}

fn pair_jobs(ds: &Dataset, model: &ModelConfig, image: usize) -> Vec<PairJob> {
    let clouds = prepare_clouds(ds, model, 0).unwrap();
    let side = model.image_size as u32;
    let resized = resize_image(&ds.images[image], side, side);
    let name = &ds.annotations[image].affordance;
    ds.candidates[image]
        .iter()
        .take(2)
        .map(|&c| PairJob {
            input: ModelInput::new(&resized, clouds[c].hierarchy.clone()),
            target: Arc::new(Matrix::from_vec(1, model.point_count, clouds[c].target(&ds.clouds[c], name).unwrap())),
            class: ds.vocab.affordance_id(name).unwrap(),
            weight: 1.0,
        })
        .collect()
}

fn max_abs_diff(a: &[Option<Matrix>], b: &[Option<Matrix>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| match (x, y) {
            (Some(x), Some(y)) => x.as_slice().iter().zip(y.as_slice()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max),
            (None, None) => 0.0,
            _ => f64::INFINITY,
        })
        .fold(0.0, f64::max)
}

#[test]
fn zero_learning_rate_leaves_parameters_bitwise_unchanged() {
    let (dir, ds) = dataset(1);
    let cfg = TrainConfig {
        learning_rate: 0.0,
        ..config(dir.path())
    };
    let out = train_on(&cfg, &ds).unwrap();
    let (_, fresh) = iag_core::Network::new(&cfg.model, ds.vocab.num_affordances(), cfg.seed).unwrap();
    assert_eq!(out.checkpoint.params, fresh);
    assert!(out.log.iter().all(|e| e.total.is_finite()));
}

#[test]
fn seed_replay_reproduces_the_loss_curve() {
    let (dir, ds) = dataset(2);
    let cfg = config(dir.path());
    let a = train_on(&cfg, &ds).unwrap();
    let b = train_on(&cfg, &ds).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.checkpoint.params, b.checkpoint.params);
    let other = train_on(&TrainConfig { seed: 1, ..cfg }, &ds).unwrap();
    assert_ne!(a.log[0].total, other.log[0].total);
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    let (dir, ds) = dataset(3);
    let ck_dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        checkpoint_dir: Some(ck_dir.path().to_path_buf()),
        ..config(dir.path())
    };
    let out = train_on(&cfg, &ds).unwrap();
    let loaded = Checkpoint::load(&ck_dir.path().join("last.json")).unwrap();
    assert_eq!(loaded, out.checkpoint);
    assert_eq!(loaded.history, out.log);

    let (net_a, store_a) = out.checkpoint.restore().unwrap();
    let (net_b, store_b) = loaded.restore().unwrap();
    for job in pair_jobs(&ds, &cfg.model, 0) {
        let a = net_a.predict(&store_a, &job.input).unwrap();
        let b = net_b.predict(&store_b, &job.input).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn tampered_checkpoints_are_rejected() {
    let (dir, ds) = dataset(4);
    let ck = tempfile::tempdir().unwrap();
    let out = train_on(&TrainConfig { epochs: 1, ..config(dir.path()) }, &ds).unwrap();
    let path = ck.path().join("c.json");

    let mut bad = out.checkpoint.clone();
    bad.config.learning_rate = 0.5;
    bad.save(&path).unwrap();
    assert!(matches!(Checkpoint::load(&path), Err(IagError::Validation(_))));

    let mut bad = out.checkpoint.clone();
    bad.format_version += 1;
    bad.save(&path).unwrap();
    assert!(matches!(Checkpoint::load(&path), Err(IagError::Format { .. })));

    let mut bad = out.checkpoint;
    bad.config.model.channels += 2;
    assert!(matches!(bad.restore(), Err(IagError::Validation(_))));
}

#[test]
fn evaluation_is_deterministic_and_read_only() {
    let (dir, ds) = dataset(5);
    let out = train_on(&config(dir.path()), &ds).unwrap();
    let before = out.checkpoint.clone();
    let test = Dataset::load(dir.path(), SplitTag::SeenTest).unwrap();
    let a = evaluate(&out.checkpoint, &test).unwrap();
    let b = evaluate(&out.checkpoint, &test).unwrap();
    assert_eq!(a, b);
    assert_eq!(out.checkpoint, before);

    let mut classes: Vec<&str> = test.annotations.iter().map(|a| a.affordance.as_str()).collect();
    classes.sort_unstable();
    classes.dedup();
    assert_eq!(a.rows.len(), classes.len());
    assert_eq!(a.rows.len() + 1, a.to_text().lines().count() - 1);
    let pairs: usize = test.candidates.iter().map(Vec::len).sum();
    assert_eq!(a.overall.samples, pairs);
    assert_eq!(a.skipped, 0);
}

#[test]
fn unknown_classes_are_skipped_and_counted() {
    let (dir, ds) = dataset(6);
    let mut ck = train_on(&TrainConfig { epochs: 1, ..config(dir.path()) }, &ds).unwrap().checkpoint;
    let test = Dataset::load(dir.path(), SplitTag::SeenTest).unwrap();
    let victim = test.annotations[0].affordance.clone();
    let slot = ck.vocabulary.affordance_id(&victim).unwrap();
    ck.vocabulary.affordances[slot] = "unused".into();
    let report = evaluate(&ck, &test).unwrap();
    let expected: usize = test
        .annotations
        .iter()
        .zip(&test.candidates)
        .filter(|(a, _)| a.affordance == victim)
        .map(|(_, c)| c.len())
        .sum();
    assert_eq!(report.skipped, expected);
    assert!(report.rows.iter().all(|r| r.name != victim));
}

#[test]
fn pair_accumulation_matches_separate_passes() {
    let (_dir, ds) = dataset(7);
    let model = ModelConfig::tiny();
    let (net, store) = iag_core::Network::new(&model, ds.vocab.num_affordances(), 3).unwrap();
    let loss = iag_core::LossConfig::default();
    let image = (0..ds.len()).find(|&i| ds.candidates[i].len() >= 2).unwrap();
    let jobs = pair_jobs(&ds, &model, image);
    assert_eq!(jobs.len(), 2);

    let (joint, _) = batch_gradient(&net, &store, &jobs, &loss).unwrap();
    let (mut acc, _) = batch_gradient(&net, &store, &jobs[..1], &loss).unwrap();
    let (second, _) = batch_gradient(&net, &store, &jobs[1..], &loss).unwrap();
    for (a, b) in acc.iter_mut().zip(second) {
        match (a.as_mut(), b) {
            (Some(a), Some(b)) => a.add_assign(&b),
            (None, Some(b)) => *a = Some(b),
            _ => {}
        }
    }
    assert!(max_abs_diff(&joint, &acc) <= 1e-6);

    // mean accumulation halves the pair weights
    let halved: Vec<PairJob> = jobs.iter().cloned().map(|j| PairJob { weight: 0.5, ..j }).collect();
    let (half, losses) = batch_gradient(&net, &store, &halved, &loss).unwrap();
    let scaled: Vec<Option<Matrix>> = joint.iter().map(|g| g.as_ref().map(|m| m.map(|v| 0.5 * v))).collect();
    assert!(max_abs_diff(&half, &scaled) <= 1e-6);
    assert!(losses.iter().all(|l| l.total.is_finite()));
}

#[test]
fn mean_accumulation_trains() {
    let (dir, ds) = dataset(8);
    let cfg = TrainConfig {
        accumulation: Accumulation::Mean,
        pairing_n: 3,
        ..config(dir.path())
    };
    let out = train_on(&cfg, &ds).unwrap();
    assert_eq!(out.log.len(), 2);
}

#[test]
fn inference_is_deterministic_and_exports() {
    let (dir, ds) = dataset(9);
    let out = train_on(&config(dir.path()), &ds).unwrap();
    let root = dir.path();
    let entry = &ds.manifest.entries[0];
    let (img, ann, cloud) = (root.join(&entry.image), root.join(&entry.annotation), root.join(&entry.clouds[0]));
    let a = infer(&out.checkpoint, &img, &ann, &cloud).unwrap();
    let b = infer(&out.checkpoint, &img, &ann, &cloud).unwrap();
    assert_eq!(a.prediction, b.prediction);
    assert_eq!(a.prediction.heatmap.len(), out.checkpoint.config.model.point_count);
    assert_eq!(a.class_name, ds.vocab.affordances[a.prediction.class]);
    let argmax = (0..a.prediction.logits.len())
        .max_by(|&x, &y| a.prediction.logits[x].total_cmp(&a.prediction.logits[y]))
        .unwrap();
    assert_eq!(a.prediction.class, argmax);

    let out_dir = tempfile::tempdir().unwrap();
    let ply = out_dir.path().join("h.ply");
    export_heatmap(&a.pair.cloud.coords, &a.prediction.heatmap, &ply).unwrap();
    let (coords, heat) = read_heatmap_ply(&ply).unwrap();
    assert_eq!(coords.len(), heat.len());
    for (x, y) in heat.iter().zip(&a.prediction.heatmap) {
        assert!((x - y).abs() <= 1.0 / 255.0);
    }
}

#[test]
fn ply_colours_span_gray_to_red() {
    let dir = tempfile::tempdir().unwrap();
    let coords = vec![[0.0, 0.0, 0.0]; 3];
    for (h, rgb) in [(0.0, "180 180 180"), (1.0, "255 0 0")] {
        let path = dir.path().join("c.ply");
        export_heatmap(&coords, &[h; 3], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let body: Vec<&str> = text.lines().skip_while(|l| *l != "end_header").skip(1).collect();
        assert_eq!(body.len(), 3);
        assert!(body.iter().all(|l| l.ends_with(rgb)), "{body:?}");
    }
}
