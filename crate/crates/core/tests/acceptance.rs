//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit when a
//! hard criterion fails. Runs without the libtest harness so the lines are
//! never captured.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use iag_core::data::synthetic::{generate_synthetic_dataset, make_cloud, render_image, Family, Instance, SyntheticConfig};
use iag_core::graph::Graph;
use iag_core::harness::{evaluate, export_heatmap, read_heatmap_ply, train_on};
use iag_core::losses::total_loss;
use iag_core::oracle::{check_fps, check_gradients, check_metrics, check_normalization, OracleCheck};
use iag_core::{
    BBox, Checkpoint, Dataset, InteractionImage, LossWeights, MetricReport, ModelConfig, ModelInput, Network,
    SplitTag, TrainConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, PartialEq)]
enum Verdict {
    Pass,
    Fail,
    Soft,
}

type Outcome = Result<(Verdict, String), String>;

fn hard(ok: bool, detail: String) -> Outcome {
    Ok((if ok { Verdict::Pass } else { Verdict::Fail }, detail))
}

struct Line {
    id: &'static str,
    title: &'static str,
    verdict: Verdict,
    detail: String,
    elapsed: Duration,
    budget: Duration,
}

impl Line {
    fn print(&self) {
        let tag = match self.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Soft => "SOFT",
        };
        println!(
            "[{tag}] {:<3} {:<28} {:>7.1}s / {:>4}s  {}",
            self.id,
            self.title,
            self.elapsed.as_secs_f64(),
            self.budget.as_secs(),
            self.detail
        );
    }
}

fn run(id: &'static str, title: &'static str, budget_secs: u64, f: impl FnOnce() -> Outcome) -> Line {
    let started = Instant::now();
    let result = f();
    let elapsed = started.elapsed();
    let budget = Duration::from_secs(budget_secs);
    let (verdict, mut detail) = result.unwrap_or_else(|e| (Verdict::Fail, format!("error: {e}")));
    let verdict = if elapsed > budget && verdict == Verdict::Pass {
        detail.push_str("; over time budget");
        Verdict::Fail
    } else {
        verdict
    };
    let line = Line {
        id,
        title,
        verdict,
        detail,
        elapsed,
        budget,
    };
    line.print();
    line
}

fn oracle_lines(checks: &[OracleCheck]) -> Outcome {
    let ok = checks.iter().all(|c| c.passed);
    let parts: Vec<String> = checks
        .iter()
        .map(|c| format!("{}={:.1e}{}", c.name, c.max_error, if c.passed { "" } else { "!" }))
        .collect();
    hard(ok, parts.join(" "))
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// The shipped overfit recipe pointed at `root`.
fn synthetic_config(root: &Path, seed: u64) -> Result<TrainConfig, String> {
    let mut cfg = TrainConfig::load(&workspace_root().join("configs/synthetic.toml")).map_err(err)?;
    cfg.dataset_root = root.to_path_buf();
    cfg.checkpoint_dir = None;
    cfg.seed = seed;
    Ok(cfg)
}

fn tiny_config(root: &Path) -> TrainConfig {
    TrainConfig {
        dataset_root: root.to_path_buf(),
        epochs: 2,
        batch_size: 4,
        model: ModelConfig::tiny(),
        ..TrainConfig::default()
    }
}

fn tiny_dataset() -> Result<(tempfile::TempDir, Dataset), String> {
    let dir = tempfile::tempdir().map_err(err)?;
    let cfg = SyntheticConfig {
        train_images: 6,
        train_clouds: 6,
        test_images: 3,
        test_clouds: 3,
        cloud_points: 96,
        image_size: 32,
    };
    generate_synthetic_dataset(&cfg, 11, dir.path()).map_err(err)?;
    let ds = Dataset::load(dir.path(), SplitTag::SeenTrain).map_err(err)?;
    Ok((dir, ds))
}

fn shape_conformance() -> Outcome {
    let config = ModelConfig::full();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let instance = Instance::random(Family::Mug, &mut rng);
    let cloud = make_cloud(&instance, config.point_count, &mut rng);
    let (pixels, ann) = render_image(&instance, "grasp", config.image_size as u32, &mut rng);
    let image = InteractionImage {
        pixels,
        box_subject: BBox::from_array(ann.box_subject),
        box_object: BBox::from_array(ann.box_object),
        affordance: 0,
    };
    let input = ModelInput::prepare(&image, &cloud.coords, &config).map_err(err)?;
    let (net, store) = Network::new(&config, 3, 0).map_err(err)?;
    let mut g = Graph::with_params(&store);
    let t = net.forward(&mut g, &input).map_err(err)?;
    let jra = t.jra.as_ref().ok_or("JRA disabled at full config")?;
    let arm = t.arm.as_ref().ok_or("ARM disabled at full config")?;
    let grid = (g.shape(t.grid.var).0, t.grid.height, t.grid.width);
    let expected: Vec<(&str, (usize, usize), (usize, usize))> = vec![
        ("F_p", g.shape(t.points.deepest()), (512, 64)),
        ("regions", g.shape(t.regions.f_obj), (512, 16)),
        ("phi", g.shape(jra.phi), (64, 16)),
        ("F_j", g.shape(t.joint.values), (512, 80)),
        ("Q", g.shape(arm.q), (512, 80)),
        ("Theta1", g.shape(arm.theta1), (512, 80)),
        ("Theta2", g.shape(arm.theta2), (512, 80)),
        ("F_alpha", g.shape(t.affordance.values), (512, 80)),
        ("heatmap", (g.shape(t.heatmap).1, g.shape(t.heatmap).0), (2048, 1)),
    ];
    let mut ok = grid == (512, 7, 7);
    let mut detail = vec![format!("F_I {}x{}x{}", grid.0, grid.1, grid.2)];
    for (name, got, want) in expected {
        ok &= got == want;
        detail.push(format!("{name} {}x{}{}", got.0, got.1, if got == want { "" } else { "!" }));
    }
    hard(ok, detail.join(", "))
}

/// Overall aIoU and AUC as fractions (reports use percentages).
fn fractions(report: &MetricReport) -> (f64, f64) {
    (report.overall.aiou / 100.0, report.overall.auc.unwrap_or(0.0) / 100.0)
}

struct OverfitRun {
    checkpoint: Checkpoint,
    train: MetricReport,
    first_loss: f64,
    best_loss: f64,
}

fn overfit(root: &Path, seed: u64, baseline: bool) -> Result<OverfitRun, String> {
    let mut cfg = synthetic_config(root, seed)?;
    if baseline {
        cfg.model.use_jra = false;
        cfg.model.use_arm = false;
    }
    let ds = Dataset::load(root, SplitTag::SeenTrain).map_err(err)?;
    let out = train_on(&cfg, &ds).map_err(err)?;
    let train = evaluate(&out.checkpoint, &ds).map_err(err)?;
    let best_loss = out.log.iter().map(|e| e.total).fold(f64::INFINITY, f64::min);
    Ok(OverfitRun {
        first_loss: out.log[0].total,
        best_loss,
        checkpoint: out.checkpoint,
        train,
    })
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        // libtest-compatible listing for tooling
        println!("acceptance: test");
        return;
    }
    let mut lines = Vec::new();

    lines.push(run("1", "metric oracles", 30, || {
        oracle_lines(&check_metrics(1000, 1).map_err(err)?)
    }));
    lines.push(run("2", "farthest point sampling", 30, || {
        oracle_lines(&[check_fps(500, 2).map_err(err)?])
    }));
    lines.push(run("3", "gradient suite", 120, || {
        oracle_lines(&check_gradients(3).map_err(err)?)
    }));
    lines.push(run("4", "normalisation invariants", 60, || {
        oracle_lines(&check_normalization(1000, 4).map_err(err)?)
    }));
    lines.push(run("5", "full-size shapes", 60, shape_conformance));

    let data = tempfile::tempdir().expect("temp dir");
    let generated = generate_synthetic_dataset(&SyntheticConfig::default(), 7, data.path());
    let root = data.path().to_path_buf();

    let mut full_seed7 = None;
    lines.push(run("6", "synthetic overfit", 900, || {
        generated.as_ref().map_err(err)?;
        let r = overfit(&root, 7, false)?;
        let (aiou, auc) = fractions(&r.train);
        let drop = 1.0 - r.best_loss / r.first_loss;
        let detail = format!(
            "train aIoU {aiou:.4} (>= 0.50), AUC {auc:.4} (>= 0.90); loss {:.4} -> best {:.4} ({:.1}% drop)",
            r.first_loss,
            r.best_loss,
            100.0 * drop
        );
        let ok = aiou >= 0.50 && auc >= 0.90;
        full_seed7 = Some(r);
        hard(ok, detail)
    }));

    // Soft: below a 0.02 margin the result is reported, never failed.
    lines.push(run("7", "full model vs concat", 1800, || {
        let test = Dataset::load(&root, SplitTag::SeenTest).map_err(err)?;
        let (mut full, mut base) = (Vec::new(), Vec::new());
        for seed in [7u64, 8, 9] {
            let ck = match (seed, full_seed7.take()) {
                (7, Some(r)) => r.checkpoint,
                _ => overfit(&root, seed, false)?.checkpoint,
            };
            full.push(fractions(&evaluate(&ck, &test).map_err(err)?).0);
            let b = overfit(&root, seed, true)?;
            base.push(fractions(&evaluate(&b.checkpoint, &test).map_err(err)?).0);
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (f, b) = (mean(&full), mean(&base));
        let detail = format!(
            "test aIoU full {f:.4} {full:.3?} vs concat {b:.4} {base:.3?}, margin {:+.4}",
            f - b
        );
        if f - b >= 0.02 {
            Ok((Verdict::Pass, detail))
        } else {
            Ok((Verdict::Soft, format!("{detail} (below 0.02, reported only)")))
        }
    }));

    lines.push(run("8", "determinism and persistence", 120, || {
        let (dir, ds) = tiny_dataset()?;
        let cfg = tiny_config(dir.path());
        let a = train_on(&cfg, &ds).map_err(err)?;
        let b = train_on(&cfg, &ds).map_err(err)?;
        let replay = a.log == b.log;

        let path = dir.path().join("ck.json");
        a.checkpoint.save(&path).map_err(err)?;
        let loaded = Checkpoint::load(&path).map_err(err)?;
        let (net_a, store_a) = a.checkpoint.restore().map_err(err)?;
        let (net_b, store_b) = loaded.restore().map_err(err)?;
        let test = Dataset::load(dir.path(), SplitTag::SeenTest).map_err(err)?;
        let cloud = &test.clouds[0].coords;
        let input = ModelInput::prepare(&test.images[0], cloud, &cfg.model).map_err(err)?;
        let pa = net_a.predict(&store_a, &input).map_err(err)?;
        let pb = net_b.predict(&store_b, &input).map_err(err)?;
        let round_trip = pa == pb && loaded == a.checkpoint;

        let ply = dir.path().join("h.ply");
        let coords = input.hierarchy.input.clone();
        export_heatmap(&coords, &pa.heatmap, &ply).map_err(err)?;
        let (_, back) = read_heatmap_ply(&ply).map_err(err)?;
        let ply_err = back.iter().zip(&pa.heatmap).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let ply_ok = back.len() == pa.heatmap.len() && ply_err <= 1.0 / 255.0;
        hard(
            replay && round_trip && ply_ok,
            format!("seed replay {replay}, checkpoint forward bitwise {round_trip}, ply max err {ply_err:.2e} (<= 1/255)"),
        )
    }));

    lines.push(run("9", "loss-weight fidelity", 120, || {
        let w = LossWeights::default();
        let b = total_loss(2.0, 3.0, 5.0, w);
        let weights_ok = (w.lambda_hm, w.lambda_ce, w.lambda_kl) == (1.0, 0.3, 0.5) && b.total == 5.0 + 0.3 * 2.0 + 0.5 * 3.0;
        let (dir, ds) = tiny_dataset()?;
        let mut cfg = tiny_config(dir.path());
        cfg.loss.lambda_kl = 0.0;
        let out = train_on(&cfg, &ds).map_err(err)?;
        let test = Dataset::load(dir.path(), SplitTag::SeenTest).map_err(err)?;
        let report = evaluate(&out.checkpoint, &test).map_err(err)?;
        let ablation_ok = out.log.iter().all(|e| e.total.is_finite()) && report.overall.samples > 0;
        hard(
            weights_ok && ablation_ok,
            format!(
                "defaults hm/ce/kl = {}/{}/{}; lambda_kl=0 run: {} epochs, test aIoU {:.1}%",
                w.lambda_hm, w.lambda_ce, w.lambda_kl, out.log.len(), report.overall.aiou
            ),
        )
    }));

    let failed: Vec<&str> = lines.iter().filter(|l| l.verdict == Verdict::Fail).map(|l| l.id).collect();
    println!(
        "acceptance: {} passed, {} soft, {} failed",
        lines.iter().filter(|l| l.verdict == Verdict::Pass).count(),
        lines.iter().filter(|l| l.verdict == Verdict::Soft).count(),
        failed.len()
    );
    if !failed.is_empty() {
        println!("failed criteria: {}", failed.join(", "));
        std::process::exit(1);
    }
}
