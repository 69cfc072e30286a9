use std::path::Path;
use std::process::{Command, Output};

use iag_core::{ModelConfig, TrainConfig};

fn iag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iag"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, data: &Path, edit: impl FnOnce(&mut TrainConfig)) -> String {
    let mut cfg = TrainConfig {
        dataset_root: data.to_path_buf(),
        epochs: 2,
        batch_size: 4,
        checkpoint_dir: Some(dir.join("ck")),
        model: ModelConfig::tiny(),
        ..TrainConfig::default()
    };
    edit(&mut cfg);
    let path = dir.join("train.toml");
    std::fs::write(&path, cfg.to_toml_string().unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn generate_train_evaluate_and_infer() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let gen = iag(&["gen-synthetic", "--out", data.to_str().unwrap(), "--seed", "3"]);
    assert!(gen.status.success(), "{gen:?}");
    assert!(stdout(&gen).contains("seen-train: 20 images"));

    let config = write_config(dir.path(), &data, |_| {});
    let train = iag(&["train", "--config", &config]);
    assert!(train.status.success(), "{train:?}");
    let text = stdout(&train);
    assert_eq!(text.lines().filter(|l| l.starts_with("epoch")).count(), 2);
    let ckpt = dir.path().join("ck/last.json");
    assert!(ckpt.exists());

    let eval = iag(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--split", "seen-test", "--json"]);
    assert!(eval.status.success(), "{eval:?}");
    let report: serde_json::Value = serde_json::from_slice(&eval.stdout).unwrap();
    assert!(report["overall"]["samples"].as_u64().unwrap() > 0);
    let again = iag(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--split", "seen-test", "--json"]);
    assert_eq!(eval.stdout, again.stdout);

    let manifest = std::fs::read_to_string(data.join("splits/seen-test.toml")).unwrap();
    let manifest: toml::Value = toml::from_str(&manifest).unwrap();
    let entry = &manifest["entry"][0];
    let ply = dir.path().join("out.ply");
    let infer = iag(&[
        "infer",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--image",
        data.join(entry["image"].as_str().unwrap()).to_str().unwrap(),
        "--annotation",
        data.join(entry["annotation"].as_str().unwrap()).to_str().unwrap(),
        "--cloud",
        data.join(entry["clouds"][0].as_str().unwrap()).to_str().unwrap(),
        "--out",
        ply.to_str().unwrap(),
    ]);
    assert!(infer.status.success(), "{infer:?}");
    assert!(stdout(&infer).contains("predicted affordance:"));
    let ply_text = std::fs::read_to_string(&ply).unwrap();
    assert!(ply_text.starts_with("ply\n"));
    assert!(ply_text.contains("element vertex 24"));
}

#[test]
fn invalid_config_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "epochs = 3\nlearning_rat = 0.1\n").unwrap();
    let out = iag(&["train", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rat"));

    std::fs::write(&path, "channels = 7\n").unwrap();
    assert_eq!(iag(&["train", "--config", path.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn divergence_exits_with_3_and_dumps_the_batch() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert!(iag(&["gen-synthetic", "--out", data.to_str().unwrap()]).status.success());
    let config = write_config(dir.path(), &data, |c| c.learning_rate = 1e300);
    let out = iag(&["train", "--config", &config]);
    assert_eq!(out.status.code(), Some(3), "{out:?}");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("batch"), "{stderr}");
    let dump: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("ck/nan_batch.json")).unwrap()).unwrap();
    assert!(dump["batch"].is_u64());
}

#[test]
fn missing_checkpoint_is_an_io_failure() {
    let out = iag(&["eval", "--checkpoint", "/nonexistent/ck.json", "--split", "seen-test"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn oracle_suite_passes() {
    let out = iag(&["oracle-suite", "--seed", "5"]);
    assert!(out.status.success(), "{}", stdout(&out));
    assert!(stdout(&out).lines().all(|l| l.starts_with("PASS")));
}
