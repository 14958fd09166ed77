use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn tass(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tass"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write_json(path: &Path, value: &Value) {
    std::fs::write(path, serde_json::to_string_pretty(value).unwrap()).unwrap();
}

fn stdout_lines(out: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).expect("JSON line"))
        .collect()
}

fn error_line(out: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let last = stderr.lines().last().expect("stderr has an error line");
    serde_json::from_str(last).expect("machine-readable error")
}

/// Generates a tiny split and returns `(data_dir, train_config_path)`.
fn tiny_setup(root: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let spec = root.join("spec.json");
    write_json(
        &spec,
        &json!({
            "scenario": {
                "num_prototypes": 3, "d": 8, "h": 2, "w": 2, "segments": 4,
                "noise_std": 0.1, "distractor_rate": 0.3, "seed": 5
            },
            "train_videos": 24,
            "val_videos": 8
        }),
    );
    let data = root.join("data");
    let out = tass(&["gen-data", "--spec", spec.to_str().unwrap(), "--out", data.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let config = root.join("train.json");
    write_json(
        &config,
        &json!({
            "d": 8, "h": 2, "w": 2, "t": 4, "n_heads": 2,
            "batch_size": 8, "epochs": 2, "lr": 0.01,
            "train_data": "data/train", "val_data": "data/val"
        }),
    );
    (data, config)
}

#[test]
fn gen_data_writes_both_splits() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _) = tiny_setup(dir.path());
    for split in ["train", "val"] {
        assert!(data.join(split).join("manifest.json").exists());
        assert!(data.join(split).join("scripts.json").exists());
    }
}

#[test]
fn gen_data_is_reproducible_and_seed_override_changes_it() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _) = tiny_setup(dir.path());
    let spec = dir.path().join("spec.json");
    let again = dir.path().join("again");
    let other = dir.path().join("other");
    assert!(tass(&["gen-data", "--spec", spec.to_str().unwrap(), "--out", again.to_str().unwrap()]).status.success());
    assert!(tass(&["gen-data", "--spec", spec.to_str().unwrap(), "--out", other.to_str().unwrap(), "--seed", "99"])
        .status
        .success());
    let audio = |root: &Path| std::fs::read(root.join("train/videos/train_000000.audio.tass")).unwrap();
    assert_eq!(audio(&data), audio(&again));
    assert_ne!(audio(&data), audio(&other));
}

#[test]
fn preprocess_shortens_sequences() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _) = tiny_setup(dir.path());
    let pooled = dir.path().join("pooled");
    let out = tass(&[
        "preprocess",
        "--in",
        data.join("train").to_str().unwrap(),
        "--t2",
        "3",
        "--out",
        pooled.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_lines(&out)[0]["segments"], 2);
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(pooled.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["dims"]["t"], 2);
}

#[test]
fn train_then_eval_reproduces_the_final_report() {
    let dir = tempfile::tempdir().unwrap();
    let (data, config) = tiny_setup(dir.path());
    let run = dir.path().join("run");
    let out = tass(&["train", "--config", config.to_str().unwrap(), "--out", run.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let epochs = stdout_lines(&out);
    assert_eq!(epochs.len(), 3);
    assert!(epochs[0]["train_loss"].is_null());
    assert!(run.join("checkpoint/index.json").exists());
    let history: Value = serde_json::from_str(&std::fs::read_to_string(run.join("history.json")).unwrap()).unwrap();
    assert_eq!(history.as_array().unwrap().len(), 3);

    let dump = dir.path().join("dump");
    let ckpt = run.join("checkpoint");
    let val = data.join("val");
    let eval = |extra: &[&str]| {
        let mut args = vec!["eval", "--checkpoint", ckpt.to_str().unwrap(), "--data", val.to_str().unwrap()];
        args.extend_from_slice(extra);
        let out = tass(&args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        stdout_lines(&out).remove(0)
    };
    let first = eval(&[]);
    let second = eval(&["--dump-attention", dump.to_str().unwrap()]);
    assert_eq!(first["overall"], second["overall"]);
    assert_eq!(first["predictions"], second["predictions"]);
    assert_eq!(first["total"], 8);
    assert!(dump.join("000000").join("w_av.tass").exists());
    assert!(dump.join("predictions.json").exists());
}

#[test]
fn missing_config_is_a_machine_readable_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = tass(&[
        "train",
        "--config",
        dir.path().join("absent.json").to_str().unwrap(),
        "--out",
        dir.path().join("run").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let err = error_line(&out);
    assert_eq!(err["error"], "io");
    assert!(err["message"].as_str().unwrap().contains("absent.json"));
}

#[test]
fn invalid_config_values_are_rejected_before_training() {
    let dir = tempfile::tempdir().unwrap();
    let (_, config) = tiny_setup(dir.path());
    let mut value: Value = serde_json::from_str(&std::fs::read_to_string(&config).unwrap()).unwrap();
    value["n_heads"] = json!(3);
    write_json(&config, &value);
    let out = tass(&["train", "--config", config.to_str().unwrap(), "--out", dir.path().join("run").to_str().unwrap()]);
    assert!(!out.status.success());
    assert_eq!(error_line(&out)["error"], "config");
}

#[test]
fn eval_rejects_mismatched_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let (_, config) = tiny_setup(dir.path());
    let run = dir.path().join("run");
    assert!(tass(&["train", "--config", config.to_str().unwrap(), "--out", run.to_str().unwrap()]).status.success());
    let spec = dir.path().join("wide.json");
    write_json(
        &spec,
        &json!({
            "scenario": {
                "num_prototypes": 3, "d": 12, "h": 2, "w": 2, "segments": 4,
                "noise_std": 0.1, "distractor_rate": 0.3, "seed": 5
            },
            "train_videos": 2,
            "val_videos": 2
        }),
    );
    let wide = dir.path().join("wide");
    assert!(tass(&["gen-data", "--spec", spec.to_str().unwrap(), "--out", wide.to_str().unwrap()]).status.success());
    let out = tass(&[
        "eval",
        "--checkpoint",
        run.join("checkpoint").to_str().unwrap(),
        "--data",
        wide.join("val").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert_eq!(error_line(&out)["error"], "checkpoint");
}

#[test]
fn gradcheck_reports_every_case_and_a_consistent_exit_code() {
    let out = tass(&["gradcheck", "--seed", "3", "--seeds", "1"]);
    let lines = stdout_lines(&out);
    let summary = lines.last().unwrap();
    let cases = &lines[..lines.len() - 1];
    assert_eq!(summary["cases"].as_u64().unwrap() as usize, cases.len());
    let failed = cases.iter().filter(|c| c["pass"] == false).count();
    assert_eq!(summary["failed"].as_u64().unwrap() as usize, failed);
    assert_eq!(out.status.success(), failed == 0);
    for name in ["matmul", "softmax", "lstm", "tsg", "match_loss"] {
        let case = cases.iter().find(|c| c["name"] == name).expect(name);
        assert_eq!(case["pass"], true, "{name}");
    }
}

#[test]
fn ablate_emits_one_row_per_variant_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (_, config) = tiny_setup(dir.path());
    let base: Value = serde_json::from_str(&std::fs::read_to_string(&config).unwrap()).unwrap();
    let ablate = dir.path().join("ablate.json");
    write_json(&ablate, &json!({ "base": base, "seeds": [0, 1] }));
    let out_dir = dir.path().join("ablation");
    let out = tass(&[
        "ablate",
        "--config",
        ablate.to_str().unwrap(),
        "--axes",
        "cms,stream",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8_lossy(&out.stdout);
    let rows: Vec<&str> = csv.lines().collect();
    assert!(rows[0].starts_with("variant,seed"));
    assert_eq!(rows.len(), 1 + 3 * 2);
    assert!(rows.iter().any(|r| r.starts_with("dual_stream,")));
    assert!(out_dir.join("summary.csv").exists());
}

#[test]
fn unknown_ablation_axis_fails() {
    let dir = tempfile::tempdir().unwrap();
    let (_, config) = tiny_setup(dir.path());
    let base: Value = serde_json::from_str(&std::fs::read_to_string(&config).unwrap()).unwrap();
    let ablate = dir.path().join("ablate.json");
    write_json(&ablate, &json!({ "base": base }));
    let out = tass(&["ablate", "--config", ablate.to_str().unwrap(), "--axes", "no_such_axis"]);
    assert!(!out.status.success());
    assert_eq!(error_line(&out)["error"], "config");
}
