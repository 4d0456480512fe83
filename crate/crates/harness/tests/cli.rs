use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use layerkv_harness::manifest::{Manifest, Role};
use layerkv_harness::tensor_file;

fn tiny() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tiny.toml")
}

struct Outcome {
    code: i32,
    stdout: String,
    stderr: String,
}

fn run(cwd: &Path, args: &[&str]) -> Outcome {
    let out = Command::new(env!("CARGO_BIN_EXE_layerkv"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs");
    Outcome {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn class_of(stderr: &str) -> String {
    stderr
        .strip_prefix("error class=")
        .and_then(|s| s.split_whitespace().next())
        .unwrap_or("-")
        .to_string()
}

/// Artifact checksums of a run, without the manifest itself.
fn checksums(dir: &Path) -> BTreeMap<String, String> {
    let (m, _) = Manifest::load(dir).unwrap();
    m.verify(dir).unwrap();
    m.artifacts.into_iter().map(|a| (a.path, a.sha256)).collect()
}

#[test]
fn exit_codes_and_error_classes_match_golden() {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path();
    let cfg = tiny();
    let cfg = cfg.to_str().unwrap();
    std::fs::write(cwd.join("bad_key.toml"), "[edit]\nbogus = 1\n").unwrap();
    std::fs::write(cwd.join("corrupt.lkvt"), b"XXXX\x01\x00\x00\x00").unwrap();
    std::fs::write(cwd.join("partial.json"), r#"{"vitality_layer": [0.1, 0.2]}"#).unwrap();
    let cases: Vec<(&str, Vec<&str>)> = vec![
        ("no-arguments", vec![]),
        ("unknown-command", vec!["frobnicate"]),
        ("missing-required-flag", vec!["edit-add", "--src", "a cat"]),
        ("t-i-beyond-t-e", vec!["edit-add", "--src", "a cat", "--trg", "a cat with a hat", "--t-i", "20", "--config", cfg]),
        ("t-e-beyond-steps", vec!["edit-nonrigid", "--src", "a cat", "--trg", "a cat jumping", "--t-e", "99", "--config", cfg]),
        ("layer-out-of-range", vec!["edit-add", "--src", "a cat", "--trg", "a cat with a hat", "--layers", "9", "--config", cfg]),
        ("malformed-layer-list", vec!["edit-add", "--src", "a cat", "--trg", "a cat with a hat", "--layers", "x", "--config", cfg]),
        ("malformed-sweep-list", vec!["sweep", "edit-add", "--src", "a", "--trg", "a b", "--t-i", "1,,2", "--t-e", "8", "--config", cfg]),
        ("unknown-config-key", vec!["generate", "--prompt", "a cat", "--config", "bad_key.toml"]),
        ("missing-config-file", vec!["generate", "--prompt", "a cat", "--config", "nope.toml"]),
        ("missing-input-video", vec!["invert", "--video", "nope.lkvt", "--prompt", "a cat", "--config", cfg]),
        ("corrupt-input-video", vec!["invert", "--video", "corrupt.lkvt", "--prompt", "a cat", "--config", cfg, "--out", "inv"]),
        ("incomplete-report", vec!["report", "partial.json", "--out", "rep"]),
        ("identical-prompts", vec!["edit-add", "--src", "a cat", "--trg", "a cat", "--config", cfg, "--out", "same"]),
        ("rerun-without-out", vec!["rerun", "somewhere"]),
    ];
    let mut got = String::new();
    for (name, args) in &cases {
        let o = run(cwd, args);
        assert_eq!(o.stderr.lines().count(), usize::from(o.code != 0), "{name}: {}", o.stderr);
        got.push_str(&format!("{name}: exit={} class={}\n", o.code, class_of(&o.stderr)));
        match *name {
            "corrupt-input-video" => assert!(o.stderr.contains("byte offset 0"), "{}", o.stderr),
            "incomplete-report" => assert!(o.stderr.contains("vitality_rope, num_prompts, embedder"), "{}", o.stderr),
            "missing-input-video" => assert!(o.stderr.contains("nope.lkvt"), "{}", o.stderr),
            _ => {}
        }
    }
    let golden = include_str!("golden/exit_codes.txt");
    assert_eq!(got, golden);
}

#[test]
fn edit_add_writes_a_complete_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny();
    let o = run(
        tmp.path(),
        &["edit-add", "--src", "a cat", "--trg", "a cat with a hat", "--seed", "7", "--config", cfg.to_str().unwrap(), "--out", "run"],
    );
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(o.stdout.starts_with("ok command=edit-add id="), "{}", o.stdout);
    let dir = tmp.path().join("run");
    let sums = checksums(&dir);
    for required in ["tensors/source.lkvt", "tensors/target.lkvt", "tensors/mask.lkvt", "metrics.json", "edit.json"] {
        assert!(sums.contains_key(required), "missing {required}");
    }
    for f in ["0000.png", "0001.png", "0002.png"] {
        assert!(sums.contains_key(&format!("frames/target/{f}")));
    }
    let (m, _) = Manifest::load(&dir).unwrap();
    assert_eq!(m.config.run.seed, 7);
    assert_eq!(m.artifacts_with_role(Role::Attention).count(), 3);
    assert_eq!(m.artifacts_with_role(Role::Plot).count(), 3);
    let mask = tensor_file::read(&dir.join("tensors/mask.lkvt")).unwrap();
    assert_eq!(mask.dims, vec![3, 4, 4]);
    assert!(mask.data.iter().all(|&v| v == 0.0 || v == 1.0));
}

#[test]
fn sweep_records_failed_combinations_and_continues() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny();
    let o = run(
        tmp.path(),
        &[
            "sweep", "edit-add", "--src", "a cat", "--trg", "a cat with a hat", "--t-i", "0,5", "--t-e", "8,10",
            "--config", cfg.to_str().unwrap(), "--out", "sw",
        ],
    );
    assert_eq!(o.code, 0, "{}", o.stderr);
    let dir = tmp.path().join("sw");
    let runs: Vec<serde_json::Value> = serde_json::from_slice(&std::fs::read(dir.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(runs.len(), 4);
    let status: Vec<(u64, u64, &str)> = runs
        .iter()
        .map(|r| (r["t_i"].as_u64().unwrap(), r["t_e"].as_u64().unwrap(), r["status"].as_str().unwrap()))
        .collect();
    assert_eq!(status, vec![(0, 8, "failed"), (0, 10, "failed"), (5, 8, "ok"), (5, 10, "ok")]);
    assert_eq!(runs[0]["error_class"], "config");
    for sub in ["runs/ti05_te08", "runs/ti05_te10"] {
        let (m, _) = Manifest::load(&dir.join(sub)).unwrap();
        assert_eq!((m.config.edit.t_i, m.config.edit.t_e), (5, if sub.ends_with("08") { 8 } else { 10 }));
        checksums(&dir.join(sub));
    }
    checksums(&dir);
}

#[test]
fn rerun_from_manifest_reproduces_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny();
    let cfg = cfg.to_str().unwrap();
    let cwd = tmp.path();
    assert_eq!(run(cwd, &["generate", "--prompt", "a fox in the snow", "--seed", "3", "--config", cfg, "--out", "gen"]).code, 0);
    let o = run(
        cwd,
        &["invert", "--video", "gen/tensors/video.lkvt", "--prompt", "a fox in the snow", "--trg", "a fox in the snow with a scarf", "--config", cfg, "--out", "inv"],
    );
    assert_eq!(o.code, 0, "{}", o.stderr);
    let o = run(cwd, &["rerun", "inv", "--out", "inv2"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert_eq!(checksums(&cwd.join("inv")), checksums(&cwd.join("inv2")));
    let (a, _) = Manifest::load(&cwd.join("inv")).unwrap();
    let (b, _) = Manifest::load(&cwd.join("inv2")).unwrap();
    assert_eq!(a.id, b.id);
    assert!(checksums(&cwd.join("inv")).contains_key("tensors/mask.lkvt"));
}

#[test]
fn evaluate_and_report_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny();
    let cfg = cfg.to_str().unwrap();
    let cwd = tmp.path();
    let o = run(cwd, &["edit-nonrigid", "--src", "a dog sitting", "--trg", "a dog jumping", "--config", cfg, "--out", "nr"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let o = run(
        cwd,
        &[
            "evaluate", "--source", "nr/tensors/source.lkvt", "--target", "nr/tensors/target.lkvt", "--src", "a dog sitting",
            "--trg", "a dog jumping", "--config", cfg, "--out", "ev",
        ],
    );
    assert_eq!(o.code, 0, "{}", o.stderr);
    let ev: serde_json::Value = serde_json::from_slice(&std::fs::read(cwd.join("ev/evaluation.json")).unwrap()).unwrap();
    let nr: serde_json::Value = serde_json::from_slice(&std::fs::read(cwd.join("nr/metrics.json")).unwrap()).unwrap();
    assert_eq!(ev["overall"], nr["overall"]);
    let o = run(cwd, &["probe-vitality", "--config", cfg, "--out", "pv"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let o = run(cwd, &["report", "pv/vitality.json", "--out", "rep"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let sums = checksums(&cwd.join("rep"));
    assert!(sums.contains_key("plots/00_vitality_vitality.svg"));
    assert_eq!(sums["plots/00_vitality_vitality.svg"], checksums(&cwd.join("pv"))["plots/vitality.svg"]);
}
