//! End-to-end tests of the compiled binary: exit codes, artifact
//! layout, config precedence, and manifest reruns.

use std::path::Path;
use std::process::{Command, Output};

fn cadenza() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cadenza"))
}

fn run(args: &[&str]) -> Output {
    cadenza().args(args).output().expect("spawn cadenza")
}

fn assert_ok(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn read(path: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(path.as_ref())
        .unwrap_or_else(|e| panic!("reading {}: {e}", path.as_ref().display()))
}

#[test]
fn usage_errors_exit_one_with_suggestions() {
    let out = run(&[]);
    assert_eq!(code(&out), 1, "bare invocation is a usage error");

    let out = run(&["edits"]);
    assert_eq!(code(&out), 1);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("edit"), "unknown subcommand suggests: {stderr}");

    let out = run(&["delta", "--target-keywrod", "timbreB"]);
    assert_eq!(code(&out), 1);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("--target-keyword"),
        "unknown flag suggests the close one: {stderr}"
    );

    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "delta",
        "--source-keyword",
        "timbreA",
        "--run-dir",
        dir.path().join("d").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1, "missing required value is a usage error");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("--target-keyword"), "names the gap: {stderr}");

    let out = run(&[
        "delta",
        "--source-keyword",
        "banjo",
        "--target-keyword",
        "timbreB",
        "--run-dir",
        dir.path().join("d2").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1, "unknown keyword is a usage error");
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "generate",
        "--model",
        dir.path().join("missing.ckpt").to_str().unwrap(),
        "--prompt",
        "A relaxing jazz music with timbreA performance.",
        "--run-dir",
        dir.path().join("g").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2, "missing checkpoint is a runtime error");
}

#[test]
fn delta_is_deterministic_and_reruns_from_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let base = [
        "delta",
        "--source-keyword",
        "timbreA",
        "--target-keyword",
        "timbreB",
        "--captions",
        "6",
    ];
    let out = run(&[&base[..], &["--run-dir", a.to_str().unwrap()]].concat());
    assert_ok(&out, "delta run");
    for name in ["delta.f32t", "captions.json", "report.json", "manifest.toml"] {
        assert!(a.join(name).is_file(), "missing artifact {name}");
    }

    // rerun purely from the echoed manifest
    let out = run(&[
        "delta",
        "--config",
        a.join("manifest.toml").to_str().unwrap(),
        "--run-dir",
        b.to_str().unwrap(),
    ]);
    assert_ok(&out, "delta rerun");
    assert_eq!(
        read(a.join("delta.f32t")),
        read(b.join("delta.f32t")),
        "rerun from manifest must reproduce tensors bit-for-bit"
    );
    assert_eq!(read(a.join("manifest.toml")), read(b.join("manifest.toml")));
}

#[test]
fn run_root_env_and_nonempty_guard() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("root");
    let args = [
        "delta",
        "--source-keyword",
        "upbeat",
        "--target-keyword",
        "peaceful",
    ];
    let out = cadenza()
        .args(args)
        .env("CADENZA_RUN_ROOT", &root)
        .output()
        .unwrap();
    assert_ok(&out, "delta under run root");
    assert!(root.join("delta").join("delta.f32t").is_file());

    // same target again: refuse without --force, succeed with it
    let out = cadenza()
        .args(args)
        .env("CADENZA_RUN_ROOT", &root)
        .output()
        .unwrap();
    assert_eq!(code(&out), 2, "non-empty run dir is refused");
    let out = cadenza()
        .args(args)
        .arg("--force")
        .env("CADENZA_RUN_ROOT", &root)
        .output()
        .unwrap();
    assert_ok(&out, "forced rerun");
}

#[test]
fn config_file_feeds_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(
        &cfg,
        "[delta]\nsource-keyword = \"timbreA\"\ntarget-keyword = \"timbreB\"\ncaptions = 6\ncaption-seed = 9\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&[
        "delta",
        "--config",
        cfg.to_str().unwrap(),
        "--captions",
        "4",
        "--run-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_ok(&out, "delta with config");
    let manifest: toml::Table = std::fs::read_to_string(out_dir.join("manifest.toml"))
        .unwrap()
        .parse()
        .unwrap();
    let section = manifest["delta"].as_table().unwrap();
    assert_eq!(section["captions"], toml::Value::Integer(4), "flag wins");
    assert_eq!(
        section["caption-seed"],
        toml::Value::Integer(9),
        "file fills the rest"
    );
    assert_eq!(
        section["source-keyword"],
        toml::Value::String("timbreA".into())
    );
}

/// One shared trained model exercises the whole artifact pipeline:
/// generate, edit (plus null edit and manifest rerun), invert-edit,
/// and eval.
#[test]
fn pipeline_from_training_to_eval() {
    let dir = tempfile::tempdir().unwrap();
    let train_dir = dir.path().join("train");
    let out = run(&[
        "train-toy",
        "--arch",
        "tiny",
        "--clips",
        "6",
        "--epochs",
        "2",
        "--batch-size",
        "4",
        "--train-steps",
        "40",
        "--steps",
        "5",
        "--run-dir",
        train_dir.to_str().unwrap(),
    ]);
    assert_ok(&out, "train-toy");
    let model = train_dir.join("model.ckpt");
    for name in [
        "model.ckpt",
        "dataset.f32b",
        "dataset_manifest.json",
        "loss_curve.json",
        "manifest.toml",
    ] {
        assert!(train_dir.join(name).is_file(), "missing artifact {name}");
    }

    let prompt = "A relaxing jazz music with timbreA performance.";

    let gen_dir = dir.path().join("gen");
    let out = run(&[
        "generate",
        "--model",
        model.to_str().unwrap(),
        "--prompt",
        prompt,
        "--seed",
        "3",
        "--run-dir",
        gen_dir.to_str().unwrap(),
    ]);
    assert_ok(&out, "generate");
    assert!(gen_dir.join("clip.f32t").is_file());
    assert!(gen_dir.join("clip.wav").is_file());

    let edit_dir = dir.path().join("edit");
    let out = run(&[
        "edit",
        "--model",
        model.to_str().unwrap(),
        "--source",
        prompt,
        "--target-keyword",
        "timbreB",
        "--captions",
        "4",
        "--seed",
        "7",
        "--run-dir",
        edit_dir.to_str().unwrap(),
    ]);
    assert_ok(&out, "edit");
    let report: serde_json::Value =
        serde_json::from_slice(&read(edit_dir.join("report.json"))).unwrap();
    assert_eq!(report["source_prompt"], serde_json::json!(prompt));
    assert_eq!(
        report["target_prompt"],
        serde_json::json!("A relaxing jazz music with timbreB performance.")
    );

    // a null edit (target = source keyword) is byte-identical
    let null_dir = dir.path().join("null");
    let out = run(&[
        "edit",
        "--model",
        model.to_str().unwrap(),
        "--source",
        prompt,
        "--target-keyword",
        "timbreA",
        "--captions",
        "4",
        "--seed",
        "7",
        "--run-dir",
        null_dir.to_str().unwrap(),
    ]);
    assert_ok(&out, "null edit");
    assert_eq!(
        read(null_dir.join("original.f32t")),
        read(null_dir.join("edited.f32t")),
        "null edit must leave the clip untouched"
    );

    // rerun the real edit from its manifest: tensors reproduce exactly
    let rerun_dir = dir.path().join("edit2");
    let out = run(&[
        "edit",
        "--config",
        edit_dir.join("manifest.toml").to_str().unwrap(),
        "--run-dir",
        rerun_dir.to_str().unwrap(),
    ]);
    assert_ok(&out, "edit rerun");
    for name in ["original.f32t", "edited.f32t"] {
        assert_eq!(
            read(edit_dir.join(name)),
            read(rerun_dir.join(name)),
            "{name} must reproduce bit-for-bit"
        );
    }

    let invert_dir = dir.path().join("invert");
    let out = run(&[
        "invert-edit",
        "--model",
        model.to_str().unwrap(),
        "--input",
        gen_dir.join("clip.f32t").to_str().unwrap(),
        "--target-keyword",
        "timbreB",
        "--source-keyword",
        "timbreA",
        "--captions",
        "4",
        "--run-dir",
        invert_dir.to_str().unwrap(),
    ]);
    assert_ok(&out, "invert-edit");
    for name in [
        "z_start.f32t",
        "original.f32t",
        "edited.f32t",
        "caption.txt",
        "inversion.json",
        "report.json",
        "manifest.toml",
    ] {
        assert!(invert_dir.join(name).is_file(), "missing artifact {name}");
    }

    let eval_dir = dir.path().join("eval");
    let out = run(&[
        "eval",
        "--original",
        edit_dir.join("original.f32t").to_str().unwrap(),
        "--edited",
        edit_dir.join("edited.f32t").to_str().unwrap(),
        "--target-text",
        "A relaxing jazz music with timbreB performance.",
        "--run-dir",
        eval_dir.to_str().unwrap(),
    ]);
    assert_ok(&out, "eval");
    let report: serde_json::Value =
        serde_json::from_slice(&read(eval_dir.join("eval.json"))).unwrap();
    assert!(report["mean_chroma"].is_number());
    assert!(report["rows"].as_array().unwrap().len() == 1);
    assert!(!report["config_echo"].is_null(), "eval echoes its config");
}
