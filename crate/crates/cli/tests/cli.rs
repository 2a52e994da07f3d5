use std::path::Path;
use std::process::{Command, Output};

fn fmip(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fmip"))
        .current_dir(dir)
        .args(args)
        .env_remove("FMIP_EXTERNAL_SOLVER")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const CONFIG: &str = r#"
[model]
layers = 2
hidden = 16

[train]
epochs = 4
batch_size = 2

[guidance]
steps = 4
candidates = 8

[backend]
time_limit = 10.0
"#;

#[test]
fn full_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("cfg.toml"), CONFIG).unwrap();

    ok(&fmip(
        d,
        &[
            "generate",
            "--family",
            "comb-auction",
            "--items",
            "6",
            "--bids",
            "8",
            "--count",
            "3",
            "--frac-continuous",
            "0.25",
            "--out",
            "ds",
        ],
    ));
    let label = ok(&fmip(d, &["label", "ds"]));
    assert!(label.contains("labeled 3/3"), "{label}");

    let trained = ok(&fmip(d, &["--config", "cfg.toml", "train", "ds", "--out", "ck.json"]));
    assert!(trained.contains("epoch    4"));

    let inst = "ds/instances/ca-6x8-s0-mixed2.json";
    ok(&fmip(
        d,
        &[
            "--config",
            "cfg.toml",
            "sample",
            "--ckpt",
            "ck.json",
            "--instance",
            inst,
            "--pool",
            "pool.json",
            "--tau",
            "0.5",
        ],
    ));
    let pool: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("pool.json")).unwrap()).unwrap();
    assert_eq!(pool["candidates"].as_array().unwrap().len(), 8);
    assert!(pool["marginals"].is_array());

    for s in ["nd", "ps", "pmvb", "apollo"] {
        let out = ok(&fmip(
            d,
            &[
                "--config",
                "cfg.toml",
                "solve",
                "--instance",
                inst,
                "--pool",
                "pool.json",
                "--strategy",
                s,
                "--out",
                &format!("{s}.json"),
            ],
        ));
        assert!(out.contains(s));
    }
    ok(&fmip(
        d,
        &[
            "--config",
            "cfg.toml",
            "solve",
            "--instance",
            inst,
            "--ckpt",
            "ck.json",
            "--strategy",
            "ps",
            "--ps",
            "[0.2, 0.1, 0.5]",
        ],
    ));

    let report = ok(&fmip(
        d,
        &[
            "--config",
            "cfg.toml",
            "eval",
            "--ckpt",
            "ck.json",
            "--testset",
            "ds",
            "--strategies",
            "ps,pmvb",
            "--report",
            "rep",
            "--compare-guidance",
        ],
    ));
    assert!(report.contains("Imp"));
    let csv = std::fs::read_to_string(d.join("rep/report.csv")).unwrap();
    assert!(csv.starts_with("instance,method,obj,bks,gap,wall_time_s"));
    assert!(d.join("rep/report.txt").exists() && d.join("rep/cross_entropy.csv").exists());

    let resumed = ok(&fmip(
        d,
        &[
            "--config", "cfg.toml", "train", "ds", "--out", "ck2.json", "--resume", "ck.json", "--epochs", "6",
        ],
    ));
    assert!(resumed.contains("epoch    5") && resumed.contains("epoch    6") && !resumed.contains("epoch    4"));
}

#[test]
fn bad_inputs_fail_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("bad.toml"), "[ps]\nk9 = 1\n").unwrap();
    let out = fmip(d, &["--config", "bad.toml", "selfcheck"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("k9"));

    let out = fmip(d, &["generate", "--family", "set-cover", "--cols", "5", "--density", "0.1", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));

    ok(&fmip(d, &["generate", "--family", "indep-set", "--nodes", "6", "--count", "1", "--out", "ds"]));
    let out = fmip(d, &["train", "ds", "--out", "ck.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("fmip label"));

    let out = fmip(
        d,
        &[
            "solve",
            "--instance",
            "ds/instances/mis-6-p0.2-s0.json",
            "--pool",
            "nope.json",
            "--strategy",
            "ps",
            "--ps",
            "[0.3]",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn external_backend_without_command_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(&fmip(d, &["generate", "--family", "indep-set", "--nodes", "6", "--count", "1", "--out", "ds"]));
    let out = fmip(d, &["label", "ds", "--backend", "external"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("FMIP_EXTERNAL_SOLVER"));

    let out = Command::new(env!("CARGO_BIN_EXE_fmip"))
        .current_dir(d)
        .args(["label", "ds", "--backend", "external"])
        .env("FMIP_EXTERNAL_SOLVER", "exit 3")
        .output()
        .unwrap();
    let stdout = ok(&out);
    assert!(stdout.contains("labeled 0/1") && stdout.contains("dropped"), "{stdout}");
}

#[test]
fn quick_selfcheck_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let out = ok(&fmip(d, &["selfcheck", "--out", "manifest.json"]));
    let manifest: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(manifest["passed"], true);
    let checks = manifest["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 14);
    let skipped: Vec<_> = checks.iter().filter(|c| c["status"] == "skipped").map(|c| c["id"].as_str().unwrap()).collect();
    assert_eq!(skipped, ["6", "7"]);
    assert_eq!(std::fs::read_to_string(d.join("manifest.json")).unwrap().trim(), out.trim());
}
