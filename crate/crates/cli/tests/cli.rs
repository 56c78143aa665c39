use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

fn memetopic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_memetopic"))
        .args(args)
        .output()
        .expect("spawn memetopic")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn run_replays_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let config = fixture("replay_wsm.toml");
    let out = memetopic(&["run", "--config", config.to_str().unwrap(), "-o", out_dir]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.starts_with("wsm run: k=5"), "{text}");
    for name in [
        "report.json",
        "manifest.json",
        "config.toml",
        "clusters.json",
        "merge_log.jsonl",
    ] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
}

#[test]
fn stages_can_run_one_by_one() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let config = fixture("mock_pbm.toml");
    let config = config.to_str().unwrap();
    let expect = [
        ("preprocess", "preprocessed 50 documents"),
        ("generate", "generated 47 / miscellaneous 1 / inappropriate 2"),
        ("collapse", "5 topics after 10 merges and 1 miscellaneous routings"),
        ("represent", "Politics: "),
        ("evaluate", "k=5 "),
    ];
    for (stage, needle) in expect {
        let out = memetopic(&[stage, "-c", config, "-o", out_dir]);
        assert!(
            out.status.success(),
            "{stage}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(stdout(&out).contains(needle), "{stage}: {}", stdout(&out));
    }
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let config = fixture("mock_wsm.toml");
    let out = memetopic(&["run", "-c", config.to_str().unwrap(), "-o", out_dir, "-k", "7"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("k=7"), "{}", stdout(&out));
    let written = std::fs::read_to_string(dir.path().join("config.toml")).unwrap();
    assert!(written.contains("k = 7"));
}

#[test]
fn sweep_prints_one_row_per_k() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let config = fixture("replay_wsm.toml");
    let out = memetopic(&["sweep", "-c", config.to_str().unwrap(), "-o", out_dir, "--ks", "5,10"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2, "{text}");
    assert!(rows[0].starts_with("5,") && rows[1].starts_with("10,"));
    assert!(dir.path().join("sweep.csv").exists());
}

#[test]
fn failures_exit_nonzero() {
    let out = memetopic(&["run"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--config or --corpus"));

    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("empty.jsonl");
    std::fs::write(&cache, "").unwrap();
    let run_dir = dir.path().join("run");
    let config = fixture("replay_wsm.toml");
    let out = memetopic(&[
        "run",
        "-c",
        config.to_str().unwrap(),
        "-o",
        run_dir.to_str().unwrap(),
        "--cache",
        cache.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("generate stage failed"));
    let manifest = std::fs::read_to_string(run_dir.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"failed_stage\": \"generate\""));

    let out = memetopic(&[
        "collapse",
        "--corpus",
        "/nonexistent.jsonl",
        "-o",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
}
