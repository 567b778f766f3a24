use std::process::{Command, Output};

fn nldp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nldp")).args(args).env_remove("NLDP_SEED").output().unwrap()
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn preprocess_prints_counts() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("g.txt");
    std::fs::write(&input, "1 2\n2 1\n2 3\n").unwrap();
    let out = dir.path().join("g.clean");
    let text = stdout(&nldp(&["preprocess", "--input", input.to_str().unwrap(), "--out", out.to_str().unwrap()]));
    assert_eq!(text.trim(), "|V| 3 -> 3, |E| 3 -> 2");
    assert!(out.exists());
}

#[test]
fn run_writes_artifacts_with_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let text = stdout(&nldp(&[
        "run", "--synthetic", "80", "--method", "pureldpxedge", "--eps", "2", "--alpha", "0.9", "--K", "10",
        "--seed", "3", "--out", out.to_str().unwrap(),
    ]));
    assert!(text.contains("seed         3"));
    for name in ["histogram.csv", "distribution.csv", "projection.csv", "deletions.csv", "selection.csv", "trace.jsonl", "manifest.json"] {
        assert!(out.join(name).exists(), "{name}");
    }
    let hist = std::fs::read_to_string(out.join("histogram.csv")).unwrap();
    assert!(hist.starts_with("# config_hash="));
    assert!(hist.contains("seed=3"));
}

#[test]
fn seed_comes_from_environment() {
    let run = |seed: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_nldp"))
            .args(["select-theta", "--synthetic", "60", "--method", "pureldpxnode", "--K", "8"])
            .env("NLDP_SEED", seed)
            .output()
            .unwrap();
        stdout(&out)
    };
    assert_eq!(run("4"), run("4"));
    let explicit = stdout(&nldp(&["select-theta", "--synthetic", "60", "--method", "pureldpxnode", "--K", "8", "--seed", "4"]));
    assert_eq!(run("4"), explicit);
}

#[test]
fn select_theta_prints_table() {
    let text = stdout(&nldp(&["select-theta", "--synthetic", "50", "--K", "5", "--no-noise", "--method", "pureldpxnode"]));
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,E_P,E_D,F,selected"));
    assert_eq!(text.lines().filter(|l| l.ends_with(",1")).count(), 1);
    assert!(text.lines().last().unwrap().starts_with("theta="));
}

#[test]
fn sweep_and_bench_emit_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let text = stdout(&nldp(&[
        "sweep", "--synthetic", "40", "--method", "pureldpxnode,cryptoxnode", "--eps", "1,2", "--alpha", "0.5,best",
        "--K", "5", "--reps", "2", "--calibration-reps", "1", "--out", out.to_str().unwrap(),
    ]));
    assert!(text.starts_with("cells 8 (0 resumed), runs 16, failures 0"), "{text}");
    assert!(out.join("best_alpha.csv").exists());
    let again = stdout(&nldp(&[
        "sweep", "--synthetic", "40", "--method", "pureldpxnode,cryptoxnode", "--eps", "1,2", "--alpha", "0.5,best",
        "--K", "5", "--reps", "2", "--calibration-reps", "1", "--out", out.to_str().unwrap(),
    ]));
    assert!(again.starts_with("cells 8 (8 resumed)"), "{again}");

    let bench = stdout(&nldp(&["bench", "--sizes", "100,200", "--K", "5", "--reps", "1"]));
    assert!(bench.contains("metric,exponent,expected"));
    assert!(bench.contains("node_projection,100,"));
}

#[test]
fn bad_input_fails_cleanly() {
    let out = nldp(&["run", "--synthetic", "50", "--method", "fastxnode"]);
    assert!(!out.status.success());
    let out = nldp(&["run", "--dataset", "/definitely/missing.txt"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    let out = nldp(&["run", "--synthetic", "10", "--K", "50", "--method", "pureldpxnode"]);
    assert!(!out.status.success());
}
