use std::path::PathBuf;
use std::process::{Command, Output};

fn diffmech(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diffmech"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scratch_file(name: &str, contents: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("diffmech-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

#[test]
fn gen_tree_is_byte_identical_per_seed() {
    let a = diffmech(&["gen-tree", "--n", "100", "--seed", "7"]);
    let b = diffmech(&["gen-tree", "--n", "100", "--seed", "7"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let c = diffmech(&["gen-tree", "--n", "100", "--seed", "8"]);
    assert_ne!(a.stdout, c.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["n"], 100);
    assert_eq!(v["edges"].as_array().unwrap().len(), 99);
}

#[test]
fn generated_trees_feed_run() {
    let tree = diffmech(&["gen-tree", "--n", "30", "--seed", "3"]);
    let path = scratch_file("gen.json", std::str::from_utf8(&tree.stdout).unwrap());
    let out = diffmech(&[
        "run",
        "--tree",
        path.to_str().unwrap(),
        "--m",
        "3",
        "--seed",
        "3",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let again = diffmech(&[
        "run",
        "--tree",
        path.to_str().unwrap(),
        "--m",
        "3",
        "--seed",
        "3",
    ]);
    assert_eq!(out.stdout, again.stdout);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["seller_revenue"].as_f64().unwrap() >= 0.0);
}

#[test]
fn worked_example_through_run() {
    let path = scratch_file(
        "worked.json",
        r#"{"n":5,"root":0,"edges":[[0,1],[0,2],[1,3],[1,4]]}"#,
    );
    let out = diffmech(&[
        "run",
        "--tree",
        path.to_str().unwrap(),
        "--m",
        "2",
        "--alpha",
        "0.01",
        "--values",
        "0.9,0.95,0.5,0.3",
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let rev = v["seller_revenue"].as_f64().unwrap();
    assert!((rev - (8.0 / 9.0 - 1.0 / 450.0)).abs() < 1e-12);
    assert_eq!(v["winners"], serde_json::json!([1, 3]));
}

#[test]
fn job_count_does_not_change_output() {
    let args = |jobs: &'static str| {
        [
            "table1", "--sizes", "10,50", "--trials", "40", "--seed", "4", "--jobs", jobs,
        ]
    };
    let one = diffmech(&args("1"));
    let four = diffmech(&args("4"));
    assert!(one.status.success());
    assert_eq!(one.stdout, four.stdout);
    let text = String::from_utf8(one.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "n,m,alpha,trials,rd_r0_ratio,rd_r0_stderr,rd_ropt_ratio,rd_ropt_stderr,seed"
    );
    assert_eq!(lines.count(), 2);
    assert!(text.lines().skip(1).all(|l| l.ends_with(",4")));
}

#[test]
fn full_json_carries_trials() {
    let out = diffmech(&[
        "table2", "--shapes", "2x5", "--trials", "6", "--format", "json", "--full",
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["trials"][0].as_array().unwrap().len(), 6);
    assert_eq!(v["reports"][0]["trials"], 6);
}

#[test]
fn reproduction_line_names_the_seed() {
    let out = diffmech(&["gen-tree", "--n", "5"]);
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("--seed 24301"), "{err}");
}

#[test]
fn verify_small_sweep_passes() {
    let out = diffmech(&[
        "verify",
        "--n-max",
        "5",
        "--samples",
        "2000",
        "--instances",
        "300",
        "--seed",
        "3",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["dic_violations"], 0);
    assert_eq!(v["instances"], 300);
}

#[test]
fn bad_input_exits_with_two() {
    assert_eq!(diffmech(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(diffmech(&["gen-tree"]).status.code(), Some(2));
    assert_eq!(diffmech(&["gen-tree", "--n", "1"]).status.code(), Some(2));
    assert_eq!(
        diffmech(&["table1", "--alpha", "1.5"]).status.code(),
        Some(2)
    );
    assert_eq!(
        diffmech(&["table1", "--m-rule", "n/0"]).status.code(),
        Some(2)
    );
    assert_eq!(
        diffmech(&["verify", "--n-max", "40"]).status.code(),
        Some(2)
    );
    let cyclic = scratch_file(
        "cyclic.json",
        r#"{"n":3,"root":0,"edges":[[0,1],[1,2],[2,0]]}"#,
    );
    let out = diffmech(&["run", "--tree", cyclic.to_str().unwrap(), "--m", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(
        String::from_utf8(out.stderr)
            .unwrap()
            .lines()
            .filter(|l| l.starts_with("error"))
            .count(),
        1
    );
    let short = scratch_file("short.json", r#"{"n":3,"root":0,"edges":[[0,1],[1,2]]}"#);
    let out = diffmech(&[
        "run",
        "--tree",
        short.to_str().unwrap(),
        "--m",
        "1",
        "--values",
        "0.5",
    ]);
    assert_eq!(out.status.code(), Some(2));
}
