use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn lab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_conductance-lab"))
        .current_dir(dir)
        .env_remove("CONDUCTANCE_LAB_OUT")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Every file under `dir` except the manifest, by relative path.
fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "manifest.json" {
                files.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn gen_env_is_deterministic_and_valid() {
    let tmp = TempDir::new().unwrap();
    let args = ["gen-env", "--model", "homogeneous", "--c1", "1", "--window", "-1000", "1000", "--seed", "7"];
    let a = lab(tmp.path(), &[&args[..], &["--out", "a"]].concat());
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    let b = lab(tmp.path(), &[&args[..], &["--out", "b"]].concat());
    assert_eq!(b.status.code(), Some(0));
    assert_eq!(fs::read(tmp.path().join("a/env.txt")).unwrap(), fs::read(tmp.path().join("b/env.txt")).unwrap());
    assert_eq!(outputs(&tmp.path().join("a")), outputs(&tmp.path().join("b")));
}

#[test]
fn planted_defect_fails_validation_with_exit_2() {
    let tmp = TempDir::new().unwrap();
    let o = lab(tmp.path(), &["gen-env", "--window", "-1000", "1000", "--defect", "edge:0:0.0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("FAIL condition-E"));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("out/validation.json")).unwrap()).unwrap();
    let failed: Vec<&str> =
        v["checks"].as_array().unwrap().iter().filter(|c| !c["passed"].as_bool().unwrap()).map(|c| c["name"].as_str().unwrap()).collect();
    assert_eq!(failed, ["condition-E"]);
}

#[test]
fn operational_errors_exit_1() {
    let tmp = TempDir::new().unwrap();
    let o = lab(tmp.path(), &["validate", "--env", "missing.txt"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("validate"));
    let o = lab(tmp.path(), &["simulate", "--window", "-100", "100", "--n", "10000"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn exact_ruin_and_escape() {
    let tmp = TempDir::new().unwrap();
    let o = lab(tmp.path(), &["gen-env", "--window", "-1000", "1000", "--out", "env"]);
    assert_eq!(o.status.code(), Some(0));
    let o = lab(tmp.path(), &["exact", "--env", "env/env.txt", "--op", "exit-dist", "--a", "0", "--b", "10", "--x", "3", "--out", "d"]);
    assert_eq!(o.status.code(), Some(0));
    let table = fs::read_to_string(tmp.path().join("d/exit-dist.csv")).unwrap();
    let row = table.lines().find(|l| l.starts_with("3,10,")).expect("row for exit at b");
    let p: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
    assert!((p - 0.3).abs() < 1e-12);

    let o = lab(tmp.path(), &["exact", "--env", "env/env.txt", "--op", "escape", "--L", "10", "--out", "e"]);
    assert!(stdout(&o).contains("probability 0.1000000000000"), "{}", stdout(&o));

    let o = lab(tmp.path(), &["exact", "--model", "iid-polynomial", "--window", "-400", "400", "--op", "commute-check", "--out", "c"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let worst: f64 = text.split("residual ").nth(1).unwrap().split_whitespace().next().unwrap().parse().unwrap();
    assert!(worst <= 1e-8, "{text}");
}

#[test]
fn rerun_reproduces_outputs_for_any_worker_count() {
    let tmp = TempDir::new().unwrap();
    let o = lab(
        tmp.path(),
        &[
            "verify-uclt", "--model", "iid-polynomial", "--window", "-6000", "6000", "--n-list", "100,400", "--paths-per-start",
            "100", "--brownian-samples", "2000", "--sigma-paths", "300", "--classify", "1", "--classify-mc", "50",
            "--threshold-samples", "500", "--grid-extra", "3", "--seed", "11", "--workers", "1", "--out", "first",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let o = lab(tmp.path(), &["rerun", "--manifest", "first/manifest.json", "--workers", "4", "--out", "second"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (a, b) = (outputs(&tmp.path().join("first")), outputs(&tmp.path().join("second")));
    assert!(a.iter().any(|(name, _)| name == "uclt_sups.csv"));
    assert_eq!(a, b);
    let m = |d: &str| -> serde_json::Value {
        serde_json::from_slice(&fs::read(tmp.path().join(d).join("manifest.json")).unwrap()).unwrap()
    };
    assert_eq!(m("first")["config"], m("second")["config"]);
    assert_eq!(m("second")["execution"]["workers"], 4);
}

#[test]
fn constant_functional_gives_zero_column() {
    let tmp = TempDir::new().unwrap();
    let o = lab(
        tmp.path(),
        &[
            "verify-uclt", "--window", "-5000", "5000", "--n-list", "100,400", "--paths-per-start", "50", "--brownian-samples",
            "500", "--sigma", "1", "--classify", "0", "--functional", "const",
        ],
    );
    assert_eq!(o.status.code(), Some(0));
    let table = fs::read_to_string(tmp.path().join("out/uclt_sups.csv")).unwrap();
    let rows: Vec<&str> = table.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 2);
    for r in rows {
        let cols: Vec<&str> = r.split(',').collect();
        assert_eq!((cols[1], cols[2].parse::<f64>().unwrap()), ("const", 0.0));
    }
    assert!(!stdout(&o).contains("COUNTEREXAMPLE-CONSISTENT"));
}

#[test]
fn out_variable_overrides_flag() {
    let tmp = TempDir::new().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_conductance-lab"))
        .current_dir(tmp.path())
        .env("CONDUCTANCE_LAB_OUT", "from-env")
        .args(["gen-env", "--window", "-100", "100", "--out", "from-flag"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(tmp.path().join("from-env/env.txt").exists());
    assert!(!tmp.path().join("from-flag").exists());
}

#[test]
fn simulate_writes_paths_and_dumps() {
    let tmp = TempDir::new().unwrap();
    let o = lab(tmp.path(), &["simulate", "--window", "-5000", "5000", "--n", "200", "--count", "5", "--dump"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(tmp.path().join("out/paths.csv")).unwrap();
    assert_eq!(table.lines().filter(|l| !l.starts_with('#')).count(), 6);
    let dump = fs::File::open(tmp.path().join("out/paths/path-000004.bin")).unwrap();
    let p = conductance_lab::walk::read_path(dump).unwrap();
    assert_eq!(p.len(), 200);
}
