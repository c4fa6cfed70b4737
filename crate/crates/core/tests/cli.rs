//! End-to-end runs of every subcommand on the bundled instance files.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_signalcraft");

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env("SIGNALCRAFT_THREADS", "2").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn metric(line: &str, key: &str) -> f64 {
    let prefix = format!("{key}=");
    line.split_whitespace()
        .find_map(|f| f.strip_prefix(&prefix))
        .unwrap_or_else(|| panic!("no {key} in {line}"))
        .parse()
        .unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let mut rows = vec![r.headers().unwrap().iter().map(String::from).collect()];
    rows.extend(r.records().map(|x| x.unwrap().iter().map(String::from).collect()));
    rows
}

#[test]
fn gen_instance_matches_generator() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ex3.json");
    ok(&["gen-instance", "example3", "--epsilon", "0.1", "--out", out.to_str().unwrap()]);
    let text = std::fs::read_to_string(&out).unwrap();
    let inst = signalcraft::Instance::from_json(&text).unwrap();
    assert_eq!(inst, signalcraft::Instance::Kvs(signalcraft::model::make_example3(0.1).unwrap()));
    assert_eq!(text, std::fs::read_to_string(data("example3.json")).unwrap());
    for kind in ["example1", "example2", "theorem2", "random-kvs", "lattice"] {
        let json = ok(&["gen-instance", kind, "--n", "4", "--seed", "2"]);
        signalcraft::Instance::from_json(&json).unwrap().validate().into_result().unwrap();
    }
    assert_eq!(run(&["gen-instance", "nonsense"]).status.code(), Some(1));
}

#[test]
fn compare_example3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cmp.csv");
    ok(&[
        "compare", "--instance", data("example3.json").to_str().unwrap(),
        "--schemes", "full,none,optimal,private", "--out", out.to_str().unwrap(),
    ]);
    let rows = csv_rows(&out);
    let col = |name: &str| rows[0].iter().position(|h| h == name).unwrap();
    let (s, r) = (col("scheme"), col("revenue"));
    let rev = |name: &str| -> f64 { rows.iter().find(|row| row[s] == name).unwrap()[r].parse().unwrap() };
    assert!((rev("full") - 0.27).abs() < 1e-9);
    assert!((rev("none") - 0.28).abs() < 1e-9);
    assert!(rev("optimal") <= 0.3 + 1e-6);
    assert!(rev("private") >= 0.9 - 1e-6);
    assert_eq!(rows[1][s], "private");
    assert!(out.with_extension("json").exists());
}

#[test]
fn solve_public_exact_writes_scheme() {
    let dir = tempfile::tempdir().unwrap();
    let scheme = dir.path().join("scheme.json");
    let report = dir.path().join("r.csv");
    let stdout = ok(&[
        "solve-public-exact", "--instance", data("example1.json").to_str().unwrap(),
        "--out", scheme.to_str().unwrap(), "--report", report.to_str().unwrap(),
    ]);
    assert!(metric(&stdout, "revenue") >= 4.0 - 1e-9);
    let s = signalcraft::ExplicitScheme::from_json(&std::fs::read_to_string(scheme).unwrap()).unwrap();
    assert!(s.validate(&["A".into(), "B".into()]).is_empty());
    assert_eq!(csv_rows(&report).len(), 2);
}

#[test]
fn sampled_scheme_commands() {
    let inst = data("random3.json");
    let stdout = ok(&["sign-public-mc", "--instance", inst.to_str().unwrap(), "--state", "s2", "--samples", "500", "--seed", "3"]);
    let v: serde_json::Value = serde_json::from_str(&stdout[..stdout.rfind('}').unwrap() + 1]).unwrap();
    assert!(v["signal"].as_str().unwrap().starts_with("pair("));
    assert_eq!(run(&["sign-public-mc", "--instance", inst.to_str().unwrap(), "--state", "zz"]).status.code(), Some(1));
    let line = ok(&["eval-public-mc", "--instance", inst.to_str().unwrap(), "--samples", "500", "--trials", "2000", "--seed", "1"]);
    let r = metric(&line, "revenue");
    assert!(r > 0.0 && r <= 1.0);
}

#[test]
fn bayesian_commands() {
    let dir = tempfile::tempdir().unwrap();
    let pool = dir.path().join("pool.json");
    let line = ok(&["bvs-pool", "--instance", data("example2.json").to_str().unwrap(), "--trials", "50000", "--out", pool.to_str().unwrap()]);
    // Pairing two of four tail states gives half the pair revenue of 1/3.
    assert!((metric(&line, "revenue") - 1.0 / 6.0).abs() < 0.01);
    assert!(metric(&line, "full_info_revenue").abs() < 1e-12);
    assert!(std::fs::read_to_string(pool).unwrap().contains("tail_states"));

    let out = ok(&["bvs-check-lemma6", "--high", "uniform:0,1", "--low", "point:0", "--n", "22", "--weights", "0,2,5", "--trials", "1000"]);
    assert_eq!(out.lines().count(), 3);
    assert!(out.lines().all(|l| l.contains("passes=true")));
    // Bernoulli families are not MHR.
    assert_eq!(run(&["bvs-check-lemma6", "--high", "bernoulli:1,0.5", "--low", "point:0", "--n", "4"]).status.code(), Some(2));

    let line = ok(&["oracle", "partition-welfare", "--instance", data("bvs_small.json").to_str().unwrap(), "--max-signals", "2"]);
    assert!((metric(&line, "welfare") - 0.38835).abs() < 1e-9);
}

#[test]
fn private_scheme_command() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.json");
    let line = ok(&[
        "private-scheme", "--instance", data("lattice3.json").to_str().unwrap(), "--epsilon", "0.05",
        "--trials", "20000", "--out", plan.to_str().unwrap(),
    ]);
    assert!(metric(&line, "revenue") >= metric(&line, "bound") - 1e-6);
    assert!(line.contains("mode=lattice"));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(plan).unwrap()).unwrap();
    assert_eq!(v["states"].as_array().unwrap().len(), 27);
    let a = ok(&["private-scheme", "--instance", data("example3.json").to_str().unwrap(), "--mode", "support-pairing", "--trials", "1000"]);
    assert!(metric(&a, "revenue") >= 0.9 - 1e-6);
    assert_eq!(run(&["private-scheme", "--instance", data("example3.json").to_str().unwrap(), "--mode", "lattice"]).status.code(), Some(2));
}

#[test]
fn oracle_commands() {
    let line = ok(&["oracle", "public-optimal", "--instance", data("example3.json").to_str().unwrap()]);
    assert!(metric(&line, "revenue") <= 0.3 + 1e-6);
    let line = ok(&["oracle", "theorem2", "--n", "100", "--epsilon", "0.3"]);
    assert!(metric(&line, "exact") >= metric(&line, "lower_bound"));
    let line = ok(&["oracle", "binomial", "--m", "100", "--p", "0.2", "--k", "0"]);
    assert!((metric(&line, "conditional_mean") - 20.0).abs() < 1e-9);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"kind":"kvs","n":2,"states":[{"id":"a","values":[1,2]}]}"#).unwrap();
    let out = run(&["solve-public-exact", "--instance", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mass"));
    std::fs::write(&bad, r#"{"kind":"kvs","n":2,"states":[{"id":"a","mass":0.5,"values":[1,2]}]}"#).unwrap();
    assert_eq!(run(&["solve-public-exact", "--instance", bad.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(run(&["solve-public-exact", "--instance", "/nonexistent.json"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(64));
    assert_eq!(run(&["compare", "--bogus-flag"]).status.code(), Some(64));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    // A Bayesian instance where a known-valuation one is needed.
    assert_eq!(run(&["solve-public-exact", "--instance", data("example2.json").to_str().unwrap()]).status.code(), Some(1));
}
