use std::path::PathBuf;
use std::process::{Command, Output};

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name).display().to_string()
}

fn dax(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dax")).args(args).env_remove("DAX_DEFAULT_BUDGET").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dax-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn decide_exit_codes() {
    let cert = tmp("margin.json");
    let o = dax(&["decide", &data("margin.dax"), "--delta", "1/20", "--emit-cert", cert.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "provably-true\n");
    let text = std::fs::read_to_string(&cert).unwrap();
    assert!(dax::certificate::validate_certificate_json(&text).ok);

    let o = dax(&["decide", &data("false.dax"), "--delta", "0.05"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stdout(&o), "provably-false\n");

    let o = dax(&["decide", &data("nonrobust.dax"), "--delta", "1/10"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stdout(&o), "inconclusive\n");
}

#[test]
fn config_replays_certificate() {
    let cert = tmp("replay.json");
    let o = dax(&["decide", &data("margin.dax"), "--delta", "1/20", "--emit-cert", cert.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&cert).unwrap()).unwrap();
    let cfg = tmp("replay-config.json");
    std::fs::write(&cfg, v["config"].to_string()).unwrap();
    let again = tmp("replay2.json");
    let o = dax(&["decide", &data("margin.dax"), "--config", cfg.to_str().unwrap(), "--emit-cert", again.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read(&cert).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn error_codes() {
    assert_eq!(dax(&["decide", &data("missing.dax"), "--delta", "1/10"]).status.code(), Some(4));
    let bad = tmp("bad.dax");
    std::fs::write(&bad, "(forall (x 0 1) (> x").unwrap();
    let o = dax(&["decide", bad.to_str().unwrap(), "--delta", "1/10"]);
    assert_eq!(o.status.code(), Some(5));
    assert!(o.stdout.is_empty());
    assert_eq!(dax(&["decide", &data("margin.dax")]).status.code(), Some(3));
    assert_eq!(dax(&["decide", &data("margin.dax"), "--delta", "abc"]).status.code(), Some(3));
    assert_eq!(dax(&["frobnicate"]).status.code(), Some(3));
    let o = Command::new(env!("CARGO_BIN_EXE_dax"))
        .args(["decide", &data("margin.dax"), "--delta", "1/10"])
        .env("DAX_DEFAULT_BUDGET", "deep")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn env_budget_applies() {
    let f = tmp("near_touch.dax");
    std::fs::write(&f, "(forall (x -1 1) (> (+ 1/100 (* (- x 1/3) (- x 1/3))) 0))").unwrap();
    let run = |env: Option<&str>, extra: &[&str]| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_dax"));
        c.args(["decide", f.to_str().unwrap(), "--delta", "1/20"]).args(extra).env_remove("DAX_DEFAULT_BUDGET");
        if let Some(v) = env {
            c.env("DAX_DEFAULT_BUDGET", v);
        }
        c.output().unwrap().status.code()
    };
    assert_eq!(run(None, &[]), Some(0));
    assert_eq!(run(Some("2,1"), &[]), Some(2));
    assert_eq!(run(Some("2,1"), &["--budget-depth", "24", "--budget-boxes", "100000"]), Some(0));
}

#[test]
fn approximate_two_sin() {
    let smt = tmp("two_sin.smt2");
    let o = dax(&[
        "approximate",
        &data("two_sin.dax"),
        "--delta",
        "1/10",
        "--domain",
        "x=0:1",
        "--emit-smt2",
        smt.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.starts_with("(forall (w0 "), "{out}");
    assert!(out.trim_end().ends_with("(> (- (* 2 w0) 1) 0))"), "{out}");
    let s = std::fs::read_to_string(&smt).unwrap();
    assert!(s.starts_with("(set-logic NRA)\n(declare-fun x () Real)\n(assert (forall ((w0 Real))"));

    let o = dax(&["approximate", &data("two_sin.dax"), "--mode", "exists", "--delta", "1/10", "--domain", "x=0:1"]);
    assert!(stdout(&o).starts_with("(exists (w0 "));
}

#[test]
fn approximate_function_free_is_identity() {
    let o = dax(&["approximate", &data("pure_poly.dax")]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), std::fs::read_to_string(data("pure_poly.dax")).unwrap().trim());
}

#[test]
fn approximate_lyapunov_keeps_free_variables() {
    let smt = tmp("lyap.smt2");
    let o = dax(&[
        "approximate",
        &data("lyapunov.dax"),
        "--delta",
        "13/2500",
        "--approx",
        &data("sin_policy.dax"),
        "--domain",
        "c1=0:100",
        "--domain",
        "c2=0:100",
        "--domain",
        "c3=0:100",
        "--emit-smt2",
        smt.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let s = std::fs::read_to_string(&smt).unwrap();
    let decls: Vec<&str> = s.lines().filter(|l| l.starts_with("(declare-fun")).collect();
    assert_eq!(decls, ["(declare-fun c1 () Real)", "(declare-fun c2 () Real)", "(declare-fun c3 () Real)"]);
    assert!(!stdout(&o).contains("sin"));
    let depth = s.chars().try_fold(0i64, |d, ch| {
        let d = d + (ch == '(') as i64 - (ch == ')') as i64;
        (d >= 0).then_some(d)
    });
    assert_eq!(depth, Some(0));
    // Frozen output of this exact invocation.
    let golden = std::fs::read_to_string(data("lyapunov_forall.smt2")).unwrap();
    assert_eq!(s, golden);
}

#[test]
fn decide_lyapunov_point() {
    let o = dax(&[
        "decide",
        &data("lyapunov.dax"),
        "--delta",
        "13/2500",
        "--approx",
        &data("sin_policy.dax"),
        "--domain",
        "c1=40.6843:40.6843",
        "--domain",
        "c2=35.6870:35.6870",
        "--domain",
        "c3=84.3906:84.3906",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn approx_fn_outputs() {
    let o = dax(&["approx-fn", "sin", "-1/2", "1/2", "--eps", "13/2500"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["func"], "sin");
    assert!(v["pieces"].as_array().is_some_and(|p| !p.is_empty()));

    let o = dax(&["approx-fn", "exp", "0", "1", "--eps", "0.01"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(dax(&["approx-fn", "sin", "0", "1", "--eps", "0"]).status.code(), Some(3));
    assert_eq!(dax(&["approx-fn", "nosuch", "0", "1", "--eps", "1/10"]).status.code(), Some(3));
    let o = dax(&["approx-fn", "cosh", "0", "1", "--eps", "1/100", "--fns", &data("cosh.dax")]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn user_function_decide() {
    let f = tmp("cosh_bound.dax");
    std::fs::write(&f, "(forall (x 0 1) (> (- 2 (cosh x)) 0))").unwrap();
    let o = dax(&["decide", f.to_str().unwrap(), "--fns", &data("cosh.dax"), "--delta", "1/20"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn scan_csv() {
    let o = dax(&["scan", &data("nonrobust.dax"), "--deltas", "1/4,1/10,0.01"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("delta,forall_verdict,exists_verdict,boxes_explored,wall_ms"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r[1] == "false" && r[2] == "true"));
    assert_eq!(rows[2][0], "1/100");

    let o = dax(&["scan", &data("margin.dax"), "--deltas", "1/4,1/10,1/20"]);
    let out = stdout(&o);
    assert!(out.lines().skip(1).any(|l| l.split(',').nth(1) == Some("true")));
    assert_eq!(dax(&["scan", &data("margin.dax"), "--deltas", ""]).status.code(), Some(3));
}
