use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fcw-redteam"));
    c.env_remove("FCW_REDTEAM_OUT");
    c
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().unwrap()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

fn rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let head = r.headers().unwrap().iter().map(String::from).collect();
    let body = r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect();
    (head, body)
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn col(head: &[String], name: &str) -> usize {
    head.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

#[test]
fn gen_writes_a_full_deterministic_trace() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&run(&["gen", "--scenario", "mio-10"], &a));
    ok(&run(&["gen", "--scenario", "mio-10"], &b));
    let (head, body) = rows(&a.join("trace.csv"));
    assert_eq!(head.len(), 11);
    assert_eq!(body.len(), 295);
    assert!(body.iter().any(|r| r.iter().any(|x| x == "NaN")), "default noise drops some detections");
    assert_eq!(std::fs::read(a.join("trace.csv")).unwrap(), std::fs::read(b.join("trace.csv")).unwrap());
    assert_eq!(std::fs::read(a.join("truth.csv")).unwrap(), std::fs::read(b.join("truth.csv")).unwrap());
}

#[test]
fn zero_noise_trace_equals_truth() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run(&["gen", "--scenario", "mio-10", "--zero-noise"], dir.path()));
    let (head, body) = rows(&dir.path().join("trace.csv"));
    let (vd, rd, gd) = (col(&head, "v_d1"), col(&head, "r_d1"), col(&head, "gt_d1"));
    let (vv, rv, gv) = (col(&head, "v_v1"), col(&head, "r_v1"), col(&head, "gt_v1"));
    for r in &body {
        let f = |i: usize| r[i].parse::<f64>().unwrap();
        assert!((f(vd) - f(gd)).abs() < 1e-12 && (f(rd) - f(gd)).abs() < 1e-12);
        assert!((f(vv) - f(gv)).abs() < 1e-12 && (f(rv) - f(gv)).abs() < 1e-12);
    }
}

#[test]
fn unattacked_run_has_no_manipulation_columns() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run(&["attack", "--scenario", "mio-10", "--strategy", "none"], dir.path()));
    let (head, body) = rows(&dir.path().join("steps.csv"));
    assert!(!head.iter().any(|h| h.starts_with("delta_") || h.starts_with("att_") || h.starts_with("qp_")));
    assert_eq!(body.len(), 295);
    let res = json(&dir.path().join("result.json"));
    assert_eq!(res["metrics"]["j1"], 0.0);
    assert_eq!(res["lights_attacked"], res["lights_baseline"]);
}

#[test]
fn greedy_breaks_stealth_on_the_rear_scenario() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run(&["attack", "--scenario", "mio+1", "--strategy", "greedy", "--delta", "15"], dir.path()));
    let res = json(&dir.path().join("result.json"));
    assert!(res["metrics"]["v_stealth"].as_u64().unwrap() > 0);
    assert_eq!(res["strategy"], "greedy");
}

#[test]
fn planning_sweep_has_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run(
        &["sweep", "--scenario", "mio-10", "--fractions", "0,0.25,0.5,0.75,1", "--strategies", "mpc,greedy", "--delta", "15"],
        dir.path(),
    ));
    let (head, body) = rows(&dir.path().join("sweep.csv"));
    assert_eq!(head.len(), 17);
    assert_eq!(body.len(), 10);
    let err = col(&head, "error");
    assert!(body.iter().all(|r| r[err].is_empty()));
    let j = json(&dir.path().join("sweep.json"));
    assert_eq!(j["rows"].as_array().map(Vec::len), Some(10));
}

#[test]
fn delta_sweep_achieves_more_with_more_budget() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run(&["sweep", "--scenario", "mio-10", "--deltas", "5,10,20,inf"], dir.path()));
    let (head, body) = rows(&dir.path().join("sweep.csv"));
    assert_eq!(body.len(), 4);
    let a = col(&head, "achieved");
    let achieved: Vec<u64> = body.iter().map(|r| r[a].parse().unwrap()).collect();
    assert!(achieved.windows(2).all(|w| w[0] <= w[1]), "{achieved:?}");
    assert_eq!(*achieved.last().unwrap(), 10);
}

#[test]
fn attack_reads_a_trace_back() {
    let dir = tempfile::tempdir().unwrap();
    let (g, x, y) = (dir.path().join("g"), dir.path().join("x"), dir.path().join("y"));
    ok(&run(&["gen", "--scenario", "mio-10"], &g));
    let trace = g.join("trace.csv");
    let truth = g.join("truth.csv");
    ok(&run(&["attack", "--scenario", "mio-10", "--stealthy-frac", "0.25"], &x));
    ok(&run(
        &["attack", "--scenario", "mio-10", "--stealthy-frac", "0.25", "--trace", trace.to_str().unwrap(), "--truth", truth.to_str().unwrap()],
        &y,
    ));
    let (a, b) = (json(&x.join("result.json")), json(&y.join("result.json")));
    assert_eq!(a["metrics"], b["metrics"]);
    assert_eq!(a["lights_attacked"], b["lights_attacked"]);
    assert_eq!(a["crash"], b["crash"]);
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["sweep", "--scenario", "mio-10"],
        vec!["attack", "--strategy", "sideways"],
        vec!["attack", "--stealthy-frac", "1.5"],
        vec!["gen", "--scenario", "nowhere"],
        vec!["bogus"],
    ] {
        let o = run(&args, dir.path());
        assert_eq!(o.status.code(), Some(1), "{args:?}");
    }
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[attack]\nunknown_key = 3\n").unwrap();
    let o = bin().args(["--config", cfg.to_str().unwrap(), "gen"]).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let missing = dir.path().join("nope.csv");
    let o = run(&["attack", "--trace", missing.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn solver_failure_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tight.toml");
    std::fs::write(&cfg, "[attack]\nqp_max_iter = 1\n").unwrap();
    let o = bin()
        .args(["--config", cfg.to_str().unwrap(), "attack", "--scenario", "mio-10", "--stealthy-frac", "0.25"])
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn output_directory_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let env_out: PathBuf = dir.path().join("from-env");
    let o = bin().args(["gen", "--steps", "50"]).env("FCW_REDTEAM_OUT", &env_out).output().unwrap();
    ok(&o);
    assert!(env_out.join("trace.csv").exists());

    let file_out = dir.path().join("from-file");
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, format!("out = {:?}\n[scenario]\npreset = \"mio+1\"\nsteps = 50\n", file_out.to_str().unwrap())).unwrap();
    ok(&bin().args(["--config", cfg.to_str().unwrap(), "gen"]).env("FCW_REDTEAM_OUT", &env_out).output().unwrap());
    let (_, body) = rows(&file_out.join("trace.csv"));
    assert_eq!(body.len(), 50);

    let flag_out = dir.path().join("from-flag");
    ok(&bin().args(["--config", cfg.to_str().unwrap(), "gen", "--out"]).arg(&flag_out).output().unwrap());
    assert!(flag_out.join("trace.csv").exists());
}
