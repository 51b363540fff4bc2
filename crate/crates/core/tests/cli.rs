use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_linimpact"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn paths(o: &Output) -> Vec<PathBuf> {
    String::from_utf8_lossy(&o.stdout).lines().map(PathBuf::from).collect()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_coarsen_and_calibrate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&["generate", "--seed", "7", "--length", "20000", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let files = paths(&o);
    assert_eq!(files.len(), 2);
    let text = fs::read_to_string(&files[0]).unwrap();
    assert!(text.contains("# config_hash: "));
    assert!(text.contains("# kind: flow"));

    let o = run(&["coarsen", "--input", s(&files[1]), "--ratio", "5", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read_to_string(&paths(&o)[0]).unwrap().contains("# ratio: 5"));

    let o = run(&[
        "calibrate-propagator",
        "--prices",
        s(&files[1]),
        "--flows",
        s(&files[0]),
        "--scales",
        "1,5",
        "--max-lag",
        "120",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(&paths(&o)[0]).unwrap()).unwrap();
    let g0 = summary["scalars"]["g0_r1"].as_f64().unwrap();
    // the biased ACF estimator leaves an O(max_lag / len) error
    assert!((g0 - 1.0).abs() < 1e-2, "g0 = {g0}");
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = run(&["generate", "--seed", "3", "--length", "5000", "--out", s(&dir.path().join("a"))]);
    let b = run(&["generate", "--seed", "3", "--length", "5000", "--out", s(&dir.path().join("b"))]);
    for (x, y) in paths(&a).iter().zip(&paths(&b)) {
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
    }
}

#[test]
fn calibrate_kyle_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["calibrate-kyle", "--tau-f", "20", "--max-lag", "200", "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(&paths(&o)[0]).unwrap()).unwrap();
    assert!(summary["scalars"]["markovian_max_abs_dev"].as_f64().unwrap() < 1e-6);
}

#[test]
fn detrend_writes_trend_and_series() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("x.csv");
    let mut text = String::from("# kind: price\n# tau: 1 month\nindex,value\n");
    for i in 0..60 {
        text.push_str(&format!("{i},{}\n", (0.01 * i as f64).exp() * (1.0 + 0.05 * (i as f64).sin())));
    }
    fs::write(&input, text).unwrap();
    let o = run(&[
        "detrend",
        "--input",
        s(&input),
        "--window",
        "1",
        "--window-unit",
        "year",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(paths(&o).len(), 2);
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&["experiment", "nonsense"])), 2);

    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[synthetic]\nno_such_key = 1\n").unwrap();
    assert_eq!(code(&run(&["--config", s(&cfg), "generate", "--out", s(dir.path())])), 2);

    let cfg = dir.path().join("beta.toml");
    fs::write(&cfg, "[synthetic]\nbeta = 1.5\n").unwrap();
    assert_eq!(code(&run(&["--config", s(&cfg), "generate", "--out", s(dir.path())])), 2);
}

#[test]
fn missing_input_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["coarsen", "--input", "/nonexistent/x.csv", "--ratio", "2", "--out", s(dir.path())]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error: "));
    assert_eq!(code(&run(&["--config", "/nonexistent/c.toml", "generate"])), 4);
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "seed = 11\n[synthetic]\nlength = 3000\nflow = \"ar1\"\nalpha = 0.5\n").unwrap();
    let o = run(&["--config", s(&cfg), "generate", "--seed", "12", "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&paths(&o)[0]).unwrap();
    assert!(text.contains("# seed: 12"));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 3001);
}
