use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn hmfg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hmfg"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn summary(dir: &Path) -> Vec<(String, String)> {
    fs::read_to_string(dir.join("summary.txt"))
        .unwrap()
        .lines()
        .map(|l| {
            let (k, v) = l.split_once('=').expect("key=value");
            (k.to_string(), v.to_string())
        })
        .collect()
}

fn get(s: &[(String, String)], key: &str) -> String {
    s.iter().find(|(k, _)| k == key).map(|(_, v)| v.clone()).unwrap_or_else(|| panic!("missing {key}"))
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

const SMALL_MFG: &str = "[mfg]\nparticles = 12\nsteps = 40\nepsilons = [0.5, 0.25]\n";

#[test]
fn validate_on_heisenberg_passes() {
    let tmp = TempDir::new().unwrap();
    let out = hmfg(tmp.path(), &["validate", "--out", "v"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(&tmp.path().join("v"));
    assert_eq!(get(&s, "all_passed"), "true");
    let table = fs::read_to_string(tmp.path().join("v/invariants.csv")).unwrap();
    assert!(table.starts_with("name,outcome,measured,threshold,detail\n"));
    assert!(table.lines().skip(1).all(|l| l.contains(",pass,") || l.contains(",skip,")), "{table}");
    assert!(tmp.path().join("v/resolved_config.toml").exists());
}

#[test]
fn validate_detects_injected_mutations() {
    let tmp = TempDir::new().unwrap();
    for (mutation, check) in [
        ("group-law-sign-flip", "invariant.geometry.associativity"),
        ("drop-epsilon-drift", "invariant.hamiltonian.drift_fd"),
    ] {
        let cfg = write(tmp.path(), &format!("{mutation}.toml"), &format!("[validate]\nmutation = \"{mutation}\"\n"));
        let out = hmfg(tmp.path(), &["validate", "--config", &cfg, "--out", mutation]);
        assert_eq!(out.status.code(), Some(2));
        let s = summary(&tmp.path().join(mutation));
        assert_eq!(get(&s, check), "fail");
        assert_eq!(get(&s, "all_passed"), "false");
    }
}

#[test]
fn mfg_without_coupling_has_one_zero_residual() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "zero.toml", "[mfg]\nparticles = 20\nsteps = 40\nepsilons = [0.1]\n[mfg.running]\nkind = \"zero\"\n");
    let out = hmfg(tmp.path(), &["mfg", "--config", &cfg, "--out", "m"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let res = fs::read_to_string(tmp.path().join("m/residuals.csv")).unwrap();
    let rows: Vec<&str> = res.lines().collect();
    assert_eq!(rows.len(), 2);
    let r: f64 = rows[1].split(',').nth(1).unwrap().parse().unwrap();
    assert!(r.abs() < 1e-12);
    for f in ["levels.csv", "level_residuals.csv", "measure_path.csv", "certificate.csv", "resolved_config.toml"] {
        assert!(tmp.path().join("m").join(f).exists(), "{f}");
    }
}

#[test]
fn malformed_config_names_the_field() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "bad.toml", "[hamiltonian]\nhorizon = \"long\"\n");
    let out = hmfg(tmp.path(), &["ocp", "--config", &cfg, "--out", "b"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("horizon"));

    let cfg = write(tmp.path(), "unknown.toml", "sedd = 1\n[mfg]\nparticle = 3\n");
    let out = hmfg(tmp.path(), &["mfg", "--config", &cfg, "--out", "u"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("sedd") && err.contains("mfg.particle"), "{err}");

    let cfg = write(tmp.path(), "gamma.toml", "[hamiltonian]\ngamma = 2.5\n");
    let out = hmfg(tmp.path(), &["ocp", "--config", &cfg, "--out", "g"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hamiltonian.gamma"));
}

#[test]
fn non_convergence_exits_with_two_and_keeps_outputs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "short.toml",
        &format!("{SMALL_MFG}tol = 1e-12\nmax_iterations = 1\n[mfg.running]\nkind = \"convolution\"\nstrength = 1.0\nmonotone = true\n"),
    );
    let out = hmfg(tmp.path(), &["mfg", "--config", &cfg, "--out", "n"]);
    assert_eq!(out.status.code(), Some(2));
    let s = summary(&tmp.path().join("n"));
    assert_eq!(get(&s, "status"), "not-converged");
    assert!(tmp.path().join("n/measure_path.csv").exists());
}

#[test]
fn identical_config_and_seed_give_identical_tables() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "mfg.toml", SMALL_MFG);
    for dir in ["a", "b"] {
        let out = hmfg(tmp.path(), &["mfg", "--config", &cfg, "--out", dir, "--seed", "7", "--threads", "2"]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["measure_path.csv", "residuals.csv", "levels.csv", "certificate.csv"] {
        let a = fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = fs::read(tmp.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
    // the echo alone reproduces the run
    let out = hmfg(tmp.path(), &["mfg", "--config", "a/resolved_config.toml", "--out", "c"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(fs::read(tmp.path().join("a/measure_path.csv")).unwrap(), fs::read(tmp.path().join("c/measure_path.csv")).unwrap());
    let echo = fs::read_to_string(tmp.path().join("a/resolved_config.toml")).unwrap();
    assert!(echo.contains("seed = 7") && echo.contains("threads = 2"));
}

#[test]
fn ocp_writes_path_and_summary() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "ocp.toml", "[structure]\nepsilon = 0.1\n[ocp]\ndirect = true\nrestarts = 3\n");
    let out = hmfg(tmp.path(), &["ocp", "--config", &cfg, "--out", "o"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(&tmp.path().join("o"));
    let cost: f64 = get(&s, "cost").parse().unwrap();
    assert!((cost + 1.0).abs() < 1e-6);
    let gap: f64 = get(&s, "pmp_direct_gap").parse().unwrap();
    assert!(gap < 1e-3);
    let path = fs::read_to_string(tmp.path().join("o/path.csv")).unwrap();
    assert_eq!(path.lines().next().unwrap(), "s,x1,x2,x3,p1,p2,p3,a1,a2,a3");
    assert_eq!(path.lines().count(), 202);
    let first = path.lines().nth(1).unwrap();
    assert!(first.split(',').all(|f| f.contains('e') && !f.contains(' ')));
}

#[test]
fn hjb_writes_slices() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "hjb.toml",
        "[hjb]\nresolution = 9\ntime_steps = 4\ncontrol_points = 5\nhalf_width = 2.0\nslice_levels = [0, 4]\ncompare_points = [[0.0, 0.0, 0.0]]\n",
    );
    let out = hmfg(tmp.path(), &["hjb", "--config", &cfg, "--out", "h"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for k in [0, 4] {
        let t = fs::read_to_string(tmp.path().join(format!("h/slice_level{k}.csv"))).unwrap();
        assert_eq!(t.lines().next().unwrap(), "t,x1,x2,u");
        assert_eq!(t.lines().count(), 82);
    }
    let terminal = fs::read_to_string(tmp.path().join("h/slice_level4.csv")).unwrap();
    for line in terminal.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|f| f.parse().unwrap()).collect();
        assert!((v[3] - (v[1] + v[2])).abs() < 1e-12);
    }
    assert!(tmp.path().join("h/comparison.csv").exists());
}
