use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("hardy-nls-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hardy-nls"))
        .args(args)
        .env("HARDY_NLS_OUT", root)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const COARSE: [&str; 2] = ["--nodes", "2001"];

#[test]
fn ground_state_is_deterministic() {
    let root = scratch("det");
    for out in ["a", "b"] {
        let o = run(&root, &["ground-state", "--out", out, COARSE[0], COARSE[1]]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let mut names: Vec<_> = fs::read_dir(root.join("a")).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.iter().any(|n| n == "profile.csv"));
    for n in &names {
        let x = fs::read(root.join("a").join(n)).unwrap();
        let y = fs::read(root.join("b").join(n)).unwrap();
        if n == "config.json" {
            // only the output directory differs
            let (mut cx, mut cy) = (json(&root.join("a").join(n)), json(&root.join("b").join(n)));
            cx["output"]["dir"] = Value::Null;
            cy["output"]["dir"] = Value::Null;
            assert_eq!(cx, cy);
        } else {
            assert_eq!(x, y, "{n:?} differs between runs");
        }
    }
    let side = json(&root.join("a/profile.json"));
    assert!((side["b0"].as_f64().unwrap() - 3.8759794).abs() < 1e-6);
    let summary = json(&root.join("a/summary.json"));
    assert_eq!(summary["monotonicity_violations"], 0);
    fs::remove_dir_all(&root).ok();
}

#[test]
fn validation_errors_exit_2() {
    let root = scratch("val");
    for args in [
        vec!["ground-state", "--a", "-0.3"],
        vec!["ground-state", "--nodes", "3"],
        vec!["evolve", "--direction", "sideways"],
        vec!["evolve", "--p", "1.2"],
        vec!["evolve", "--dt", "-1"],
        vec!["ground-state", "--bogus"],
    ] {
        let o = run(&root, &args);
        assert_eq!(code(&o), 2, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    fs::remove_dir_all(&root).ok();
}

#[test]
fn missing_profile_exits_4() {
    let root = scratch("io");
    let o = run(&root, &["spectrum", "--profile", "/nonexistent/profile/dir"]);
    assert_eq!(code(&o), 4);
    let err = json(&root.join("spectrum/error.json"));
    assert_eq!(err["kind"], "io");
    fs::remove_dir_all(&root).ok();
}

#[test]
fn config_file_overrides_flags_and_is_echoed() {
    let root = scratch("cfg");
    let cfg = root.join("c.json");
    fs::write(&cfg, r#"{"problem": {"a": -0.2}, "scan": {"count": 0}}"#).unwrap();
    let o = run(&root, &["classify-scan", "--a", "-0.05", "--count", "7", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let echo = json(&root.join("classify-scan/config.json"));
    assert_eq!(echo["problem"]["a"].as_f64(), Some(-0.2));
    assert_eq!(echo["scan"]["count"].as_u64(), Some(0));
    // empty grid, header only
    let csv = fs::read_to_string(root.join("classify-scan/scan.csv")).unwrap();
    assert_eq!(csv, "b,tag,r_event\n");
    fs::remove_dir_all(&root).ok();
}

#[test]
fn coarse_scan_has_one_flip() {
    let root = scratch("scan");
    let o = run(&root, &["classify-scan", "--b-min", "1", "--b-max", "10", "--count", "12"]);
    assert_eq!(code(&o), 0);
    let s = json(&root.join("classify-scan/summary.json"));
    assert_eq!(s["flips"], 1);
    assert_eq!(s["monotone"], true);
    let br = &s["flip_brackets"][0];
    let (lo, hi) = (br[0].as_f64().unwrap(), br[1].as_f64().unwrap());
    assert!(lo < 3.876 && 3.876 < hi);
    fs::remove_dir_all(&root).ok();
}

#[test]
fn spectrum_from_saved_profile() {
    let root = scratch("spec");
    assert_eq!(code(&run(&root, &["ground-state", COARSE[0], COARSE[1]])), 0);
    let prof = root.join("ground-state");
    let o = run(&root, &["spectrum", "--profile", prof.to_str().unwrap(), "--eigen-count", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep = json(&root.join("spectrum/spectrum.json"));
    assert_eq!(rep["neg_count"], 1);
    assert!(rep["e0"].as_f64().unwrap() > 6.0);
    let header = fs::read_to_string(root.join("spectrum/dichotomy.csv")).unwrap();
    assert!(header.starts_with("r,vplus_1,vplus_2,vminus_1,vminus_2\n"));
    // a profile for other parameters is refused
    let o = run(&root, &["spectrum", "--profile", prof.to_str().unwrap(), "--a", "-0.2"]);
    assert_eq!(code(&o), 2);
    fs::remove_dir_all(&root).ok();
}

#[test]
fn standing_wave_and_perturbed_evolution() {
    let root = scratch("evo");
    assert_eq!(code(&run(&root, &["ground-state", COARSE[0], COARSE[1]])), 0);
    let prof = root.join("ground-state");
    let p = prof.to_str().unwrap();
    let o = run(&root, &["evolve", "--profile", p, "--T", "0.2", "--out", "sw", "--plot"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = json(&root.join("sw/summary.json"));
    assert!(s["max_dist"].as_f64().unwrap() < 1e-8);
    assert!(s["mass_drift"].as_f64().unwrap() < 1e-12);
    assert!(root.join("sw/plot.gp").exists());
    let run_echo = json(&root.join("sw/run.json"));
    for k in ["d", "p", "a", "dt", "T", "delta", "direction", "R", "record_every"] {
        assert!(run_echo.get(k).is_some(), "{k}");
    }
    let ts = fs::read_to_string(root.join("sw/timeseries.csv")).unwrap();
    assert_eq!(ts.lines().next(), Some("t,theta,alpha,dist,mass,energy,VR,Vdot,AR"));
    assert_eq!(ts.lines().count(), 22);

    let o = run(&root, &["evolve", "--profile", p, "--T", "0.3", "--direction", "stable_minus", "--out", "sm"]);
    assert_eq!(code(&o), 0);
    let s = json(&root.join("sm/summary.json"));
    assert!(s["initial_kinetic"].as_f64().unwrap() < s["kinetic_q"].as_f64().unwrap());
    let rate = s["rate_fit"]["rate"].as_f64().unwrap();
    assert!((rate - 6.4).abs() < 1.3, "{rate}");
    fs::remove_dir_all(&root).ok();
}

#[test]
fn virial_and_gn_checks() {
    let root = scratch("vg");
    assert_eq!(code(&run(&root, &["ground-state", COARSE[0], COARSE[1]])), 0);
    let p = root.join("ground-state");
    let p = p.to_str().unwrap();
    let o = run(&root, &["virial-check", "--profile", p, "--T", "0.4"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = json(&root.join("virial-check/summary.json"));
    assert!(s["max_relative_error"].as_f64().unwrap() < 0.05);
    assert!(s["max_ar_over_dist"].as_f64().unwrap() < 1e-3);

    let o = run(&root, &["gn-check", "--profile", p, "--trials", "12", "--seed", "3"]);
    assert_eq!(code(&o), 0);
    let s = json(&root.join("gn-check/summary.json"));
    assert_eq!(s["violations"], 0);
    // coarse grid; the default grid reaches 1e-10
    assert!(s["equality_family_max_deviation"].as_f64().unwrap() < 1e-6);
    let lines = fs::read_to_string(root.join("gn-check/gn.csv")).unwrap().lines().count();
    assert_eq!(lines, 13);
    fs::remove_dir_all(&root).ok();
}
