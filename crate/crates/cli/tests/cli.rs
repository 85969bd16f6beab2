//! End-to-end checks of the `mekf-mmae` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mekf_mmae::scenario::artifacts::{comparison_from_json, read_run_csv, summary_from_json};
use mekf_mmae::scenario::{Preset, ScenarioConfig};

const SHORT: &str = "duration = 20.0\nruns = 3\ndecimation = 4\n\n[grid]\nhalf_width_deg = 0.5\npoints_per_axis = 3\n";

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mekf-mmae"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn short_config(dir: &Path) -> String {
    let p = dir.join("short.toml");
    fs::write(&p, SHORT).unwrap();
    p.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_config_exits_2_and_names_the_path() {
    let o = bin(&["simulate", "--config", "/no/such/scenario.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/no/such/scenario.toml"), "{}", stderr(&o));
}

#[test]
fn invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    fs::write(&p, "dt = -1.0\n").unwrap();
    let o = bin(&["validate-config", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    fs::write(&p, "dt = \"fast\"\n").unwrap();
    assert_eq!(bin(&["validate-config", "--config", p.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn unknown_flags_and_presets_are_rejected() {
    assert_eq!(bin(&["simulate", "--bogus"]).status.code(), Some(2));
    assert_eq!(bin(&["simulate", "--preset", "nope"]).status.code(), Some(2));
    assert_eq!(bin(&["simulate", "--preset", "single-desk", "--config", "x.toml"]).status.code(), Some(2));
    assert_eq!(bin(&["simulate", "--workers", "0"]).status.code(), Some(2));
}

#[test]
fn unwritable_output_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let o = bin(&["simulate", "--config", &cfg, "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn simulate_is_deterministic_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = bin(&["simulate", "--config", &cfg, "--seed", "42", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        let stdout = String::from_utf8_lossy(&o.stdout);
        assert!(stdout.contains("Misalignment error (deg)"), "{stdout}");
    }
    for name in ["run_0000.csv", "rmse.csv", "events.csv", "summary.json", "config.toml"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    assert!(!a.join("run_0001.csv").exists(), "simulate defaults to one run");
    let summary = summary_from_json(&fs::read_to_string(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.config.seed, 42);
    read_run_csv(fs::File::open(a.join("run_0000.csv")).unwrap()).unwrap();
}

#[test]
fn runs_flag_overrides_and_workers_do_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out, workers) in [(&a, "1"), (&b, "2")] {
        let o = bin(&["montecarlo", "--config", &cfg, "--runs", "2", "--workers", workers, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert!(a.join("run_0001.csv").exists());
    assert!(!a.join("run_0002.csv").exists());
    for name in ["run_0000.csv", "run_0001.csv", "summary.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn compare_strategies_writes_a_valid_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let out = dir.path().join("cmp");
    let o = bin(&["compare-strategies", "--config", &cfg, "--runs", "1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let file = comparison_from_json(&fs::read_to_string(out.join("comparison.json")).unwrap()).unwrap();
    let names: Vec<&str> = file.results.iter().map(|r| r.strategy.name()).collect();
    assert_eq!(names, ["classical_map", "psi_map", "psi_mean"]);
    for n in names {
        assert!(out.join(n).join("summary.json").is_file());
    }
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("Average refinements"), "{stdout}");
}

#[test]
fn compare_strategies_needs_a_bank() {
    let o = bin(&["compare-strategies", "--preset", "mekf-additive", "--runs", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn export_defaults_round_trips_through_validate() {
    let dir = tempfile::tempdir().unwrap();
    for p in Preset::ALL {
        let path = dir.path().join(format!("{}.toml", p.name()));
        let o = bin(&["export-defaults", "--preset", p.name(), "--out", path.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert_eq!(ScenarioConfig::from_path(&path).unwrap(), ScenarioConfig::preset(p));
        let o = bin(&["validate-config", "--config", path.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let o = bin(&["export-defaults"]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with('#'));
    assert_eq!(ScenarioConfig::from_toml_str(&text).unwrap(), ScenarioConfig::default());
}
