//! Artifact schema: headers, round trips and version checks.

use mekf_mmae::scenario::artifacts::{
    comparison_from_json, comparison_to_json, read_run_csv, run_columns, summary_from_json,
    summary_to_json, write_campaign, write_run_csv, ComparisonFile, SummaryFile, SCHEMA_VERSION,
};
use mekf_mmae::scenario::config::GridConfig;
use mekf_mmae::scenario::{compare_strategies, run_monte_carlo, Mode, ScenarioConfig};
use mekf_mmae::Error;

fn short(mode: Mode) -> ScenarioConfig {
    let mut c = ScenarioConfig {
        mode,
        duration: 20.0,
        runs: 2,
        decimation: 4,
        ..ScenarioConfig::default()
    };
    c.grid = GridConfig {
        center_deg: vec![[0.0; 3]; mode.cameras()],
        half_width_deg: 0.5,
        points_per_axis: 3,
        budget: 4096,
    };
    c
}

#[test]
fn run_csv_round_trips_with_units_in_every_header() {
    for mode in [Mode::SingleMisalignment, Mode::DualMisalignment] {
        let campaign = run_monte_carlo(&short(mode)).unwrap();
        let record = &campaign.records[0];
        let mut buf = Vec::new();
        write_run_csv(record, &mut buf).unwrap();
        let table = read_run_csv(buf.as_slice()).unwrap();
        assert_eq!(table.columns, run_columns(mode.cameras()));
        assert_eq!(table.rows.len(), record.artifact_samples().len());
        let t = table.column("t_s").unwrap();
        assert!(t.windows(2).all(|w| w[1] > w[0]));
        let psi = table.column("psi_pct").unwrap();
        assert!(psi.iter().all(|p| (0.0..=100.0 + 1e-9).contains(p)));
        for c in &table.columns {
            let unitless = ["step", "psi_pct", "models", "map_weight", "refined"].contains(&c.as_str())
                || c.starts_with("q_");
            assert!(
                unitless || c.ends_with("_deg") || c.ends_with("_rad_s") || c.ends_with("_s"),
                "{c} has no unit suffix"
            );
        }
    }
}

#[test]
fn run_csv_with_a_missing_column_is_refused() {
    let campaign = run_monte_carlo(&short(Mode::SingleMisalignment)).unwrap();
    let mut buf = Vec::new();
    write_run_csv(&campaign.records[0], &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let stripped: String = text
        .lines()
        .map(|l| {
            let mut cells: Vec<&str> = l.split(',').collect();
            cells.remove(1);
            cells.join(",") + "\n"
        })
        .collect();
    match read_run_csv(stripped.as_bytes()) {
        Err(Error::Schema(m)) => assert!(m.contains("t_s"), "{m}"),
        other => panic!("expected schema error, got {other:?}"),
    }
}

#[test]
fn summary_round_trips_and_refuses_other_versions() {
    let config = short(Mode::SingleMisalignment);
    let campaign = run_monte_carlo(&config).unwrap();
    let file = SummaryFile {
        schema_version: SCHEMA_VERSION,
        preset: None,
        config,
        summary: campaign.summary,
    };
    let json = summary_to_json(&file).unwrap();
    assert_eq!(summary_from_json(&json).unwrap(), file);

    let mut value: serde_json::Value = serde_json::from_str(&json).unwrap();
    value["schema_version"] = serde_json::json!(SCHEMA_VERSION + 1);
    assert!(matches!(summary_from_json(&value.to_string()), Err(Error::Schema(_))));
    value.as_object_mut().unwrap().remove("schema_version");
    assert!(matches!(summary_from_json(&value.to_string()), Err(Error::Schema(_))));
}

#[test]
fn comparison_round_trips_and_refuses_other_versions() {
    let config = ScenarioConfig {
        runs: 1,
        ..short(Mode::SingleMisalignment)
    };
    let campaigns = compare_strategies(&config).unwrap();
    let file = ComparisonFile::from_campaigns(Some("test".into()), &config, &campaigns);
    assert_eq!(file.results.len(), 3);
    let json = comparison_to_json(&file).unwrap();
    assert_eq!(comparison_from_json(&json).unwrap(), file);
    let bumped = json.replacen(
        &format!("\"schema_version\": {SCHEMA_VERSION}"),
        &format!("\"schema_version\": {}", SCHEMA_VERSION + 1),
        1,
    );
    assert!(matches!(comparison_from_json(&bumped), Err(Error::Schema(_))));
}

#[test]
fn campaign_directory_holds_every_artifact() {
    let config = short(Mode::SingleMisalignment);
    let campaign = run_monte_carlo(&config).unwrap();
    let file = SummaryFile {
        schema_version: SCHEMA_VERSION,
        preset: None,
        config: config.clone(),
        summary: campaign.summary.clone(),
    };
    let dir = tempfile::tempdir().unwrap();
    write_campaign(dir.path(), &campaign.records, &file).unwrap();
    for name in ["run_0000.csv", "run_0001.csv", "rmse.csv", "events.csv", "summary.json", "config.toml"] {
        assert!(dir.path().join(name).is_file(), "{name} missing");
    }
    let back = ScenarioConfig::from_path(dir.path().join("config.toml")).unwrap();
    assert_eq!(back, config);
}
