//! Commented TOML rendering of a configuration.

use mekf_mmae::scenario::ScenarioConfig;
use mekf_mmae::Result;

fn describe(section: &str, key: &str) -> Option<&'static str> {
    let text = match (section, key) {
        ("", "mode") => "single_misalignment | dual_misalignment | mekf_only_additive | mekf_only_multiplicative",
        ("", "duration") => "Simulated time span, s",
        ("", "dt") => "Measurement and propagation step, s",
        ("", "inertia_diag") => "Principal moments of inertia, kg m^2",
        ("", "omega0_deg_s") => "Initial true body rate, deg/s",
        ("", "rate_steps") => "Instantaneous true rate changes as [[rate_steps]] tables",
        ("rate_steps", "t") => "Time of the rate change, s",
        ("rate_steps", "delta_deg_s") => "Added body rate, deg/s",
        ("", "bias_sigma") => "Standard deviation of each true gyro-bias component, rad/s",
        ("", "noise_model") => "Star-tracker noise law in single-tracker modes: additive | multiplicative",
        ("", "sensor_sigma") => "Simulated star-tracker noise standard deviation",
        ("", "gyro_sigma") => "Simulated gyro noise standard deviation, rad/s",
        ("", "reference_vectors") => "Inertial directions observed for TRIAD in single-tracker modes",
        ("", "tracker_stars") => "Catalog indices seen by each tracker in dual mode",
        ("", "runs") => "Number of Monte Carlo runs",
        ("", "seed") => "Run i uses seed + i",
        ("", "decimation") => "Keep every k-th step in run CSVs (refinement steps are always kept)",
        ("", "transient_fraction") => "Leading fraction of each run excluded from coverage statistics",
        ("braking", "damping") => "Viscous braking coefficient, N m s (0 disables braking)",
        ("braking", "onset") => "Braking switch-on time, s",
        ("misalignment", "kind") => "uniform_over_grid | fixed (then values_deg = [[x, y, z], ...])",
        ("misalignment", "values_deg") => "Fixed true misalignment per tracker, rotation vector in deg",
        ("tuning", "p0_rate") => "Initial rate uncertainty, rad/s",
        ("tuning", "p0_bias") => "Initial bias uncertainty, rad/s",
        ("tuning", "p0_attitude") => "Initial attitude uncertainty, MRP",
        ("tuning", "q_rate") => "Rate process noise, rad/s^2",
        ("tuning", "q_bias") => "Bias drift process noise, rad/s^2",
        ("tuning", "q_attitude") => "Attitude process noise, MRP",
        ("tuning", "r_attitude") => "Star-tracker noise assumed by the filter",
        ("tuning", "r_gyro") => "Gyro noise assumed by the filter, rad/s",
        ("tuning", "attitude_transport") => "Keep the attitude transport term in the error dynamics",
        ("grid", "center_deg") => "Initial grid centre per tracker, deg",
        ("grid", "half_width_deg") => "Initial grid half-width per axis, deg",
        ("grid", "points_per_axis") => "Odd number of grid nodes per axis",
        ("grid", "budget") => "Largest number of models a grid may hold",
        ("policy", "strategy") => "classical_map | psi_map | psi_mean",
        ("policy", "branch_weight") => "Weight that triggers the classical strategy",
        ("policy", "psi_threshold") => "Diversity, percent, below which the psi strategies refine",
        ("policy", "contraction") => "Factor applied to the grid half-width on each refinement",
        ("policy", "max_refinements") => "Refinement budget per run",
        ("policy", "cooldown_steps") => "Minimum steps between a grid build and the next refinement",
        ("policy", "prune_threshold") => "Models at or below this weight are dropped",
        ("policy", "consistent_reseed") => "Give each model an attitude consistent with its own misalignment",
        _ => return None,
    };
    Some(text)
}

/// The configuration as TOML with a comment above every key.
pub fn commented_toml(config: &ScenarioConfig) -> Result<String> {
    let plain = config.to_toml_string()?;
    let mut out = String::from("# mekf-mmae scenario configuration\n");
    let mut section = String::new();
    let mut catalog_hint = config.catalog.is_none();
    for line in plain.lines() {
        let trimmed = line.trim();
        if let Some(name) = trimmed.strip_prefix("[[").and_then(|s| s.strip_suffix("]]")) {
            section = name.to_string();
        } else if let Some(name) = trimmed.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            if catalog_hint {
                out.push_str("# CSV star catalog (name, ra_deg, dec_deg); the built-in six stars when absent\n");
                out.push_str("# catalog = \"stars.csv\"\n\n");
                catalog_hint = false;
            }
            section = name.to_string();
        } else if let Some((key, _)) = trimmed.split_once(" = ") {
            if let Some(text) = describe(&section, key) {
                out.push_str("# ");
                out.push_str(text);
                out.push('\n');
            }
        }
        out.push_str(line);
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mekf_mmae::scenario::Preset;

    #[test]
    fn commented_output_parses_back_to_the_same_config() {
        for p in Preset::ALL {
            let c = ScenarioConfig::preset(p);
            let text = commented_toml(&c).unwrap();
            assert_eq!(ScenarioConfig::from_toml_str(&text).unwrap(), c, "{}", p.name());
        }
    }

    #[test]
    fn every_key_is_commented() {
        for p in Preset::ALL {
            let text = commented_toml(&ScenarioConfig::preset(p)).unwrap();
            let lines: Vec<&str> = text.lines().collect();
            for (i, l) in lines.iter().enumerate() {
                if l.contains(" = ") && !l.starts_with('#') {
                    assert!(lines[i - 1].starts_with('#'), "uncommented key: {l}");
                }
            }
        }
    }
}
