//! Plain-text tables printed after a campaign.

use std::fmt::Write;

use mekf_mmae::scenario::artifacts::ComparisonFile;
use mekf_mmae::scenario::CampaignSummary;

fn axis_rows(out: &mut String, label: &str, values: &[f64; 3], fmt: fn(f64) -> String) {
    for (i, axis) in ["X", "Y", "Z"].iter().enumerate() {
        let name = if i == 0 { label } else { "" };
        let _ = writeln!(out, "{name:<34} {axis:>4} {:>14}", fmt(values[i]));
    }
}

fn fixed(v: f64) -> String {
    format!("{v:.6}")
}

fn sci(v: f64) -> String {
    format!("{v:.3e}")
}

/// Final mean errors per axis: one block per quantity for a single tracker,
/// one row per quantity with x/y/z columns for two.
pub fn final_errors_table(summary: &CampaignSummary, t_end: f64, bank: bool) -> String {
    let f = &summary.final_errors;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Final mean errors at t = {t_end:.1} s over {} run(s)",
        summary.runs_completed
    );
    if f.mu_deg.len() == 2 {
        let _ = writeln!(out, "{:<30} {:>14} {:>14} {:>14}", "Quantity", "x", "y", "z");
        let row = |out: &mut String, name: &str, v: &[f64; 3], fmt: fn(f64) -> String| {
            let _ = writeln!(out, "{name:<30} {:>14} {:>14} {:>14}", fmt(v[0]), fmt(v[1]), fmt(v[2]));
        };
        row(&mut out, "Attitude [deg]", &f.attitude_deg, fixed);
        row(&mut out, "Misalignment mu1 [deg]", &f.mu_deg[0], fixed);
        row(&mut out, "Misalignment mu2 [deg]", &f.mu_deg[1], fixed);
        row(&mut out, "Angular velocity [rad/s]", &f.omega, sci);
        row(&mut out, "Gyro bias [rad/s]", &f.bias, sci);
    } else {
        let _ = writeln!(out, "{:<34} {:>4} {:>14}", "Error metric", "Axis", "Mean error");
        axis_rows(&mut out, "Attitude error (deg)", &f.attitude_deg, fixed);
        axis_rows(&mut out, "Angular velocity error (rad/s)", &f.omega, sci);
        axis_rows(&mut out, "Gyroscope bias error (rad/s)", &f.bias, sci);
        if let Some(mu) = f.mu_deg.first().filter(|_| bank) {
            axis_rows(&mut out, "Misalignment error (deg)", mu, fixed);
        }
    }
    let _ = writeln!(
        out,
        "Attitude principal angle (deg): mean {:.4}, std {:.4}, max {:.4}",
        f.angle_mean_deg, f.angle_std_deg, f.angle_max_deg
    );
    let c = &summary.coverage;
    let _ = write!(
        out,
        "3-sigma coverage: attitude {:.3}, rate {:.3}, bias {:.3}",
        c.attitude_group(),
        c.omega_group(),
        c.bias_group()
    );
    if bank {
        let _ = writeln!(out, ", misalignment {:.3}", c.mu_group());
        let _ = writeln!(
            out,
            "Mean refinements: {:.2}; final misalignment RMSE: {:.4e} rad",
            summary.refinements.mean_count,
            summary.rmse.final_mu()
        );
    } else {
        out.push('\n');
    }
    for fail in &summary.failures {
        let _ = writeln!(out, "run {} failed: {}", fail.run_index, fail.message);
    }
    out
}

pub fn comparison_table(file: &ComparisonFile) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<16} {:>20} {:>24}", "Strategy", "Average refinements", "Final mu RMSE (rad)");
    for r in &file.results {
        let _ = writeln!(
            out,
            "{:<16} {:>20.2} {:>24.4e}",
            r.strategy.name(),
            r.mean_refinements,
            r.final_mu_rmse
        );
    }
    out
}
