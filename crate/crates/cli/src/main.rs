//! `mekf-mmae`: run scenarios, Monte Carlo campaigns and strategy comparisons.

mod defaults;
mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mekf_mmae::scenario::artifacts::{
    comparison_to_json, write_campaign, ComparisonFile, SummaryFile, SCHEMA_VERSION,
};
use mekf_mmae::scenario::{compare_strategies, run_monte_carlo, Campaign, Preset, ScenarioConfig};
use mekf_mmae::Error;

#[derive(Parser)]
#[command(name = "mekf-mmae", version, about = "Star-tracker misalignment calibration with an adaptive MEKF bank")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario (one run unless --runs is given) and write its artifacts.
    Simulate(Common),
    /// Run a Monte Carlo campaign and write its artifacts.
    Montecarlo(Common),
    /// Run the same seeds under every refinement strategy.
    CompareStrategies(Common),
    /// Parse and validate a configuration without running it.
    ValidateConfig(Common),
    /// Print a commented configuration (the defaults, or a preset).
    ExportDefaults(Common),
}

#[derive(Args)]
struct Common {
    /// TOML or JSON scenario file.
    #[arg(long, value_name = "PATH", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in scenario.
    #[arg(long, value_parser = parse_preset)]
    preset: Option<Preset>,
    /// Base seed; run i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    /// Artifact directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Number of Monte Carlo runs.
    #[arg(long)]
    runs: Option<usize>,
    /// Worker threads; all cores by default.
    #[arg(long)]
    workers: Option<usize>,
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Failure classified by exit code.
enum Failure {
    Config(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Runtime(m) => m,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

impl Common {
    fn load(&self) -> Result<ScenarioConfig, Failure> {
        let mut config = match (&self.config, self.preset) {
            (Some(path), _) => ScenarioConfig::from_path(path)
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?,
            (None, Some(p)) => ScenarioConfig::preset(p),
            (None, None) => ScenarioConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(runs) = self.runs {
            config.runs = runs;
        }
        config.validate().map_err(|e| Failure::Config(e.to_string()))?;
        Ok(config)
    }

    fn label(&self) -> Option<String> {
        self.preset.map(|p| p.name().to_string())
    }

    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    fn pool(&self) -> Result<rayon::ThreadPool, Failure> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.workers {
            if n == 0 {
                return Err(Failure::Config("--workers must be at least 1".into()));
            }
            b = b.num_threads(n);
        }
        b.build().map_err(runtime)
    }
}

fn write_artifacts(dir: &Path, label: Option<String>, config: &ScenarioConfig, campaign: &Campaign) -> Result<(), Failure> {
    let file = SummaryFile {
        schema_version: SCHEMA_VERSION,
        preset: label,
        config: config.clone(),
        summary: campaign.summary.clone(),
    };
    write_campaign(dir, &campaign.records, &file).map_err(runtime)?;
    Ok(())
}

fn campaign(args: &Common, default_runs: Option<usize>) -> Result<(), Failure> {
    let mut config = args.load()?;
    if args.runs.is_none() {
        if let Some(n) = default_runs {
            config.runs = n;
        }
    }
    let result = args.pool()?.install(|| run_monte_carlo(&config)).map_err(runtime)?;
    let dir = args.out_dir();
    write_artifacts(&dir, args.label(), &config, &result)?;
    let t_end = result.records.first().map_or(0.0, |r| r.last().t);
    print!(
        "{}",
        report::final_errors_table(&result.summary, t_end, config.mode.uses_bank())
    );
    println!("Artifacts written to {}", dir.display());
    Ok(())
}

fn compare(args: &Common) -> Result<(), Failure> {
    let config = args.load()?;
    if !config.mode.uses_bank() {
        return Err(Failure::Config("compare-strategies needs a misalignment mode".into()));
    }
    let campaigns = args.pool()?.install(|| compare_strategies(&config)).map_err(runtime)?;
    let dir = args.out_dir();
    for (strategy, c) in &campaigns {
        write_artifacts(&dir.join(strategy.name()), args.label(), &config.clone().with_strategy(*strategy), c)?;
    }
    let file = ComparisonFile::from_campaigns(args.label(), &config, &campaigns);
    let json = comparison_to_json(&file).map_err(runtime)?;
    fs::create_dir_all(&dir).map_err(runtime)?;
    fs::write(dir.join("comparison.json"), json).map_err(runtime)?;
    print!("{}", report::comparison_table(&file));
    println!("Artifacts written to {}", dir.display());
    Ok(())
}

fn validate(args: &Common) -> Result<(), Failure> {
    let config = args.load()?;
    let models = if config.mode.uses_bank() {
        config.grid.points_per_axis.pow(3 * config.mode.cameras() as u32)
    } else {
        1
    };
    println!(
        "valid: {:?}, {} steps, {} run(s), {} initial model(s)",
        config.mode,
        config.steps(),
        config.runs,
        models
    );
    Ok(())
}

fn export(args: &Common) -> Result<(), Failure> {
    let config = args.load()?;
    let text = defaults::commented_toml(&config).map_err(runtime)?;
    match &args.out {
        Some(path) => fs::write(path, text).map_err(runtime)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => campaign(a, Some(1)),
        Command::Montecarlo(a) => campaign(a, None),
        Command::CompareStrategies(a) => compare(a),
        Command::ValidateConfig(a) => validate(a),
        Command::ExportDefaults(a) => export(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
