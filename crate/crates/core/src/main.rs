//! Command-line front end for the experiment pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use evadeflow::config::{ConfigError, DatasetConfig, ExperimentConfig};
use evadeflow::error::Error;
use evadeflow::experiment::{
    prepare_flows, run_attack_experiment, run_defense_experiment, train_side,
};
use evadeflow::ingest::{ingest_csv, write_canonical_csv, ColumnMapping};
use evadeflow::preprocess::partition;
use evadeflow::report::{
    emit_attack_report, emit_defense_report, emit_summary, rerender_summary_from_artifacts,
};
use evadeflow::{derive_seed, synth};

#[derive(Parser)]
#[command(
    name = "evadeflow",
    about = "Black-box evasion attacks and ensemble adversarial detection for flow-based NIDS",
    version
)]
struct Cli {
    /// TOML experiment config; defaults to the built-in desk-scale config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured synthetic corpus and write it as CSV.
    Synth,
    /// Load a CSV through a column mapping and report cleaning stats.
    Ingest {
        /// CSV to read; defaults to the config's dataset path.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Mapping preset (ton-iot, bot-iot, canonical) or mapping file;
        /// defaults to the config's mapping.
        #[arg(long)]
        mapping: Option<String>,
    },
    /// Train the defender and attacker model grids; write models and metrics.
    Train,
    /// Run the adversarial-attack experiment and write attack reports.
    Attack,
    /// Run the attack and defense experiments and write all reports.
    Defend,
    /// Re-render summary.txt from artifacts in the output directory.
    Report,
    /// Full pipeline: train, attack, defend, and summarize.
    RunAll,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::desk_default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    Ok(config)
}

fn save_models(
    side: &evadeflow::experiment::TrainedSide,
    dir: &std::path::Path,
) -> Result<(), Error> {
    let models_dir = dir.join("models");
    std::fs::create_dir_all(&models_dir)?;
    for (family, _, model) in &side.models {
        model.save(&models_dir.join(format!("{}_{family}.json", side.name)))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Error> {
    let config = load_config(cli)?;
    let out = config.output_dir.clone();
    match &cli.command {
        Command::Synth => {
            let spec = match &config.dataset {
                DatasetConfig::Synthetic { spec } => spec.clone(),
                DatasetConfig::Csv { .. } => {
                    return Err(Error::Config(ConfigError::Invalid(
                        "synth requires a synthetic dataset config".to_string(),
                    )))
                }
            };
            let flows = synth::generate_synthetic(&spec, derive_seed(config.seed, "synthesize"))?;
            std::fs::create_dir_all(&out)?;
            let path = out.join("flows.csv");
            write_canonical_csv(&flows, &path)?;
            println!("wrote {} flows to {}", flows.len(), path.display());
        }
        Command::Ingest { input, mapping } => {
            let (path, mapping_name) = match (&config.dataset, input, mapping) {
                (DatasetConfig::Csv { path, mapping }, i, m) => (
                    i.clone().unwrap_or_else(|| path.clone()),
                    m.clone().unwrap_or_else(|| mapping.clone()),
                ),
                (_, Some(i), m) => (
                    i.clone(),
                    m.clone().unwrap_or_else(|| "canonical".to_string()),
                ),
                (_, None, _) => {
                    return Err(Error::Config(ConfigError::Invalid(
                        "ingest needs --input or a csv dataset config".to_string(),
                    )))
                }
            };
            let mapping = ColumnMapping::resolve(&mapping_name)?;
            let report = ingest_csv(&path, &mapping)?;
            std::fs::create_dir_all(&out)?;
            write_canonical_csv(&report.flows, &out.join("flows.csv"))?;
            println!(
                "read {} rows: kept {}, skipped {}, repaired {}, removed {} duplicates",
                report.rows_read,
                report.flows.len(),
                report.rows_skipped,
                report.repaired,
                report.duplicates_removed
            );
        }
        Command::Train => {
            config.validate()?;
            let attack_config = config.attack.to_attack_config()?;
            let (flows, note) = prepare_flows(&config)?;
            let parts = partition(&flows, derive_seed(config.seed, "partition"))?;
            let defender = train_side(
                "defender",
                parts.defender_train,
                parts.defender_test,
                &config.models,
                &attack_config.target_class,
                config.seed,
            )?;
            let attacker = train_side(
                "attacker",
                parts.attacker_train,
                parts.attacker_test,
                &config.models,
                &attack_config.target_class,
                config.seed,
            )?;
            save_models(&defender, &out)?;
            save_models(&attacker, &out)?;
            println!("dataset: {note}");
            for side in [&defender, &attacker] {
                for (family, report) in &side.metrics {
                    println!(
                        "{} {family}: macro F1 {:.3} accuracy {:.3}",
                        side.name, report.macro_f1, report.accuracy
                    );
                }
            }
        }
        Command::Attack => {
            let attack = run_attack_experiment(&config)?;
            emit_attack_report(&config, &attack, &out)?;
            emit_summary(&config, &attack, None, &out)?;
            for (family, stats) in &attack.stats {
                println!(
                    "substitute {family}: evasion {:.3} ({}/{})",
                    stats.evasion_rate, stats.evaded, stats.total
                );
            }
            println!("reports in {}", out.display());
        }
        Command::Defend | Command::RunAll => {
            let attack = run_attack_experiment(&config)?;
            if matches!(cli.command, Command::RunAll) {
                save_models(&attack.defender, &out)?;
                save_models(&attack.attacker, &out)?;
            }
            let defense = run_defense_experiment(&config, &attack)?;
            emit_attack_report(&config, &attack, &out)?;
            emit_defense_report(&defense, &out)?;
            emit_summary(&config, &attack, Some(&defense), &out)?;
            for ensemble in &defense.ensembles {
                ensemble.save(&out.join(format!("defense_ensemble_{}.json", ensemble.rule.name())))?;
            }
            for matrix in &defense.matrices {
                println!("{}: mean detection {:.3}", matrix.label, matrix.grand_mean());
            }
            println!("reports in {}", out.display());
        }
        Command::Report => {
            let text = rerender_summary_from_artifacts(&out)?;
            std::fs::write(out.join("summary.txt"), &text)?;
            print!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
