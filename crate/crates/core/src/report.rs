//! Report emission.
//!
//! A run directory holds structured-text summary tables, line-delimited
//! trace and verdict records, plot-ready columnar CSVs, and a manifest
//! with the config hash and seed. Field names and orderings are stable;
//! everything except the two timing files is byte-identical across runs
//! of the same config and seed.
//!
//! Files written:
//!
//! | file                            | contents                          |
//! |---------------------------------|-----------------------------------|
//! | `manifest.json`                 | config hash, seed, dataset note   |
//! | `model_metrics.json`            | per-side, per-family eval reports |
//! | `traces_<substitute>.jsonl`     | one adversarial trace per line    |
//! | `trace_times_<substitute>.csv`  | per-trace wall-clock seconds      |
//! | `detection_before_after.csv`    | per defender/substitute/class     |
//! | `mask_usage.csv`                | mask histogram per substitute     |
//! | `step_histogram.csv`            | step counts per substitute        |
//! | `per_feature_delta.csv`         | mean abs delta per feature        |
//! | `generation_time.csv`           | mean crafting seconds per class   |
//! | `transferability_<label>.csv`   | defender x substitute matrices    |
//! | `verdicts_<rule>.jsonl`         | defense decisions                 |
//! | `defense_weights.csv`           | per-feature reliability weights   |
//! | `summary.txt`                   | human-readable run summary        |

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::Error;
use crate::experiment::{AttackOutcome, DefenseOutcome, TransferabilityMatrix};
use crate::flow::Feature;
use crate::models::ModelFamily;

pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub dataset: String,
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), Error> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)?;
    Ok(())
}

fn fmt_rate(v: f64) -> String {
    format!("{v:.6}")
}

/// Writes the manifest plus all attack-side artifacts.
pub fn emit_attack_report(
    config: &ExperimentConfig,
    attack: &AttackOutcome,
    dir: &Path,
) -> Result<(), Error> {
    fs::create_dir_all(dir)?;
    let manifest = Manifest {
        format_version: REPORT_FORMAT_VERSION,
        config_hash: config.hash(),
        seed: config.seed,
        dataset: attack.dataset_note.clone(),
    };
    write_file(
        dir,
        "manifest.json",
        &serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;

    // Per-side model metrics.
    #[derive(Serialize)]
    struct SideMetrics<'a> {
        side: &'a str,
        family: ModelFamily,
        hyperparams: &'a crate::models::Hyperparams,
        macro_f1: f64,
        macro_precision: f64,
        macro_recall: f64,
        accuracy: f64,
    }
    let mut metrics = Vec::new();
    for side in [&attack.defender, &attack.attacker] {
        for (family, hyperparams, _) in &side.models {
            let report = &side.metrics[family];
            metrics.push(SideMetrics {
                side: side.name,
                family: *family,
                hyperparams,
                macro_f1: report.macro_f1,
                macro_precision: report.macro_precision,
                macro_recall: report.macro_recall,
                accuracy: report.accuracy,
            });
        }
    }
    write_file(
        dir,
        "model_metrics.json",
        &serde_json::to_string_pretty(&metrics).expect("metrics serialize"),
    )?;

    // Traces: JSONL without timing, timing in a sidecar CSV.
    for (family, traces) in &attack.traces {
        let mut jsonl = String::new();
        let mut times = String::from("trace_index,seconds\n");
        for (i, trace) in traces.iter().enumerate() {
            jsonl.push_str(&serde_json::to_string(trace).expect("trace serializes"));
            jsonl.push('\n');
            let _ = writeln!(times, "{i},{:.9}", trace.gen_seconds);
        }
        write_file(dir, &format!("traces_{family}.jsonl"), &jsonl)?;
        write_file(dir, &format!("trace_times_{family}.csv"), &times)?;
    }

    // Before/after detection per defender, substitute, and attack class.
    let mut detection = String::from("defender,substitute,class,before,after\n");
    for (d, per_sub) in &attack.after_per_class {
        for (a, per_class) in per_sub {
            for (class, after) in per_class {
                let before = attack.before_per_class[d].get(class).copied().unwrap_or(0.0);
                let _ = writeln!(
                    detection,
                    "{d},{a},{class},{},{}",
                    fmt_rate(before),
                    fmt_rate(*after)
                );
            }
        }
    }
    write_file(dir, "detection_before_after.csv", &detection)?;

    // Mask usage histogram.
    let mut masks = String::from("substitute,mask_id,count,fraction\n");
    for (family, stats) in &attack.stats {
        let evaded = stats.evaded.max(1);
        for (mask_id, count) in &stats.mask_usage {
            let _ = writeln!(
                masks,
                "{family},{mask_id},{count},{}",
                fmt_rate(*count as f64 / evaded as f64)
            );
        }
    }
    write_file(dir, "mask_usage.csv", &masks)?;

    // Step histogram.
    let mut steps = String::from("substitute,steps,count\n");
    for (family, stats) in &attack.stats {
        for (step, count) in stats.step_histogram.iter().enumerate() {
            let _ = writeln!(steps, "{family},{step},{count}");
        }
    }
    write_file(dir, "step_histogram.csv", &steps)?;

    // Mean absolute perturbation per modifiable feature.
    let mut deltas = String::from("substitute,feature,mean_abs_delta\n");
    for (family, stats) in &attack.stats {
        for (feature, delta) in Feature::MODIFIABLE.iter().zip(stats.mean_abs_delta) {
            let _ = writeln!(deltas, "{family},{},{}", feature.name(), fmt_rate(delta));
        }
    }
    write_file(dir, "per_feature_delta.csv", &deltas)?;

    // Timing (excluded from determinism comparisons).
    let mut timing = String::from("substitute,class,mean_seconds,flows\n");
    for (family, per_class) in &attack.timing {
        for (class, (mean, n)) in per_class {
            let _ = writeln!(timing, "{family},{class},{mean:.9},{n}");
        }
    }
    write_file(dir, "generation_time.csv", &timing)?;

    emit_matrix(dir, &attack.no_defense_matrix)?;
    Ok(())
}

fn emit_matrix(dir: &Path, matrix: &TransferabilityMatrix) -> Result<(), Error> {
    let mut csv = String::from("defender");
    for a in &matrix.attackers {
        let _ = write!(csv, ",{a}");
    }
    csv.push_str(",average\n");
    for ((d, row), avg) in matrix
        .defenders
        .iter()
        .zip(&matrix.cells)
        .zip(&matrix.row_averages)
    {
        let _ = write!(csv, "{d}");
        for cell in row {
            let _ = write!(csv, ",{}", fmt_rate(*cell));
        }
        let _ = writeln!(csv, ",{}", fmt_rate(*avg));
    }
    write_file(dir, &format!("transferability_{}.csv", matrix.label), &csv)
}

/// Writes the defense artifacts: matrices, verdicts, weights.
pub fn emit_defense_report(defense: &DefenseOutcome, dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir)?;
    for matrix in &defense.matrices {
        emit_matrix(dir, matrix)?;
    }

    let mut weights = String::from("feature,weight\n");
    for (feature, weight) in &defense.weights {
        let _ = writeln!(weights, "{},{}", feature.name(), fmt_rate(*weight));
    }
    write_file(dir, "defense_weights.csv", &weights)?;

    let mut by_rule: std::collections::BTreeMap<String, String> = Default::default();
    for verdict in &defense.verdicts {
        let line = serde_json::to_string(verdict).expect("verdict serializes");
        let entry = by_rule.entry(verdict.rule.name().to_string()).or_default();
        entry.push_str(&line);
        entry.push('\n');
    }
    for (rule, jsonl) in by_rule {
        write_file(dir, &format!("verdicts_{rule}.jsonl"), &jsonl)?;
    }
    Ok(())
}

fn render_matrix_text(out: &mut String, matrix: &TransferabilityMatrix) {
    let _ = writeln!(out, "  {} (rows: defender, columns: substitute)", matrix.label);
    let _ = write!(out, "    {:>8}", "");
    for a in &matrix.attackers {
        let _ = write!(out, " {:>8}", a.name());
    }
    let _ = writeln!(out, " {:>8}", "average");
    for ((d, row), avg) in matrix
        .defenders
        .iter()
        .zip(&matrix.cells)
        .zip(&matrix.row_averages)
    {
        let _ = write!(out, "    {:>8}", d.name());
        for cell in row {
            let _ = write!(out, " {:>8.3}", cell);
        }
        let _ = writeln!(out, " {:>8.3}", avg);
    }
}

/// Renders the timing-free human-readable summary.
pub fn render_summary(
    config: &ExperimentConfig,
    attack: &AttackOutcome,
    defense: Option<&DefenseOutcome>,
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "evadeflow run summary");
    let _ = writeln!(out, "=====================");
    let _ = writeln!(out, "config hash: {}", config.hash());
    let _ = writeln!(out, "seed: {}", config.seed);
    let _ = writeln!(out, "dataset: {}", attack.dataset_note);
    let _ = writeln!(
        out,
        "partition: defender {}+{} train+test, attacker {}+{}",
        attack.partitioned.defender_train.len(),
        attack.partitioned.defender_test.len(),
        attack.partitioned.attacker_train.len(),
        attack.partitioned.attacker_test.len()
    );

    let _ = writeln!(out, "\nclean-test macro F1");
    for side in [&attack.defender, &attack.attacker] {
        let _ = write!(out, "  {:>9}:", side.name);
        for (family, report) in &side.metrics {
            let _ = write!(out, " {}={:.3}", family.name(), report.macro_f1);
        }
        let _ = writeln!(out);
    }

    let _ = writeln!(out, "\nattack (c={}, t_max={})", config.attack.rate_constant, config.attack.max_steps);
    for (family, stats) in &attack.stats {
        let _ = writeln!(
            out,
            "  substitute {:>4}: evasion {:.3} ({} evaded / {} total)",
            family.name(),
            stats.evasion_rate,
            stats.evaded,
            stats.total
        );
    }

    let _ = writeln!(out, "\ndefender detection on attacker-test malicious flows");
    let _ = write!(out, "  clean originals:");
    for (family, rate) in &attack.before_detection {
        let _ = write!(out, " {}={:.3}", family.name(), rate);
    }
    let _ = writeln!(out, "\n\ntransferability (detection rate on crafted finals)");
    render_matrix_text(&mut out, &attack.no_defense_matrix);

    if let Some(defense) = defense {
        let _ = writeln!(out, "\ndefense");
        let _ = writeln!(
            out,
            "  defense data: {} train / {} eval instances ({} adversarial in train)",
            defense.defense_train_size, defense.defense_eval_size, defense.adversarial_training_instances
        );
        let _ = write!(out, "  reliability weights:");
        for (feature, weight) in &defense.weights {
            let _ = write!(out, " {}={:.3}", feature.name(), weight);
        }
        let _ = writeln!(out);
        for matrix in &defense.matrices {
            render_matrix_text(&mut out, matrix);
            let _ = writeln!(out, "    grand mean: {:.3}", matrix.grand_mean());
        }
        let _ = writeln!(
            out,
            "  clean pass-through verdicts identical: {}",
            defense.clean_passthrough_identical
        );
        for (rule, fp) in &defense.clean_fp_rate {
            let _ = writeln!(out, "  clean-traffic drop rate ({}): {:.3}", rule.name(), fp);
        }
    }
    out
}

pub fn emit_summary(
    config: &ExperimentConfig,
    attack: &AttackOutcome,
    defense: Option<&DefenseOutcome>,
    dir: &Path,
) -> Result<(), Error> {
    write_file(dir, "summary.txt", &render_summary(config, attack, defense))
}

/// Re-renders `summary.txt` from artifacts already on disk (manifest,
/// metrics, matrices). Used by the standalone `report` subcommand.
pub fn rerender_summary_from_artifacts(dir: &Path) -> Result<String, Error> {
    let manifest: Manifest = serde_json::from_str(
        &fs::read_to_string(dir.join("manifest.json"))
            .map_err(|e| Error::Data(format!("missing manifest.json in {}: {e}", dir.display())))?,
    )
    .map_err(|e| Error::Data(format!("bad manifest.json: {e}")))?;

    let mut out = String::new();
    let _ = writeln!(out, "evadeflow run summary (re-rendered)");
    let _ = writeln!(out, "===================================");
    let _ = writeln!(out, "config hash: {}", manifest.config_hash);
    let _ = writeln!(out, "seed: {}", manifest.seed);
    let _ = writeln!(out, "dataset: {}", manifest.dataset);
    let mut matrix_files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.starts_with("transferability_") && n.ends_with(".csv"))
                .unwrap_or(false)
        })
        .collect();
    matrix_files.sort();
    for path in matrix_files {
        let _ = writeln!(out, "\n{}", path.file_name().unwrap().to_string_lossy());
        out.push_str(&fs::read_to_string(&path)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{DatasetConfig, ExperimentConfig};
    use crate::experiment::{run_attack_experiment, run_defense_experiment};

    fn tiny_config(seed: u64) -> ExperimentConfig {
        let mut config = ExperimentConfig::desk_default();
        config.seed = seed;
        if let DatasetConfig::Synthetic { spec } = &mut config.dataset {
            for class in &mut spec.classes {
                class.count = 40;
            }
        }
        config.models.rf_trees = vec![10];
        config.models.gbt_rounds = vec![10];
        config
    }

    #[test]
    fn report_files_exist_with_stable_headers() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(3);
        let attack = run_attack_experiment(&config).unwrap();
        let defense = run_defense_experiment(&config, &attack).unwrap();
        emit_attack_report(&config, &attack, dir.path()).unwrap();
        emit_defense_report(&defense, dir.path()).unwrap();
        emit_summary(&config, &attack, Some(&defense), dir.path()).unwrap();

        let expected_headers = [
            ("detection_before_after.csv", "defender,substitute,class,before,after"),
            ("mask_usage.csv", "substitute,mask_id,count,fraction"),
            ("step_histogram.csv", "substitute,steps,count"),
            ("per_feature_delta.csv", "substitute,feature,mean_abs_delta"),
            ("generation_time.csv", "substitute,class,mean_seconds,flows"),
            ("defense_weights.csv", "feature,weight"),
            ("transferability_no_defense.csv", "defender,knn,dt,rf,gbt,average"),
            ("transferability_bayesian.csv", "defender,knn,dt,rf,gbt,average"),
            ("transferability_dempster_shafer.csv", "defender,knn,dt,rf,gbt,average"),
            ("transferability_monolithic_baseline.csv", "defender,knn,dt,rf,gbt,average"),
        ];
        for (file, header) in expected_headers {
            let text = std::fs::read_to_string(dir.path().join(file)).unwrap();
            assert_eq!(text.lines().next().unwrap(), header, "{file}");
        }
        for file in [
            "manifest.json",
            "model_metrics.json",
            "traces_knn.jsonl",
            "trace_times_knn.csv",
            "verdicts_bayesian.jsonl",
            "verdicts_dempster_shafer.jsonl",
            "summary.txt",
        ] {
            assert!(dir.path().join(file).exists(), "{file}");
        }
    }

    #[test]
    fn trace_jsonl_has_documented_fields() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(5);
        let attack = run_attack_experiment(&config).unwrap();
        emit_attack_report(&config, &attack, dir.path()).unwrap();
        let jsonl = std::fs::read_to_string(dir.path().join("traces_dt.jsonl")).unwrap();
        let first: serde_json::Value = serde_json::from_str(jsonl.lines().next().unwrap()).unwrap();
        let obj = first.as_object().unwrap();
        let mut keys: Vec<&str> = obj.keys().map(String::as_str).collect();
        keys.sort_unstable();
        assert_eq!(
            keys,
            vec!["delta", "final", "mask_used", "original", "outcome", "probes", "steps_used"]
        );
        // one line per malicious test flow
        assert_eq!(jsonl.lines().count(), attack.malicious_test.len());
    }

    #[test]
    fn histogram_totals_equal_trace_counts() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(7);
        let attack = run_attack_experiment(&config).unwrap();
        emit_attack_report(&config, &attack, dir.path()).unwrap();
        let steps = std::fs::read_to_string(dir.path().join("step_histogram.csv")).unwrap();
        for (family, stats) in &attack.stats {
            let total: usize = steps
                .lines()
                .skip(1)
                .filter(|l| l.starts_with(&format!("{family},")))
                .map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap())
                .sum();
            assert_eq!(total, stats.evaded, "{family}");
        }
    }

    #[test]
    fn identical_config_and_seed_give_byte_identical_nontiming_outputs() {
        let config = tiny_config(11);
        let dirs: Vec<tempfile::TempDir> = (0..2)
            .map(|_| {
                let dir = tempfile::tempdir().unwrap();
                let attack = run_attack_experiment(&config).unwrap();
                let defense = run_defense_experiment(&config, &attack).unwrap();
                emit_attack_report(&config, &attack, dir.path()).unwrap();
                emit_defense_report(&defense, dir.path()).unwrap();
                emit_summary(&config, &attack, Some(&defense), dir.path()).unwrap();
                dir
            })
            .collect();
        let mut names: Vec<String> = std::fs::read_dir(dirs[0].path())
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        names.sort();
        assert!(names.len() > 10);
        for name in names {
            let timing = name.starts_with("trace_times_") || name == "generation_time.csv";
            if timing {
                continue;
            }
            let a = std::fs::read(dirs[0].path().join(&name)).unwrap();
            let b = std::fs::read(dirs[1].path().join(&name)).unwrap();
            assert_eq!(a, b, "{name} should be byte-identical");
        }
    }

    #[test]
    fn rerender_reads_artifacts_back() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(13);
        let attack = run_attack_experiment(&config).unwrap();
        emit_attack_report(&config, &attack, dir.path()).unwrap();
        let text = rerender_summary_from_artifacts(dir.path()).unwrap();
        assert!(text.contains(&config.hash()));
        assert!(text.contains("transferability_no_defense.csv"));
    }
}
