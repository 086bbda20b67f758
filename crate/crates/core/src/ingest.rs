//! CSV ingestion with configurable column mappings.
//!
//! A mapping names the source column for each of the eight free fields
//! plus the label; the five dependent columns are optional — when present
//! they are read and repaired against the recomputation formulas, when
//! absent they are derived. Rows that fail to parse are counted and
//! skipped rather than aborting the load.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::FlowRecord;
use crate::preprocess::{clean, CleanOutcome};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    UnreadableFile {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("column {0} not found in CSV header")]
    MissingColumn(String),
    #[error("cannot parse mapping: {0}")]
    BadMapping(String),
    #[error("csv: {0}")]
    Csv(String),
}

/// Column mapping for one CSV dialect.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub dur: String,
    pub spkts: String,
    pub sbytes: String,
    pub dpkts: String,
    pub dbytes: String,
    pub proto: String,
    pub sport: String,
    pub dport: String,
    pub label: String,
    #[serde(default)]
    pub pkts: Option<String>,
    #[serde(default)]
    pub bytes: Option<String>,
    #[serde(default)]
    pub rate: Option<String>,
    #[serde(default)]
    pub srate: Option<String>,
    #[serde(default)]
    pub drate: Option<String>,
    /// Label values rewritten to the canonical `benign` class.
    #[serde(default)]
    pub benign_values: Vec<String>,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
}

fn default_delimiter() -> char {
    ','
}

impl ColumnMapping {
    /// Built-in mappings: the two dataset dialects the harness ships with
    /// (each using its flow exporter's native column names) plus the
    /// `canonical` layout produced by [`write_canonical_csv`].
    pub fn preset(name: &str) -> Option<ColumnMapping> {
        match name {
            "canonical" => Some(ColumnMapping {
                dur: "dur".to_string(),
                spkts: "spkts".to_string(),
                sbytes: "sbytes".to_string(),
                dpkts: "dpkts".to_string(),
                dbytes: "dbytes".to_string(),
                proto: "proto".to_string(),
                sport: "sport".to_string(),
                dport: "dport".to_string(),
                label: "label".to_string(),
                pkts: Some("pkts".to_string()),
                bytes: Some("bytes".to_string()),
                rate: Some("rate".to_string()),
                srate: Some("srate".to_string()),
                drate: Some("drate".to_string()),
                benign_values: vec!["benign".to_string()],
                delimiter: ',',
            }),
            "ton-iot" => Some(ColumnMapping {
                dur: "duration".to_string(),
                spkts: "src_pkts".to_string(),
                sbytes: "src_bytes".to_string(),
                dpkts: "dst_pkts".to_string(),
                dbytes: "dst_bytes".to_string(),
                proto: "proto".to_string(),
                sport: "src_port".to_string(),
                dport: "dst_port".to_string(),
                label: "type".to_string(),
                pkts: None,
                bytes: None,
                rate: None,
                srate: None,
                drate: None,
                benign_values: vec!["normal".to_string()],
                delimiter: ',',
            }),
            "bot-iot" => Some(ColumnMapping {
                dur: "dur".to_string(),
                spkts: "spkts".to_string(),
                sbytes: "sbytes".to_string(),
                dpkts: "dpkts".to_string(),
                dbytes: "dbytes".to_string(),
                proto: "proto".to_string(),
                sport: "sport".to_string(),
                dport: "dport".to_string(),
                label: "category".to_string(),
                pkts: Some("pkts".to_string()),
                bytes: Some("bytes".to_string()),
                rate: Some("rate".to_string()),
                srate: Some("srate".to_string()),
                drate: Some("drate".to_string()),
                benign_values: vec!["normal".to_string()],
                delimiter: ',',
            }),
            _ => None,
        }
    }

    /// Resolves a preset name or loads a mapping file (TOML).
    pub fn resolve(name_or_path: &str) -> Result<ColumnMapping, IngestError> {
        if let Some(preset) = ColumnMapping::preset(name_or_path) {
            return Ok(preset);
        }
        let path = Path::new(name_or_path);
        let text = std::fs::read_to_string(path).map_err(|source| IngestError::UnreadableFile {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| IngestError::BadMapping(e.to_string()))
    }
}

/// Parsed flows plus load accounting.
#[derive(Debug, Clone)]
pub struct IngestReport {
    pub flows: Vec<FlowRecord>,
    pub rows_read: usize,
    pub rows_skipped: usize,
    pub repaired: usize,
    pub duplicates_removed: usize,
}

fn parse_number(field: &str) -> Option<f64> {
    let field = field.trim();
    let v: f64 = field.parse().ok()?;
    if v.is_finite() {
        Some(v)
    } else {
        None
    }
}

fn parse_count(field: &str) -> Option<u64> {
    let v = parse_number(field)?;
    if v < 0.0 {
        return None;
    }
    Some(v.round() as u64)
}

fn parse_port(field: &str) -> Option<u16> {
    let field = field.trim();
    let v: i64 = if let Some(hex) = field.strip_prefix("0x") {
        i64::from_str_radix(hex, 16).ok()?
    } else {
        parse_number(field)?.round() as i64
    };
    u16::try_from(v).ok()
}

/// Loads a CSV through a column mapping and pushes the rows through
/// [`clean`]. Dependent columns, when mapped, are verified against the
/// recomputation formulas; disagreements count as repairs.
pub fn ingest_csv(path: &Path, mapping: &ColumnMapping) -> Result<IngestReport, IngestError> {
    let file = std::fs::File::open(path).map_err(|source| IngestError::UnreadableFile {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(mapping.delimiter as u8)
        .flexible(true)
        .from_reader(file);

    let headers = reader
        .headers()
        .map_err(|e| IngestError::Csv(e.to_string()))?
        .clone();
    let index: HashMap<&str, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim(), i))
        .collect();
    let col = |name: &str| -> Result<usize, IngestError> {
        index
            .get(name)
            .copied()
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
    };
    let opt_col = |name: &Option<String>| -> Result<Option<usize>, IngestError> {
        name.as_ref().map(|n| col(n)).transpose()
    };

    let dur_col = col(&mapping.dur)?;
    let spkts_col = col(&mapping.spkts)?;
    let sbytes_col = col(&mapping.sbytes)?;
    let dpkts_col = col(&mapping.dpkts)?;
    let dbytes_col = col(&mapping.dbytes)?;
    let proto_col = col(&mapping.proto)?;
    let sport_col = col(&mapping.sport)?;
    let dport_col = col(&mapping.dport)?;
    let label_col = col(&mapping.label)?;
    let pkts_col = opt_col(&mapping.pkts)?;
    let bytes_col = opt_col(&mapping.bytes)?;
    let rate_col = opt_col(&mapping.rate)?;
    let srate_col = opt_col(&mapping.srate)?;
    let drate_col = opt_col(&mapping.drate)?;

    let mut rows_read = 0usize;
    let mut rows_skipped = 0usize;
    let mut flows = Vec::new();
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(_) => {
                rows_skipped += 1;
                continue;
            }
        };
        rows_read += 1;
        let parsed = (|| -> Option<FlowRecord> {
            let get = |i: usize| record.get(i);
            let dur = parse_number(get(dur_col)?)?;
            if dur < 0.0 {
                return None;
            }
            let mut flow = FlowRecord::new(
                dur,
                parse_count(get(spkts_col)?)?,
                parse_count(get(sbytes_col)?)?,
                parse_count(get(dpkts_col)?)?,
                parse_count(get(dbytes_col)?)?,
                get(proto_col)?.trim().to_lowercase(),
                parse_port(get(sport_col)?)?,
                parse_port(get(dport_col)?)?,
                canonical_label(get(label_col)?, &mapping.benign_values),
            );
            // Mapped dependent columns override the derived values; clean()
            // repairs any that disagree with the formulas.
            if let Some(i) = pkts_col {
                flow.pkts = parse_count(get(i)?)?;
            }
            if let Some(i) = bytes_col {
                flow.bytes = parse_count(get(i)?)?;
            }
            if let Some(i) = rate_col {
                flow.rate = parse_number(get(i)?)?;
            }
            if let Some(i) = srate_col {
                flow.srate = parse_number(get(i)?)?;
            }
            if let Some(i) = drate_col {
                flow.drate = parse_number(get(i)?)?;
            }
            Some(flow)
        })();
        match parsed {
            Some(flow) => flows.push(flow),
            None => rows_skipped += 1,
        }
    }

    let CleanOutcome {
        flows,
        repaired,
        duplicates_removed,
    } = clean(flows);
    Ok(IngestReport {
        flows,
        rows_read,
        rows_skipped,
        repaired,
        duplicates_removed,
    })
}

fn canonical_label(raw: &str, benign_values: &[String]) -> String {
    let label = raw.trim().to_lowercase();
    if label == "benign" || benign_values.iter().any(|b| b.to_lowercase() == label) {
        "benign".to_string()
    } else {
        label
    }
}

/// Writes flows in the `canonical` CSV layout (header row, all 13
/// features plus label), readable back through the `canonical` preset.
pub fn write_canonical_csv(flows: &[FlowRecord], path: &Path) -> Result<(), IngestError> {
    use std::fmt::Write as _;
    let mut out =
        String::from("dur,spkts,sbytes,dpkts,dbytes,pkts,bytes,rate,srate,drate,proto,sport,dport,label\n");
    for f in flows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            f.dur, f.spkts, f.sbytes, f.dpkts, f.dbytes, f.pkts, f.bytes, f.rate, f.srate, f.drate,
            f.proto, f.sport, f.dport, f.label
        );
    }
    std::fs::write(path, out).map_err(|source| IngestError::UnreadableFile {
        path: path.to_path_buf(),
        source,
    })
}
