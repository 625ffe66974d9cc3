//! Space-separated CSV files and run manifests.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use adaptive_mlmc::mlmc::sampling::LevelBatch;
use adaptive_mlmc::mlmc::MlmcResult;
use adaptive_mlmc::stats::LevelSummary;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const LEVELS_HEADER: &str = "level M cost V m";
pub const MLMC_HEADER: &str = "tol cost estimate levels flags";
pub const SIGMA_HEADER: &str = "sigma worksmall workmid workbig";

pub fn levels_csv(batches: &[LevelBatch]) -> String {
    let mut out = format!("{LEVELS_HEADER}\n");
    for b in batches {
        let s = &b.stats;
        writeln!(out, "{} {} {} {} {}", s.level, s.count(), s.cost_sum(), s.variance(), s.mean()).unwrap();
    }
    out
}

/// `levels` is the finest level L of the run; `flags` is `bias_unresolved`
/// or `-`.
pub fn mlmc_csv(rows: &[(f64, MlmcResult)]) -> String {
    let mut out = format!("{MLMC_HEADER}\n");
    for (tol, r) in rows {
        let flag = if r.bias_unresolved { "bias_unresolved" } else { "-" };
        writeln!(out, "{tol} {} {} {} {flag}", r.total_cost, r.estimate, r.final_level).unwrap();
    }
    out
}

pub fn sigma_csv(rows: &[(f64, [f64; 3])]) -> String {
    let mut out = format!("{SIGMA_HEADER}\n");
    for (sigma, w) in rows {
        writeln!(out, "{sigma} {} {} {}", w[0], w[1], w[2]).unwrap();
    }
    out
}

fn parse_field<T: std::str::FromStr>(field: &str, line: usize, name: &str) -> CliResult<T> {
    field
        .parse()
        .map_err(|_| CliError::Usage(format!("line {line}: cannot parse {name} from {field:?}")))
}

/// Reads a `levels` file back into per-level summaries.
pub fn parse_levels_csv(text: &str) -> CliResult<Vec<LevelSummary>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.split_whitespace().eq(LEVELS_HEADER.split_whitespace()) => {}
        _ => return Err(CliError::Usage(format!("line 1: expected header {LEVELS_HEADER:?}"))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(CliError::Usage(format!("line {n}: expected 5 columns, found {}", fields.len())));
        }
        let level: u32 = parse_field(fields[0], n, "level")?;
        let count: u64 = parse_field(fields[1], n, "M")?;
        let cost: f64 = parse_field(fields[2], n, "cost")?;
        let variance: f64 = parse_field(fields[3], n, "V")?;
        let mean: f64 = parse_field(fields[4], n, "m")?;
        if count == 0 {
            return Err(CliError::Usage(format!("line {n}: M must be positive")));
        }
        rows.push(LevelSummary {
            level,
            count,
            mean,
            variance,
            mean_cost: cost / count as f64,
        });
    }
    Ok(rows)
}

/// Manifest text: the resolved configuration, the computed constants and a
/// SHA-256 of the configuration lines. Contains nothing run-dependent
/// beyond these, so identical inputs give identical files.
pub fn manifest(command: &str, resolved: &BTreeMap<String, String>, calibrated: &BTreeMap<String, String>) -> String {
    let mut config = format!("command = {command}\n");
    for (k, v) in resolved {
        writeln!(config, "{k} = {v}").unwrap();
    }
    let hash = Sha256::digest(config.as_bytes());
    let mut out = config;
    for (k, v) in calibrated {
        writeln!(out, "calibrated.{k} = {v}").unwrap();
    }
    let hex: String = hash.iter().map(|b| format!("{b:02x}")).collect();
    writeln!(out, "config_sha256 = {hex}").unwrap();
    out
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> CliResult<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), contents)?;
    Ok(())
}
