//! The five evaluation metrics and report emission.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::constraint::ConstraintKind;
use crate::encoding::{EncodedKind, EncodingState};
use crate::error::{io_err, CfxError, Result};
use crate::generate::CFResult;

pub const CSV_HEADER: &str = "validity,feas_unary,feas_binary,cont_prox,cat_prox,sparsity,n,config_digest";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub validity_pct: f64,
    pub feasibility_unary_pct: f64,
    pub feasibility_binary_pct: f64,
    pub continuous_proximity: f64,
    pub categorical_proximity: f64,
    pub sparsity_mean: f64,
    pub n: usize,
    pub config_digest: String,
}

/// Units in which continuous distances are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProximityUnits {
    #[default]
    Normalized,
    Raw,
}

fn non_empty(results: &[CFResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(CfxError::Data("metrics need at least one result".into()));
    }
    Ok(results.len() as f64)
}

fn pct(results: &[CFResult], pred: impl Fn(&CFResult) -> bool) -> Result<f64> {
    let n = non_empty(results)?;
    Ok(100.0 * results.iter().filter(|r| pred(r)).count() as f64 / n)
}

pub fn validity_pct(results: &[CFResult]) -> Result<f64> {
    pct(results, CFResult::is_valid)
}

/// Share of all results (valid or not) satisfying every constraint of `kind`.
pub fn feasibility_pct(results: &[CFResult], kind: ConstraintKind) -> Result<f64> {
    pct(results, |r| r.feasible.get(kind))
}

/// Share of results satisfying the schema constraint at `index`.
pub fn constraint_pct(results: &[CFResult], index: usize) -> Result<f64> {
    if results.iter().any(|r| index >= r.constraint_flags.len()) {
        return Err(CfxError::Config(format!("no constraint at index {index}")));
    }
    pct(results, |r| r.constraint_flags[index])
}

/// Negated mean L1 distance over continuous features, normalized units.
pub fn continuous_proximity(results: &[CFResult]) -> Result<f64> {
    let n = non_empty(results)?;
    Ok(-results.iter().map(|r| r.cont_l1).sum::<f64>() / n)
}

/// Same as [`continuous_proximity`] but in the chosen units.
pub fn continuous_proximity_in(results: &[CFResult], units: ProximityUnits, encoding: &EncodingState) -> Result<f64> {
    match units {
        ProximityUnits::Normalized => continuous_proximity(results),
        ProximityUnits::Raw => {
            let n = non_empty(results)?;
            let mut total = 0.0;
            for r in results {
                for f in &encoding.features {
                    if let EncodedKind::Continuous { min, max } = f.kind {
                        let d = (r.cf_vector[f.offset] - r.input_vector[f.offset]).abs();
                        total += d * (max - min);
                    }
                }
            }
            Ok(-total / n)
        }
    }
}

/// Negated mean count of changed categorical features.
pub fn categorical_proximity(results: &[CFResult]) -> Result<f64> {
    let n = non_empty(results)?;
    Ok(-(results.iter().map(|r| r.cat_changes).sum::<usize>() as f64) / n)
}

/// Mean number of changed features per result.
pub fn sparsity_metric(results: &[CFResult]) -> Result<f64> {
    let n = non_empty(results)?;
    Ok(results.iter().map(|r| r.sparsity_count).sum::<usize>() as f64 / n)
}

/// Hex SHA-256 of any serializable configuration.
pub fn config_digest<T: Serialize>(config: &T) -> String {
    let text = serde_json::to_string(config).expect("config serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl MetricsReport {
    pub fn from_results(results: &[CFResult], config_digest: impl Into<String>) -> Result<Self> {
        Ok(Self {
            validity_pct: validity_pct(results)?,
            feasibility_unary_pct: feasibility_pct(results, ConstraintKind::Unary)?,
            feasibility_binary_pct: feasibility_pct(results, ConstraintKind::Binary)?,
            continuous_proximity: continuous_proximity(results)?,
            categorical_proximity: categorical_proximity(results)?,
            sparsity_mean: sparsity_metric(results)?,
            n: results.len(),
            config_digest: config_digest.into(),
        })
    }

    pub fn csv(&self) -> String {
        format!(
            "{CSV_HEADER}\n{},{},{},{},{},{},{},{}\n",
            self.validity_pct,
            self.feasibility_unary_pct,
            self.feasibility_binary_pct,
            self.continuous_proximity,
            self.categorical_proximity,
            self.sparsity_mean,
            self.n,
            self.config_digest
        )
    }
}

/// Writes `<path>.json` and `<path>.csv`; returns both paths.
pub fn emit_report(report: &MetricsReport, path: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
    let base = path.as_ref();
    let json_path = base.with_extension("json");
    let csv_path = base.with_extension("csv");
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    std::fs::write(&json_path, json).map_err(io_err(&json_path))?;
    std::fs::write(&csv_path, report.csv()).map_err(io_err(&csv_path))?;
    Ok((json_path, csv_path))
}

pub fn read_report(path: impl AsRef<Path>) -> Result<MetricsReport> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Ok(serde_json::from_str(&text)?)
}
