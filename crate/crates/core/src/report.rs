//! JSON result records and the CSV empirical CDF of per-scheduler estimates.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::engine::{EstimationResult, HypothesisReport};
use crate::simulator::SchedulerMode;

/// Everything needed to rerun a computation bit-for-bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    pub model: String,
    pub property: String,
    /// The property as parsed, in canonical syntax.
    pub formula: String,
    pub horizon: u64,
    pub scheduler_mode: SchedulerMode,
    pub master_seed: u64,
    pub hash_modulus: u64,
}

/// Facts about the run that must not influence results.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Execution {
    pub jobs: usize,
    pub wall_clock_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Estimation(EstimationResult),
    HypothesisTest(HypothesisReport),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub algorithm: String,
    pub parameters: Parameters,
    pub result: Outcome,
    pub execution: Execution,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Empirical CDF points: each distinct estimate, ascending, with the fraction
/// of estimates less than or equal to it.
pub fn cdf_points(estimates: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted: Vec<f64> = estimates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut points: Vec<(f64, f64)> = Vec::new();
    for (i, &x) in sorted.iter().enumerate() {
        let fraction = (i + 1) as f64 / n;
        match points.last_mut() {
            Some(last) if last.0 == x => last.1 = fraction,
            _ => points.push((x, fraction)),
        }
    }
    points
}

pub fn write_cdf_csv(mut out: impl Write, estimates: &[f64]) -> io::Result<()> {
    writeln!(out, "estimate,cumulative_fraction")?;
    for (x, fraction) in cdf_points(estimates) {
        writeln!(out, "{x},{fraction}")?;
    }
    Ok(())
}
