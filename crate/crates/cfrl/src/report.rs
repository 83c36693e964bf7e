//! Deterministic CSV/JSON artifacts and the comparison report.
//!
//! Every CSV starts with a `# schema=<name>.v<N>` line followed by a column
//! header; columns never reorder without a schema-version bump. Nothing
//! time-dependent is written here — wall-clock data goes to the separate
//! run manifest so reruns stay byte-identical.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use cfrl_core::agents::AgentKind;

use crate::HarnessError;

/// Write one CSV with a schema line, a header row and pre-rendered rows.
pub fn write_csv<I>(path: &Path, schema: &str, header: &str, rows: I) -> Result<(), HarnessError>
where
    I: IntoIterator<Item = String>,
{
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut out = Vec::new();
    writeln!(out, "# schema={schema}")?;
    writeln!(out, "{header}")?;
    for row in rows {
        writeln!(out, "{row}")?;
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Shortest round-trip decimal rendering; stable across runs and platforms.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub kind: AgentKind,
    pub arm: String,
    pub seed: u64,
    pub final_avg_reward: f64,
    pub final_ctr: f64,
    pub curve_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub kind: AgentKind,
    pub baseline_mean_reward: f64,
    pub augmented_mean_reward: f64,
    pub baseline_mean_ctr: f64,
    pub augmented_mean_ctr: f64,
    /// `(augmented - baseline) / baseline * 100`; absent when the baseline
    /// mean is too close to zero to divide by.
    pub improvement_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub budget_episodes: usize,
    pub seeds: Vec<u64>,
    pub runs: Vec<RunRow>,
    pub aggregate: Vec<AggregateRow>,
}

pub fn improvement_pct(baseline: f64, augmented: f64) -> Option<f64> {
    if baseline.abs() < 1e-9 {
        None
    } else {
        Some((augmented - baseline) / baseline * 100.0)
    }
}

impl ComparisonReport {
    pub fn new(budget_episodes: usize, seeds: Vec<u64>, runs: Vec<RunRow>) -> Self {
        let kinds = [AgentKind::Ddpg, AgentKind::Td3, AgentKind::Sac];
        let mut aggregate = Vec::new();
        for kind in kinds {
            let mean = |arm: &str, f: fn(&RunRow) -> f64| {
                let vals: Vec<f64> = runs
                    .iter()
                    .filter(|r| r.kind == kind && r.arm == arm)
                    .map(f)
                    .collect();
                if vals.is_empty() {
                    f64::NAN
                } else {
                    vals.iter().sum::<f64>() / vals.len() as f64
                }
            };
            let baseline_mean_reward = mean("baseline", |r| r.final_avg_reward);
            let augmented_mean_reward = mean("augmented", |r| r.final_avg_reward);
            if baseline_mean_reward.is_nan() && augmented_mean_reward.is_nan() {
                continue;
            }
            aggregate.push(AggregateRow {
                kind,
                baseline_mean_reward,
                augmented_mean_reward,
                baseline_mean_ctr: mean("baseline", |r| r.final_ctr),
                augmented_mean_ctr: mean("augmented", |r| r.final_ctr),
                improvement_pct: improvement_pct(baseline_mean_reward, augmented_mean_reward),
            });
        }
        ComparisonReport { schema_version: 1, budget_episodes, seeds, runs, aggregate }
    }

    /// Text table in the usual baseline / with-CSP / improvement layout.
    pub fn table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<8} {:>16} {:>16} {:>12}\n",
            "agent", "baseline", "with-csp", "improvement"
        ));
        for row in &self.aggregate {
            let imp = match row.improvement_pct {
                Some(p) => format!("{p:+.2}%"),
                None => "n/a".to_string(),
            };
            out.push_str(&format!(
                "{:<8} {:>16.6} {:>16.6} {:>12}\n",
                row.kind.to_string(),
                row.baseline_mean_reward,
                row.augmented_mean_reward,
                imp
            ));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, serde_json::to_string_pretty(self).expect("report serializes"))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|_| HarnessError::MissingArtifact(path.to_path_buf()))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Numeric(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub hidden: usize,
    pub seed: u64,
    pub episodes: usize,
    pub first_decile_abs_dr: f64,
    pub last_decile_abs_dr: f64,
    pub final_abs_dr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub hidden_values: Vec<usize>,
    pub seeds: Vec<u64>,
    pub rows: Vec<SweepRow>,
}

/// Mean of the first ~10% and last ~10% of a curve (at least one point each).
pub fn decile_means(curve: &[f64]) -> (f64, f64) {
    if curve.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let k = (curve.len() / 10).max(1);
    let head = curve[..k].iter().sum::<f64>() / k as f64;
    let tail = curve[curve.len() - k..].iter().sum::<f64>() / k as f64;
    (head, tail)
}
