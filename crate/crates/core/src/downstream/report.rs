use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::metrics::Metrics;
use super::stats::{hedges_g, mean_std, welch_t};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub metrics: Metrics,
    pub c: f64,
    pub gamma: f64,
    pub cv_auroc: f64,
}

/// Per-seed results of one model configuration and their summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmReport {
    pub name: String,
    pub per_seed: Vec<SeedResult>,
    pub mean: Metrics,
    /// Sample standard deviation; absent for a single seed.
    pub std: Option<Metrics>,
}

impl ArmReport {
    pub fn new(name: impl Into<String>, per_seed: Vec<SeedResult>) -> Self {
        let mut mean = [0.0; 4];
        let mut std = Some([0.0; 4]);
        for k in 0..4 {
            let values: Vec<f64> = per_seed.iter().map(|r| r.metrics.values()[k]).collect();
            let (m, s) = mean_std(&values);
            mean[k] = m;
            match (s, std.as_mut()) {
                (Some(s), Some(arr)) => arr[k] = s,
                _ => std = None,
            }
        }
        ArmReport {
            name: name.into(),
            per_seed,
            mean: Metrics::from_values(mean),
            std: std.map(Metrics::from_values),
        }
    }

    pub fn metric_values(&self, k: usize) -> Vec<f64> {
        self.per_seed.iter().map(|r| r.metrics.values()[k]).collect()
    }

    /// `mean±std`, or the mean alone for a single seed.
    pub fn cell(&self, k: usize) -> String {
        match self.std {
            Some(s) => format!("{:.3}±{:.3}", self.mean.values()[k], s.values()[k]),
            None => format!("{:.3}", self.mean.values()[k]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub arm_a: String,
    pub arm_b: String,
    pub metric: String,
    pub t: f64,
    pub p: f64,
    pub hedges_g: f64,
}

/// Welch test and Hedges g of `a` against `b` on every metric. Metrics with
/// zero variance in both arms are skipped.
pub fn compare(a: &ArmReport, b: &ArmReport) -> Vec<Comparison> {
    (0..4)
        .filter_map(|k| {
            let (x, y) = (a.metric_values(k), b.metric_values(k));
            let w = welch_t(&x, &y).ok()?;
            let g = hedges_g(&x, &y).ok()?;
            Some(Comparison {
                arm_a: a.name.clone(),
                arm_b: b.name.clone(),
                metric: Metrics::NAMES[k].to_string(),
                t: w.t,
                p: w.p,
                hedges_g: g,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub title: String,
    pub task: String,
    pub arms: Vec<ArmReport>,
    pub comparisons: Vec<Comparison>,
}

impl EvalReport {
    pub fn arm(&self, name: &str) -> Option<&ArmReport> {
        self.arms.iter().find(|a| a.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per arm with mean and std columns for every metric.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["task".to_string(), "model".to_string(), "n_seeds".to_string()];
        for name in Metrics::NAMES {
            header.push(format!("{name} mean"));
            header.push(format!("{name} std"));
        }
        wr.write_record(&header)?;
        for arm in &self.arms {
            let mut row = vec![self.task.clone(), arm.name.clone(), arm.per_seed.len().to_string()];
            for k in 0..4 {
                row.push(arm.mean.values()[k].to_string());
                row.push(arm.std.map(|s| s.values()[k].to_string()).unwrap_or_default());
            }
            wr.write_record(&row)?;
        }
        wr.flush().map_err(|e| Error::io("<report writer>", e))?;
        Ok(())
    }

    /// Aligned text table, one row per arm.
    pub fn to_text(&self) -> String {
        let mut header = vec!["Task".to_string(), "Model".to_string()];
        header.extend(Metrics::NAMES.iter().map(|s| s.to_string()));
        let rows: Vec<Vec<String>> = self
            .arms
            .iter()
            .map(|a| {
                let mut r = vec![self.task.clone(), a.name.clone()];
                r.extend((0..4).map(|k| a.cell(k)));
                r
            })
            .collect();
        let mut out = format!("{}\n", self.title);
        out.push_str(&format_table(&header, &rows));
        if !self.comparisons.is_empty() {
            out.push('\n');
            let header: Vec<String> = ["Comparison", "Metric", "t", "p", "Hedges g"]
                .map(String::from)
                .to_vec();
            let rows: Vec<Vec<String>> = self
                .comparisons
                .iter()
                .map(|c| {
                    vec![
                        format!("{} vs {}", c.arm_a, c.arm_b),
                        c.metric.clone(),
                        format!("{:.3}", c.t),
                        format!("{:.4}", c.p),
                        format!("{:.3}", c.hedges_g),
                    ]
                })
                .collect();
            out.push_str(&format_table(&header, &rows));
        }
        out
    }
}

/// Left-aligned columns separated by two spaces, with a dashed rule under the header.
pub fn format_table(header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let mut s = String::new();
        for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            let _ = write!(s, "{c:<w$}");
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(header);
    out.push_str(&(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  ") + "\n"));
    for r in rows {
        out.push_str(&line(r));
    }
    out
}

/// Per-subject predictions for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub arm: String,
    pub seed: u64,
    pub id: String,
    pub label: u8,
    pub decision: f64,
    pub probability: f64,
}

pub fn write_predictions_csv<W: Write>(rows: &[PredictionRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush().map_err(|e| Error::io("<prediction writer>", e))?;
    Ok(())
}
