//! Missing-value imputation fitted on a reference subset.

use serde::{Deserialize, Serialize};

use super::schema::{FieldKind, RiskFactor, Subject, Value};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuousRule {
    Median,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoricalRule {
    MostFrequent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImputeStrategy {
    pub categorical: CategoricalRule,
    pub continuous: ContinuousRule,
}

impl Default for ImputeStrategy {
    fn default() -> Self {
        ImputeStrategy {
            categorical: CategoricalRule::MostFrequent,
            continuous: ContinuousRule::Median,
        }
    }
}

/// One line of the provenance log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationRecord {
    pub field: String,
    pub fill_value: f64,
    pub n_imputed: usize,
}

/// Per-field fill values.
#[derive(Debug, Clone, PartialEq)]
pub struct Imputer {
    fills: Vec<Value>,
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

impl Imputer {
    pub fn fit<'a>(reference: impl IntoIterator<Item = &'a Subject>, strategy: ImputeStrategy) -> Result<Imputer> {
        let reference: Vec<&Subject> = reference.into_iter().collect();
        let mut fills = Vec::with_capacity(RiskFactor::ALL.len());
        for field in RiskFactor::ALL {
            let observed = reference
                .iter()
                .map(|s| s.profile.get(field))
                .filter(|v| !v.is_missing());
            let fill = match field.kind() {
                FieldKind::Numeric { .. } => {
                    let mut xs: Vec<f64> = observed.filter_map(|v| v.as_f64()).collect();
                    let stat = match strategy.continuous {
                        ContinuousRule::Median => median(&mut xs),
                        ContinuousRule::Mean => (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64),
                    };
                    stat.map(Value::Numeric)
                }
                FieldKind::Categorical { levels } => {
                    let mut counts = vec![0usize; levels.len()];
                    for v in observed {
                        if let Value::Code(c) = v {
                            counts[usize::from(c)] += 1;
                        }
                    }
                    let max = counts.iter().copied().max().unwrap_or(0);
                    // lowest code wins ties
                    (max > 0).then(|| Value::Code(counts.iter().position(|&c| c == max).unwrap() as u8))
                }
            };
            fills.push(fill.ok_or_else(|| Error::AllMissing(field.column().to_string()))?);
        }
        Ok(Imputer { fills })
    }

    pub fn fill_value(&self, field: RiskFactor) -> Value {
        self.fills[field.index()]
    }

    /// Replaces every MISSING cell and returns the provenance log.
    pub fn apply(&self, subjects: &mut [Subject]) -> Vec<ImputationRecord> {
        let mut counts = vec![0usize; self.fills.len()];
        for s in subjects.iter_mut() {
            for field in RiskFactor::ALL {
                if s.profile.get(field).is_missing() {
                    s.profile.set(field, self.fills[field.index()]);
                    counts[field.index()] += 1;
                }
            }
        }
        RiskFactor::ALL
            .iter()
            .zip(counts)
            .filter(|(_, n)| *n > 0)
            .map(|(f, n)| ImputationRecord {
                field: f.column().to_string(),
                fill_value: self.fills[f.index()].as_f64().unwrap_or(f64::NAN),
                n_imputed: n,
            })
            .collect()
    }
}

/// Fits on the subjects whose ids are in `reference_ids`, then imputes all of
/// `subjects` in place.
pub fn impute(
    subjects: &mut [Subject],
    reference_ids: &[String],
    strategy: ImputeStrategy,
) -> Result<Vec<ImputationRecord>> {
    let wanted: std::collections::HashSet<&str> = reference_ids.iter().map(String::as_str).collect();
    let imputer = Imputer::fit(subjects.iter().filter(|s| wanted.contains(s.id.as_str())), strategy)?;
    Ok(imputer.apply(subjects))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::generate::{generate_cohort, CohortConfig};

    fn base(n: usize) -> Vec<Subject> {
        generate_cohort(&CohortConfig {
            n_subjects: n.max(10),
            prevalence: 0.2,
            missing_rate: 0.0,
            ..CohortConfig::default()
        })
        .unwrap()
        .into_iter()
        .take(n)
        .collect()
    }

    #[test]
    fn median_of_observed() {
        let mut subjects = base(4);
        for (s, v) in subjects.iter_mut().zip([Some(1.0), Some(2.0), None, Some(4.0)]) {
            s.profile
                .set(RiskFactor::TeaIntake, v.map_or(Value::Missing, Value::Numeric));
        }
        let ids: Vec<String> = subjects.iter().map(|s| s.id.clone()).collect();
        let log = impute(&mut subjects, &ids, ImputeStrategy::default()).unwrap();
        assert_eq!(subjects[2].profile.get(RiskFactor::TeaIntake), Value::Numeric(2.0));
        let rec = log.iter().find(|r| r.field == "TeaIntake").unwrap();
        assert_eq!(rec.n_imputed, 1);
        assert_eq!(rec.fill_value, 2.0);
    }

    #[test]
    fn mode_of_observed() {
        let mut subjects = base(4);
        for (s, v) in subjects.iter_mut().zip([Some(0u8), Some(0), Some(1), None]) {
            s.profile
                .set(RiskFactor::MilkType, v.map_or(Value::Missing, Value::Code));
        }
        let ids: Vec<String> = subjects.iter().map(|s| s.id.clone()).collect();
        impute(&mut subjects, &ids, ImputeStrategy::default()).unwrap();
        assert_eq!(subjects[3].profile.get(RiskFactor::MilkType), Value::Code(0));
    }

    #[test]
    fn all_missing_column_errors() {
        let mut subjects = base(5);
        for s in &mut subjects {
            s.profile.set(RiskFactor::Hdl, Value::Missing);
        }
        let ids: Vec<String> = subjects.iter().map(|s| s.id.clone()).collect();
        match impute(&mut subjects, &ids, ImputeStrategy::default()) {
            Err(Error::AllMissing(name)) => assert_eq!(name, "HDL"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn statistics_come_from_reference_only() {
        let mut subjects = base(4);
        for (s, v) in subjects.iter_mut().zip([Some(10.0), Some(12.0), Some(1.0), None]) {
            s.profile
                .set(RiskFactor::CoffeeIntake, v.map_or(Value::Missing, Value::Numeric));
        }
        let ids = vec![subjects[0].id.clone(), subjects[1].id.clone()];
        impute(&mut subjects, &ids, ImputeStrategy::default()).unwrap();
        assert_eq!(subjects[3].profile.get(RiskFactor::CoffeeIntake), Value::Numeric(11.0));
        assert!(subjects.iter().all(|s| s.profile.iter().all(|(_, v)| !v.is_missing())));
    }
}
