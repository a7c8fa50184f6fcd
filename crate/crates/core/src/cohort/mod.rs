//! Synthetic preclinical cohorts: schema, generation, CSV files, splits and
//! imputation.

mod csv_io;
mod generate;
mod impute;
mod schema;
mod split;

pub use csv_io::{header, load_cohort_csv, read_cohort, save_cohort_csv, write_cohort};
pub use generate::{default_signal_fields, generate_cohort, CohortConfig};
pub use impute::{impute, median, CategoricalRule, ContinuousRule, ImputationRecord, ImputeStrategy, Imputer};
pub use schema::{
    FieldGroup, FieldKind, FieldSpec, IncidentLabel, MorphometryVector, RiskFactor, RiskFactorProfile, Subject, Value,
    MORPHOMETRY_COLUMNS, MORPHOMETRY_DIM, RISK_FACTOR_COUNT,
};
pub use split::{matched_control_count, split_cohort, CohortSplits, SplitConfig};

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Looks subjects up by id, preserving the order of `ids`.
pub fn select<'a>(subjects: &'a [Subject], ids: &[String]) -> Result<Vec<&'a Subject>> {
    let index: HashMap<&str, &Subject> = subjects.iter().map(|s| (s.id.as_str(), s)).collect();
    ids.iter()
        .map(|id| {
            index
                .get(id.as_str())
                .copied()
                .ok_or_else(|| Error::UnknownSubject(id.clone()))
        })
        .collect()
}
