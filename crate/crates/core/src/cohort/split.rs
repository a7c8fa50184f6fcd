//! Alignment / evaluation splits.
//!
//! Controls are shuffled into the alignment train and validation sets first;
//! the remaining controls form a pool from which age- and sex-matched
//! controls are drawn so that every case plus its matches reaches the target
//! evaluation prevalence. The evaluation pool is then split into SVM train
//! and test sets, stratified by label.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::schema::{RiskFactor, Subject, Value};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Fraction of controls assigned to alignment training.
    pub align_train: f64,
    /// Fraction of controls assigned to alignment validation.
    pub align_val: f64,
    /// Case fraction targeted in the evaluation pool.
    pub eval_prevalence: f64,
    /// Held-out fraction of the evaluation pool, per class.
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            align_train: 0.45,
            align_val: 0.10,
            eval_prevalence: 0.12,
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.align_train > 0.0
            && self.align_val >= 0.0
            && self.align_train + self.align_val < 1.0
            && self.eval_prevalence > 0.0
            && self.eval_prevalence < 1.0
            && self.test_fraction > 0.0
            && self.test_fraction < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid split fractions: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortSplits {
    pub align_train: Vec<String>,
    pub align_val: Vec<String>,
    pub eval_pool: Vec<String>,
    pub svm_train: Vec<String>,
    pub svm_test: Vec<String>,
}

/// Number of controls needed so that `n_cases` make up `prevalence` of the pool.
pub fn matched_control_count(n_cases: usize, prevalence: f64) -> usize {
    (n_cases as f64 * (1.0 - prevalence) / prevalence).round() as usize
}

fn age(s: &Subject) -> Option<f64> {
    s.profile.get(RiskFactor::Age).as_f64()
}

fn sex(s: &Subject) -> Value {
    s.profile.get(RiskFactor::Sex)
}

fn match_distance(case: &Subject, control: &Subject) -> f64 {
    let age_gap = match (age(case), age(control)) {
        (Some(a), Some(b)) => (a - b).abs(),
        _ => 50.0,
    };
    let sex_gap = if sex(case) == sex(control) && !sex(case).is_missing() {
        0.0
    } else {
        100.0
    };
    age_gap + sex_gap
}

pub fn split_cohort(subjects: &[Subject], config: &SplitConfig) -> Result<CohortSplits> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut cases: Vec<usize> = Vec::new();
    let mut controls: Vec<usize> = Vec::new();
    for (i, s) in subjects.iter().enumerate() {
        if s.incident_label.is_case() {
            cases.push(i);
        } else {
            controls.push(i);
        }
    }
    if cases.is_empty() {
        return Err(Error::NoCases);
    }

    controls.shuffle(&mut rng);
    let n_controls = controls.len();
    let n_train = (config.align_train * n_controls as f64).round() as usize;
    let n_val = ((config.align_val * n_controls as f64).round() as usize).min(n_controls - n_train);
    let align_train = controls[..n_train].to_vec();
    let align_val = controls[n_train..n_train + n_val].to_vec();
    let pool = &controls[n_train + n_val..];

    let needed = matched_control_count(cases.len(), config.eval_prevalence);
    if pool.len() < needed {
        return Err(Error::InfeasibleMatching {
            needed,
            available: pool.len(),
        });
    }

    // Greedy nearest-neighbour matching, one control per case per round, with
    // cases visited in a random order. Ties go to the earlier pool entry.
    let mut case_order = cases.clone();
    case_order.shuffle(&mut rng);
    let mut used = vec![false; pool.len()];
    let mut matched: Vec<usize> = Vec::with_capacity(needed);
    'rounds: while matched.len() < needed {
        for &c in &case_order {
            if matched.len() == needed {
                break 'rounds;
            }
            let best = pool
                .iter()
                .enumerate()
                .filter(|(k, _)| !used[*k])
                .map(|(k, &idx)| (k, match_distance(&subjects[c], &subjects[idx])))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            match best {
                Some((k, _)) => {
                    used[k] = true;
                    matched.push(pool[k]);
                }
                None => break 'rounds,
            }
        }
    }

    let mut eval_cases = cases.clone();
    let mut eval_controls = matched;
    let mut svm_test: Vec<usize> = Vec::new();
    let mut svm_train: Vec<usize> = Vec::new();
    for group in [&mut eval_cases, &mut eval_controls] {
        group.sort_unstable();
        let mut shuffled = group.clone();
        shuffled.shuffle(&mut rng);
        let n_test = (config.test_fraction * shuffled.len() as f64).round() as usize;
        svm_test.extend_from_slice(&shuffled[..n_test]);
        svm_train.extend_from_slice(&shuffled[n_test..]);
    }
    let mut eval_pool: Vec<usize> = eval_cases.into_iter().chain(eval_controls).collect();

    let ids = |mut v: Vec<usize>| -> Vec<String> {
        v.sort_unstable();
        v.into_iter().map(|i| subjects[i].id.clone()).collect()
    };
    eval_pool.sort_unstable();
    Ok(CohortSplits {
        align_train: ids(align_train),
        align_val: ids(align_val),
        eval_pool: ids(eval_pool),
        svm_train: ids(svm_train),
        svm_test: ids(svm_test),
    })
}
