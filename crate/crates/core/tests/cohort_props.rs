use std::collections::HashSet;

use proptest::prelude::*;
use reveal_core::cohort::{generate_cohort, split_cohort, write_cohort, CohortConfig, SplitConfig, Subject};
use reveal_core::downstream::{auroc, welch_t};
use reveal_core::Error;

fn morphometry(s: &[Subject]) -> Vec<Vec<f64>> {
    s.iter().map(|x| x.morphometry.0.to_vec()).collect()
}

/// Plain logistic regression by gradient descent on standardized inputs,
/// fitted on `train` and scored on `test`.
fn logistic_auroc(train: &[Subject], test: &[Subject]) -> f64 {
    let xtr = morphometry(train);
    let xte = morphometry(test);
    let k = xtr[0].len();
    let mean: Vec<f64> = (0..k)
        .map(|j| xtr.iter().map(|r| r[j]).sum::<f64>() / xtr.len() as f64)
        .collect();
    let sd: Vec<f64> = (0..k)
        .map(|j| (xtr.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / (xtr.len() - 1) as f64).sqrt())
        .collect();
    let z = |r: &[f64]| (0..k).map(|j| (r[j] - mean[j]) / sd[j]).collect::<Vec<f64>>();
    let ztr: Vec<Vec<f64>> = xtr.iter().map(|r| z(r)).collect();
    let ytr: Vec<f64> = train
        .iter()
        .map(|s| if s.incident_label.is_case() { 1.0 } else { 0.0 })
        .collect();
    let mut w = vec![0.0; k];
    let mut b = 0.0;
    for _ in 0..2000 {
        let mut gw = vec![0.0; k];
        let mut gb = 0.0;
        for (x, &y) in ztr.iter().zip(&ytr) {
            let p = 1.0 / (1.0 + (-(b + x.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>())).exp());
            for j in 0..k {
                gw[j] += (p - y) * x[j];
            }
            gb += p - y;
        }
        let n = ztr.len() as f64;
        for j in 0..k {
            w[j] -= 0.5 * gw[j] / n;
        }
        b -= 0.5 * gb / n;
    }
    let scores: Vec<f64> = xte
        .iter()
        .map(|r| z(r).iter().zip(&w).map(|(a, c)| a * c).sum::<f64>())
        .collect();
    let labels: Vec<bool> = test.iter().map(|s| s.incident_label.is_case()).collect();
    auroc(&scores, &labels).unwrap()
}

fn halves(subjects: &[Subject]) -> (Vec<Subject>, Vec<Subject>) {
    let (a, b): (Vec<_>, Vec<_>) = subjects.iter().cloned().enumerate().partition(|(i, _)| i % 2 == 0);
    (
        a.into_iter().map(|x| x.1).collect(),
        b.into_iter().map(|x| x.1).collect(),
    )
}

fn set(v: &[String]) -> HashSet<&str> {
    v.iter().map(String::as_str).collect()
}

fn config(n: usize, prevalence: f64, rho: f64, seed: u64) -> CohortConfig {
    CohortConfig {
        n_subjects: n,
        prevalence,
        signal_strength: rho,
        seed,
        ..CohortConfig::default()
    }
}

#[test]
fn planted_signal_is_recoverable_from_morphometry() {
    let subjects = generate_cohort(&config(2000, 0.12, 0.9, 3)).unwrap();
    let (train, test) = halves(&subjects);
    let a = logistic_auroc(&train, &test);
    assert!(a > 0.70, "held-out AUROC {a}");
}

#[test]
fn no_signal_means_indistinguishable_morphometry() {
    let subjects = generate_cohort(&config(1000, 0.12, 0.0, 7)).unwrap();
    let cases = subjects.iter().filter(|s| s.incident_label.is_case()).count() as f64 / 1000.0;
    assert!((0.10..=0.14).contains(&cases), "{cases}");
    let mut p_sum = 0.0;
    for j in 0..17 {
        let column = |case: bool| -> Vec<f64> {
            subjects
                .iter()
                .filter(|s| s.incident_label.is_case() == case)
                .map(|s| s.morphometry.0[j])
                .collect()
        };
        p_sum += welch_t(&column(true), &column(false)).unwrap().p;
    }
    assert!(p_sum / 17.0 > 0.01);
}

#[test]
fn oracle_auroc_grows_with_signal_strength() {
    let mut means = Vec::new();
    for rho in [0.0, 0.3, 0.6, 0.9] {
        let total: f64 = (0..10)
            .map(|seed| {
                let subjects = generate_cohort(&config(1000, 0.12, rho, 50 + seed)).unwrap();
                let (train, test) = halves(&subjects);
                logistic_auroc(&train, &test)
            })
            .sum();
        means.push(total / 10.0);
    }
    assert!(means.windows(2).all(|w| w[1] >= w[0]), "{means:?}");
}

#[test]
fn generation_is_byte_deterministic() {
    let cfg = config(300, 0.12, 0.5, 7);
    let write = || {
        let mut out = Vec::new();
        write_cohort(&generate_cohort(&cfg).unwrap(), &mut out).unwrap();
        out
    };
    assert_eq!(write(), write());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn split_invariants(
        n in 200usize..600,
        prevalence in 0.02f64..0.06,
        align_train in 0.2f64..0.5,
        align_val in 0.05f64..0.15,
        eval_prevalence in 0.08f64..0.2,
        cohort_seed in any::<u64>(),
        split_seed in any::<u64>(),
    ) {
        let subjects = generate_cohort(&config(n, prevalence, 0.9, cohort_seed)).unwrap();
        let split_cfg = SplitConfig { align_train, align_val, eval_prevalence, seed: split_seed, ..SplitConfig::default() };
        let splits = match split_cohort(&subjects, &split_cfg) {
            Ok(s) => s,
            Err(Error::InfeasibleMatching { needed, available }) => {
                prop_assert!(needed > available);
                return Ok(());
            }
            Err(Error::NoCases) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let case_ids: HashSet<&str> =
            subjects.iter().filter(|s| s.incident_label.is_case()).map(|s| s.id.as_str()).collect();
        let (tr, va, pool) = (set(&splits.align_train), set(&splits.align_val), set(&splits.eval_pool));
        prop_assert!(tr.is_disjoint(&va) && tr.is_disjoint(&pool) && va.is_disjoint(&pool));
        prop_assert!(tr.is_disjoint(&case_ids) && va.is_disjoint(&case_ids));
        prop_assert!(case_ids.is_subset(&pool));
        let (st, se) = (set(&splits.svm_train), set(&splits.svm_test));
        prop_assert!(st.is_disjoint(&se));
        prop_assert_eq!(st.union(&se).copied().collect::<HashSet<_>>(), pool.clone());
        let p = case_ids.len() as f64 / pool.len() as f64;
        prop_assert!((p - eval_prevalence).abs() <= 0.02, "pool prevalence {}", p);
        prop_assert!(se.iter().any(|id| case_ids.contains(id)));
    }
}
