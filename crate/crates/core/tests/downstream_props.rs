//! Metrics, calibration and the SVM solver against independent oracles.

mod common;

use common::{blobs, pair_count};
use ndarray::{array, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reveal_core::downstream::{
    auroc, cross_validate, evaluate_split, hedges_g, kernel_matrix, metrics, rbf_kernel, smo, stratified_folds,
    train_svm, welch_t, ClassWeights, Confusion, CvConfig, Platt, SvmParams,
};

#[test]
fn auroc_matches_pair_counting_exhaustively() {
    // every label vector for n ≤ 10, scores drawn from a coarse grid so ties occur
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in 2..=10usize {
        for mask in 0u32..(1 << n) {
            let labels: Vec<bool> = (0..n).map(|i| mask & (1 << i) != 0).collect();
            if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
                assert!(auroc(&vec![0.0; n], &labels).is_err());
                continue;
            }
            let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..5) as f64 / 4.0).collect();
            assert_eq!(auroc(&scores, &labels).unwrap(), pair_count(&scores, &labels));
        }
    }
    // and random draws up to n = 20
    for _ in 0..2000 {
        let n = rng.random_range(2..=20);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..8) as f64).collect();
        assert_eq!(auroc(&scores, &labels).unwrap(), pair_count(&scores, &labels));
    }
}

#[test]
fn auroc_fixture() {
    let a = auroc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
    assert_eq!(a, 0.75);
}

#[test]
fn confusion_fixture_by_hand() {
    // tp 3, fp 1, tn 4, fn 2
    let predicted = [true, true, true, true, false, false, false, false, false, false];
    let labels = [true, true, true, false, true, true, false, false, false, false];
    let c = Confusion::from_predictions(&predicted, &labels);
    assert_eq!((c.tp, c.fp, c.tn, c.fn_), (3, 1, 4, 2));
    assert_eq!(c.balanced_accuracy(), (3.0 / 5.0 + 4.0 / 5.0) / 2.0);
    assert_eq!(c.f1(), 6.0 / 9.0);
    assert_eq!(c.mcc(), (12.0 - 2.0) / (4.0f64 * 5.0 * 5.0 * 6.0).sqrt());
}

#[test]
fn degenerate_predictor_on_imbalanced_data() {
    let labels: Vec<bool> = (0..100).map(|i| i < 12).collect();
    let scores: Vec<f64> = (0..100).map(|i| i as f64).collect();
    let m = metrics(&scores, &vec![0.1; 100], &labels, 0.5).unwrap();
    assert_eq!((m.balanced_accuracy, m.f1, m.mcc), (0.5, 0.0, 0.0));
}

#[test]
fn welch_and_hedges_closed_form() {
    // two samples with means 1 and 0 and unit sample SD
    let base = [-1.5, -1.0, -0.5, 0.0, 0.0, 0.0, 0.0, 0.5, 1.0, 1.5];
    let sd = (base.iter().map(|v: &f64| v * v).sum::<f64>() / 9.0).sqrt();
    let b: Vec<f64> = base.iter().map(|v| v / sd).collect();
    let a: Vec<f64> = b.iter().map(|v| v + 1.0).collect();
    let g = hedges_g(&a, &b).unwrap();
    assert!((g - (1.0 - 3.0 / 71.0)).abs() < 1e-12);
    assert!((g - 0.958).abs() < 1e-3);
    let w = welch_t(&a, &b).unwrap();
    assert!((w.t - 1.0 / (0.2f64).sqrt()).abs() < 1e-12);
}

#[test]
fn rbf_fixture() {
    let k = rbf_kernel(array![0.0, 0.0].view(), array![1.0, 1.0].view(), 0.5).unwrap();
    assert!((k - (-1.0f64).exp()).abs() < 1e-15);
    assert!(rbf_kernel(array![0.0].view(), array![1.0].view(), 0.0).is_err());
}

#[test]
fn separable_blobs() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (x, y) = blobs(&mut rng, 40, 40, 8.0, 0.5);
    let (xt, yt) = blobs(&mut rng, 40, 40, 8.0, 0.5);
    let model = train_svm(x.view(), &y, &SvmParams::new(10.0, 0.5)).unwrap();
    assert!(model.kkt_residual < 1e-3);
    let train_dec = model.decision_function(x.view()).unwrap();
    assert!(train_dec.iter().zip(&y).all(|(&d, &l)| (d > 0.0) == l));
    let test_dec = model.decision_function(xt.view()).unwrap();
    assert!(auroc(&test_dec, &yt).unwrap() > 0.99);

    let eval = evaluate_split(x.view(), &y, xt.view(), &yt, &CvConfig::default(), 1).unwrap();
    assert!(eval.metrics.auroc > 0.99);
}

fn dual_objective(k: &Array2<f64>, y: &[f64], alpha: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * k[[i, j]];
        }
    }
    0.5 * quad - alpha.iter().sum::<f64>()
}

#[test]
fn smo_matches_brute_force_dual_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for trial in 0..5 {
        let (x, labels) = blobs(&mut rng, 2, 2, 1.0 + trial as f64, 0.8);
        let y: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
        let k = kernel_matrix(x.view(), x.view(), 0.7).unwrap();
        let c = 1.0;
        let sol = smo(k.view(), &y, &[c; 4], 1e-10, 100_000).unwrap();
        let smo_obj = dual_objective(&k, &y, &sol.alpha);

        // points 0,1 are cases and 2,3 controls: yᵀα = 0 fixes α₃
        let steps = 100;
        let mut best = f64::INFINITY;
        for a in 0..=steps {
            for b in 0..=steps {
                for d in 0..=steps {
                    let (a0, a1, a2) = (
                        a as f64 / steps as f64,
                        b as f64 / steps as f64,
                        d as f64 / steps as f64,
                    );
                    let a3 = a0 + a1 - a2;
                    if !(0.0..=c).contains(&a3) {
                        continue;
                    }
                    best = best.min(dual_objective(&k, &y, &[a0, a1, a2, a3]));
                }
            }
        }
        assert!(smo_obj <= best + 1e-9, "smo {smo_obj} grid {best}");
        assert!(best - smo_obj < 1e-2, "smo {smo_obj} grid {best}");
    }
}

#[test]
fn duplicating_points_with_half_weights_keeps_the_decision_function() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (x, y) = blobs(&mut rng, 15, 25, 1.5, 1.0);
    let params = SvmParams {
        class_weights: ClassWeights::Uniform,
        tol: 1e-10,
        ..SvmParams::new(2.0, 0.5)
    };
    let once = train_svm(x.view(), &y, &params).unwrap();
    let doubled = ndarray::concatenate(ndarray::Axis(0), &[x.view(), x.view()]).unwrap();
    let y2: Vec<bool> = y.iter().chain(&y).copied().collect();
    let half = SvmParams {
        class_weights: ClassWeights::Custom(0.5, 0.5),
        ..params
    };
    let twice = train_svm(doubled.view(), &y2, &half).unwrap();
    let probe = Array2::from_shape_fn((49, 2), |(i, j)| {
        if j == 0 {
            (i / 7) as f64 - 3.0
        } else {
            (i % 7) as f64 - 3.0
        }
    });
    let a = once.decision_function(probe.view()).unwrap();
    let b = twice.decision_function(probe.view()).unwrap();
    for (u, v) in a.iter().zip(&b) {
        assert!((u - v).abs() < 1e-6, "{u} vs {v}");
    }
}

#[test]
fn class_weights_raise_minority_recall() {
    let recall = |dec: &[f64], y: &[bool]| {
        let hits = dec.iter().zip(y).filter(|(&d, &l)| l && d > 0.0).count();
        hits as f64 / y.iter().filter(|&&l| l).count() as f64
    };
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let (x, y) = blobs(&mut rng, 15, 135, 1.5, 1.0);
        let (xt, yt) = blobs(&mut rng, 50, 450, 1.5, 1.0);
        let fit = |w: ClassWeights| {
            let m = train_svm(
                x.view(),
                &y,
                &SvmParams {
                    class_weights: w,
                    ..SvmParams::new(1.0, 0.5)
                },
            )
            .unwrap();
            recall(&m.decision_function(xt.view()).unwrap(), &yt)
        };
        let weighted = fit(ClassWeights::Custom(1.0, 10.0));
        let plain = fit(ClassWeights::Uniform);
        assert!(weighted >= plain, "seed {seed}: {weighted} < {plain}");
    }
}

#[test]
fn one_point_grid_is_selected() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (x, y) = blobs(&mut rng, 20, 30, 2.0, 1.0);
    let cfg = CvConfig {
        c_grid: vec![3.0],
        gamma_scales: vec![0.7],
        ..CvConfig::default()
    };
    let r = cross_validate(x.view(), &y, &cfg, 9).unwrap();
    assert_eq!((r.best_c, r.best_gamma), (3.0, 0.35));
    assert_eq!(r.table.len(), 1);
    let again = cross_validate(x.view(), &y, &cfg, 9).unwrap();
    assert_eq!(r, again);
}

#[test]
fn folds_are_stratified() {
    let labels: Vec<bool> = (0..103).map(|i| i % 8 == 0).collect();
    let folds = stratified_folds(&labels, 5, 17).unwrap();
    assert_eq!(folds, stratified_folds(&labels, 5, 17).unwrap());
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    for f in 0..5 {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| folds[i] == f).collect();
        let cases = members.iter().filter(|&&i| labels[i]).count() as f64;
        let expected = pos * members.len() as f64 / labels.len() as f64;
        assert!((cases - expected).abs() <= 1.0 + 1e-9);
    }
}

fn draws() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<bool>)> {
    (2usize..60).prop_flat_map(|n| {
        (
            prop::collection::vec(-3.0f64..3.0, n),
            prop::collection::vec(0.0f64..=1.0, n),
            prop::collection::vec(any::<bool>(), n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn metrics_stay_in_range((scores, probs, mut labels) in draws()) {
        labels[0] = true;
        labels[1] = false;
        let m = metrics(&scores, &probs, &labels, 0.5).unwrap();
        prop_assert!((0.0..=1.0).contains(&m.auroc));
        prop_assert!((0.0..=1.0).contains(&m.balanced_accuracy));
        prop_assert!((0.0..=1.0).contains(&m.f1));
        prop_assert!((-1.0..=1.0).contains(&m.mcc));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn mcc_survives_a_joint_flip(
        predicted in prop::collection::vec(any::<bool>(), 1..40),
        labels in prop::collection::vec(any::<bool>(), 1..40),
    ) {
        let n = predicted.len().min(labels.len());
        let (p, l) = (&predicted[..n], &labels[..n]);
        let flip = |v: &[bool]| v.iter().map(|b| !b).collect::<Vec<_>>();
        let a = Confusion::from_predictions(p, l);
        let b = Confusion::from_predictions(&flip(p), &flip(l));
        prop_assert!((a.mcc() - b.mcc()).abs() < 1e-12);
    }

    #[test]
    fn platt_is_strictly_monotone(
        decisions in prop::collection::vec(-4.0f64..4.0, 6..60),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut labels: Vec<bool> = decisions.iter().map(|&d| rng.random_bool(1.0 / (1.0 + (-d).exp()))).collect();
        labels[0] = true;
        labels[1] = false;
        let p = Platt::fit(&decisions, &labels).unwrap();
        prop_assume!(p.a != 0.0);
        let grid: Vec<f64> = (0..41).map(|i| -4.0 + 0.2 * i as f64).collect();
        let probs: Vec<f64> = grid.iter().map(|&f| p.probability(f)).collect();
        let increasing = probs.windows(2).all(|w| w[1] > w[0]);
        let decreasing = probs.windows(2).all(|w| w[1] < w[0]);
        prop_assert!(increasing || decreasing);
    }
}

#[test]
fn f1_is_not_flip_invariant() {
    let p = [true, true, false, false, false];
    let l = [true, false, false, false, false];
    let flip = |v: &[bool]| v.iter().map(|b| !b).collect::<Vec<_>>();
    let a = Confusion::from_predictions(&p, &l);
    let b = Confusion::from_predictions(&flip(&p), &flip(&l));
    assert_eq!(a.mcc(), b.mcc());
    assert_ne!(a.f1(), b.f1());
}
