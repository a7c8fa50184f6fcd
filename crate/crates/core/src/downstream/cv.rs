use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::Standardizer;
use super::metrics::{auroc, metrics, Metrics};
use super::stats::mean_std;
use super::svm::{
    decision_on_kernel, fit_on_kernel, kernel_matrix, train_svm, ClassWeights, Platt, SvmModel, SvmParams,
};
use crate::error::{Error, Result};

/// Fold index for every sample. Each class is shuffled and dealt round-robin,
/// so per-fold class counts differ by at most one.
pub fn stratified_folds(labels: &[bool], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    if pos.len() < k || neg.len() < k {
        return Err(Error::Degenerate(format!(
            "cannot stratify {} cases and {} controls into {k} folds",
            pos.len(),
            neg.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0; labels.len()];
    let mut offset = 0;
    for mut class in [pos, neg] {
        class.shuffle(&mut rng);
        for (r, &i) in class.iter().enumerate() {
            folds[i] = (offset + r) % k;
        }
        offset = (offset + class.len()) % k;
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub c_grid: Vec<f64>,
    /// Multipliers of `1/d`, where `d` is the feature width.
    pub gamma_scales: Vec<f64>,
    pub folds: usize,
    pub class_weights: ClassWeights,
    pub tol: f64,
    /// Z-score every feature column on the training rows before fitting.
    pub standardize: bool,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            c_grid: vec![0.1, 1.0, 10.0, 100.0],
            gamma_scales: vec![0.1, 1.0, 10.0],
            folds: 5,
            class_weights: ClassWeights::Balanced,
            tol: 1e-4,
            standardize: true,
        }
    }
}

impl CvConfig {
    pub fn gamma_grid(&self, dim: usize) -> Vec<f64> {
        self.gamma_scales.iter().map(|s| s / dim.max(1) as f64).collect()
    }

    fn params(&self, c: f64, gamma: f64) -> SvmParams {
        SvmParams {
            class_weights: self.class_weights,
            tol: self.tol,
            ..SvmParams::new(c, gamma)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub c: f64,
    pub gamma: f64,
    pub fold_auroc: Vec<f64>,
    pub mean_auroc: f64,
    pub std_auroc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub best_c: f64,
    pub best_gamma: f64,
    pub best_mean_auroc: f64,
    pub table: Vec<CvRow>,
}

fn fold_sets(folds: &[usize], k: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    (0..k)
        .map(|f| {
            let test = (0..folds.len()).filter(|&i| folds[i] == f).collect();
            let train = (0..folds.len()).filter(|&i| folds[i] != f).collect();
            (train, test)
        })
        .collect()
}

/// Out-of-fold decision values for every sample.
fn out_of_fold(
    kernel: ArrayView2<f64>,
    labels: &[bool],
    folds: &[usize],
    k: usize,
    params: &SvmParams,
) -> Result<Vec<f64>> {
    let sets = fold_sets(folds, k);
    let parts: Vec<Vec<f64>> = sets
        .par_iter()
        .map(|(train, test)| {
            let (sol, _) = fit_on_kernel(kernel, labels, train, params)?;
            Ok(decision_on_kernel(kernel, labels, train, test, &sol))
        })
        .collect::<Result<_>>()?;
    let mut out = vec![0.0; labels.len()];
    for ((_, test), values) in sets.iter().zip(parts) {
        for (&i, v) in test.iter().zip(values) {
            out[i] = v;
        }
    }
    Ok(out)
}

/// Grid search over (C, γ) by mean fold AUROC. Ties go to the smaller C,
/// then the smaller γ.
pub fn cross_validate(x: ArrayView2<f64>, labels: &[bool], config: &CvConfig, seed: u64) -> Result<CvResult> {
    if config.c_grid.is_empty() || config.gamma_scales.is_empty() {
        return Err(Error::Config("empty C or gamma grid".into()));
    }
    let folds = stratified_folds(labels, config.folds, seed)?;
    let sets = fold_sets(&folds, config.folds);
    let mut cs = config.c_grid.clone();
    cs.sort_by(f64::total_cmp);
    let mut gammas = config.gamma_grid(x.ncols());
    gammas.sort_by(f64::total_cmp);

    let kernels: Vec<Array2<f64>> = gammas
        .par_iter()
        .map(|&g| kernel_matrix(x, x, g))
        .collect::<Result<_>>()?;
    let cells: Vec<(usize, usize, usize)> = (0..cs.len())
        .flat_map(|ci| (0..gammas.len()).flat_map(move |gi| (0..config.folds).map(move |f| (ci, gi, f))))
        .collect();
    let scores: Vec<f64> = cells
        .par_iter()
        .map(|&(ci, gi, f)| {
            let (train, test) = &sets[f];
            let params = config.params(cs[ci], gammas[gi]);
            let (sol, _) = fit_on_kernel(kernels[gi].view(), labels, train, &params)?;
            let dec = decision_on_kernel(kernels[gi].view(), labels, train, test, &sol);
            let y: Vec<bool> = test.iter().map(|&i| labels[i]).collect();
            auroc(&dec, &y)
        })
        .collect::<Result<_>>()?;

    let mut table = Vec::new();
    let mut best: Option<(f64, f64, f64)> = None;
    for (ci, &c) in cs.iter().enumerate() {
        for (gi, &gamma) in gammas.iter().enumerate() {
            let start = (ci * gammas.len() + gi) * config.folds;
            let fold_auroc = scores[start..start + config.folds].to_vec();
            let (mean, std) = mean_std(&fold_auroc);
            if best.is_none_or(|(_, _, b)| mean > b) {
                best = Some((c, gamma, mean));
            }
            table.push(CvRow {
                c,
                gamma,
                fold_auroc,
                mean_auroc: mean,
                std_auroc: std.unwrap_or(0.0),
            });
        }
    }
    let (best_c, best_gamma, best_mean_auroc) = best.expect("non-empty grid");
    Ok(CvResult {
        best_c,
        best_gamma,
        best_mean_auroc,
        table,
    })
}

/// Trains on all rows and fits Platt scaling on out-of-fold decision values.
pub fn fit_calibrated(
    x: ArrayView2<f64>,
    labels: &[bool],
    params: &SvmParams,
    folds: usize,
    seed: u64,
) -> Result<SvmModel> {
    let mut model = train_svm(x, labels, params)?;
    let fold_of = stratified_folds(labels, folds, seed)?;
    let kernel = kernel_matrix(x, x, params.gamma)?;
    let oof = out_of_fold(kernel.view(), labels, &fold_of, folds, params)?;
    model.platt = Some(Platt::fit(&oof, labels)?);
    Ok(model)
}

/// Result of model selection on one train/test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitEvaluation {
    pub cv: CvResult,
    pub model: SvmModel,
    pub metrics: Metrics,
    pub decision: Vec<f64>,
    pub probability: Vec<f64>,
}

/// Cross-validated selection on the training rows, calibrated refit, and a
/// single evaluation on the test rows.
pub fn evaluate_split(
    x_train: ArrayView2<f64>,
    y_train: &[bool],
    x_test: ArrayView2<f64>,
    y_test: &[bool],
    config: &CvConfig,
    seed: u64,
) -> Result<SplitEvaluation> {
    if x_train.ncols() != x_test.ncols() {
        return Err(Error::shape(
            format!("{} test features", x_train.ncols()),
            format!("{}", x_test.ncols()),
        ));
    }
    let scaled;
    let (x_train, x_test) = if config.standardize {
        let z = Standardizer::fit(x_train)?;
        scaled = (z.transform(x_train)?, z.transform(x_test)?);
        (scaled.0.view(), scaled.1.view())
    } else {
        (x_train, x_test)
    };
    let cv = cross_validate(x_train, y_train, config, seed)?;
    let params = config.params(cv.best_c, cv.best_gamma);
    let model = fit_calibrated(x_train, y_train, &params, config.folds, seed)?;
    let decision = model.decision_function(x_test)?;
    let probability = model.predict_proba(x_test)?;
    let metrics = metrics(&decision, &probability, y_test, 0.5)?;
    Ok(SplitEvaluation {
        cv,
        model,
        metrics,
        decision,
        probability,
    })
}

/// Rows of `x` for the given indices.
pub fn take_rows(x: ArrayView2<f64>, idx: &[usize]) -> Array2<f64> {
    x.select(Axis(0), idx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_are_stratified_and_seeded() {
        let labels: Vec<bool> = (0..103).map(|i| i % 9 == 0).collect();
        let folds = stratified_folds(&labels, 5, 4).unwrap();
        assert_eq!(folds, stratified_folds(&labels, 5, 4).unwrap());
        let n_pos = labels.iter().filter(|&&l| l).count() as f64;
        for f in 0..5 {
            let pos = (0..103).filter(|&i| folds[i] == f && labels[i]).count() as f64;
            assert!((pos - n_pos / 5.0).abs() <= 1.0);
            let size = folds.iter().filter(|&&g| g == f).count() as f64;
            assert!((size - 103.0 / 5.0).abs() <= 1.0);
        }
        assert!(stratified_folds(&[true, false, false], 2, 0).is_err());
        assert!(stratified_folds(&labels, 1, 0).is_err());
    }
}
