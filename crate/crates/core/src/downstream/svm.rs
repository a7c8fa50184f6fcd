//! Class-weighted soft-margin RBF SVM solved by sequential minimal
//! optimization with second-order working-set selection, plus Platt scaling.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn rbf_kernel(x: ArrayView1<f64>, y: ArrayView1<f64>, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::Config(format!("gamma must be positive, got {gamma}")));
    }
    if x.len() != y.len() {
        return Err(Error::shape(format!("{} features", x.len()), format!("{}", y.len())));
    }
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((-gamma * d2).exp())
}

/// `K[i][j] = exp(−γ‖aᵢ − bⱼ‖²)`.
pub fn kernel_matrix(a: ArrayView2<f64>, b: ArrayView2<f64>, gamma: f64) -> Result<Array2<f64>> {
    if !(gamma > 0.0) {
        return Err(Error::Config(format!("gamma must be positive, got {gamma}")));
    }
    if a.ncols() != b.ncols() {
        return Err(Error::shape(
            format!("{} features", a.ncols()),
            format!("{}", b.ncols()),
        ));
    }
    let na = a.map_axis(Axis(1), |r| r.dot(&r));
    let nb = b.map_axis(Axis(1), |r| r.dot(&r));
    let mut k = a.dot(&b.t());
    for ((i, j), v) in k.indexed_iter_mut() {
        let d2 = (na[i] + nb[j] - 2.0 * *v).max(0.0);
        *v = (-gamma * d2).exp();
    }
    Ok(k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeights {
    /// `n_total / (2 · n_class)`.
    Balanced,
    Uniform,
    /// Weights for (control, case).
    Custom(f64, f64),
}

impl ClassWeights {
    /// Resolved (control, case) weights for a label vector.
    pub fn resolve(&self, labels: &[bool]) -> Result<(f64, f64)> {
        let n_pos = labels.iter().filter(|&&l| l).count();
        let n_neg = labels.len() - n_pos;
        if n_pos == 0 || n_neg == 0 {
            return Err(Error::SingleClass);
        }
        Ok(match *self {
            ClassWeights::Balanced => {
                let n = labels.len() as f64;
                (n / (2.0 * n_neg as f64), n / (2.0 * n_pos as f64))
            }
            ClassWeights::Uniform => (1.0, 1.0),
            ClassWeights::Custom(neg, pos) => (neg, pos),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    pub gamma: f64,
    pub class_weights: ClassWeights,
    /// Stopping tolerance on the maximal KKT violation.
    pub tol: f64,
    pub max_iter: usize,
}

impl SvmParams {
    pub fn new(c: f64, gamma: f64) -> Self {
        SvmParams {
            c,
            gamma,
            class_weights: ClassWeights::Balanced,
            tol: 1e-4,
            max_iter: 1_000_000,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!("C must be positive, got {}", self.c)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

/// Dual solution over a precomputed kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
}

const TAU: f64 = 1e-12;

/// Solves `min ½αᵀQα − eᵀα` s.t. `yᵀα = 0`, `0 ≤ αᵢ ≤ bounds[i]` with
/// `Q = yyᵀ ∘ K`. `y` holds ±1.
pub fn smo(kernel: ArrayView2<f64>, y: &[f64], bounds: &[f64], tol: f64, max_iter: usize) -> Result<DualSolution> {
    let n = y.len();
    if kernel.dim() != (n, n) || bounds.len() != n {
        return Err(Error::shape(format!("{n}x{n} kernel"), format!("{:?}", kernel.dim())));
    }
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let upper = |a: f64, t: usize| a >= bounds[t];
    let lower = |a: f64| a <= 0.0;
    let mut iterations = 0;
    let residual = loop {
        // i: maximal violator in I_up; j: second-order choice in I_low
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        let mut gmin = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            let in_up = if y[t] > 0.0 {
                !upper(alpha[t], t)
            } else {
                !lower(alpha[t])
            };
            let in_low = if y[t] > 0.0 {
                !lower(alpha[t])
            } else {
                !upper(alpha[t], t)
            };
            if in_up && v > gmax {
                gmax = v;
                i = t;
            }
            if in_low && v < gmin {
                gmin = v;
            }
        }
        let gap = gmax - gmin;
        if i == usize::MAX || gap < tol {
            break gap.max(0.0);
        }
        if iterations >= max_iter {
            return Err(Error::NotConverged {
                iterations,
                residual: gap,
            });
        }
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            let in_low = if y[t] > 0.0 {
                !lower(alpha[t])
            } else {
                !upper(alpha[t], t)
            };
            if !in_low {
                continue;
            }
            let b = gmax + y[t] * grad[t];
            if b > 0.0 {
                let a = kernel[[i, i]] + kernel[[t, t]] - 2.0 * kernel[[i, t]];
                let a = if a > 0.0 { a } else { TAU };
                let obj = -(b * b) / a;
                if obj < best {
                    best = obj;
                    j = t;
                }
            }
        }
        if j == usize::MAX {
            break gap;
        }
        iterations += 1;

        let (ci, cj) = (bounds[i], bounds[j]);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let quad = (kernel[[i, i]] + kernel[[j, j]] - 2.0 * kernel[[i, j]]).max(TAU);
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > ci - cj {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = ci - diff;
                }
            } else if alpha[j] > cj {
                alpha[j] = cj;
                alpha[i] = cj + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > ci {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = sum - ci;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > cj {
                if alpha[j] > cj {
                    alpha[j] = cj;
                    alpha[i] = sum - cj;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * kernel[[t, i]] * di + y[j] * kernel[[t, j]] * dj);
        }
    };

    // ρ from free variables, or the midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if upper(alpha[t], t) {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if lower(alpha[t]) {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (ub + lb) / 2.0
    };
    Ok(DualSolution {
        alpha,
        rho,
        iterations,
        kkt_residual: residual,
    })
}

/// Logistic map `P(case | f) = 1 / (1 + exp(A f + B))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Platt {
    pub a: f64,
    pub b: f64,
}

impl Platt {
    pub fn probability(&self, decision: f64) -> f64 {
        let z = self.a * decision + self.b;
        if z >= 0.0 {
            let e = (-z).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + z.exp())
        }
    }

    /// Newton's method with backtracking on the regularized targets
    /// `(N₊+1)/(N₊+2)` and `1/(N₋+2)`.
    pub fn fit(decisions: &[f64], labels: &[bool]) -> Result<Platt> {
        let n_pos = labels.iter().filter(|&&l| l).count() as f64;
        let n_neg = labels.len() as f64 - n_pos;
        if n_pos == 0.0 || n_neg == 0.0 {
            return Err(Error::SingleClass);
        }
        let hi = (n_pos + 1.0) / (n_pos + 2.0);
        let lo = 1.0 / (n_neg + 2.0);
        let targets: Vec<f64> = labels.iter().map(|&l| if l { hi } else { lo }).collect();
        let objective = |a: f64, b: f64| -> f64 {
            decisions
                .iter()
                .zip(&targets)
                .map(|(&f, &t)| {
                    let z = f * a + b;
                    if z >= 0.0 {
                        t * z + (-z).exp().ln_1p()
                    } else {
                        (t - 1.0) * z + z.exp().ln_1p()
                    }
                })
                .sum()
        };
        let (mut a, mut b) = (0.0, ((n_neg + 1.0) / (n_pos + 1.0)).ln());
        let mut fval = objective(a, b);
        for _ in 0..100 {
            let (mut h11, mut h22, mut h21, mut g1, mut g2) = (1e-12, 1e-12, 0.0, 0.0, 0.0);
            for (&f, &t) in decisions.iter().zip(&targets) {
                let z = f * a + b;
                let (p, q) = if z >= 0.0 {
                    let e = (-z).exp();
                    (e / (1.0 + e), 1.0 / (1.0 + e))
                } else {
                    let e = z.exp();
                    (1.0 / (1.0 + e), e / (1.0 + e))
                };
                let d2 = p * q;
                h11 += f * f * d2;
                h22 += d2;
                h21 += f * d2;
                let d1 = t - p;
                g1 += f * d1;
                g2 += d1;
            }
            if g1.abs() < 1e-5 && g2.abs() < 1e-5 {
                break;
            }
            let det = h11 * h22 - h21 * h21;
            let da = -(h22 * g1 - h21 * g2) / det;
            let db = -(-h21 * g1 + h11 * g2) / det;
            let gd = g1 * da + g2 * db;
            let mut step = 1.0;
            while step >= 1e-10 {
                let (na, nb) = (a + step * da, b + step * db);
                let nf = objective(na, nb);
                if nf < fval + 1e-4 * step * gd {
                    a = na;
                    b = nb;
                    fval = nf;
                    break;
                }
                step /= 2.0;
            }
            if step < 1e-10 {
                break;
            }
        }
        Ok(Platt { a, b })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub support_vectors: Vec<Vec<f64>>,
    /// `αᵢ yᵢ` for each support vector.
    pub dual_coef: Vec<f64>,
    /// Decision function is `Σ αᵢ yᵢ K(xᵢ, x) − rho`.
    pub rho: f64,
    pub gamma: f64,
    pub c: f64,
    /// (control, case)
    pub class_weights: (f64, f64),
    pub platt: Option<Platt>,
    pub iterations: usize,
    pub kkt_residual: f64,
}

impl SvmModel {
    pub fn decision_function(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        if self.support_vectors.is_empty() {
            return Ok(vec![-self.rho; x.nrows()]);
        }
        let d = self.support_vectors[0].len();
        let flat: Vec<f64> = self.support_vectors.iter().flatten().copied().collect();
        let sv = Array2::from_shape_vec((self.support_vectors.len(), d), flat).expect("rectangular support vectors");
        let k = kernel_matrix(x, sv.view(), self.gamma)?;
        let coef = ndarray::ArrayView1::from(&self.dual_coef);
        Ok(k.dot(&coef).iter().map(|v| v - self.rho).collect())
    }

    /// Calibrated case probabilities; requires a Platt fit.
    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        let platt = self
            .platt
            .ok_or_else(|| Error::Config("model has no probability calibration".into()))?;
        Ok(self
            .decision_function(x)?
            .into_iter()
            .map(|f| platt.probability(f))
            .collect())
    }
}

fn bounds_for(labels: &[bool], c: f64, weights: (f64, f64)) -> Vec<f64> {
    labels
        .iter()
        .map(|&l| c * if l { weights.1 } else { weights.0 })
        .collect()
}

/// Fits on rows `idx` of a precomputed kernel. Used by cross-validation.
pub fn fit_on_kernel(
    kernel: ArrayView2<f64>,
    labels: &[bool],
    idx: &[usize],
    params: &SvmParams,
) -> Result<(DualSolution, (f64, f64))> {
    params.validate()?;
    let sub_labels: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
    let weights = params.class_weights.resolve(&sub_labels)?;
    let k = kernel.select(Axis(0), idx).select(Axis(1), idx);
    let y: Vec<f64> = sub_labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
    let sol = smo(
        k.view(),
        &y,
        &bounds_for(&sub_labels, params.c, weights),
        params.tol,
        params.max_iter,
    )?;
    Ok((sol, weights))
}

/// Decision values on rows `test` for a solution fitted on rows `train`.
pub fn decision_on_kernel(
    kernel: ArrayView2<f64>,
    labels: &[bool],
    train: &[usize],
    test: &[usize],
    sol: &DualSolution,
) -> Vec<f64> {
    test.iter()
        .map(|&t| {
            train
                .iter()
                .zip(&sol.alpha)
                .filter(|(_, &a)| a > 0.0)
                .map(|(&s, &a)| a * if labels[s] { 1.0 } else { -1.0 } * kernel[[t, s]])
                .sum::<f64>()
                - sol.rho
        })
        .collect()
}

/// Trains on all rows. Platt parameters are left unset; see
/// [`super::cv::fit_calibrated`].
pub fn train_svm(x: ArrayView2<f64>, labels: &[bool], params: &SvmParams) -> Result<SvmModel> {
    if x.nrows() != labels.len() {
        return Err(Error::shape(
            format!("{} labels", x.nrows()),
            format!("{}", labels.len()),
        ));
    }
    params.validate()?;
    let kernel = kernel_matrix(x, x, params.gamma)?;
    let idx: Vec<usize> = (0..labels.len()).collect();
    let (sol, weights) = fit_on_kernel(kernel.view(), labels, &idx, params)?;
    let mut support_vectors = Vec::new();
    let mut dual_coef = Vec::new();
    for (t, &a) in sol.alpha.iter().enumerate() {
        if a > 0.0 {
            support_vectors.push(x.row(t).to_vec());
            dual_coef.push(a * if labels[t] { 1.0 } else { -1.0 });
        }
    }
    Ok(SvmModel {
        support_vectors,
        dual_coef,
        rho: sol.rho,
        gamma: params.gamma,
        c: params.c,
        class_weights: weights,
        platt: None,
        iterations: sol.iterations,
        kkt_residual: sol.kkt_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn kernel_values() {
        let (x, y) = (array![0.0, 0.0], array![1.0, 1.0]);
        assert!((rbf_kernel(x.view(), y.view(), 0.5).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(rbf_kernel(x.view(), x.view(), 3.0).unwrap(), 1.0);
        assert!((rbf_kernel(x.view(), y.view(), 1e-12).unwrap() - 1.0).abs() < 1e-11);
        assert!(rbf_kernel(x.view(), y.view(), 0.0).is_err());
        let a = array![[0.0, 0.0], [1.0, 2.0]];
        let k = kernel_matrix(a.view(), a.view(), 0.7).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let v = rbf_kernel(a.row(i), a.row(j), 0.7).unwrap();
                assert!((k[[i, j]] - v).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn balanced_weights() {
        let labels = [true, false, false, false];
        assert_eq!(ClassWeights::Balanced.resolve(&labels).unwrap(), (4.0 / 6.0, 2.0));
        assert!(matches!(
            ClassWeights::Balanced.resolve(&[true, true]),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn two_point_problem_has_closed_form() {
        // two points at distance² 2, γ = 0.5: K12 = e^-1, α = 2/(2 − 2e^-1)
        let x = array![[0.0, 0.0], [1.0, 1.0]];
        let params = SvmParams {
            c: 1000.0,
            class_weights: ClassWeights::Uniform,
            tol: 1e-12,
            ..SvmParams::new(1000.0, 0.5)
        };
        let m = train_svm(x.view(), &[false, true], &params).unwrap();
        let alpha = 2.0 / (2.0 - 2.0 * (-1.0f64).exp());
        assert!((m.dual_coef[1] - alpha).abs() < 1e-9);
        let f = m.decision_function(x.view()).unwrap();
        assert!((f[0] + 1.0).abs() < 1e-9 && (f[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn platt_is_monotone_and_sensible() {
        let d = [-2.0, -1.5, -1.0, -0.2, 0.1, 0.5, 1.2, 2.0];
        let l = [false, false, false, true, false, true, true, true];
        let p = Platt::fit(&d, &l).unwrap();
        assert!(p.a < 0.0);
        let probs: Vec<f64> = d.iter().map(|&f| p.probability(f)).collect();
        assert!(probs.windows(2).all(|w| w[0] < w[1]));
        assert!(probs[0] < 0.5 && probs[7] > 0.5);
        assert!(Platt::fit(&d, &[true; 8]).is_err());
    }

    #[test]
    fn iteration_cap_reports_residual() {
        let x = array![[0.0], [0.1], [0.2], [0.3]];
        let params = SvmParams {
            max_iter: 0,
            ..SvmParams::new(1.0, 1.0)
        };
        match train_svm(x.view(), &[false, true, false, true], &params) {
            Err(Error::NotConverged { residual, .. }) => assert!(residual > 0.0),
            other => panic!("{other:?}"),
        }
    }
}
