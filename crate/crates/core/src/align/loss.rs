//! Contrastive objectives and their gradients with respect to the
//! similarity matrix and the model parameters.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use super::head::{encode_with, AlignmentModel, EmbeddingPair, Encoded};
use crate::error::{Error, Result};
use crate::gacl::LabelMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Gacl,
    Infonce,
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossKind::Gacl => "gacl",
            LossKind::Infonce => "infonce",
        })
    }
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `s = I · Tᵀ`.
pub fn cosine_matrix(pair: &EmbeddingPair) -> Array2<f64> {
    pair.image.dot(&pair.text.t())
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("temperature must be positive, got {tau}")))
    }
}

fn check_labels(s: ArrayView2<f64>, labels: &LabelMatrix) -> Result<()> {
    if s.dim() != labels.0.dim() {
        return Err(Error::shape(
            format!("labels {:?}", s.dim()),
            format!("{:?}", labels.0.dim()),
        ));
    }
    Ok(())
}

/// Single-pair term `log(1 + exp(l·(−s/τ + β)))`.
pub fn pair_term(s: f64, l: i8, tau: f64, beta: f64) -> f64 {
    softplus(f64::from(l) * (-s / tau + beta))
}

/// Mean sigmoid loss over all image/text pairs.
pub fn gacl_loss(s: ArrayView2<f64>, labels: &LabelMatrix, tau: f64, beta: f64) -> Result<f64> {
    check_tau(tau)?;
    check_labels(s, labels)?;
    if s.is_empty() {
        return Ok(0.0);
    }
    let total = Zip::from(&s)
        .and(&labels.0)
        .fold(0.0, |acc, &sij, &lij| acc + pair_term(sij, lij, tau, beta));
    Ok(total / s.len() as f64)
}

/// Loss, `∂ℒ/∂s` and `∂ℒ/∂β`.
pub fn gacl_loss_grad_s(
    s: ArrayView2<f64>,
    labels: &LabelMatrix,
    tau: f64,
    beta: f64,
) -> Result<(f64, Array2<f64>, f64)> {
    check_tau(tau)?;
    check_labels(s, labels)?;
    let m = s.len().max(1) as f64;
    let mut grad = Array2::zeros(s.dim());
    let mut loss = 0.0;
    let mut d_beta = 0.0;
    Zip::from(&mut grad).and(&s).and(&labels.0).for_each(|g, &sij, &lij| {
        let l = f64::from(lij);
        let arg = l * (-sij / tau + beta);
        loss += softplus(arg);
        let sg = sigmoid(arg);
        *g = -(l / tau) * sg / m;
        d_beta += l * sg;
    });
    Ok((loss / m, grad, d_beta / m))
}

/// Row-wise `logsumexp(x) − x[target]` for a logit matrix, summed.
fn cross_entropy_rows(logits: ArrayView2<f64>, probs: &mut Array2<f64>) -> f64 {
    let mut total = 0.0;
    for (i, (row, mut p)) in logits.rows().into_iter().zip(probs.rows_mut()).enumerate() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut z = 0.0;
        for (pj, &x) in p.iter_mut().zip(row) {
            *pj = (x - max).exp();
            z += *pj;
        }
        p.mapv_inplace(|v| v / z);
        total += max + z.ln() - row[i];
    }
    total
}

/// Symmetric InfoNCE: mean of the image→text and text→image cross-entropies
/// with the diagonal as target.
pub fn infonce_loss(s: ArrayView2<f64>, tau: f64) -> Result<f64> {
    Ok(infonce_loss_grad_s(s, tau)?.0)
}

pub fn infonce_loss_grad_s(s: ArrayView2<f64>, tau: f64) -> Result<(f64, Array2<f64>)> {
    check_tau(tau)?;
    let (n, m) = s.dim();
    if n != m {
        return Err(Error::shape("square similarity matrix", format!("{n}x{m}")));
    }
    if n == 0 {
        return Ok((0.0, Array2::zeros((0, 0))));
    }
    let logits = s.mapv(|v| v / tau);
    let mut p_row = Array2::zeros((n, n));
    let mut p_col = Array2::zeros((n, n));
    let l_row = cross_entropy_rows(logits.view(), &mut p_row);
    let l_col = cross_entropy_rows(logits.t(), &mut p_col);
    let loss = (l_row + l_col) / (2.0 * n as f64);
    // d/dlogits of each direction is (softmax − onehot)/n; the column
    // direction is transposed back.
    let mut grad = &p_row + &p_col.t();
    for i in 0..n {
        grad[[i, i]] -= 2.0;
    }
    grad.mapv_inplace(|g| g / (2.0 * n as f64 * tau));
    Ok((loss, grad))
}

/// Gradients in the order of [`AlignmentModel::to_flat`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub image_weight: Array2<f64>,
    pub image_bias: Array1<f64>,
    pub text_weight: Array2<f64>,
    pub text_bias: Array1<f64>,
    pub beta: f64,
}

impl Gradients {
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::new();
        v.extend(self.image_weight.iter());
        v.extend(self.image_bias.iter());
        v.extend(self.text_weight.iter());
        v.extend(self.text_bias.iter());
        v.push(self.beta);
        v
    }

    pub fn norm(&self) -> f64 {
        self.to_flat().iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Back-propagates `∂ℒ/∂u` (unit rows) through normalization and the affine map.
fn head_backward(x: ArrayView2<f64>, enc: &Encoded, d_unit: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
    // dv = (I − u uᵀ) g / ‖v‖
    let proj = (&enc.unit * d_unit).sum_axis(Axis(1));
    let d_pre = (d_unit - &enc.unit * &proj.insert_axis(Axis(1))) / enc.norms.view().insert_axis(Axis(1));
    let d_w = d_pre.t().dot(&x);
    let d_b = d_pre.sum_axis(Axis(0));
    (d_w, d_b)
}

/// Loss and full parameter gradient for one batch. `labels` is required for
/// the GACL loss and ignored by InfoNCE.
pub fn loss_and_grad(
    model: &AlignmentModel,
    image_inputs: ArrayView2<f64>,
    text_inputs: ArrayView2<f64>,
    kind: LossKind,
    labels: Option<&LabelMatrix>,
) -> Result<(f64, Gradients)> {
    let img = encode_with(&model.image_head, image_inputs)?;
    let txt = encode_with(&model.text_head, text_inputs)?;
    let s = img.unit.dot(&txt.unit.t());
    let (loss, d_s, d_beta) = match kind {
        LossKind::Gacl => {
            let labels = labels.ok_or_else(|| Error::Config("GACL loss needs a label matrix".into()))?;
            gacl_loss_grad_s(s.view(), labels, model.temperature, model.beta)?
        }
        LossKind::Infonce => {
            let (l, g) = infonce_loss_grad_s(s.view(), model.temperature)?;
            (l, g, 0.0)
        }
    };
    let d_img = d_s.dot(&txt.unit);
    let d_txt = d_s.t().dot(&img.unit);
    let (image_weight, image_bias) = head_backward(image_inputs, &img, &d_img);
    let (text_weight, text_bias) = head_backward(text_inputs, &txt, &d_txt);
    Ok((
        loss,
        Gradients {
            image_weight,
            image_bias,
            text_weight,
            text_bias,
            beta: d_beta,
        },
    ))
}

/// Loss only, for validation passes.
pub fn batch_loss(
    model: &AlignmentModel,
    image_inputs: ArrayView2<f64>,
    text_inputs: ArrayView2<f64>,
    kind: LossKind,
    labels: Option<&LabelMatrix>,
) -> Result<f64> {
    let pair = model.encode(image_inputs, text_inputs)?;
    let s = cosine_matrix(&pair);
    match kind {
        LossKind::Gacl => {
            let labels = labels.ok_or_else(|| Error::Config("GACL loss needs a label matrix".into()))?;
            gacl_loss(s.view(), labels, model.temperature, model.beta)
        }
        LossKind::Infonce => infonce_loss(s.view(), model.temperature),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn labels(v: Array2<i8>) -> LabelMatrix {
        LabelMatrix(v)
    }

    #[test]
    fn single_pair_fixtures() {
        let tau = 0.07;
        let beta = -0.6319;
        let s = array![[tau * beta]];
        let l2 = std::f64::consts::LN_2;
        assert!((gacl_loss(s.view(), &labels(array![[1]]), tau, beta).unwrap() - l2).abs() < 1e-9);
        assert!((gacl_loss(s.view(), &labels(array![[-1]]), tau, beta).unwrap() - l2).abs() < 1e-9);
        let v = gacl_loss(array![[1.0]].view(), &labels(array![[1]]), tau, 0.0).unwrap();
        let expected = (1.0f64 + (-1.0f64 / 0.07).exp()).ln();
        assert!((v - expected).abs() < 1e-15);
        assert!((v - 6.2487e-7).abs() < 1e-10);
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert_eq!(softplus(-1000.0), 0.0);
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((sigmoid(-800.0)).abs() < 1e-300);
        assert_eq!(sigmoid(800.0), 1.0);
    }

    #[test]
    fn gacl_errors() {
        let s = array![[0.1, 0.2]];
        assert!(gacl_loss(s.view(), &labels(array![[1]]), 0.07, 0.0).is_err());
        assert!(gacl_loss(s.view(), &labels(array![[1, 1]]), 0.0, 0.0).is_err());
        assert!(infonce_loss(s.view(), 0.07).is_err());
        assert!(infonce_loss(array![[1.0]].view(), -1.0).is_err());
    }

    #[test]
    fn infonce_fixtures() {
        let v = infonce_loss(array![[1.0, 0.0], [0.0, 1.0]].view(), 1.0).unwrap();
        assert!((v - (1.0 + (-1.0f64).exp()).ln()).abs() < 1e-12);
        assert!((v - 0.3133).abs() < 1e-4);
        assert_eq!(infonce_loss(array![[0.3]].view(), 0.07).unwrap(), 0.0);
        for n in [2usize, 8, 128] {
            let s = Array2::from_elem((n, n), 0.4);
            let v = infonce_loss(s.view(), 0.07).unwrap();
            assert!((v - (n as f64).ln()).abs() < 1e-12, "{n}: {v}");
        }
    }

    #[test]
    fn grad_s_matches_closed_form() {
        let s = array![[0.3, -0.2], [0.1, 0.9]];
        let l = labels(array![[1, -1], [-1, 1]]);
        let (loss, g, db) = gacl_loss_grad_s(s.view(), &l, 0.07, -0.5).unwrap();
        assert_eq!(loss, gacl_loss(s.view(), &l, 0.07, -0.5).unwrap());
        for ((i, j), &gij) in g.indexed_iter() {
            let li = f64::from(l.0[[i, j]]);
            let want = -(li / 0.07) * sigmoid(li * (-s[[i, j]] / 0.07 - 0.5)) / 4.0;
            assert!((gij - want).abs() < 1e-15);
        }
        let want_db: f64 =
            l.0.indexed_iter()
                .map(|((i, j), &li)| f64::from(li) * sigmoid(f64::from(li) * (-s[[i, j]] / 0.07 - 0.5)))
                .sum::<f64>()
                / 4.0;
        assert!((db - want_db).abs() < 1e-15);
    }
}
