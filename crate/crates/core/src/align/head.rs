use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Affine projection `x ↦ W x + b` into the shared space.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    /// P × d_in
    pub weight: Array2<f64>,
    /// P
    pub bias: Array1<f64>,
}

impl ProjectionHead {
    /// Gaussian init with variance 1/d_in, zero bias.
    pub fn random<R: Rng>(d_in: usize, p: usize, rng: &mut R) -> Self {
        let scale = 1.0 / (d_in as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((p, d_in), || {
            let z: f64 = StandardNormal.sample(rng);
            z * scale
        });
        ProjectionHead {
            weight,
            bias: Array1::zeros(p),
        }
    }

    /// Sets the bias so that the mean of `x` projects to the origin.
    pub fn center_on(&mut self, x: ArrayView2<f64>) {
        if let Some(mean) = x.mean_axis(Axis(0)) {
            self.bias = -self.weight.dot(&mean);
        }
    }

    /// `W = [I; 0]` truncated or zero-padded to P × d_in.
    pub fn identity(d_in: usize, p: usize) -> Self {
        ProjectionHead {
            weight: Array2::eye(p.max(d_in)).slice_move(ndarray::s![..p, ..d_in]),
            bias: Array1::zeros(p),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// Pre-normalization outputs, one row per input row.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::shape(
                format!("{} input columns", self.input_dim()),
                format!("{}", x.ncols()),
            ));
        }
        Ok(x.dot(&self.weight.t()) + &self.bias)
    }
}

/// Head outputs kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub unit: Array2<f64>,
    pub norms: Array1<f64>,
}

pub fn encode_with(head: &ProjectionHead, x: ArrayView2<f64>) -> Result<Encoded> {
    let pre = head.forward(x)?;
    let norms: Array1<f64> = pre.map_axis(Axis(1), |r| r.dot(&r).sqrt());
    if let Some(i) = norms.iter().position(|&n| !(n > 0.0) || !n.is_finite()) {
        return Err(Error::ZeroNorm(i));
    }
    let unit = &pre / &norms.view().insert_axis(Axis(1));
    Ok(Encoded { unit, norms })
}

/// Two projection heads plus the loss temperature and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentModel {
    pub image_head: ProjectionHead,
    pub text_head: ProjectionHead,
    pub temperature: f64,
    pub beta: f64,
}

/// Row-unit-norm image and text embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingPair {
    pub image: Array2<f64>,
    pub text: Array2<f64>,
}

impl AlignmentModel {
    pub fn projection_dim(&self) -> usize {
        self.image_head.output_dim()
    }

    pub fn encode(&self, image_inputs: ArrayView2<f64>, text_features: ArrayView2<f64>) -> Result<EmbeddingPair> {
        Ok(EmbeddingPair {
            image: encode_with(&self.image_head, image_inputs)?.unit,
            text: encode_with(&self.text_head, text_features)?.unit,
        })
    }

    pub fn encode_image(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(encode_with(&self.image_head, x)?.unit)
    }

    pub fn encode_text(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(encode_with(&self.text_head, x)?.unit)
    }

    /// Parameters in a fixed order: image W, image b, text W, text b, β.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.image_head.n_params() + self.text_head.n_params() + 1);
        for head in [&self.image_head, &self.text_head] {
            v.extend(head.weight.iter());
            v.extend(head.bias.iter());
        }
        v.push(self.beta);
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut it = flat.iter().copied();
        for head in [&mut self.image_head, &mut self.text_head] {
            head.weight
                .iter_mut()
                .for_each(|w| *w = it.next().expect("flat parameters too short"));
            head.bias
                .iter_mut()
                .for_each(|b| *b = it.next().expect("flat parameters too short"));
        }
        self.beta = it.next().expect("flat parameters too short");
    }
}

/// Serialized form of an [`AlignmentModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadWeights {
    pub weight: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl From<&ProjectionHead> for HeadWeights {
    fn from(h: &ProjectionHead) -> Self {
        HeadWeights {
            weight: h.weight.rows().into_iter().map(|r| r.to_vec()).collect(),
            bias: h.bias.to_vec(),
        }
    }
}

impl TryFrom<&HeadWeights> for ProjectionHead {
    type Error = Error;

    fn try_from(h: &HeadWeights) -> Result<Self> {
        let p = h.weight.len();
        let d = h.weight.first().map_or(0, Vec::len);
        if h.bias.len() != p || h.weight.iter().any(|r| r.len() != d) {
            return Err(Error::shape(format!("{p} x {d} weight with {p} biases"), "ragged head"));
        }
        let flat: Vec<f64> = h.weight.iter().flatten().copied().collect();
        Ok(ProjectionHead {
            weight: Array2::from_shape_vec((p, d), flat).expect("shape checked"),
            bias: Array1::from(h.bias.clone()),
        })
    }
}
