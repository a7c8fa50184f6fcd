//! Group-aware contrastive labels.
//!
//! Intra-modality similarity matrices are thresholded into boolean masks
//! (strict `>`), combined with OR (default) or AND, and mapped to a ±1 label
//! matrix whose diagonal is always +1.

use std::io::Write;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilaritySource {
    Morphometry,
    Text,
    ImageLatent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub values: Array2<f64>,
    pub source: SimilaritySource,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupMask(pub Array2<bool>);

/// Entries in {+1, −1}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMatrix(pub Array2<i8>);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combiner {
    Or,
    And,
}

impl std::fmt::Display for Combiner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Combiner::Or => "OR",
            Combiner::And => "AND",
        })
    }
}

/// Column-wise standardization with the sample (n − 1) standard deviation.
pub fn z_normalize(raw: ArrayView2<f64>, names: &[&str]) -> Result<Array2<f64>> {
    let (n, k) = raw.dim();
    if n < 2 {
        return Err(Error::shape("at least 2 rows", format!("{n} rows")));
    }
    let mut out = raw.to_owned();
    for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        if !(sd > 0.0) || !sd.is_finite() {
            let name = names
                .get(j)
                .map(|s| s.to_string())
                .unwrap_or_else(|| format!("feature {j}"));
            return Err(Error::ZeroVariance(name));
        }
        col.mapv_inplace(|x| (x - mean) / sd);
    }
    debug_assert_eq!(out.ncols(), k);
    Ok(out)
}

/// Divides every row by its Euclidean norm.
pub fn normalize_rows(x: ArrayView2<f64>) -> Result<Array2<f64>> {
    let mut out = x.to_owned();
    for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let norm = row.dot(&row).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::ZeroNorm(i));
        }
        row.mapv_inplace(|v| v / norm);
    }
    Ok(out)
}

/// `X̂ X̂ᵀ`, with rows unit-normalized first when `row_normalize` is set.
pub fn similarity(x: ArrayView2<f64>, source: SimilaritySource, row_normalize: bool) -> Result<SimilarityMatrix> {
    let xn = if row_normalize {
        normalize_rows(x)?
    } else {
        x.to_owned()
    };
    let n = xn.nrows();
    let mut s = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let v = xn.row(i).dot(&xn.row(j));
            s[[i, j]] = v;
            s[[j, i]] = v;
        }
    }
    if row_normalize {
        for i in 0..n {
            s[[i, i]] = 1.0;
        }
    }
    Ok(SimilarityMatrix { values: s, source })
}

/// `mask[i][j] = S[i][j] > tau`, diagonal forced true.
pub fn threshold_mask(s: &SimilarityMatrix, tau: f64) -> GroupMask {
    let mut m = s.values.mapv(|v| v > tau);
    for i in 0..m.nrows() {
        m[[i, i]] = true;
    }
    GroupMask(m)
}

pub fn group_labels(mask_f: &GroupMask, mask_t: &GroupMask, combiner: Combiner) -> Result<LabelMatrix> {
    if mask_f.0.dim() != mask_t.0.dim() {
        return Err(Error::shape(
            format!("{:?}", mask_f.0.dim()),
            format!("{:?}", mask_t.0.dim()),
        ));
    }
    let mut l = Array2::from_shape_fn(mask_f.0.dim(), |(i, j)| {
        let (a, b) = (mask_f.0[[i, j]], mask_t.0[[i, j]]);
        let group = match combiner {
            Combiner::Or => a || b,
            Combiner::And => a && b,
        };
        if group {
            1i8
        } else {
            -1
        }
    });
    for i in 0..l.nrows().min(l.ncols()) {
        l[[i, i]] = 1;
    }
    Ok(LabelMatrix(l))
}

impl LabelMatrix {
    pub fn positive_fraction(&self) -> f64 {
        let n = self.0.len();
        if n == 0 {
            return 0.0;
        }
        self.0.iter().filter(|&&v| v > 0).count() as f64 / n as f64
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        for row in self.0.rows() {
            wr.write_record(row.iter().map(|v| v.to_string()))?;
        }
        wr.flush().map_err(|e| Error::io("<label writer>", e))?;
        Ok(())
    }
}

/// Full label construction from raw morphometry (or any image-side
/// matrix) and text features.
#[allow(clippy::too_many_arguments)]
pub fn build_labels(
    image_side: ArrayView2<f64>,
    image_source: SimilaritySource,
    z_score_image: bool,
    text: ArrayView2<f64>,
    tau_f: f64,
    tau_t: f64,
    combiner: Combiner,
    row_normalize: bool,
) -> Result<LabelMatrix> {
    let f = if z_score_image {
        z_normalize(image_side, &crate::cohort::MORPHOMETRY_COLUMNS)?
    } else {
        image_side.to_owned()
    };
    let s_f = similarity(f.view(), image_source, row_normalize)?;
    let s_t = similarity(text, SimilaritySource::Text, row_normalize)?;
    group_labels(&threshold_mask(&s_f, tau_f), &threshold_mask(&s_t, tau_t), combiner)
}

/// Strict upper-triangle entries, row by row.
pub fn off_diagonal(s: &SimilarityMatrix) -> Vec<f64> {
    let n = s.values.nrows();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            out.push(s.values[[i, j]]);
        }
    }
    out
}

/// Linear-interpolation quantile (Hyndman–Fan type 7) of unsorted data.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of empty data");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// `(Q3, max)` of a similarity sample.
pub fn quantile_range(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::Degenerate("no similarity values".into()));
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((quantile(values, 0.75), max))
}

/// Search range for a threshold: `(Q3, max)` of the off-diagonal entries.
pub fn quantile_thresholds(s: &SimilarityMatrix) -> Result<(f64, f64)> {
    let n = s.values.nrows();
    if n < 3 {
        return Err(Error::shape("at least 3 rows", format!("{n} rows")));
    }
    quantile_range(&off_diagonal(s))
}

/// `[Q1, Q2, Q3, max]` of the off-diagonal entries.
pub fn quartiles(s: &SimilarityMatrix) -> Result<[f64; 4]> {
    let v = off_diagonal(s);
    if v.len() < 3 {
        return Err(Error::shape("at least 3 rows", format!("{} rows", s.values.nrows())));
    }
    let (_, max) = quantile_range(&v)?;
    Ok([quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75), max])
}
