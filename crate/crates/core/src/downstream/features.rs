use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::align::{AlignmentData, AlignmentModel};
use crate::cohort::{FieldKind, RiskFactor, Subject, Value, MORPHOMETRY_COLUMNS};
use crate::error::{Error, Result};

/// Feature set handed to the downstream classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Image and text embeddings concatenated.
    Joint,
    ImageOnly,
    TextOnly,
    /// Image embedding plus the z-scored tabular risk factors.
    ImagePlusTable,
    /// Tabular risk factors and raw morphometry, no learned embedding.
    Tabular,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Joint,
        Variant::ImageOnly,
        Variant::TextOnly,
        Variant::ImagePlusTable,
        Variant::Tabular,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Joint => "joint",
            Variant::ImageOnly => "image_only",
            Variant::TextOnly => "text_only",
            Variant::ImagePlusTable => "image_plus_table",
            Variant::Tabular => "tabular",
        }
    }

    pub fn needs_model(self) -> bool {
        self != Variant::Tabular
    }

    pub fn needs_table(self) -> bool {
        matches!(self, Variant::ImagePlusTable | Variant::Tabular)
    }

    /// Whether the tabular block also carries raw morphometry.
    pub fn table_includes_morphometry(self) -> bool {
        self == Variant::Tabular
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant '{s}'")))
    }
}

/// Column names of the expanded tabular block: numeric fields as-is,
/// categorical fields one-hot over their levels.
pub fn tabular_columns(include_morphometry: bool) -> Vec<String> {
    let mut cols = Vec::new();
    for f in RiskFactor::ALL {
        match f.kind() {
            FieldKind::Numeric { .. } => cols.push(f.column().to_string()),
            FieldKind::Categorical { levels } => {
                cols.extend((0..levels.len()).map(|k| format!("{}={k}", f.column())));
            }
        }
    }
    if include_morphometry {
        cols.extend(MORPHOMETRY_COLUMNS.iter().map(|c| c.to_string()));
    }
    cols
}

fn expand(subject: &Subject, include_morphometry: bool, out: &mut Vec<f64>) -> Result<()> {
    for f in RiskFactor::ALL {
        let value = subject.profile.get(f);
        match (f.kind(), value) {
            (_, Value::Missing) => {
                return Err(Error::Degenerate(format!(
                    "{} is missing {}; impute first",
                    subject.id,
                    f.column()
                )))
            }
            (FieldKind::Numeric { .. }, v) => out.push(v.as_f64().unwrap_or(f64::NAN)),
            (FieldKind::Categorical { levels }, v) => {
                let code = v.as_f64().unwrap_or(-1.0) as usize;
                out.extend((0..levels.len()).map(|k| if k == code { 1.0 } else { 0.0 }));
            }
        }
    }
    if include_morphometry {
        out.extend(subject.morphometry.0.iter());
    }
    Ok(())
}

/// Expanded, unscaled tabular rows.
pub fn tabular_matrix(subjects: &[&Subject], include_morphometry: bool) -> Result<Array2<f64>> {
    let width = tabular_columns(include_morphometry).len();
    let mut flat = Vec::with_capacity(subjects.len() * width);
    for s in subjects {
        expand(s, include_morphometry, &mut flat)?;
    }
    Ok(Array2::from_shape_vec((subjects.len(), width), flat).expect("fixed width"))
}

/// Column z-scoring fitted on one set of rows. Zero-variance columns map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    /// Mean and sample standard deviation per column.
    pub fn fit(x: ArrayView2<f64>) -> Result<Self> {
        if x.nrows() < 2 {
            return Err(Error::shape("at least 2 rows", format!("{}", x.nrows())));
        }
        let mean = x.mean_axis(Axis(0)).expect("non-empty");
        let sd = x.var_axis(Axis(0), 1.0).mapv(f64::sqrt);
        Ok(Standardizer {
            mean: mean.to_vec(),
            sd: sd.to_vec(),
        })
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(Error::shape(
                format!("{} columns", self.mean.len()),
                format!("{}", x.ncols()),
            ));
        }
        let mut out = x.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (m, s) = (self.mean[j], self.sd[j]);
            if s > 0.0 {
                col.mapv_inplace(|v| (v - m) / s);
            } else {
                col.fill(0.0);
            }
        }
        Ok(out)
    }
}

/// Feature matrix for `variant`. `table` holds already-standardized tabular
/// rows aligned with `data`.
pub fn build_features(
    model: Option<&AlignmentModel>,
    data: &AlignmentData,
    table: Option<ArrayView2<f64>>,
    variant: Variant,
) -> Result<Array2<f64>> {
    let need_model =
        || model.ok_or_else(|| Error::Config(format!("variant {variant} needs a trained alignment model")));
    let need_table = || {
        let t = table.ok_or_else(|| Error::Config(format!("variant {variant} needs tabular features")))?;
        if t.nrows() != data.len() {
            return Err(Error::shape(
                format!("{} tabular rows", data.len()),
                format!("{}", t.nrows()),
            ));
        }
        Ok(t)
    };
    Ok(match variant {
        Variant::Joint => {
            let pair = need_model()?.encode(data.image.view(), data.text.view())?;
            concatenate(Axis(1), &[pair.image.view(), pair.text.view()]).expect("same row count")
        }
        Variant::ImageOnly => need_model()?.encode_image(data.image.view())?,
        Variant::TextOnly => need_model()?.encode_text(data.text.view())?,
        Variant::ImagePlusTable => {
            let image = need_model()?.encode_image(data.image.view())?;
            let t = need_table()?;
            concatenate(Axis(1), &[image.view(), t]).expect("same row count")
        }
        Variant::Tabular => {
            if model.is_some() {
                return Err(Error::Config("tabular variant does not use an alignment model".into()));
            }
            need_table()?.to_owned()
        }
    })
}

/// Row norms, for checks.
pub fn row_norms(x: ArrayView2<f64>) -> Array1<f64> {
    x.map_axis(Axis(1), |r| r.dot(&r).sqrt())
}
