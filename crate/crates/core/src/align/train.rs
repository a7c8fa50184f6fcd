use std::io::Write;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::head::{AlignmentModel, ProjectionHead};
use super::loss::{batch_loss, loss_and_grad, LossKind};
use super::optim::AdamW;
use crate::cohort::{Subject, MORPHOMETRY_COLUMNS, MORPHOMETRY_DIM};
use crate::error::{Error, Result};
use crate::gacl::{group_labels, similarity, threshold_mask, z_normalize, Combiner, LabelMatrix, SimilaritySource};
use crate::narrative::{embed_batch, render_report, TextConfig};

/// Where the image-side similarity for the label matrix comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ImageSimilaritySource {
    #[default]
    Morphometry,
    Latent,
}

impl std::fmt::Display for ImageSimilaritySource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ImageSimilaritySource::Morphometry => "morphometry",
            ImageSimilaritySource::Latent => "latent",
        })
    }
}

/// Statistics used to z-score morphometry before computing similarities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MorphometryNormalization {
    /// Mean and standard deviation of the current batch.
    #[default]
    Batch,
    /// Mean and standard deviation of the whole training split.
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub loss: LossKind,
    pub combiner: Combiner,
    pub tau_f: f64,
    pub tau_t: f64,
    pub image_similarity_source: ImageSimilaritySource,
    pub morphometry_normalization: MorphometryNormalization,
    pub projection_dim: usize,
    pub temperature: f64,
    pub beta: f64,
    pub train_beta: bool,
    /// Start each head with its bias centring the training inputs.
    pub center_init: bool,
    pub text: TextConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 2.42e-4,
            eps: 8.61e-7,
            weight_decay: 0.0232,
            batch_size: 128,
            epochs: 150,
            seed: 0,
            loss: LossKind::Gacl,
            combiner: Combiner::Or,
            tau_f: 0.9480,
            tau_t: 0.9808,
            image_similarity_source: ImageSimilaritySource::Morphometry,
            morphometry_normalization: MorphometryNormalization::Batch,
            projection_dim: 64,
            temperature: 0.07,
            beta: -0.6319,
            train_beta: false,
            center_init: true,
            text: TextConfig::default(),
        }
    }
}

impl TrainConfig {
    /// The full-width projection preset.
    pub fn wide() -> Self {
        TrainConfig {
            projection_dim: 1024,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning_rate must be non-negative, got {}",
                self.learning_rate
            ));
        }
        if !(self.eps > 0.0) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        if !(self.weight_decay >= 0.0) {
            return bad(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        if self.batch_size < 2 {
            return bad(format!("batch_size must be at least 2, got {}", self.batch_size));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.projection_dim == 0 {
            return bad("projection_dim must be positive".into());
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad(format!("temperature must be positive, got {}", self.temperature));
        }
        if !self.beta.is_finite() || !self.tau_f.is_finite() || !self.tau_t.is_finite() {
            return bad("beta and thresholds must be finite".into());
        }
        if self.text.dim < 16 {
            return bad(format!("text dim must be at least 16, got {}", self.text.dim));
        }
        Ok(())
    }
}

/// Row-aligned model inputs for a set of subjects.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentData {
    pub ids: Vec<String>,
    pub morphometry: Array2<f64>,
    pub image: Array2<f64>,
    pub text: Array2<f64>,
}

impl AlignmentData {
    /// Text features come from reports rendered on the profiles as given.
    pub fn from_subjects(subjects: &[&Subject], text: &TextConfig) -> Result<Self> {
        let n = subjects.len();
        let width = subjects.first().map_or(0, |s| s.image_proxy.len());
        let mut morphometry = Array2::zeros((n, MORPHOMETRY_DIM));
        let mut image = Array2::zeros((n, width));
        for (i, s) in subjects.iter().enumerate() {
            if s.image_proxy.len() != width {
                return Err(Error::shape(
                    format!("image proxy width {width}"),
                    format!("{} for {}", s.image_proxy.len(), s.id),
                ));
            }
            morphometry
                .row_mut(i)
                .assign(&ndarray::ArrayView1::from(&s.morphometry.0));
            image.row_mut(i).assign(&ndarray::ArrayView1::from(&s.image_proxy));
        }
        let reports: Vec<_> = subjects.iter().map(|s| render_report(s)).collect();
        Ok(AlignmentData {
            ids: subjects.iter().map(|s| s.id.clone()).collect(),
            morphometry,
            image,
            text: embed_batch(&reports, text)?,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn rows(&self, idx: &[usize]) -> AlignmentData {
        AlignmentData {
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            morphometry: self.morphometry.select(Axis(0), idx),
            image: self.image.select(Axis(0), idx),
            text: self.text.select(Axis(0), idx),
        }
    }
}

/// One row per epoch. Epoch 0 is the untrained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Loss of the end-of-epoch model over the training split in fixed order.
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    /// Mean fraction of positive label entries over the epoch's batches.
    pub pos_fraction: f64,
    /// Mean gradient L2 norm over the epoch's batches.
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn initial_loss(&self) -> Option<f64> {
        self.records.first().map(|r| r.train_loss)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.train_loss)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["epoch", "train_loss", "val_loss", "pos_fraction", "grad_norm"])?;
        for r in &self.records {
            wr.write_record([
                r.epoch.to_string(),
                r.train_loss.to_string(),
                r.val_loss.map(|v| v.to_string()).unwrap_or_default(),
                r.pos_fraction.to_string(),
                r.grad_norm.to_string(),
            ])?;
        }
        wr.flush().map_err(|e| Error::io("<train log writer>", e))?;
        Ok(())
    }
}

pub fn init_model(config: &TrainConfig, image_dim: usize, text_dim: usize) -> AlignmentModel {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    AlignmentModel {
        image_head: ProjectionHead::random(image_dim, config.projection_dim, &mut rng),
        text_head: ProjectionHead::random(text_dim, config.projection_dim, &mut rng),
        temperature: config.temperature,
        beta: config.beta,
    }
}

/// The model `train` starts from: seeded weights, and with `center_init` the
/// biases centring `data`.
pub fn initial_model(config: &TrainConfig, data: &AlignmentData) -> AlignmentModel {
    let mut model = init_model(config, data.image.ncols(), data.text.ncols());
    if config.center_init && !data.is_empty() {
        model.image_head.center_on(data.image.view());
        model.text_head.center_on(data.text.view());
    }
    model
}

#[derive(Debug, Clone)]
struct ColumnStats {
    mean: Array1<f64>,
    sd: Array1<f64>,
}

fn column_stats(x: ArrayView2<f64>) -> Result<ColumnStats> {
    if x.nrows() < 2 {
        return Err(Error::shape("at least 2 rows", format!("{} rows", x.nrows())));
    }
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    let sd = x.var_axis(Axis(0), 1.0).mapv(f64::sqrt);
    if let Some(j) = sd.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::ZeroVariance(MORPHOMETRY_COLUMNS[j].to_string()));
    }
    Ok(ColumnStats { mean, sd })
}

/// Label matrix for one batch under the configured similarity source.
pub fn batch_labels(
    model: &AlignmentModel,
    batch: &AlignmentData,
    config: &TrainConfig,
    global: Option<(&Array1<f64>, &Array1<f64>)>,
) -> Result<LabelMatrix> {
    let s_f = match config.image_similarity_source {
        ImageSimilaritySource::Morphometry => {
            let z = match global {
                Some((mean, sd)) => (&batch.morphometry - mean) / sd,
                None => z_normalize(batch.morphometry.view(), &MORPHOMETRY_COLUMNS)?,
            };
            similarity(z.view(), SimilaritySource::Morphometry, true)?
        }
        ImageSimilaritySource::Latent => {
            let latents = model.encode_image(batch.image.view())?;
            similarity(latents.view(), SimilaritySource::ImageLatent, true)?
        }
    };
    let s_t = similarity(batch.text.view(), SimilaritySource::Text, true)?;
    group_labels(
        &threshold_mask(&s_f, config.tau_f),
        &threshold_mask(&s_t, config.tau_t),
        config.combiner,
    )
}

/// Consecutive batches of `order`. A trailing remainder shorter than half a
/// batch is folded into the previous batch.
fn chunks(order: &[usize], batch_size: usize) -> Vec<&[usize]> {
    let full = order.len() / batch_size;
    let rem = order.len() % batch_size;
    let mut out: Vec<&[usize]> = order.chunks(batch_size).collect();
    if full > 0 && rem > 0 && rem * 2 < batch_size {
        out.truncate(full - 1);
        out.push(&order[(full - 1) * batch_size..]);
    }
    out.retain(|c| c.len() >= 2);
    out
}

struct Trainer<'a> {
    config: &'a TrainConfig,
    global: Option<ColumnStats>,
}

impl Trainer<'_> {
    fn stats(&self) -> Option<(&Array1<f64>, &Array1<f64>)> {
        self.global.as_ref().map(|g| (&g.mean, &g.sd))
    }

    fn labels(&self, model: &AlignmentModel, batch: &AlignmentData) -> Result<Option<LabelMatrix>> {
        match self.config.loss {
            LossKind::Gacl => Ok(Some(batch_labels(model, batch, self.config, self.stats())?)),
            LossKind::Infonce => Ok(None),
        }
    }

    fn pos_fraction(labels: Option<&LabelMatrix>, n: usize) -> f64 {
        labels.map_or(1.0 / n as f64, LabelMatrix::positive_fraction)
    }

    /// Mean batch loss over `data` in its stored order.
    fn evaluate(&self, model: &AlignmentModel, data: &AlignmentData) -> Result<Option<f64>> {
        let order: Vec<usize> = (0..data.len()).collect();
        let mut total = 0.0;
        let mut count = 0usize;
        for idx in chunks(&order, self.config.batch_size) {
            let batch = data.rows(idx);
            let labels = self.labels(model, &batch)?;
            total += batch_loss(
                model,
                batch.image.view(),
                batch.text.view(),
                self.config.loss,
                labels.as_ref(),
            )?;
            count += 1;
        }
        Ok((count > 0).then(|| total / count as f64))
    }

    /// Mean positive fraction and gradient norm at fixed parameters.
    fn probe(&self, model: &AlignmentModel, data: &AlignmentData) -> Result<(f64, f64)> {
        let order: Vec<usize> = (0..data.len()).collect();
        let (mut pos, mut gn, mut count) = (0.0, 0.0, 0usize);
        for idx in chunks(&order, self.config.batch_size) {
            let batch = data.rows(idx);
            let labels = self.labels(model, &batch)?;
            let (_, mut g) = loss_and_grad(
                model,
                batch.image.view(),
                batch.text.view(),
                self.config.loss,
                labels.as_ref(),
            )?;
            if !self.config.train_beta {
                g.beta = 0.0;
            }
            pos += Self::pos_fraction(labels.as_ref(), idx.len());
            gn += g.norm();
            count += 1;
        }
        let c = count.max(1) as f64;
        Ok((pos / c, gn / c))
    }
}

/// Trains both projection heads on `train`, reporting validation loss on
/// `val` when it has at least two rows.
pub fn train(
    train: &AlignmentData,
    val: Option<&AlignmentData>,
    config: &TrainConfig,
) -> Result<(AlignmentModel, TrainLog)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Config("alignment training split is empty".into()));
    }
    if config.batch_size > train.len() {
        return Err(Error::Config(format!(
            "batch_size {} exceeds training split size {}",
            config.batch_size,
            train.len()
        )));
    }
    let global = match config.morphometry_normalization {
        MorphometryNormalization::Global => Some(column_stats(train.morphometry.view())?),
        MorphometryNormalization::Batch => None,
    };
    let trainer = Trainer { config, global };
    let mut model = initial_model(config, train);
    let n_params = model.to_flat().len();
    let beta_index = n_params - 1;
    let mut opt = AdamW::new(n_params, config.learning_rate, config.eps, config.weight_decay);
    // Shuffling uses its own stream so the initial weights do not depend on it.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_5afe_f00d);
    let val = val.filter(|v| v.len() >= 2);

    let mut log = TrainLog::default();
    let initial = trainer
        .evaluate(&model, train)?
        .ok_or_else(|| Error::Config("training split has fewer than 2 rows".into()))?;
    let (pos0, gn0) = trainer.probe(&model, train)?;
    log.records.push(EpochRecord {
        epoch: 0,
        train_loss: initial,
        val_loss: val.map(|v| trainer.evaluate(&model, v)).transpose()?.flatten(),
        pos_fraction: pos0,
        grad_norm: gn0,
    });

    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=config.epochs {
        let last_good = model.clone();
        order.shuffle(&mut rng);
        let (mut pos, mut gn, mut count) = (0.0, 0.0, 0usize);
        for idx in chunks(&order, config.batch_size) {
            let batch = train.rows(idx);
            let step = trainer.labels(&model, &batch).and_then(|labels| {
                let out = loss_and_grad(
                    &model,
                    batch.image.view(),
                    batch.text.view(),
                    config.loss,
                    labels.as_ref(),
                )?;
                Ok((labels, out))
            });
            let (labels, (loss, grads)) = match step {
                // overflowing projections after an update count as divergence
                Err(Error::ZeroNorm(_)) if opt.steps_taken() > 0 => {
                    return Err(Error::Diverged {
                        epoch,
                        last_good: Box::new(last_good),
                    })
                }
                other => other?,
            };
            let mut flat_grad = grads.to_flat();
            if !config.train_beta {
                flat_grad[beta_index] = 0.0;
            }
            if !loss.is_finite() || flat_grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    last_good: Box::new(last_good),
                });
            }
            let mut params = model.to_flat();
            opt.step(
                &mut params,
                &flat_grad,
                |i| i != beta_index,
                |i| i == beta_index && !config.train_beta,
            );
            if params.iter().any(|p| !p.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    last_good: Box::new(last_good),
                });
            }
            model.set_flat(&params);
            pos += Trainer::pos_fraction(labels.as_ref(), idx.len());
            gn += flat_grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            count += 1;
        }
        let train_loss = match trainer.evaluate(&model, train) {
            Ok(v) => v.unwrap_or(f64::NAN),
            Err(Error::ZeroNorm(_)) => f64::NAN,
            Err(e) => return Err(e),
        };
        if !train_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                last_good: Box::new(last_good),
            });
        }
        let c = count.max(1) as f64;
        log.records.push(EpochRecord {
            epoch,
            train_loss,
            val_loss: val.map(|v| trainer.evaluate(&model, v)).transpose()?.flatten(),
            pos_fraction: pos / c,
            grad_norm: gn / c,
        });
    }
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{generate_cohort, CohortConfig};

    fn data(n: usize, seed: u64) -> AlignmentData {
        let subjects = generate_cohort(&CohortConfig {
            n_subjects: n,
            prevalence: 0.1,
            seed,
            ..CohortConfig::default()
        })
        .unwrap();
        let refs: Vec<&Subject> = subjects.iter().collect();
        AlignmentData::from_subjects(&refs, &TextConfig::default()).unwrap()
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            batch_size: 32,
            epochs: 3,
            projection_dim: 8,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let d = data(96, 1);
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..small_config()
        };
        let (model, log) = train(&d, None, &cfg).unwrap();
        assert_eq!(model, initial_model(&cfg, &d));
        assert_eq!(log.initial_loss(), log.final_loss());
        assert_eq!(log.records.len(), 4);
    }

    #[test]
    fn deterministic_given_seed() {
        let d = data(96, 2);
        let (m1, l1) = train(&d, Some(&d.rows(&[0, 1, 2, 3])), &small_config()).unwrap();
        let (m2, l2) = train(&d, Some(&d.rows(&[0, 1, 2, 3])), &small_config()).unwrap();
        assert_eq!(m1, m2);
        let (mut a, mut b) = (Vec::new(), Vec::new());
        l1.write_csv(&mut a).unwrap();
        l2.write_csv(&mut b).unwrap();
        assert_eq!(a, b);
        assert!(l1.records.iter().all(|r| r.val_loss.is_some()));
    }

    #[test]
    fn short_remainders_fold_into_the_last_batch() {
        let order: Vec<usize> = (0..10).collect();
        let sizes = |n: usize, b: usize| chunks(&order[..n], b).iter().map(|c| c.len()).collect::<Vec<_>>();
        assert_eq!(sizes(10, 4), vec![4, 4, 2]);
        assert_eq!(sizes(9, 4), vec![4, 5]);
        assert_eq!(sizes(10, 3), vec![3, 3, 4]);
        assert_eq!(sizes(10, 5), vec![5, 5]);
        assert_eq!(sizes(6, 4), vec![4, 2]);
        assert_eq!(sizes(3, 8), vec![3]);
        assert_eq!(sizes(1, 4), Vec::<usize>::new());
        let flat: Vec<usize> = chunks(&order, 3).concat();
        assert_eq!(flat, order);
    }

    #[test]
    fn rejects_oversized_batches_and_empty_splits() {
        let d = data(40, 3);
        let cfg = TrainConfig {
            batch_size: 64,
            ..small_config()
        };
        assert!(matches!(train(&d, None, &cfg), Err(Error::Config(_))));
        assert!(train(&d.rows(&[]), None, &small_config()).is_err());
    }

    #[test]
    fn divergence_returns_last_good_model() {
        let d = data(64, 4);
        let cfg = TrainConfig {
            learning_rate: 1e300,
            eps: 1e-300,
            train_beta: true,
            ..small_config()
        };
        match train(&d, None, &cfg) {
            Err(Error::Diverged { epoch, last_good }) => {
                assert!(epoch >= 1);
                assert!(last_good.to_flat().iter().all(|v| v.is_finite()));
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn infonce_and_latent_modes_train() {
        let d = data(96, 5);
        for cfg in [
            TrainConfig {
                loss: LossKind::Infonce,
                ..small_config()
            },
            TrainConfig {
                image_similarity_source: ImageSimilaritySource::Latent,
                tau_f: 0.5,
                ..small_config()
            },
            TrainConfig {
                morphometry_normalization: MorphometryNormalization::Global,
                combiner: Combiner::And,
                ..small_config()
            },
        ] {
            let (_, log) = train(&d, None, &cfg).unwrap();
            assert!(log.records.iter().all(|r| r.train_loss.is_finite()));
            assert!(log.records.iter().all(|r| (0.0..=1.0).contains(&r.pos_fraction)));
        }
    }

    #[test]
    fn log_csv_header() {
        let log = TrainLog {
            records: vec![EpochRecord {
                epoch: 0,
                train_loss: 1.5,
                val_loss: None,
                pos_fraction: 0.25,
                grad_norm: 0.1,
            }],
        };
        let mut out = Vec::new();
        log.write_csv(&mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "epoch,train_loss,val_loss,pos_fraction,grad_norm\n0,1.5,,0.25,0.1\n"
        );
    }
}
