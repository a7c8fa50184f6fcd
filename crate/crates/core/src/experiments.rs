//! End-to-end pipeline and the experiment battery.
//!
//! A run generates (or loads) a cohort, splits it, trains the alignment heads
//! on control subjects, and evaluates a class-weighted SVM on the matched
//! evaluation pool. Experiments repeat this over seeds for several arms and
//! aggregate the results into tables.

use std::io::Write;

use ndarray::{concatenate, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::{
    development_subset, initial_model, train, AlignmentData, AlignmentModel, ImageSimilaritySource, LossKind,
    TrainConfig, TrainLog,
};
use crate::cohort::{
    generate_cohort, select, split_cohort, CohortConfig, CohortSplits, ImputationRecord, ImputeStrategy, Imputer,
    SplitConfig, Subject, MORPHOMETRY_COLUMNS,
};
use crate::downstream::{
    build_features, compare, evaluate_split, format_table, tabular_matrix, ArmReport, CvConfig, EvalReport, Metrics,
    PredictionRow, SeedResult, Standardizer, Variant,
};
use crate::error::{Error, Result};
use crate::gacl::{quartiles, similarity, z_normalize, Combiner, SimilaritySource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    #[default]
    Ad,
    Dementia,
}

impl Task {
    pub fn label(self) -> &'static str {
        match self {
            Task::Ad => "AD",
            Task::Dementia => "Dementia",
        }
    }

    /// Cohort preset for the task. The two tasks differ in base rate and in
    /// the random draw of the cohort.
    pub fn cohort_config(self) -> CohortConfig {
        match self {
            Task::Ad => CohortConfig {
                prevalence: 0.05,
                seed: 1,
                ..CohortConfig::default()
            },
            Task::Dementia => CohortConfig {
                prevalence: 0.055,
                seed: 2,
                ..CohortConfig::default()
            },
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Main,
    AblateGacl,
    AblateCombiner,
    AblateSimilaritySource,
    AblateComponents,
    ThresholdSweep,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::Main,
        ExperimentKind::AblateGacl,
        ExperimentKind::AblateCombiner,
        ExperimentKind::AblateSimilaritySource,
        ExperimentKind::AblateComponents,
        ExperimentKind::ThresholdSweep,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Main => "main",
            ExperimentKind::AblateGacl => "ablate_gacl",
            ExperimentKind::AblateCombiner => "ablate_combiner",
            ExperimentKind::AblateSimilaritySource => "ablate_similarity_source",
            ExperimentKind::AblateComponents => "ablate_components",
            ExperimentKind::ThresholdSweep => "threshold_sweep",
        }
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment '{s}'")))
    }
}

/// How the pipeline sets the GACL thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdPolicy {
    /// Use `train.tau_f` and `train.tau_t` as given.
    Fixed,
    /// Place each threshold at `Q3 + position · (max − Q3)` of the
    /// development-set similarity distribution.
    DevRange { position: f64 },
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        ThresholdPolicy::DevRange { position: 0.0 }
    }
}

/// Everything that determines a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub task: Task,
    /// Overrides the task's cohort preset when set.
    pub cohort: Option<CohortConfig>,
    pub split: SplitConfig,
    pub train: TrainConfig,
    pub cv: CvConfig,
    pub impute: ImputeStrategy,
    pub variant: Variant,
    /// Seed repeats; seed `i` uses `train.seed + i`.
    pub n_seeds: usize,
    /// Fraction of the alignment data used as the development set.
    pub dev_fraction: f64,
    pub thresholds: ThresholdPolicy,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            task: Task::Ad,
            cohort: None,
            split: SplitConfig::default(),
            train: TrainConfig::default(),
            cv: CvConfig::default(),
            impute: ImputeStrategy::default(),
            variant: Variant::Joint,
            n_seeds: 10,
            dev_fraction: 0.85,
            thresholds: ThresholdPolicy::default(),
        }
    }
}

impl PipelineConfig {
    pub fn cohort_config(&self) -> CohortConfig {
        self.cohort.clone().unwrap_or_else(|| self.task.cohort_config())
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.n_seeds as u64).map(|i| self.train.seed + i).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.cohort_config().validate()?;
        self.split.validate()?;
        self.train.validate()?;
        if self.n_seeds == 0 {
            return Err(Error::Config("n_seeds must be at least 1".into()));
        }
        if !(self.dev_fraction > 0.0 && self.dev_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "dev_fraction must be in (0, 1], got {}",
                self.dev_fraction
            )));
        }
        if let ThresholdPolicy::DevRange { position } = self.thresholds {
            if !(0.0..=1.0).contains(&position) {
                return Err(Error::Config(format!(
                    "threshold position must be in [0, 1], got {position}"
                )));
            }
        }
        if self.cv.folds < 2 {
            return Err(Error::Config("cv.folds must be at least 2".into()));
        }
        Ok(())
    }
}

/// Split-level inputs shared by every arm and seed.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub task: Task,
    pub splits: CohortSplits,
    pub align_train: AlignmentData,
    pub align_val: AlignmentData,
    pub eval_train: AlignmentData,
    pub eval_test: AlignmentData,
    pub y_train: Vec<bool>,
    pub y_test: Vec<bool>,
    /// Standardized risk factors, for `image_plus_table`.
    pub table_train: Array2<f64>,
    pub table_test: Array2<f64>,
    /// Standardized risk factors plus morphometry, for the tabular baseline.
    pub tabular_train: Array2<f64>,
    pub tabular_test: Array2<f64>,
    pub imputation: Vec<ImputationRecord>,
}

impl Prepared {
    /// Alignment train and validation rows stacked.
    pub fn alignment_rows(&self) -> AlignmentData {
        let cat = |a: &Array2<f64>, b: &Array2<f64>| concatenate(Axis(0), &[a.view(), b.view()]).expect("same width");
        AlignmentData {
            ids: self
                .align_train
                .ids
                .iter()
                .chain(&self.align_val.ids)
                .cloned()
                .collect(),
            morphometry: cat(&self.align_train.morphometry, &self.align_val.morphometry),
            image: cat(&self.align_train.image, &self.align_val.image),
            text: cat(&self.align_train.text, &self.align_val.text),
        }
    }

    /// The development set: a seeded `fraction` of the alignment rows.
    pub fn development(&self, fraction: f64, seed: u64) -> AlignmentData {
        let all = self.alignment_rows();
        all.rows(&development_subset(all.len(), fraction, seed))
    }

    fn table(&self, variant: Variant) -> (Option<&Array2<f64>>, Option<&Array2<f64>>) {
        match variant {
            Variant::ImagePlusTable => (Some(&self.table_train), Some(&self.table_test)),
            Variant::Tabular => (Some(&self.tabular_train), Some(&self.tabular_test)),
            _ => (None, None),
        }
    }
}

/// Splits `subjects`, builds text features from the reports as given, and
/// standardizes imputed tabular features on the SVM training rows.
pub fn prepare(subjects: &[Subject], config: &PipelineConfig) -> Result<Prepared> {
    let splits = split_cohort(subjects, &config.split)?;
    let text = &config.train.text;
    let data = |ids: &[String]| AlignmentData::from_subjects(&select(subjects, ids)?, text);
    let labels = |ids: &[String]| -> Result<Vec<bool>> {
        Ok(select(subjects, ids)?
            .iter()
            .map(|s| s.incident_label.is_case())
            .collect())
    };

    // Imputation statistics come from the alignment training controls only.
    let imputer = Imputer::fit(select(subjects, &splits.align_train)?, config.impute)?;
    let mut imputed: Vec<Subject> = select(subjects, &splits.eval_pool)?.into_iter().cloned().collect();
    let imputation = imputer.apply(&mut imputed);
    let tables = |with_morph: bool| -> Result<(Array2<f64>, Array2<f64>)> {
        let train = tabular_matrix(&select(&imputed, &splits.svm_train)?, with_morph)?;
        let test = tabular_matrix(&select(&imputed, &splits.svm_test)?, with_morph)?;
        let z = Standardizer::fit(train.view())?;
        Ok((z.transform(train.view())?, z.transform(test.view())?))
    };
    let (table_train, table_test) = tables(false)?;
    let (tabular_train, tabular_test) = tables(true)?;

    Ok(Prepared {
        task: config.task,
        align_train: data(&splits.align_train)?,
        align_val: data(&splits.align_val)?,
        eval_train: data(&splits.svm_train)?,
        eval_test: data(&splits.svm_test)?,
        y_train: labels(&splits.svm_train)?,
        y_test: labels(&splits.svm_test)?,
        table_train,
        table_test,
        tabular_train,
        tabular_test,
        imputation,
        splits,
    })
}

/// Generates the configured cohort and prepares it.
pub fn prepare_generated(config: &PipelineConfig) -> Result<(Vec<Subject>, Prepared)> {
    config.validate()?;
    let subjects = generate_cohort(&config.cohort_config())?;
    let prepared = prepare(&subjects, config)?;
    Ok((subjects, prepared))
}

/// One model configuration within an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    pub name: String,
    pub train: TrainConfig,
    pub variant: Variant,
}

#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub result: SeedResult,
    pub predictions: Vec<PredictionRow>,
    pub log: Option<TrainLog>,
    pub model: Option<AlignmentModel>,
}

/// Evaluates a given model (or none, for the tabular variant).
pub fn evaluate_model(
    prep: &Prepared,
    model: Option<&AlignmentModel>,
    variant: Variant,
    cv: &CvConfig,
    seed: u64,
    arm_name: &str,
) -> Result<SeedOutcome> {
    let (t_train, t_test) = prep.table(variant);
    let x_train = build_features(model, &prep.eval_train, t_train.map(|t| t.view()), variant)?;
    let x_test = build_features(model, &prep.eval_test, t_test.map(|t| t.view()), variant)?;
    let eval = evaluate_split(x_train.view(), &prep.y_train, x_test.view(), &prep.y_test, cv, seed)?;
    let predictions = prep
        .eval_test
        .ids
        .iter()
        .zip(&prep.y_test)
        .zip(eval.decision.iter().zip(&eval.probability))
        .map(|((id, &y), (&d, &p))| PredictionRow {
            arm: arm_name.to_string(),
            seed,
            id: id.clone(),
            label: u8::from(y),
            decision: d,
            probability: p,
        })
        .collect();
    Ok(SeedOutcome {
        result: SeedResult {
            seed,
            metrics: eval.metrics,
            c: eval.cv.best_c,
            gamma: eval.cv.best_gamma,
            cv_auroc: eval.cv.best_mean_auroc,
        },
        predictions,
        log: None,
        model: model.cloned(),
    })
}

/// Trains the alignment heads with `train_config` (seed overridden) and
/// evaluates `variant`.
pub fn run_seed(prep: &Prepared, arm: &Arm, cv: &CvConfig, seed: u64) -> Result<SeedOutcome> {
    if !arm.variant.needs_model() {
        return evaluate_model(prep, None, arm.variant, cv, seed, &arm.name);
    }
    let cfg = TrainConfig {
        seed,
        ..arm.train.clone()
    };
    let (model, log) = train(&prep.align_train, Some(&prep.align_val), &cfg)?;
    let mut out = evaluate_model(prep, Some(&model), arm.variant, cv, seed, &arm.name)?;
    out.log = Some(log);
    Ok(out)
}

/// Runs every (arm, seed) cell in parallel and aggregates in input order.
/// Arms with identical training configs share one trained model per seed.
pub fn run_arms(
    prep: &Prepared,
    arms: &[Arm],
    seeds: &[u64],
    cv: &CvConfig,
) -> Result<(Vec<ArmReport>, Vec<PredictionRow>)> {
    let mut configs: Vec<&TrainConfig> = Vec::new();
    let arm_config: Vec<Option<usize>> = arms
        .iter()
        .map(|a| {
            a.variant
                .needs_model()
                .then(|| match configs.iter().position(|c| **c == a.train) {
                    Some(i) => i,
                    None => {
                        configs.push(&a.train);
                        configs.len() - 1
                    }
                })
        })
        .collect();
    let jobs: Vec<(usize, u64)> = (0..configs.len())
        .flat_map(|c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    let trained: Vec<(AlignmentModel, TrainLog)> = jobs
        .par_iter()
        .map(|&(c, seed)| {
            let cfg = TrainConfig {
                seed,
                ..configs[c].clone()
            };
            train(&prep.align_train, Some(&prep.align_val), &cfg)
        })
        .collect::<Result<_>>()?;

    let cells: Vec<(usize, usize)> = (0..arms.len())
        .flat_map(|a| (0..seeds.len()).map(move |s| (a, s)))
        .collect();
    let outcomes: Vec<SeedOutcome> = cells
        .par_iter()
        .map(|&(a, si)| {
            let arm = &arms[a];
            let seed = seeds[si];
            match arm_config[a] {
                None => evaluate_model(prep, None, arm.variant, cv, seed, &arm.name),
                Some(c) => {
                    let (model, log) = &trained[c * seeds.len() + si];
                    let mut out = evaluate_model(prep, Some(model), arm.variant, cv, seed, &arm.name)?;
                    out.log = Some(log.clone());
                    Ok(out)
                }
            }
        })
        .collect::<Result<_>>()?;
    let mut reports = Vec::new();
    let mut predictions = Vec::new();
    for (a, arm) in arms.iter().enumerate() {
        let mine = &outcomes[a * seeds.len()..(a + 1) * seeds.len()];
        reports.push(ArmReport::new(
            arm.name.clone(),
            mine.iter().map(|o| o.result.clone()).collect(),
        ));
        predictions.extend(mine.iter().flat_map(|o| o.predictions.iter().cloned()));
    }
    Ok((reports, predictions))
}

/// Q3 of the development-set similarity among the untrained model's image
/// embeddings, used as the threshold for latent-similarity labels.
pub fn latent_threshold(prep: &Prepared, config: &PipelineConfig) -> Result<f64> {
    let dev = prep.development(config.dev_fraction, config.split.seed);
    let model = initial_model(&config.train, &prep.align_train);
    let latents = model.encode_image(dev.image.view())?;
    Ok(quartiles(&similarity(latents.view(), SimilaritySource::ImageLatent, true)?)?[2])
}

/// `[Q1, Q2, Q3, max]` of the development-set morphometry and text similarities.
pub fn dev_quartiles(prep: &Prepared, config: &PipelineConfig) -> Result<([f64; 4], [f64; 4])> {
    let dev = prep.development(config.dev_fraction, config.split.seed);
    let z = z_normalize(dev.morphometry.view(), &MORPHOMETRY_COLUMNS)?;
    let s_f = similarity(z.view(), SimilaritySource::Morphometry, true)?;
    let s_t = similarity(dev.text.view(), SimilaritySource::Text, true)?;
    Ok((quartiles(&s_f)?, quartiles(&s_t)?))
}

/// `config.train` with the thresholds the policy resolves to.
pub fn resolved_train(prep: &Prepared, config: &PipelineConfig) -> Result<TrainConfig> {
    let mut train = config.train.clone();
    if let ThresholdPolicy::DevRange { position } = config.thresholds {
        let (q_f, q_t) = dev_quartiles(prep, config)?;
        train.tau_f = q_f[2] + position * (q_f[3] - q_f[2]);
        train.tau_t = q_t[2] + position * (q_t[3] - q_t[2]);
    }
    Ok(train)
}

pub const ARM_GACL: &str = "Ours (with GACL)";
pub const ARM_NO_GACL: &str = "Ours (no GACL)";
pub const ARM_TABULAR: &str = "Tabular SVM";

/// Arms for each table-shaped experiment. The threshold sweep is separate.
pub fn arms_for(kind: ExperimentKind, prep: &Prepared, config: &PipelineConfig) -> Result<Vec<Arm>> {
    let base = resolved_train(prep, config)?;
    let arm = |name: &str, train: TrainConfig, variant: Variant| Arm {
        name: name.to_string(),
        train,
        variant,
    };
    let gacl = TrainConfig {
        loss: LossKind::Gacl,
        ..base.clone()
    };
    let infonce = TrainConfig {
        loss: LossKind::Infonce,
        ..base.clone()
    };
    Ok(match kind {
        ExperimentKind::Main => vec![
            arm(ARM_TABULAR, base.clone(), Variant::Tabular),
            arm(ARM_NO_GACL, infonce, config.variant),
            arm(ARM_GACL, gacl, config.variant),
        ],
        ExperimentKind::AblateGacl => vec![
            arm(ARM_NO_GACL, infonce, config.variant),
            arm(ARM_GACL, gacl, config.variant),
        ],
        ExperimentKind::AblateCombiner => vec![
            arm(
                "OR",
                TrainConfig {
                    combiner: Combiner::Or,
                    ..gacl.clone()
                },
                config.variant,
            ),
            arm(
                "AND",
                TrainConfig {
                    combiner: Combiner::And,
                    ..gacl
                },
                config.variant,
            ),
        ],
        ExperimentKind::AblateSimilaritySource => {
            let tau = latent_threshold(prep, config)?;
            vec![
                arm(
                    "Morphometry similarity",
                    TrainConfig {
                        image_similarity_source: ImageSimilaritySource::Morphometry,
                        ..gacl.clone()
                    },
                    config.variant,
                ),
                arm(
                    "Image latent similarity",
                    TrainConfig {
                        image_similarity_source: ImageSimilaritySource::Latent,
                        tau_f: tau,
                        ..gacl
                    },
                    config.variant,
                ),
            ]
        }
        ExperimentKind::AblateComponents => vec![
            arm("Image-only", gacl.clone(), Variant::ImageOnly),
            arm("Text-only", gacl.clone(), Variant::TextOnly),
            arm("Image + Text", gacl.clone(), Variant::Joint),
            arm("Image + Table", gacl, Variant::ImagePlusTable),
        ],
        ExperimentKind::ThresholdSweep => {
            return Err(Error::Config("the threshold sweep has no fixed arms".into()));
        }
    })
}

fn title(kind: ExperimentKind) -> &'static str {
    match kind {
        ExperimentKind::Main => "Incident-disease prediction",
        ExperimentKind::AblateGacl => "Effect of group-aware labels",
        ExperimentKind::AblateCombiner => "OR versus AND label combination",
        ExperimentKind::AblateSimilaritySource => "Image-side similarity source",
        ExperimentKind::AblateComponents => "Feature components",
        ExperimentKind::ThresholdSweep => "Threshold sensitivity",
    }
}

/// Runs a table-shaped experiment.
pub fn run_table_experiment(
    kind: ExperimentKind,
    prep: &Prepared,
    config: &PipelineConfig,
) -> Result<ExperimentOutput> {
    let arms = arms_for(kind, prep, config)?;
    let (reports, predictions) = run_arms(prep, &arms, &config.seeds(), &config.cv)?;
    let comparisons = match kind {
        ExperimentKind::Main => {
            let gacl = &reports[2];
            compare(gacl, &reports[1])
                .into_iter()
                .chain(compare(gacl, &reports[0]))
                .collect()
        }
        ExperimentKind::AblateComponents => Vec::new(),
        _ => compare(&reports[reports.len() - 1], &reports[0]),
    };
    Ok(ExperimentOutput {
        kind,
        report: Some(EvalReport {
            title: title(kind).to_string(),
            task: prep.task.label().to_string(),
            arms: reports,
            comparisons,
        }),
        sweep: None,
        predictions,
        arms,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// `tau_f` or `tau_t`.
    pub varied: String,
    /// `Q1`, `Q2`, `Q3`, `max` or `optimum`.
    pub point: String,
    pub threshold: f64,
    pub metrics: Metrics,
    /// `100 · (value − optimum) / optimum` per metric.
    pub pct_diff: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub task: String,
    pub optimum_tau_f: f64,
    pub optimum_tau_t: f64,
    pub optimum: Metrics,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["task", "varied", "point", "threshold"]
            .into_iter()
            .map(String::from)
            .collect::<Vec<_>>();
        for name in Metrics::NAMES {
            header.push(name.to_string());
        }
        for name in Metrics::NAMES {
            header.push(format!("{name} % diff"));
        }
        wr.write_record(&header)?;
        for r in &self.rows {
            let mut row = vec![
                self.task.clone(),
                r.varied.clone(),
                r.point.clone(),
                r.threshold.to_string(),
            ];
            row.extend(r.metrics.values().iter().map(|v| v.to_string()));
            row.extend(r.pct_diff.iter().map(|v| v.to_string()));
            wr.write_record(&row)?;
        }
        wr.flush().map_err(|e| Error::io("<sweep writer>", e))?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut header: Vec<String> = ["Task", "Varied", "Point", "Threshold"].map(String::from).to_vec();
        header.extend(Metrics::NAMES.iter().map(|n| format!("{n} %")));
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut row = vec![
                    self.task.clone(),
                    r.varied.clone(),
                    r.point.clone(),
                    format!("{:.4}", r.threshold),
                ];
                row.extend(r.pct_diff.iter().map(|v| {
                    if v.is_finite() {
                        format!("{v:+.2}")
                    } else {
                        "n/a".into()
                    }
                }));
                row
            })
            .collect();
        format!(
            "Threshold sensitivity (% difference from tau_f = {:.4}, tau_t = {:.4})\n{}",
            self.optimum_tau_f,
            self.optimum_tau_t,
            format_table(&header, &rows)
        )
    }
}

fn pct_diff(value: &Metrics, base: &Metrics) -> [f64; 4] {
    let (v, b) = (value.values(), base.values());
    std::array::from_fn(|k| {
        if v[k] == b[k] {
            0.0
        } else {
            100.0 * (v[k] - b[k]) / b[k]
        }
    })
}

/// Varies one threshold over the development quartiles (plus the optimum)
/// with the other fixed at its optimum, retraining for every cell.
pub fn run_threshold_sweep(prep: &Prepared, config: &PipelineConfig) -> Result<ExperimentOutput> {
    let (q_f, q_t) = dev_quartiles(prep, config)?;
    let opt = TrainConfig {
        loss: LossKind::Gacl,
        ..resolved_train(prep, config)?
    };
    let names = ["Q1", "Q2", "Q3", "max"];
    let mut arms = vec![Arm {
        name: "optimum".into(),
        train: opt.clone(),
        variant: config.variant,
    }];
    let mut cells = Vec::new();
    for (varied, q) in [("tau_f", q_f), ("tau_t", q_t)] {
        for (name, &value) in names.iter().zip(&q) {
            let train = if varied == "tau_f" {
                TrainConfig {
                    tau_f: value,
                    ..opt.clone()
                }
            } else {
                TrainConfig {
                    tau_t: value,
                    ..opt.clone()
                }
            };
            cells.push((varied, name.to_string(), value, arms.len()));
            arms.push(Arm {
                name: format!("{varied}={name}"),
                train,
                variant: config.variant,
            });
        }
        let optimum = if varied == "tau_f" { opt.tau_f } else { opt.tau_t };
        cells.push((varied, "optimum".to_string(), optimum, 0));
    }
    let (reports, predictions) = run_arms(prep, &arms, &config.seeds(), &config.cv)?;
    let base = reports[0].mean;
    let rows = cells
        .into_iter()
        .map(|(varied, point, threshold, a)| SweepRow {
            varied: varied.to_string(),
            point,
            threshold,
            metrics: reports[a].mean,
            pct_diff: pct_diff(&reports[a].mean, &base),
        })
        .collect();
    Ok(ExperimentOutput {
        kind: ExperimentKind::ThresholdSweep,
        report: None,
        sweep: Some(SweepTable {
            task: prep.task.label().to_string(),
            optimum_tau_f: opt.tau_f,
            optimum_tau_t: opt.tau_t,
            optimum: base,
            rows,
        }),
        predictions,
        arms,
    })
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub kind: ExperimentKind,
    pub report: Option<EvalReport>,
    pub sweep: Option<SweepTable>,
    pub predictions: Vec<PredictionRow>,
    pub arms: Vec<Arm>,
}

impl ExperimentOutput {
    pub fn to_text(&self) -> String {
        match (&self.report, &self.sweep) {
            (Some(r), _) => r.to_text(),
            (None, Some(s)) => s.to_text(),
            (None, None) => String::new(),
        }
    }
}

pub fn run_experiment(kind: ExperimentKind, prep: &Prepared, config: &PipelineConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    match kind {
        ExperimentKind::ThresholdSweep => run_threshold_sweep(prep, config),
        other => run_table_experiment(other, prep, config),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_parse() {
        for k in ExperimentKind::ALL {
            assert_eq!(k.as_str().parse::<ExperimentKind>().unwrap(), k);
        }
    }

    #[test]
    fn task_presets_are_feasible() {
        for task in [Task::Ad, Task::Dementia] {
            let cfg = PipelineConfig {
                task,
                ..PipelineConfig::default()
            };
            let subjects = generate_cohort(&cfg.cohort_config()).unwrap();
            let splits = split_cohort(&subjects, &cfg.split).unwrap();
            let cases = select(&subjects, &splits.eval_pool)
                .unwrap()
                .iter()
                .filter(|s| s.incident_label.is_case())
                .count();
            let p = cases as f64 / splits.eval_pool.len() as f64;
            assert!((p - 0.12).abs() < 0.01, "{task}: {p}");
        }
    }

    #[test]
    fn pct_diff_is_exactly_zero_at_base() {
        let m = Metrics {
            auroc: 0.7,
            balanced_accuracy: 0.6,
            f1: 0.0,
            mcc: 0.0,
        };
        assert_eq!(pct_diff(&m, &m), [0.0; 4]);
    }
}
