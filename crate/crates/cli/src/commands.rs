use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use reveal_core::align::{
    batch_labels, dev_threshold_ranges, development_subset, train, tune, val_loss_objective, Checkpoint, Direction,
    ImageSimilaritySource, LossKind, SearchSpace, TrainConfig,
};
use reveal_core::cohort::{write_cohort, Subject};
use reveal_core::downstream::{write_predictions_csv, ArmReport, EvalReport, PredictionRow, Variant};
use reveal_core::experiments::{
    latent_threshold, prepare, resolved_train, run_arms, run_experiment, Arm, ExperimentKind, ExperimentOutput,
    PipelineConfig, Prepared, Task, ThresholdPolicy, ARM_GACL, ARM_NO_GACL, ARM_TABULAR,
};
use reveal_core::manifest::{write_atomic, RunManifest};
use reveal_core::narrative::{render_reports, write_reports_jsonl, write_reports_txt};

use crate::config::{check_input, cohort, resolve, usage};
use crate::{Cli, CohortInput, Command};

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.common.threads {
        if n == 0 {
            return Err(usage("REVEAL_THREADS must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let cfg = resolve(&cli.common)?;
    let out = Output::create(&cli.common.out)?;
    match cli.command {
        Command::GenCohort => gen_cohort(cfg, cli.common.seed, out),
        Command::RenderReports { cohort, txt_dir } => render(cfg, &cohort, txt_dir.as_deref(), out),
        Command::TrainAlign { input, labels } => train_align(cfg, &input, labels, out),
        Command::Evaluate {
            input,
            checkpoint,
            experiment,
        } => match (checkpoint, experiment) {
            (Some(ckpt), _) => evaluate_checkpoint(cfg, &input, &ckpt, out),
            (None, Some(kind)) => experiment_cmd("evaluate", cfg, &input, kind.into(), false, out),
            (None, None) => evaluate_fresh(cfg, &input, out),
        },
        Command::SweepThresholds { input } => experiment_cmd(
            "sweep-thresholds",
            cfg,
            &input,
            ExperimentKind::ThresholdSweep,
            false,
            out,
        ),
        Command::AblateSimilarity { input } => {
            let all = cli.common.task.is_none();
            experiment_cmd(
                "ablate-similarity",
                cfg,
                &input,
                ExperimentKind::AblateSimilaritySource,
                all,
                out,
            )
        }
        Command::AblateCombiner { input } => {
            let all = cli.common.task.is_none();
            experiment_cmd("ablate-combiner", cfg, &input, ExperimentKind::AblateCombiner, all, out)
        }
        Command::Experiment { input, kind } => experiment_cmd("experiment", cfg, &input, kind.into(), false, out),
        Command::Tune { input, trials } => tune_cmd(cfg, &input, trials, out),
    }
}

/// Output directory plus the manifest that records what lands in it.
struct Output {
    dir: PathBuf,
}

impl Output {
    fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Output { dir: dir.to_path_buf() })
    }

    fn write(&self, m: &mut RunManifest, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.dir.join(name), bytes)?;
        m.add_output(&self.dir, name)?;
        Ok(())
    }

    fn write_json<T: Serialize>(&self, m: &mut RunManifest, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(m, name, &bytes)
    }

    fn finish(&self, mut m: RunManifest) -> Result<()> {
        m.args = std::env::args().collect();
        m.write(&self.dir.join("manifest.json"))?;
        Ok(())
    }
}

fn with_input(m: &mut RunManifest, input: &CohortInput) -> Result<()> {
    if let Some(p) = &input.cohort {
        check_input(p)?;
        m.add_input(p)?;
    }
    Ok(())
}

fn gen_cohort(mut cfg: PipelineConfig, seed: Option<u64>, out: Output) -> Result<()> {
    let mut cohort_cfg = cfg.cohort_config();
    if let Some(s) = seed {
        cohort_cfg.seed = s;
    }
    cohort_cfg.validate().map_err(|e| usage(e.to_string()))?;
    cfg.cohort = Some(cohort_cfg.clone());
    let mut m = RunManifest::new("gen-cohort", &cfg, vec![cohort_cfg.seed])?;
    let subjects = m.time("generate", || reveal_core::cohort::generate_cohort(&cohort_cfg))?;
    let mut csv = Vec::new();
    write_cohort(&subjects, &mut csv)?;
    out.write(&mut m, "cohort.csv", &csv)?;
    let cases = subjects.iter().filter(|s| s.incident_label.is_case()).count();
    let prevalence = cases as f64 / subjects.len() as f64;
    m.note("subjects", subjects.len())?;
    m.note("prevalence", prevalence)?;
    println!(
        "{} subjects, {cases} cases (prevalence {prevalence:.4})",
        subjects.len()
    );
    out.finish(m)
}

fn render(cfg: PipelineConfig, path: &Path, txt_dir: Option<&Path>, out: Output) -> Result<()> {
    let mut m = RunManifest::new("render-reports", &cfg, vec![])?;
    check_input(path)?;
    m.add_input(path)?;
    let subjects = cohort(&cfg, Some(&path.to_path_buf()))?;
    let reports = m.time("render", || render_reports(&subjects));
    let mut jsonl = Vec::new();
    write_reports_jsonl(&reports, &mut jsonl)?;
    out.write(&mut m, "reports.jsonl", &jsonl)?;
    if let Some(dir) = txt_dir {
        write_reports_txt(&reports, dir)?;
    }
    m.note("reports", reports.len())?;
    println!("{} reports", reports.len());
    out.finish(m)
}

/// Resolved thresholds plus the latent threshold when latent labels are asked for.
fn training_config(prep: &Prepared, cfg: &PipelineConfig) -> Result<TrainConfig> {
    let mut t = resolved_train(prep, cfg)?;
    if t.image_similarity_source == ImageSimilaritySource::Latent && cfg.thresholds != ThresholdPolicy::Fixed {
        t.tau_f = latent_threshold(prep, cfg)?;
    }
    Ok(t)
}

fn note_thresholds(m: &mut RunManifest, t: &TrainConfig) -> Result<()> {
    m.note("tau_f", t.tau_f)?;
    m.note("tau_t", t.tau_t)?;
    Ok(())
}

fn load_prepared(m: &mut RunManifest, cfg: &PipelineConfig, input: &CohortInput) -> Result<(Vec<Subject>, Prepared)> {
    with_input(m, input)?;
    let subjects = cohort(cfg, input.cohort.as_ref())?;
    let prep = m.time("prepare", || prepare(&subjects, cfg))?;
    Ok((subjects, prep))
}

fn train_align(cfg: PipelineConfig, input: &CohortInput, labels: bool, out: Output) -> Result<()> {
    let mut m = RunManifest::new("train-align", &cfg, vec![cfg.train.seed])?;
    let (_, prep) = load_prepared(&mut m, &cfg, input)?;
    let t = training_config(&prep, &cfg)?;
    note_thresholds(&mut m, &t)?;
    let (model, log) = m.time("train", || train(&prep.align_train, Some(&prep.align_val), &t))?;
    out.write(
        &mut m,
        "checkpoint.json",
        Checkpoint::new(&model, &t).to_json()?.as_bytes(),
    )?;
    let mut csv = Vec::new();
    log.write_csv(&mut csv)?;
    out.write(&mut m, "train_log.csv", &csv)?;
    if labels {
        let l = batch_labels(&model, &prep.align_val, &t, None)?;
        let mut csv = Vec::new();
        l.write_csv(&mut csv)?;
        out.write(&mut m, "val_labels.csv", &csv)?;
    }
    if let (Some(first), Some(last)) = (log.initial_loss(), log.final_loss()) {
        println!("train loss {first:.4} -> {last:.4} over {} epochs", t.epochs);
    }
    out.finish(m)
}

fn write_predictions(out: &Output, m: &mut RunManifest, rows: &[PredictionRow]) -> Result<()> {
    let mut csv = Vec::new();
    write_predictions_csv(rows, &mut csv)?;
    out.write(m, "predictions.csv", &csv)
}

fn write_reports(out: &Output, m: &mut RunManifest, reports: &[EvalReport]) -> Result<()> {
    let mut csv = Vec::new();
    for (i, r) in reports.iter().enumerate() {
        let mut one = Vec::new();
        r.write_csv(&mut one)?;
        let skip = if i == 0 {
            0
        } else {
            one.iter().position(|&b| b == b'\n').map_or(one.len(), |p| p + 1)
        };
        csv.extend_from_slice(&one[skip..]);
    }
    out.write(m, "report.csv", &csv)?;
    let text: Vec<String> = reports.iter().map(EvalReport::to_text).collect();
    let text = text.join("\n");
    out.write(m, "report.txt", text.as_bytes())?;
    if let [single] = reports {
        out.write_json(m, "report.json", single)?;
    } else {
        out.write_json(m, "report.json", &reports)?;
    }
    print!("{text}");
    Ok(())
}

fn evaluate_checkpoint(mut cfg: PipelineConfig, input: &CohortInput, ckpt: &Path, out: Output) -> Result<()> {
    check_input(ckpt)?;
    let checkpoint = Checkpoint::load(ckpt)?;
    let model = checkpoint.model()?;
    // Text features must match the ones the heads were trained on.
    cfg.train.text = checkpoint.config.text;
    if !cfg.variant.needs_model() {
        return Err(usage("the tabular variant does not use a checkpoint"));
    }
    let seeds = cfg.seeds();
    let mut m = RunManifest::new("evaluate", &cfg, seeds.clone())?;
    m.add_input(ckpt)?;
    let (_, prep) = load_prepared(&mut m, &cfg, input)?;
    let name = format!("checkpoint ({})", cfg.variant);
    let outcomes = m.time("evaluate", || {
        seeds
            .par_iter()
            .map(|&s| reveal_core::experiments::evaluate_model(&prep, Some(&model), cfg.variant, &cfg.cv, s, &name))
            .collect::<reveal_core::Result<Vec<_>>>()
    })?;
    let report = EvalReport {
        title: "Checkpoint evaluation".into(),
        task: prep.task.label().into(),
        arms: vec![ArmReport::new(
            name.clone(),
            outcomes.iter().map(|o| o.result.clone()).collect(),
        )],
        comparisons: vec![],
    };
    write_reports(&out, &mut m, std::slice::from_ref(&report))?;
    let rows: Vec<PredictionRow> = outcomes.into_iter().flat_map(|o| o.predictions).collect();
    write_predictions(&out, &mut m, &rows)?;
    out.finish(m)
}

fn evaluate_fresh(cfg: PipelineConfig, input: &CohortInput, out: Output) -> Result<()> {
    let seeds = cfg.seeds();
    let mut m = RunManifest::new("evaluate", &cfg, seeds.clone())?;
    let (_, prep) = load_prepared(&mut m, &cfg, input)?;
    let t = training_config(&prep, &cfg)?;
    note_thresholds(&mut m, &t)?;
    let name = match (cfg.variant, t.loss) {
        (Variant::Tabular, _) => ARM_TABULAR,
        (_, LossKind::Gacl) => ARM_GACL,
        (_, LossKind::Infonce) => ARM_NO_GACL,
    };
    let arm = Arm {
        name: name.into(),
        train: t,
        variant: cfg.variant,
    };
    let (arms, rows) = m.time("evaluate", || {
        run_arms(&prep, std::slice::from_ref(&arm), &seeds, &cfg.cv)
    })?;
    let report = EvalReport {
        title: format!("Evaluation ({})", cfg.variant),
        task: prep.task.label().into(),
        arms,
        comparisons: vec![],
    };
    write_reports(&out, &mut m, std::slice::from_ref(&report))?;
    write_predictions(&out, &mut m, &rows)?;
    out.finish(m)
}

/// Runs `kind` for the configured task, or for both tasks when `all_tasks`
/// is set and no cohort file pins the data.
fn experiment_cmd(
    command: &str,
    cfg: PipelineConfig,
    input: &CohortInput,
    kind: ExperimentKind,
    all_tasks: bool,
    out: Output,
) -> Result<()> {
    let tasks = if all_tasks && input.cohort.is_none() {
        vec![Task::Ad, Task::Dementia]
    } else {
        vec![cfg.task]
    };
    let mut m = RunManifest::new(command, &cfg, cfg.seeds())?;
    m.note("experiment", kind.as_str())?;
    with_input(&mut m, input)?;
    let mut outputs: Vec<ExperimentOutput> = Vec::new();
    for task in tasks {
        let cfg = PipelineConfig { task, ..cfg.clone() };
        let subjects = cohort(&cfg, input.cohort.as_ref())?;
        let label = task.label();
        let prep = m.time(&format!("prepare {label}"), || prepare(&subjects, &cfg))?;
        let t = resolved_train(&prep, &cfg)?;
        m.note(&format!("{label} tau_f"), t.tau_f)?;
        m.note(&format!("{label} tau_t"), t.tau_t)?;
        let result = m.time(&format!("run {label}"), || run_experiment(kind, &prep, &cfg))?;
        for arm in &result.arms {
            if arm.train.image_similarity_source == ImageSimilaritySource::Latent {
                m.note(&format!("{label} latent tau_f"), arm.train.tau_f)?;
            }
        }
        outputs.push(result);
    }

    let reports: Vec<EvalReport> = outputs.iter().filter_map(|o| o.report.clone()).collect();
    if !reports.is_empty() {
        write_reports(&out, &mut m, &reports)?;
    }
    let sweeps: Vec<_> = outputs.iter().filter_map(|o| o.sweep.clone()).collect();
    if !sweeps.is_empty() {
        let mut csv = Vec::new();
        for (i, s) in sweeps.iter().enumerate() {
            let mut one = Vec::new();
            s.write_csv(&mut one)?;
            let skip = if i == 0 {
                0
            } else {
                one.iter().position(|&b| b == b'\n').map_or(one.len(), |p| p + 1)
            };
            csv.extend_from_slice(&one[skip..]);
        }
        out.write(&mut m, "sweep.csv", &csv)?;
        let text: Vec<String> = sweeps.iter().map(|s| s.to_text()).collect();
        let text = text.join("\n");
        out.write(&mut m, "sweep.txt", text.as_bytes())?;
        if let [single] = sweeps.as_slice() {
            out.write_json(&mut m, "sweep.json", single)?;
        } else {
            out.write_json(&mut m, "sweep.json", &sweeps)?;
        }
        print!("{text}");
    }
    let rows: Vec<PredictionRow> = outputs.into_iter().flat_map(|o| o.predictions).collect();
    write_predictions(&out, &mut m, &rows)?;
    out.finish(m)
}

fn tune_cmd(cfg: PipelineConfig, input: &CohortInput, trials: usize, out: Output) -> Result<()> {
    if trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    let mut m = RunManifest::new("tune", &cfg, vec![cfg.train.seed])?;
    let (_, prep) = load_prepared(&mut m, &cfg, input)?;
    let dev = prep.development(cfg.dev_fraction, cfg.split.seed);
    let fit_rows = development_subset(dev.len(), 0.8, cfg.train.seed);
    let held: Vec<usize> = (0..dev.len()).filter(|i| fit_rows.binary_search(i).is_err()).collect();
    let (fit, val) = (dev.rows(&fit_rows), dev.rows(&held));
    let (range_f, range_t) = dev_threshold_ranges(&dev)?;
    let space = SearchSpace::with_thresholds(range_f, range_t);
    let objective = val_loss_objective(&fit, &val);
    let result = m.time("search", || {
        tune(
            &space,
            trials,
            &cfg.train,
            cfg.train.seed,
            objective,
            Direction::Minimize,
        )
    })?;
    let mut csv = Vec::new();
    result.write_csv(&mut csv)?;
    out.write(&mut m, "trials.csv", &csv)?;
    let best = PipelineConfig {
        train: result.best.clone(),
        thresholds: ThresholdPolicy::Fixed,
        cohort: Some(cfg.cohort.clone().unwrap_or_else(|| cfg.cohort_config())),
        ..cfg.clone()
    };
    out.write_json(&mut m, "best_config.json", &best)?;
    note_thresholds(&mut m, &result.best)?;
    println!(
        "best trial {} of {trials}: validation loss {:.5}",
        result.best_index, result.trials[result.best_index].score
    );
    out.finish(m)
}
