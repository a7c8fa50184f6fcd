use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use reveal_core::cohort::{generate_cohort, load_cohort_csv, Subject};
use reveal_core::experiments::PipelineConfig;
use reveal_core::Error;

use crate::Common;

/// A problem with how the command was invoked, reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match e.downcast_ref::<Error>() {
        Some(Error::Config(_)) => 2,
        _ => 1,
    }
}

/// File, then environment and flags (already merged by clap).
pub fn resolve(common: &Common) -> Result<PipelineConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            serde_json::from_str::<PipelineConfig>(&text)
                .map_err(|e| usage(format!("invalid config {}: {e}", path.display())))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(task) = common.task {
        cfg.task = task.into();
    }
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
    }
    if let Some(loss) = common.loss {
        cfg.train.loss = loss.into();
    }
    if let Some(c) = common.combiner {
        cfg.train.combiner = c.into();
    }
    if let Some(s) = common.similarity_source {
        cfg.train.image_similarity_source = s.into();
    }
    if let Some(v) = common.variant {
        cfg.variant = v.into();
    }
    if let Some(n) = common.n_seeds {
        cfg.n_seeds = n;
    }
    if let Some(e) = common.epochs {
        cfg.train.epochs = e;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

pub fn check_input(path: &Path) -> Result<()> {
    if !path.is_file() {
        return Err(usage(format!("input file {} does not exist", path.display())));
    }
    Ok(())
}

/// Loads `path`, or generates the configured cohort when it is absent.
pub fn cohort(cfg: &PipelineConfig, path: Option<&PathBuf>) -> Result<Vec<Subject>> {
    match path {
        Some(p) => {
            check_input(p)?;
            load_cohort_csv(p).with_context(|| format!("loading cohort {}", p.display()))
        }
        None => Ok(generate_cohort(&cfg.cohort_config())?),
    }
}
