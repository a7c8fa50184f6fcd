//! `reveal`: generate cohorts, render reports, train alignment heads and run
//! the evaluation battery.
//!
//! Settings are layered: the JSON `--config` file, then `REVEAL_*`
//! environment variables, then flags. Every command writes its outputs and a
//! `manifest.json` into `--out`.
//!
//! Exit codes: 0 on success, 1 on a runtime failure, 2 on a usage or
//! configuration error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use reveal_core::align::{ImageSimilaritySource, LossKind};
use reveal_core::downstream::Variant;
use reveal_core::experiments::{ExperimentKind, Task};
use reveal_core::gacl::Combiner;

#[derive(Debug, Parser)]
#[command(
    name = "reveal",
    version,
    about = "Group-aware contrastive alignment and incident-disease evaluation"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON pipeline config; fields left out keep their defaults.
    #[arg(long, global = true, env = "REVEAL_CONFIG")]
    pub config: Option<PathBuf>,
    /// Cohort seed for gen-cohort, first training seed elsewhere.
    #[arg(long, global = true, env = "REVEAL_SEED")]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum, env = "REVEAL_TASK")]
    pub task: Option<TaskArg>,
    #[arg(long, global = true, value_enum, env = "REVEAL_LOSS")]
    pub loss: Option<LossArg>,
    #[arg(long, global = true, value_enum, env = "REVEAL_COMBINER")]
    pub combiner: Option<CombinerArg>,
    #[arg(long, global = true, value_enum, env = "REVEAL_SIMILARITY_SOURCE")]
    pub similarity_source: Option<SourceArg>,
    #[arg(long, global = true, value_enum, env = "REVEAL_VARIANT")]
    pub variant: Option<VariantArg>,
    /// Number of seed repeats.
    #[arg(long, global = true, env = "REVEAL_N_SEEDS")]
    pub n_seeds: Option<usize>,
    /// Training epochs for the alignment heads.
    #[arg(long, global = true, env = "REVEAL_EPOCHS")]
    pub epochs: Option<usize>,
    /// Output directory, created if absent.
    #[arg(long, global = true, env = "REVEAL_OUT", default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "REVEAL_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort CSV.
    GenCohort,
    /// Render one clinical report per subject as JSONL.
    RenderReports {
        #[arg(long)]
        cohort: PathBuf,
        /// Also write one text file per subject into this directory.
        #[arg(long)]
        txt_dir: Option<PathBuf>,
    },
    /// Train the alignment heads and write a checkpoint and training log.
    TrainAlign {
        #[command(flatten)]
        input: CohortInput,
        /// Also write the label matrix of the validation rows.
        #[arg(long)]
        labels: bool,
    },
    /// Evaluate a checkpoint, a freshly trained model, or a whole experiment.
    Evaluate {
        #[command(flatten)]
        input: CohortInput,
        #[arg(long, conflicts_with = "experiment")]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum)]
        experiment: Option<KindArg>,
    },
    /// Retrain with one threshold at a time moved over the dev quartiles.
    SweepThresholds {
        #[command(flatten)]
        input: CohortInput,
    },
    /// Morphometry versus image-latent similarity; both tasks unless --task is set.
    AblateSimilarity {
        #[command(flatten)]
        input: CohortInput,
    },
    /// OR versus AND label combination; both tasks unless --task is set.
    AblateCombiner {
        #[command(flatten)]
        input: CohortInput,
    },
    /// Run any experiment kind.
    Experiment {
        #[command(flatten)]
        input: CohortInput,
        #[arg(long, value_enum)]
        kind: KindArg,
    },
    /// Random search over optimizer settings, beta and thresholds.
    Tune {
        #[command(flatten)]
        input: CohortInput,
        #[arg(long, default_value_t = 20)]
        trials: usize,
    },
}

#[derive(Debug, Clone, Args)]
pub struct CohortInput {
    /// Cohort CSV; generated from the config when omitted.
    #[arg(long)]
    pub cohort: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TaskArg {
    Ad,
    Dementia,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LossArg {
    Gacl,
    Infonce,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CombinerArg {
    Or,
    And,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SourceArg {
    Morphometry,
    Latent,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum VariantArg {
    Joint,
    ImageOnly,
    TextOnly,
    ImagePlusTable,
    Tabular,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum KindArg {
    Main,
    AblateGacl,
    AblateCombiner,
    AblateSimilaritySource,
    AblateComponents,
    ThresholdSweep,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Ad => Task::Ad,
            TaskArg::Dementia => Task::Dementia,
        }
    }
}

impl From<LossArg> for LossKind {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Gacl => LossKind::Gacl,
            LossArg::Infonce => LossKind::Infonce,
        }
    }
}

impl From<CombinerArg> for Combiner {
    fn from(c: CombinerArg) -> Self {
        match c {
            CombinerArg::Or => Combiner::Or,
            CombinerArg::And => Combiner::And,
        }
    }
}

impl From<SourceArg> for ImageSimilaritySource {
    fn from(s: SourceArg) -> Self {
        match s {
            SourceArg::Morphometry => ImageSimilaritySource::Morphometry,
            SourceArg::Latent => ImageSimilaritySource::Latent,
        }
    }
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Joint => Variant::Joint,
            VariantArg::ImageOnly => Variant::ImageOnly,
            VariantArg::TextOnly => Variant::TextOnly,
            VariantArg::ImagePlusTable => Variant::ImagePlusTable,
            VariantArg::Tabular => Variant::Tabular,
        }
    }
}

impl From<KindArg> for ExperimentKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Main => ExperimentKind::Main,
            KindArg::AblateGacl => ExperimentKind::AblateGacl,
            KindArg::AblateCombiner => ExperimentKind::AblateCombiner,
            KindArg::AblateSimilaritySource => ExperimentKind::AblateSimilaritySource,
            KindArg::AblateComponents => ExperimentKind::AblateComponents,
            KindArg::ThresholdSweep => ExperimentKind::ThresholdSweep,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(config::exit_code(&e))
        }
    }
}
