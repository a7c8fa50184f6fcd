//! Downstream incident-disease classification on learned embeddings.

mod cv;
mod features;
mod metrics;
mod report;
mod stats;
mod svm;

pub use cv::{
    cross_validate, evaluate_split, fit_calibrated, stratified_folds, take_rows, CvConfig, CvResult, CvRow,
    SplitEvaluation,
};
pub use features::{build_features, row_norms, tabular_columns, tabular_matrix, Standardizer, Variant};
pub use metrics::{auroc, metrics, Confusion, Metrics};
pub use report::{
    compare, format_table, write_predictions_csv, ArmReport, Comparison, EvalReport, PredictionRow, SeedResult,
};
pub use stats::{hedges_g, mean_std, welch_t, WelchResult};
pub use svm::{
    decision_on_kernel, fit_on_kernel, kernel_matrix, rbf_kernel, smo, train_svm, ClassWeights, DualSolution, Platt,
    SvmModel, SvmParams,
};
