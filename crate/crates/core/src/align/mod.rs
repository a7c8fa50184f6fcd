//! Projection heads, contrastive objectives, training and hyperparameter search.

mod checkpoint;
mod head;
mod loss;
mod optim;
mod train;
mod tune;

pub use checkpoint::{config_hash, Checkpoint, CHECKPOINT_VERSION};
pub use head::{encode_with, AlignmentModel, EmbeddingPair, Encoded, HeadWeights, ProjectionHead};
pub use loss::{
    batch_loss, cosine_matrix, gacl_loss, gacl_loss_grad_s, infonce_loss, infonce_loss_grad_s, loss_and_grad,
    pair_term, sigmoid, softplus, Gradients, LossKind,
};
pub use optim::AdamW;
pub use train::{
    batch_labels, init_model, initial_model, train, AlignmentData, EpochRecord, ImageSimilaritySource,
    MorphometryNormalization, TrainConfig, TrainLog,
};
pub use tune::{
    dev_threshold_ranges, development_subset, random_search, tune, val_loss_objective, Direction, Range, Scale,
    SearchSpace, Trial, TuneResult,
};
