//! Desk-scale long-tailed classification: synthetic data with exponentially
//! decaying class counts, instance- and class-balanced samplers, a small
//! feedforward encoder, SGD with momentum on a cosine schedule, and decoupled
//! two-stage training.

mod dataset;
mod encoder;
mod eval;
mod optim;
mod sampler;
mod train;

pub use dataset::{class_counts, generate_dataset, DatasetSpec, LongTailDataset, Split};
pub use encoder::{Dense, Encoder, EncoderCache, EncoderGradients};
pub use eval::{evaluate, score, Accuracy, FrequencyGroup, GroupThresholds};
pub use optim::{cosine_lr, Sgd};
pub use sampler::{class_balanced_batches, instance_balanced_batches};
pub use train::{
    init_model, train_decoupled, train_decoupled_with, ConcInit, Model, Stage, TrainConfig, TrainRecord,
    MIN_SCALE, MODEL_FORMAT_VERSION,
};
