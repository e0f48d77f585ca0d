//! Topic-specific hate-speech scoring: logistic regression over text
//! embeddings with out-of-fold monotone calibration.

mod active;
mod calibration;
mod embedding;
mod eval;
mod labeled;
mod model;

use thiserror::Error;

pub use active::select_active_batch;
pub use calibration::Calibration;
pub use embedding::{
    cosine, embed, EmbeddingProvider, EmbeddingVector, HashedBagOfWords, RemoteEmbeddingProvider,
    LOCAL_DIM,
};
pub use eval::{threshold_sweep, Confusion, SweepPoint};
pub use labeled::{embed_labeled, load_labeled_texts, LabeledText};
pub use model::{
    predict, train, HateModel, Label, LabeledExample, Prediction, TrainConfig, MODEL_FORMAT_VERSION,
};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("embedding provider failed: {0}")]
    TransientProvider(String),
    #[error("degenerate training set: {0}")]
    DegenerateTraining(String),
    #[error("model file: {0}")]
    ModelFormat(String),
}
