//! Weight-space trajectory classification: stacks INR parameter streams into
//! row matrices, encodes them row-wise with a shared map plus column-wise max
//! pooling, and trains a binary classifier on the pooled latents.

mod io;
mod model;
mod stack;

pub use io::{read_classifier, write_classifier, CLASSIFIER_MAGIC};
pub use model::{
    classify_matrix, classify_trajectory, encode, history_csv, train_classifier, BlockParams,
    ClassifierConfig, EncoderClassifier, EpochStats,
};
pub use stack::{stack_stream_params, stacked_entry_count, StreamMatrix, StreamSelection};
