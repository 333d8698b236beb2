//! Differentiable graph attention scorer and classifier.
//!
//! [`tape`] provides reverse-mode differentiation over dense matrices,
//! [`layers`] the attention message passing and pooling, [`model`] the full
//! network, and [`train`] the two training loops.

pub mod layers;
pub mod loss;
pub mod model;
pub mod optim;
pub mod tape;
pub mod train;

pub use loss::{bce_with_logits, bce_with_logits_grad, margin_ranking_grad, margin_ranking_loss};
pub use model::{Gradients, HyperParams, ModelParams, Trace};
pub use train::{
    classification_accuracy, ranking_accuracy, score_all, train_classifier, train_scorer, EpochStats, LabeledGraph,
    PairExample, TrainConfig, TrainOutcome,
};
