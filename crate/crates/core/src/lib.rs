//! Rule-aware content moderation.
//!
//! Community rules are distilled into LDA topics, each topic is embedded as a
//! probability-weighted sum of its top-word embeddings, and a post is scored by
//! one logistic classifier per rule topic. The per-topic scores are combined
//! either by equal-weight soft voting or by softmax-normalized cosine
//! affiliation between the post and each rule topic.
//!
//! The crate also carries the evaluation harness used to compare the model
//! against rule-free and TF-IDF baselines: stratified k-fold cross-validation,
//! paired t-tests, ablation runs and a synthetic corpus generator.

pub mod baselines;
pub mod corpus;
pub mod embeddings;
mod error;
pub mod eval;
pub mod model;
pub mod optim;
pub mod rules;
pub mod textprep;
pub mod topics;

pub use error::{Error, Result};
