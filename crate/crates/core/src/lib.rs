//! Binary classification of tabular clinical records.
//!
//! The crate bundles three classifiers (a ReLU multilayer perceptron trained
//! with Adam on a squared-error loss, an RBF-kernel SVM solved with SMO, and a
//! bagged random forest of Gini trees) together with the pieces needed to run
//! a reproducible evaluation: a typed feature schema, delimited-text ingest,
//! z-score scaling, a synthetic cohort generator, stratified splitting and
//! k-fold plans, grid search, confusion-matrix metrics with confidence
//! intervals, and ROC/AUC.
//!
//! Every random choice is drawn from a ChaCha stream derived from an explicit
//! seed, so all training and evaluation entry points are pure functions of
//! their inputs and seed.

pub mod ann;
pub mod cohort;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod exec;
pub mod forest;
pub mod model;
pub mod model_io;
pub mod rng;
pub mod scaler;
pub mod schema;
pub mod svm;

pub use dataset::Dataset;
pub use error::{Error, Result};
pub use model::{Classifier, Hyperparams, Model, ModelKind};
pub use schema::FeatureSchema;
