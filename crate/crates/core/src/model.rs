//! Uniform interface over the three classifier families.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ann::{self, AnnHyperparams, AnnModel};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::forest::{self, ForestHyperparams, ForestModel};
use crate::scaler::ScalerParams;
use crate::svm::{self, SvmHyperparams, SvmModel};

/// Decision threshold applied to every model's score.
pub const THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ann,
    Svm,
    Forest,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Ann, ModelKind::Svm, ModelKind::Forest];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Ann => "ann",
            ModelKind::Svm => "svm",
            ModelKind::Forest => "forest",
        }
    }

    /// Label used in comparison tables.
    pub fn display_name(&self) -> &'static str {
        match self {
            ModelKind::Ann => "ANN",
            ModelKind::Svm => "SVM",
            ModelKind::Forest => "Random forest",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ann" => Ok(ModelKind::Ann),
            "svm" => Ok(ModelKind::Svm),
            "forest" | "rf" => Ok(ModelKind::Forest),
            _ => Err(Error::InvalidInput(format!("unknown model kind `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hyperparams {
    Ann(AnnHyperparams),
    Svm(SvmHyperparams),
    Forest(ForestHyperparams),
}

impl Hyperparams {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Ann => Hyperparams::Ann(AnnHyperparams::default()),
            ModelKind::Svm => Hyperparams::Svm(SvmHyperparams::default()),
            ModelKind::Forest => Hyperparams::Forest(ForestHyperparams::default()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Hyperparams::Ann(_) => ModelKind::Ann,
            Hyperparams::Svm(_) => ModelKind::Svm,
            Hyperparams::Forest(_) => ModelKind::Forest,
        }
    }

    pub fn validate(&self, width: usize) -> Result<()> {
        match self {
            Hyperparams::Ann(hp) => hp.validate(),
            Hyperparams::Svm(hp) => hp.validate(),
            Hyperparams::Forest(hp) => hp.validate(width),
        }
    }

    /// Short one-line description for tables.
    pub fn describe(&self) -> String {
        match self {
            Hyperparams::Ann(hp) => format!(
                "lr={} batch={} hidden={:?} epochs={}",
                hp.learning_rate, hp.batch_size, hp.hidden, hp.epochs
            ),
            Hyperparams::Svm(hp) => format!("C={} gamma={}", hp.c, hp.gamma),
            Hyperparams::Forest(hp) => format!(
                "trees={} features_per_split={:?} max_depth={:?}",
                hp.n_trees, hp.features_per_split, hp.max_depth
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Ann(AnnModel),
    Svm(SvmModel),
    Forest(ForestModel),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Ann(_) => ModelKind::Ann,
            Model::Svm(_) => ModelKind::Svm,
            Model::Forest(_) => ModelKind::Forest,
        }
    }

    pub fn width(&self) -> usize {
        match self {
            Model::Ann(m) => m.architecture().input_width,
            Model::Svm(m) => m.dim(),
            Model::Forest(m) => m.width(),
        }
    }

    /// `(label, score)` for an already-scaled row.
    pub fn predict(&self, x: &[f64]) -> Result<(u8, f64)> {
        if x.len() != self.width() {
            return Err(Error::InvalidInput(format!(
                "row has {} values, model expects {}",
                x.len(),
                self.width()
            )));
        }
        Ok(match self {
            Model::Ann(m) => {
                let score = m.forward(x)?;
                (ann::classify(score, THRESHOLD), score)
            }
            Model::Svm(m) => m.predict(x),
            Model::Forest(m) => m.predict(x),
        })
    }
}

/// Per-run training diagnostics.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainSummary {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epoch_loss: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smo_iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smo_converged: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub support_vectors: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trees: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_tree_depth: Option<f64>,
}

/// A trained model together with the scaling fitted on its training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub scaler: ScalerParams,
    pub model: Model,
}

impl Classifier {
    /// Scales a raw row and predicts.
    pub fn predict(&self, raw: &[f64]) -> Result<(u8, f64)> {
        let x = self.scaler.transform_row(raw);
        self.model.predict(&x)
    }

    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<(u8, f64)>> {
        let mut x = vec![0.0; data.width()];
        data.rows()
            .map(|row| {
                x.copy_from_slice(row);
                self.scaler.apply_row(&mut x);
                self.model.predict(&x)
            })
            .collect()
    }
}

/// Fits scaling on `train`, then trains the model described by `hp`.
pub fn fit_classifier(
    train: &Dataset,
    hp: &Hyperparams,
    seed: u64,
    exec: &Exec,
) -> Result<(Classifier, TrainSummary)> {
    hp.validate(train.width())?;
    train.require_both_classes()?;
    let scaler = ScalerParams::fit(train);
    let scaled = scaler.apply(train);
    let mut summary = TrainSummary::default();
    let model = match hp {
        Hyperparams::Ann(hp) => {
            let (model, trace) = ann::train_ann(&scaled, hp, seed)?;
            summary.final_loss = trace.epoch_loss.last().copied();
            summary.epoch_loss = Some(trace.epoch_loss);
            Model::Ann(model)
        }
        Hyperparams::Svm(hp) => {
            let (model, solution) = svm::train_svm_detailed(&scaled, hp, seed, false)?;
            summary.smo_iterations = Some(solution.iterations);
            summary.smo_converged = Some(solution.converged);
            summary.support_vectors = Some(model.n_support());
            Model::Svm(model)
        }
        Hyperparams::Forest(hp) => {
            let model = forest::train_forest(&scaled, hp, seed, exec)?;
            let depth: usize = model.trees().iter().map(|t| t.depth()).sum();
            summary.trees = Some(model.trees().len());
            summary.mean_tree_depth = Some(depth as f64 / model.trees().len() as f64);
            Model::Forest(model)
        }
    };
    Ok((Classifier { scaler, model }, summary))
}
