//! Hyperparameter grid search by stratified K-fold CV accuracy.

use serde::{Deserialize, Serialize};

use crate::ann::AnnHyperparams;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::eval::metrics::{confusion, metrics};
use crate::eval::split::{stratified_kfold, FoldPlan};
use crate::exec::Exec;
use crate::forest::{FeaturesPerSplit, ForestHyperparams};
use crate::model::{fit_classifier, Hyperparams, ModelKind};
use crate::rng::{derive_seed2, streams};
use crate::svm::{Gamma, SvmHyperparams};

/// Candidate values per tunable dimension. Cells are the cartesian product
/// with the first-listed dimension varying slowest; unlisted fields keep
/// the base hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridSpec {
    Ann {
        learning_rate: Vec<f64>,
        batch_size: Vec<usize>,
        hidden_width: Vec<usize>,
        hidden_layers: Vec<usize>,
    },
    Svm {
        c: Vec<f64>,
        gamma: Vec<Gamma>,
    },
    Forest {
        n_trees: Vec<usize>,
        features_per_split: Vec<FeaturesPerSplit>,
    },
}

impl GridSpec {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Ann => GridSpec::Ann {
                learning_rate: vec![0.001, 0.01, 0.1],
                batch_size: vec![16, 32, 64],
                hidden_width: vec![50, 100, 200],
                hidden_layers: vec![1, 2],
            },
            ModelKind::Svm => GridSpec::Svm {
                c: vec![0.1, 1.0, 10.0, 100.0],
                gamma: vec![Gamma::InverseWidth, Gamma::Value(0.01), Gamma::Value(0.1), Gamma::Value(1.0)],
            },
            ModelKind::Forest => GridSpec::Forest {
                n_trees: vec![100],
                features_per_split: vec![FeaturesPerSplit::Sqrt, FeaturesPerSplit::All],
            },
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            GridSpec::Ann { .. } => ModelKind::Ann,
            GridSpec::Svm { .. } => ModelKind::Svm,
            GridSpec::Forest { .. } => ModelKind::Forest,
        }
    }

    /// Expands into cells, filling other fields from `base` (or the kind's
    /// defaults when `base` is of another kind).
    pub fn cells(&self, base: &Hyperparams) -> Vec<Hyperparams> {
        let base = if base.kind() == self.kind() {
            base.clone()
        } else {
            Hyperparams::default_for(self.kind())
        };
        let mut out = Vec::new();
        match (self, base) {
            (
                GridSpec::Ann {
                    learning_rate,
                    batch_size,
                    hidden_width,
                    hidden_layers,
                },
                Hyperparams::Ann(base),
            ) => {
                for &lr in learning_rate {
                    for &batch in batch_size {
                        for &width in hidden_width {
                            for &layers in hidden_layers {
                                out.push(Hyperparams::Ann(AnnHyperparams {
                                    learning_rate: lr,
                                    batch_size: batch,
                                    hidden: vec![width; layers],
                                    ..base.clone()
                                }));
                            }
                        }
                    }
                }
            }
            (GridSpec::Svm { c, gamma }, Hyperparams::Svm(base)) => {
                for &c in c {
                    for &g in gamma {
                        out.push(Hyperparams::Svm(SvmHyperparams {
                            c,
                            gamma: g,
                            ..base.clone()
                        }));
                    }
                }
            }
            (
                GridSpec::Forest {
                    n_trees,
                    features_per_split,
                },
                Hyperparams::Forest(base),
            ) => {
                for &t in n_trees {
                    for &f in features_per_split {
                        out.push(Hyperparams::Forest(ForestHyperparams {
                            n_trees: t,
                            features_per_split: f,
                            ..base.clone()
                        }));
                    }
                }
            }
            _ => unreachable!("base kind matched above"),
        }
        out
    }
}

/// Validation accuracy of one cell on one fold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvEntry {
    pub cell: usize,
    pub fold: usize,
    /// `None` when training diverged on this fold.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellScore {
    pub cell: usize,
    pub hyperparams: Hyperparams,
    pub mean_accuracy: Option<f64>,
    pub completed_folds: usize,
    /// Training diverged on at least one fold.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridResult {
    pub best: usize,
    pub best_hyperparams: Hyperparams,
    pub cells: Vec<CellScore>,
    pub table: Vec<CvEntry>,
}

/// Scores every cell by mean validation accuracy over a stratified K-fold
/// plan of `train`. The highest mean wins; ties go to the earlier cell.
///
/// Model seeds depend only on the fold, so the result does not depend on
/// how `exec` schedules the work.
pub fn grid_search(train: &Dataset, grid: &[Hyperparams], k: usize, seed: u64, exec: &Exec) -> Result<GridResult> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty hyperparameter grid".into()));
    }
    let all: Vec<usize> = (0..train.n_rows()).collect();
    let plan = stratified_kfold(&all, train.labels(), k, seed)?;
    let jobs: Vec<(usize, usize)> = (0..grid.len()).flat_map(|c| (0..k).map(move |f| (c, f))).collect();
    let results = exec.map(jobs, |(cell, fold)| {
        // Cells share per-fold seeds so they differ only in hyperparameters.
        let job_seed = derive_seed2(seed, streams::MODEL, fold as u64);
        fold_accuracy(train, &plan, fold, &grid[cell], job_seed).map(|acc| CvEntry { cell, fold, accuracy: acc })
    });
    let table = results.into_iter().collect::<Result<Vec<_>>>()?;

    let cells: Vec<CellScore> = grid
        .iter()
        .enumerate()
        .map(|(cell, hp)| {
            let scores: Vec<f64> = table
                .iter()
                .filter(|e| e.cell == cell)
                .filter_map(|e| e.accuracy)
                .collect();
            CellScore {
                cell,
                hyperparams: hp.clone(),
                mean_accuracy: (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64),
                completed_folds: scores.len(),
                flagged: scores.len() < k,
            }
        })
        .collect();

    let mut best: Option<(usize, f64)> = None;
    for c in &cells {
        if let Some(acc) = c.mean_accuracy {
            if best.is_none_or(|(_, b)| acc > b) {
                best = Some((c.cell, acc));
            }
        }
    }
    let (best, _) = best.ok_or_else(|| Error::Divergence("every grid cell diverged".into()))?;
    Ok(GridResult {
        best,
        best_hyperparams: grid[best].clone(),
        cells,
        table,
    })
}

fn fold_accuracy(train: &Dataset, plan: &FoldPlan, fold: usize, hp: &Hyperparams, seed: u64) -> Result<Option<f64>> {
    let fit_rows = train.subset(&plan.training_indices(fold));
    let validation = train.subset(&plan.folds[fold]);
    // Nested parallelism would oversubscribe; the outer map owns the threads.
    let clf = match fit_classifier(&fit_rows, hp, seed, &Exec::sequential()) {
        Ok((clf, _)) => clf,
        Err(Error::Divergence(msg)) => {
            log::warn!("grid cell {} diverged on fold {fold}: {msg}", hp.describe());
            return Ok(None);
        }
        Err(e) => return Err(e),
    };
    let predicted: Vec<u8> = clf.predict_dataset(&validation)?.into_iter().map(|(l, _)| l).collect();
    let cm = confusion(&predicted, validation.labels())?;
    Ok(metrics(&cm).accuracy)
}
