//! The end-to-end evaluation protocol.
//!
//! 1. Stratified hold-out split of the whole dataset.
//! 2. Optional grid search on the training part (stratified K-fold CV).
//! 3. One model per CV fold, each trained (and scaled) on its K−1 training
//!    folds.
//! 4. Every fold model is scored on the untouched test part.
//! 5. Metrics are averaged over fold models with a t-interval; the ROC curve
//!    uses the fold-mean test scores.
//!
//! The alternative mode retrains one model on the full training part and
//! bootstraps the test set for intervals.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::eval::grid::{grid_search, GridResult};
use crate::eval::metrics::{confusion, fold_ci, metrics, percentile_ci, ConfidenceInterval, ConfusionMatrix, Metric, MetricSet};
use crate::eval::roc::{roc_curve, RocCurve};
use crate::eval::split::{stratified_kfold, stratified_split, FoldPlan, SplitPlan};
use crate::exec::Exec;
use crate::model::{fit_classifier, Classifier, Hyperparams, ModelKind, TrainSummary};
use crate::rng::{derive_seed, derive_seed2, stream_rng, streams};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolMode {
    /// Fold models scored on the test set; t-interval across folds.
    #[default]
    FoldOnTest,
    /// One model on the full training set; bootstrap interval on the test set.
    RetrainBootstrap,
}

impl fmt::Display for ProtocolMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProtocolMode::FoldOnTest => "fold-on-test",
            ProtocolMode::RetrainBootstrap => "retrain-bootstrap",
        })
    }
}

impl FromStr for ProtocolMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fold-on-test" => Ok(ProtocolMode::FoldOnTest),
            "retrain-bootstrap" => Ok(ProtocolMode::RetrainBootstrap),
            _ => Err(Error::InvalidInput(format!("unknown protocol `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub k: usize,
    pub test_fraction: f64,
    pub mode: ProtocolMode,
    pub bootstrap_resamples: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            k: 5,
            test_fraction: 0.2,
            mode: ProtocolMode::FoldOnTest,
            bootstrap_resamples: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitSummary {
    pub train_rows: usize,
    pub train_positives: usize,
    pub test_rows: usize,
    pub test_positives: usize,
}

/// One trained model's performance on the test set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    /// Fold index, or `None` for the model retrained on the full train set.
    pub fold: Option<usize>,
    pub train_rows: usize,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricSet,
    pub training: TrainSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSummary {
    pub metric: Metric,
    /// `None` when the metric was undefined for every evaluation.
    pub interval: Option<ConfidenceInterval>,
    /// Evaluations where the metric was undefined and left out.
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelReport {
    pub kind: ModelKind,
    pub mode: ProtocolMode,
    pub hyperparams: Hyperparams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridResult>,
    pub split: SplitSummary,
    pub evaluations: Vec<Evaluation>,
    pub summary: Vec<MetricSummary>,
    pub roc: RocCurve,
}

impl ModelReport {
    pub fn interval(&self, metric: Metric) -> Option<&ConfidenceInterval> {
        self.summary
            .iter()
            .find(|s| s.metric == metric)
            .and_then(|s| s.interval.as_ref())
    }

    pub fn mean(&self, metric: Metric) -> Option<f64> {
        self.interval(metric).map(|ci| ci.mean)
    }
}

/// Trains one classifier per fold of `plan` over `train`.
pub fn train_fold_models(
    train: &Dataset,
    plan: &FoldPlan,
    hp: &Hyperparams,
    seed: u64,
    exec: &Exec,
) -> Result<Vec<(Classifier, TrainSummary)>> {
    let inner = if exec.threads() > 1 {
        Exec::sequential()
    } else {
        *exec
    };
    exec.map((0..plan.k()).collect(), |fold| {
        let rows = train.subset(&plan.training_indices(fold));
        fit_classifier(&rows, hp, derive_seed2(seed, streams::MODEL, fold as u64), &inner)
    })
    .into_iter()
    .collect()
}

fn compact(mut t: TrainSummary) -> TrainSummary {
    // Per-epoch losses would dominate the report; `final_loss` stays.
    t.epoch_loss = None;
    t
}

fn evaluate(clf: &Classifier, test: &Dataset) -> Result<(Vec<u8>, Vec<f64>, ConfusionMatrix, MetricSet)> {
    let preds = clf.predict_dataset(test)?;
    let labels: Vec<u8> = preds.iter().map(|p| p.0).collect();
    let scores: Vec<f64> = preds.iter().map(|p| p.1).collect();
    let cm = confusion(&labels, test.labels())?;
    let mut m = metrics(&cm);
    m.auc = roc_curve(&scores, test.labels()).ok().map(|r| r.auc);
    Ok((labels, scores, cm, m))
}

fn summarize_folds(evals: &[Evaluation]) -> Result<Vec<MetricSummary>> {
    Metric::ALL
        .iter()
        .map(|&metric| {
            let values: Vec<f64> = evals.iter().filter_map(|e| metric.get(&e.metrics)).collect();
            Ok(MetricSummary {
                metric,
                interval: if values.is_empty() { None } else { Some(fold_ci(&values)?) },
                excluded: evals.len() - values.len(),
            })
        })
        .collect()
}

fn summarize_bootstrap(
    point: &MetricSet,
    labels: &[u8],
    predicted: &[u8],
    scores: &[f64],
    resamples: usize,
    seed: u64,
) -> Result<Vec<MetricSummary>> {
    let mut rng = stream_rng(seed, 0);
    let n = labels.len();
    let mut samples: Vec<Vec<f64>> = vec![Vec::new(); Metric::ALL.len()];
    let (mut l, mut p, mut s) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..resamples {
        l.clear();
        p.clear();
        s.clear();
        for _ in 0..n {
            let i = rng.random_range(0..n);
            l.push(labels[i]);
            p.push(predicted[i]);
            s.push(scores[i]);
        }
        let mut m = metrics(&confusion(&p, &l)?);
        m.auc = roc_curve(&s, &l).ok().map(|r| r.auc);
        for (slot, metric) in samples.iter_mut().zip(Metric::ALL) {
            if let Some(v) = metric.get(&m) {
                slot.push(v);
            }
        }
    }
    Ok(Metric::ALL
        .iter()
        .zip(samples)
        .map(|(&metric, values)| MetricSummary {
            metric,
            interval: metric.get(point).map(|v| percentile_ci(v, &values)),
            excluded: resamples - values.len(),
        })
        .collect())
}

/// Runs the protocol for one model family.
///
/// `grid` with two or more cells triggers CV selection on the training part;
/// a single cell is used as-is. All randomness derives from `seed`, so the
/// report is identical for any `exec`.
pub fn run_protocol(
    data: &Dataset,
    hp: &Hyperparams,
    grid: Option<&[Hyperparams]>,
    config: &ProtocolConfig,
    seed: u64,
    exec: &Exec,
) -> Result<ModelReport> {
    let plan: SplitPlan = stratified_split(data.labels(), config.test_fraction, derive_seed(seed, streams::SPLIT))?;
    let train = data.subset(&plan.train);
    let test = data.subset(&plan.test);
    test.require_both_classes()?;

    let (hp, grid_result) = match grid {
        Some([]) => return Err(Error::InvalidInput("empty hyperparameter grid".into())),
        Some([only]) => (only.clone(), None),
        Some(cells) => {
            let result = grid_search(&train, cells, config.k, derive_seed(seed, streams::GRID), exec)?;
            (result.best_hyperparams.clone(), Some(result))
        }
        None => (hp.clone(), None),
    };

    let split = SplitSummary {
        train_rows: train.n_rows(),
        train_positives: train.positives(),
        test_rows: test.n_rows(),
        test_positives: test.positives(),
    };

    let (evaluations, summary, roc) = match config.mode {
        ProtocolMode::FoldOnTest => {
            let all: Vec<usize> = (0..train.n_rows()).collect();
            let folds = stratified_kfold(&all, train.labels(), config.k, derive_seed(seed, streams::FOLDS))?;
            let models = train_fold_models(&train, &folds, &hp, seed, exec)?;
            let mut evaluations = Vec::new();
            let mut mean_scores = vec![0.0; test.n_rows()];
            for (fold, (clf, training)) in models.into_iter().enumerate() {
                let (_, scores, cm, m) = evaluate(&clf, &test)?;
                for (acc, s) in mean_scores.iter_mut().zip(&scores) {
                    *acc += s;
                }
                evaluations.push(Evaluation {
                    fold: Some(fold),
                    train_rows: train.n_rows() - folds.folds[fold].len(),
                    confusion: cm,
                    metrics: m,
                    training: compact(training),
                });
            }
            let k = evaluations.len() as f64;
            mean_scores.iter_mut().for_each(|s| *s /= k);
            let summary = summarize_folds(&evaluations)?;
            (evaluations, summary, roc_curve(&mean_scores, test.labels())?)
        }
        ProtocolMode::RetrainBootstrap => {
            let (clf, training) = fit_classifier(&train, &hp, derive_seed(seed, streams::MODEL), exec)?;
            let (predicted, scores, cm, m) = evaluate(&clf, &test)?;
            let summary = summarize_bootstrap(
                &m,
                test.labels(),
                &predicted,
                &scores,
                config.bootstrap_resamples,
                derive_seed(seed, streams::BOOTSTRAP),
            )?;
            let evaluation = Evaluation {
                fold: None,
                train_rows: train.n_rows(),
                confusion: cm,
                metrics: m,
                training: compact(training),
            };
            (vec![evaluation], summary, roc_curve(&scores, test.labels())?)
        }
    };

    Ok(ModelReport {
        kind: hp.kind(),
        mode: config.mode,
        hyperparams: hp,
        grid: grid_result,
        split,
        evaluations,
        summary,
        roc,
    })
}
