//! Confusion counts, the five threshold metrics and their intervals.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn confusion(predicted: &[u8], truth: &[u8]) -> Result<ConfusionMatrix> {
    if predicted.len() != truth.len() || predicted.is_empty() {
        return Err(Error::InvalidInput(format!(
            "confusion needs equal non-empty lengths, got {} and {}",
            predicted.len(),
            truth.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in predicted.iter().zip(truth) {
        match (p == 1, t == 1) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, false) => cm.tn += 1,
            (false, true) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

/// `None` marks a metric whose denominator is zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct MetricSet {
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics(cm: &ConfusionMatrix) -> MetricSet {
    MetricSet {
        accuracy: ratio(cm.tp + cm.tn, cm.total()),
        sensitivity: ratio(cm.tp, cm.tp + cm.fn_),
        specificity: ratio(cm.tn, cm.tn + cm.fp),
        ppv: ratio(cm.tp, cm.tp + cm.fp),
        npv: ratio(cm.tn, cm.tn + cm.fn_),
        auc: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Accuracy,
    Sensitivity,
    Specificity,
    Ppv,
    Npv,
    Auc,
}

impl Metric {
    /// The five threshold metrics in table order.
    pub const THRESHOLD: [Metric; 5] = [
        Metric::Accuracy,
        Metric::Sensitivity,
        Metric::Specificity,
        Metric::Ppv,
        Metric::Npv,
    ];

    pub const ALL: [Metric; 6] = [
        Metric::Accuracy,
        Metric::Sensitivity,
        Metric::Specificity,
        Metric::Ppv,
        Metric::Npv,
        Metric::Auc,
    ];

    pub fn get(&self, m: &MetricSet) -> Option<f64> {
        match self {
            Metric::Accuracy => m.accuracy,
            Metric::Sensitivity => m.sensitivity,
            Metric::Specificity => m.specificity,
            Metric::Ppv => m.ppv,
            Metric::Npv => m.npv,
            Metric::Auc => m.auc,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Metric::Accuracy => "Accuracy",
            Metric::Sensitivity => "Sensitivity",
            Metric::Specificity => "Specificity",
            Metric::Ppv => "PPV",
            Metric::Npv => "NPV",
            Metric::Auc => "AUC",
        }
    }
}

pub const CI_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConfidenceInterval {
    pub mean: f64,
    /// `None` when fewer than two values are available.
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub level: f64,
}

/// `mean ± t_{n−1, 0.975} · s / √n` with the sample sd, clipped to [0, 1].
pub fn fold_ci(values: &[f64]) -> Result<ConfidenceInterval> {
    if values.is_empty() {
        return Err(Error::InvalidInput("no values for a confidence interval".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return Ok(ConfidenceInterval {
            mean,
            lower: None,
            upper: None,
            level: CI_LEVEL,
        });
    }
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let t = StudentsT::new(0.0, 1.0, n - 1.0)
        .expect("n ≥ 2 gives positive degrees of freedom")
        .inverse_cdf(0.5 + CI_LEVEL / 2.0);
    let half = t * sd / n.sqrt();
    Ok(ConfidenceInterval {
        mean,
        lower: Some((mean - half).clamp(0.0, 1.0)),
        upper: Some((mean + half).clamp(0.0, 1.0)),
        level: CI_LEVEL,
    })
}

/// Percentile interval from resampled values around a point estimate.
///
/// Bounds are widened if needed so that they bracket `point`.
pub fn percentile_ci(point: f64, samples: &[f64]) -> ConfidenceInterval {
    if samples.len() < 2 {
        return ConfidenceInterval {
            mean: point,
            lower: None,
            upper: None,
            level: CI_LEVEL,
        };
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let quantile = |q: f64| {
        // Linear interpolation between closest ranks.
        let pos = q * (sorted.len() - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
    };
    let alpha = (1.0 - CI_LEVEL) / 2.0;
    ConfidenceInterval {
        mean: point,
        lower: Some(quantile(alpha).min(point).clamp(0.0, 1.0)),
        upper: Some(quantile(1.0 - alpha).max(point).clamp(0.0, 1.0)),
        level: CI_LEVEL,
    }
}
