//! Z-score scaling of continuous features using training-set statistics.
//!
//! Standard deviations use the population convention (divide by `n`).
//! Binary and ordinal columns are never touched; a constant continuous column
//! passes through unchanged.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;

/// Scale parameters for one continuous column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub index: usize,
    pub mean: f64,
    /// `None` for a constant column, which passes through unscaled.
    pub sd: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub columns: Vec<ColumnScale>,
}

impl ScalerParams {
    /// Identity transform.
    pub fn identity() -> Self {
        Self::default()
    }

    /// Fits mean and population sd for every continuous column of `train`.
    pub fn fit(train: &Dataset) -> Self {
        let n = train.n_rows() as f64;
        let columns = train
            .schema()
            .continuous_indices()
            .into_iter()
            .map(|index| {
                let values = train.column(index);
                let mean = values.iter().sum::<f64>() / n;
                let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                let sd = var.sqrt();
                // Summation noise on a constant column leaves sd ~ 1e-16 · |mean|.
                let constant = !(sd > 1e-12 * mean.abs().max(1.0));
                if constant {
                    log::warn!(
                        "column `{}` is constant in training data; left unscaled",
                        train.schema().features()[index].name
                    );
                }
                ColumnScale {
                    index,
                    mean,
                    sd: (!constant).then_some(sd),
                }
            })
            .collect();
        Self { columns }
    }

    pub fn apply_row(&self, row: &mut [f64]) {
        for col in &self.columns {
            if let Some(sd) = col.sd {
                row[col.index] = (row[col.index] - col.mean) / sd;
            }
        }
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        let mut out = row.to_vec();
        self.apply_row(&mut out);
        out
    }

    pub fn apply(&self, data: &Dataset) -> Dataset {
        let mut x = data.values().to_vec();
        if data.width() > 0 {
            for row in x.chunks_exact_mut(data.width()) {
                self.apply_row(row);
            }
        }
        data.with_values(x)
    }
}

/// Scales `train` with its own statistics and every dataset in `others`
/// with the same parameters.
pub fn standardize(train: &Dataset, others: &[&Dataset]) -> (Dataset, Vec<Dataset>, ScalerParams) {
    let params = ScalerParams::fit(train);
    let scaled_train = params.apply(train);
    let scaled_others = others.iter().map(|d| params.apply(d)).collect();
    (scaled_train, scaled_others, params)
}
