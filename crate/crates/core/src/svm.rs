//! Soft-margin SVM with an RBF kernel, trained by sequential minimal
//! optimization on the dual.
//!
//! The dual is `max W(α) = Σαᵢ − ½ΣΣ αᵢαⱼyᵢyⱼk(xᵢ,xⱼ)` subject to
//! `0 ≤ αᵢ ≤ C` and `Σαᵢyᵢ = 0`. Each iteration picks the most violating
//! pair (first index by maximal KKT violation, second by largest
//! second-order gain), solves the two-variable subproblem in closed form and
//! clips to the box. The solver stops once the KKT gap drops below `tol`,
//! which guarantees every point meets its KKT condition on `yᵢf(xᵢ)` to
//! within `tol`. Ties in pair selection follow a seed-derived scan order.

use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Curvature floor for degenerate pairs (e.g. duplicated points).
const TAU: f64 = 1e-12;

/// RBF width, either fixed or `1 / width` of the training data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GammaRepr", into = "GammaRepr")]
pub enum Gamma {
    InverseWidth,
    Value(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum GammaRepr {
    Number(f64),
    Text(String),
}

impl TryFrom<GammaRepr> for Gamma {
    type Error = String;

    fn try_from(repr: GammaRepr) -> std::result::Result<Self, String> {
        match repr {
            GammaRepr::Number(v) => Ok(Gamma::Value(v)),
            GammaRepr::Text(s) if s == "1/p" || s == "auto" => Ok(Gamma::InverseWidth),
            GammaRepr::Text(s) => Err(format!("gamma must be a number or \"1/p\", got `{s}`")),
        }
    }
}

impl From<Gamma> for GammaRepr {
    fn from(g: Gamma) -> Self {
        match g {
            Gamma::InverseWidth => GammaRepr::Text("1/p".into()),
            Gamma::Value(v) => GammaRepr::Number(v),
        }
    }
}

impl fmt::Display for Gamma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gamma::InverseWidth => f.write_str("1/p"),
            Gamma::Value(v) => write!(f, "{v}"),
        }
    }
}

impl Gamma {
    pub fn resolve(&self, width: usize) -> f64 {
        match *self {
            Gamma::InverseWidth => 1.0 / width.max(1) as f64,
            Gamma::Value(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmHyperparams {
    pub c: f64,
    pub gamma: Gamma,
    pub tol: f64,
    /// Hard cap on pair updates, in units of the training-set size.
    pub max_passes: usize,
}

impl Default for SvmHyperparams {
    fn default() -> Self {
        Self {
            c: 10.0,
            gamma: Gamma::Value(0.01),
            tol: 1e-3,
            max_passes: 200,
        }
    }
}

impl SvmHyperparams {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        let gamma_ok = match self.gamma {
            Gamma::InverseWidth => true,
            Gamma::Value(g) => positive(g),
        };
        if !positive(self.c) || !gamma_ok || !positive(self.tol) || self.max_passes == 0 {
            return Err(Error::InvalidHyperparams(format!(
                "SVM needs C, gamma, tol > 0 and max_passes ≥ 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// `exp(−γ‖x − y‖²)`.
pub fn rbf_kernel(x: &[f64], y: &[f64], gamma: f64) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-gamma * d2).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    dim: usize,
    /// Row-major support vectors.
    support: Vec<f64>,
    /// `αᵢyᵢ` per support vector.
    coef: Vec<f64>,
    bias: f64,
    gamma: f64,
}

impl SvmModel {
    pub fn from_parts(
        dim: usize,
        support: Vec<f64>,
        coef: Vec<f64>,
        bias: f64,
        gamma: f64,
    ) -> Result<Self> {
        if support.len() != coef.len() * dim {
            return Err(Error::InvalidInput(format!(
                "{} support values for {} vectors of width {dim}",
                support.len(),
                coef.len()
            )));
        }
        let finite = support.iter().chain(&coef).all(|v| v.is_finite());
        if !finite || !bias.is_finite() || !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidInput("non-finite SVM parameter".into()));
        }
        Ok(Self {
            dim,
            support,
            coef,
            bias,
            gamma,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support_vectors(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        // `chunks_exact(0)` panics; a zero-width model has no vectors.
        self.support.chunks_exact(self.dim.max(1))
    }

    pub fn n_support(&self) -> usize {
        self.coef.len()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coef
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `f(x) = Σ αᵢyᵢ k(xᵢ, x) + b`.
    pub fn decision_value(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        self.support_vectors()
            .zip(&self.coef)
            .map(|(sv, c)| c * rbf_kernel(sv, x, self.gamma))
            .sum::<f64>()
            + self.bias
    }

    /// Label 1 iff `f(x) > 0`; the score is the logistic squash of `f(x)`.
    pub fn predict(&self, x: &[f64]) -> (u8, f64) {
        let f = self.decision_value(x);
        (u8::from(f > 0.0), crate::ann::sigmoid(f))
    }
}

/// Record of an instrumented solver run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SmoTrace {
    /// Dual objective after each accepted pair update, starting with the
    /// initial value 0.
    pub objective: Vec<f64>,
    /// `|Σ αᵢyᵢ|` after each accepted update.
    pub equality_residual: Vec<f64>,
    /// Largest box violation `max(−αᵢ, αᵢ − C, 0)` after each update.
    pub box_violation: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoSolution {
    pub alphas: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Final KKT gap `max_{up}(−yG) − min_{low}(−yG)`.
    pub gap: f64,
    pub trace: Option<SmoTrace>,
}

/// Solves the dual for rows `x` with labels `y ∈ {−1, +1}`.
#[allow(clippy::too_many_arguments)]
pub fn solve_dual(
    x: &[&[f64]],
    y: &[f64],
    c: f64,
    gamma: f64,
    tol: f64,
    max_iter: usize,
    seed: u64,
    record: bool,
) -> SmoSolution {
    let n = x.len();
    let mut kernel = vec![0.0; n * n];
    for i in 0..n {
        kernel[i * n + i] = 1.0;
        for j in 0..i {
            let k = rbf_kernel(x[i], x[j], gamma);
            kernel[i * n + j] = k;
            kernel[j * n + i] = k;
        }
    }
    let k = |i: usize, j: usize| kernel[i * n + j];

    let mut alpha = vec![0.0; n];
    // Gradient of ½αᵀQα − Σα with Qᵢⱼ = yᵢyⱼkᵢⱼ.
    let mut grad = vec![-1.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, 0));

    let in_up = |a: f64, y: f64| (y > 0.0 && a < c) || (y < 0.0 && a > 0.0);
    let in_low = |a: f64, y: f64| (y > 0.0 && a > 0.0) || (y < 0.0 && a < c);

    let mut trace = record.then(|| {
        let mut t = SmoTrace::default();
        t.objective.push(0.0);
        t.equality_residual.push(0.0);
        t.box_violation.push(0.0);
        t
    });

    let mut iterations = 0;
    let mut converged = false;
    let (mut g_max, mut g_min);
    loop {
        g_max = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for &t in &order {
            if in_up(alpha[t], y[t]) {
                let v = -y[t] * grad[t];
                if v > g_max {
                    g_max = v;
                    i_sel = t;
                }
            }
        }
        g_min = f64::INFINITY;
        let mut j_sel = usize::MAX;
        let mut best_obj = f64::INFINITY;
        for &t in &order {
            if !in_low(alpha[t], y[t]) {
                continue;
            }
            let v = -y[t] * grad[t];
            if v < g_min {
                g_min = v;
            }
            if i_sel != usize::MAX && v < g_max {
                let b = g_max - v;
                let mut a = k(i_sel, i_sel) + k(t, t) - 2.0 * k(i_sel, t);
                if a <= 0.0 {
                    a = TAU;
                }
                let obj = -(b * b) / a;
                if obj < best_obj {
                    best_obj = obj;
                    j_sel = t;
                }
            }
        }
        if g_max - g_min < tol || i_sel == usize::MAX || j_sel == usize::MAX {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        iterations += 1;

        let (i, j) = (i_sel, j_sel);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let mut quad = k(i, i) + k(j, j) - 2.0 * k(i, j);
        if quad <= 0.0 {
            quad = TAU;
        }
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * k(t, i) * di + y[j] * k(t, j) * dj);
        }

        if let Some(trace) = trace.as_mut() {
            let objective = 0.5 * alpha.iter().zip(&grad).map(|(a, g)| a * (1.0 - g)).sum::<f64>();
            let residual = alpha.iter().zip(y).map(|(a, y)| a * y).sum::<f64>().abs();
            let violation = alpha
                .iter()
                .map(|&a| (-a).max(a - c).max(0.0))
                .fold(0.0, f64::max);
            trace.objective.push(objective);
            trace.equality_residual.push(residual);
            trace.box_violation.push(violation);
        }
    }
    if !converged {
        log::warn!(
            "SMO stopped after {iterations} updates with KKT gap {:.3e} (tol {tol:.1e}); using current solution",
            g_max - g_min
        );
    }

    let (mut free_sum, mut free_count) = (0.0, 0usize);
    for t in 0..n {
        if alpha[t] > 0.0 && alpha[t] < c {
            free_sum += -y[t] * grad[t];
            free_count += 1;
        }
    }
    let bias = if free_count > 0 {
        free_sum / free_count as f64
    } else if g_max.is_finite() && g_min.is_finite() {
        0.5 * (g_max + g_min)
    } else {
        // One side of the KKT sets is empty; any bias between the bounds works.
        [g_max, g_min].into_iter().find(|v| v.is_finite()).unwrap_or(0.0)
    };

    SmoSolution {
        alphas: alpha,
        bias,
        iterations,
        converged,
        gap: g_max - g_min,
        trace,
    }
}

fn signed_labels(data: &Dataset) -> Vec<f64> {
    data.labels()
        .iter()
        .map(|&l| if l == 1 { 1.0 } else { -1.0 })
        .collect()
}

/// Trains and also returns the raw dual solution, optionally with an
/// objective trace.
pub fn train_svm_detailed(
    train: &Dataset,
    hp: &SvmHyperparams,
    seed: u64,
    record_trace: bool,
) -> Result<(SvmModel, SmoSolution)> {
    hp.validate()?;
    train.require_both_classes()?;
    let rows: Vec<&[f64]> = train.rows().collect();
    let y = signed_labels(train);
    let gamma = hp.gamma.resolve(train.width());
    let max_iter = hp.max_passes.saturating_mul(rows.len().max(1));
    let solution = solve_dual(&rows, &y, hp.c, gamma, hp.tol, max_iter, seed, record_trace);

    let mut support = Vec::new();
    let mut coef = Vec::new();
    for (t, &a) in solution.alphas.iter().enumerate() {
        if a > 0.0 {
            support.extend_from_slice(rows[t]);
            coef.push(a * y[t]);
        }
    }
    let model = SvmModel::from_parts(train.width(), support, coef, solution.bias, gamma)?;
    Ok((model, solution))
}

pub fn train_svm_smo(train: &Dataset, hp: &SvmHyperparams, seed: u64) -> Result<SvmModel> {
    train_svm_detailed(train, hp, seed, false).map(|(model, _)| model)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use nalgebra::DMatrix;
    use rand::Rng as _;

    use super::*;
    use crate::schema::{FeatureDef, FeatureGroup, FeatureSchema};

    fn dataset(rows: Vec<Vec<f64>>, labels: Vec<u8>) -> Dataset {
        let width = rows[0].len();
        let features = (0..width)
            .map(|j| FeatureDef::continuous(&format!("x{j}"), FeatureGroup::Radiographic))
            .collect();
        let schema = Arc::new(FeatureSchema::new(features, "label").unwrap());
        Dataset::from_rows(schema, rows, labels).unwrap()
    }

    fn blobs(seed: u64, n: usize) -> Dataset {
        let mut rng = stream_rng(seed, 1);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let label = (i % 2) as u8;
            let centre = if label == 1 { 2.0 } else { -2.0 };
            rows.push(vec![
                centre + rng.random_range(-1.0..1.0),
                rng.random_range(-3.0..3.0),
            ]);
            labels.push(label);
        }
        dataset(rows, labels)
    }

    #[test]
    fn kernel_basics() {
        assert_eq!(rbf_kernel(&[1.0, 2.0], &[1.0, 2.0], 0.7), 1.0);
        // ‖x − y‖² = 2.
        let v = rbf_kernel(&[0.0, 0.0], &[1.0, 1.0], 0.5);
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.367_879).abs() < 1e-6);
        let mut rng = stream_rng(4, 0);
        for _ in 0..50 {
            let a: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
            let b: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
            assert_eq!(rbf_kernel(&a, &b, 0.3), rbf_kernel(&b, &a, 0.3));
        }
    }

    #[test]
    fn kernel_matrix_is_positive_semidefinite() {
        let mut rng = stream_rng(8, 0);
        for trial in 0..10 {
            let pts: Vec<Vec<f64>> = (0..20)
                .map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            let gamma = 0.1 + trial as f64 * 0.3;
            let k = DMatrix::from_fn(20, 20, |i, j| rbf_kernel(&pts[i], &pts[j], gamma));
            let min_eig = k.symmetric_eigenvalues().min();
            assert!(min_eig > -1e-8, "min eigenvalue {min_eig}");
        }
    }

    #[test]
    fn two_point_dual_has_closed_form() {
        let data = dataset(vec![vec![0.0], vec![2.0]], vec![1, 0]);
        let hp = SvmHyperparams {
            c: 10.0,
            gamma: Gamma::Value(0.25),
            ..SvmHyperparams::default()
        };
        let (model, sol) = train_svm_detailed(&data, &hp, 0, true).unwrap();
        // Equality forces α₁ = α₂ = a; W(a) = 2a − a²(1 − e^{−1}) peaks at
        // a = 1 / (1 − e^{−1}) < C.
        let a_star = 1.0 / (1.0 - (-1.0f64).exp());
        assert!((sol.alphas[0] - sol.alphas[1]).abs() < 1e-12);
        assert!((sol.alphas[0] - a_star).abs() < 1e-9);
        assert!(sol.bias.abs() < 1e-12);
        assert_eq!(model.predict(&[0.0]).0, 1);
        assert_eq!(model.predict(&[2.0]).0, 0);
        assert!(model.decision_value(&[0.0]) > 0.0);
        assert!(model.decision_value(&[2.0]) < 0.0);
    }

    #[test]
    fn separable_blobs_fit_perfectly_with_kkt() {
        let data = blobs(3, 20);
        let hp = SvmHyperparams {
            c: 10.0,
            gamma: Gamma::Value(0.5),
            ..SvmHyperparams::default()
        };
        let (model, sol) = train_svm_detailed(&data, &hp, 1, true).unwrap();
        assert!(sol.converged);
        for (row, &label) in data.rows().zip(data.labels()) {
            assert_eq!(model.predict(row).0, label);
        }
        assert!(model.coefficients().iter().sum::<f64>().abs() < 1e-8);
        // KKT at every point.
        for (t, (row, &label)) in data.rows().zip(data.labels()).enumerate() {
            let yf = if label == 1 { 1.0 } else { -1.0 } * model.decision_value(row);
            let a = sol.alphas[t];
            if a == 0.0 {
                assert!(yf >= 1.0 - hp.tol - 1e-9, "{yf}");
            } else if a < hp.c {
                assert!((yf - 1.0).abs() <= hp.tol + 1e-9, "{yf}");
            } else {
                assert!(yf <= 1.0 + hp.tol + 1e-9, "{yf}");
            }
        }
    }

    #[test]
    fn dual_objective_never_decreases() {
        let data = blobs(11, 30);
        let hp = SvmHyperparams {
            c: 1.0,
            gamma: Gamma::Value(1.0),
            ..SvmHyperparams::default()
        };
        let (_, sol) = train_svm_detailed(&data, &hp, 2, true).unwrap();
        let trace = sol.trace.unwrap();
        assert!(trace.objective.len() > 2);
        for w in trace.objective.windows(2) {
            assert!(w[1] >= w[0] - 1e-12 * w[0].abs().max(1.0));
        }
        assert!(trace.equality_residual.iter().all(|&r| r < 1e-8));
        assert!(trace.box_violation.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_class_rejected() {
        let data = dataset(vec![vec![0.0], vec![1.0]], vec![0, 0]);
        assert!(matches!(
            train_svm_smo(&data, &SvmHyperparams::default(), 0),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn empty_model_returns_bias() {
        let model = SvmModel::from_parts(3, vec![], vec![], -0.25, 0.5).unwrap();
        assert_eq!(model.decision_value(&[1.0, 2.0, 3.0]), -0.25);
    }

    #[test]
    fn predict_tie_and_limits() {
        let zero = SvmModel::from_parts(1, vec![], vec![], 0.0, 1.0).unwrap();
        assert_eq!(zero.predict(&[4.0]), (0, 0.5));
        let big = SvmModel::from_parts(1, vec![], vec![], 1e3, 1.0).unwrap();
        assert_eq!(big.predict(&[0.0]).1, 1.0);
    }

    #[test]
    fn predict_label_agrees_with_score_threshold() {
        let data = blobs(5, 24);
        let model = train_svm_smo(&data, &SvmHyperparams::default(), 3).unwrap();
        let mut rng = stream_rng(6, 0);
        for _ in 0..200 {
            let x = [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)];
            let (label, score) = model.predict(&x);
            assert_eq!(label, crate::ann::classify(score, 0.5));
        }
    }

    #[test]
    fn decision_function_is_lipschitz() {
        let data = blobs(9, 20);
        let model = train_svm_smo(
            &data,
            &SvmHyperparams {
                c: 5.0,
                gamma: Gamma::Value(0.8),
                ..SvmHyperparams::default()
            },
            0,
        )
        .unwrap();
        // |∇ₓ k(xᵢ, x)| ≤ √(2γ)·e^{−½}.
        let lipschitz = model.coefficients().iter().map(|c| c.abs()).sum::<f64>()
            * (2.0 * model.gamma()).sqrt()
            * (-0.5f64).exp();
        let mut rng = stream_rng(10, 0);
        for _ in 0..200 {
            let x = [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)];
            let d = [rng.random_range(-1e-3..1e-3), rng.random_range(-1e-3..1e-3)];
            let moved = [x[0] + d[0], x[1] + d[1]];
            let change = (model.decision_value(&moved) - model.decision_value(&x)).abs();
            let norm = (d[0] * d[0] + d[1] * d[1]).sqrt();
            assert!(change <= lipschitz * norm * (1.0 + 1e-9) + 1e-15);
        }
    }

    #[test]
    fn duplicating_a_point_keeps_training_accuracy() {
        for trial in 0..10 {
            let data = blobs(100 + trial, 16);
            let hp = SvmHyperparams {
                c: 10.0,
                gamma: Gamma::Value(0.5),
                ..SvmHyperparams::default()
            };
            let accuracy = |model: &SvmModel| {
                data.rows()
                    .zip(data.labels())
                    .filter(|(r, &l)| model.predict(r).0 == l)
                    .count()
            };
            let base = accuracy(&train_svm_smo(&data, &hp, 0).unwrap());
            let mut idx: Vec<usize> = (0..data.n_rows()).collect();
            idx.push(trial as usize % data.n_rows());
            let dup = data.subset(&idx);
            let with_dup = accuracy(&train_svm_smo(&dup, &hp, 0).unwrap());
            assert!(with_dup >= base, "trial {trial}: {with_dup} < {base}");
        }
    }

    #[test]
    fn gamma_serde_accepts_symbolic_width() {
        #[derive(Deserialize)]
        struct Wrap {
            g: Vec<Gamma>,
        }
        let w: Wrap = toml::from_str(r#"g = ["1/p", 0.1]"#).unwrap();
        assert_eq!(w.g, vec![Gamma::InverseWidth, Gamma::Value(0.1)]);
        assert_eq!(Gamma::InverseWidth.resolve(33), 1.0 / 33.0);
    }
}
