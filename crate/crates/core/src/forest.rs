//! Random forest of Gini CART trees grown on bootstrap resamples.
//!
//! Splits route `x[feature] ≤ threshold` to the left child. Thresholds are
//! midpoints between consecutive distinct values. Split selection compares
//! candidate gains exactly in integer arithmetic, so ties resolve by the
//! documented rule (lower feature index, then lower threshold) rather than
//! by rounding noise.

use std::cmp::Ordering;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::rng::{stream_rng, Rng};

/// How many candidate features each split draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "FeaturesRepr", into = "FeaturesRepr")]
pub enum FeaturesPerSplit {
    /// `⌈√p⌉`.
    Sqrt,
    All,
    Count(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum FeaturesRepr {
    Count(usize),
    Text(String),
}

impl TryFrom<FeaturesRepr> for FeaturesPerSplit {
    type Error = String;

    fn try_from(repr: FeaturesRepr) -> std::result::Result<Self, String> {
        match repr {
            FeaturesRepr::Count(k) => Ok(Self::Count(k)),
            FeaturesRepr::Text(s) if s == "sqrt" => Ok(Self::Sqrt),
            FeaturesRepr::Text(s) if s == "all" => Ok(Self::All),
            FeaturesRepr::Text(s) => Err(format!(
                "features_per_split must be \"sqrt\", \"all\" or a count, got `{s}`"
            )),
        }
    }
}

impl From<FeaturesPerSplit> for FeaturesRepr {
    fn from(f: FeaturesPerSplit) -> Self {
        match f {
            FeaturesPerSplit::Sqrt => Self::Text("sqrt".into()),
            FeaturesPerSplit::All => Self::Text("all".into()),
            FeaturesPerSplit::Count(k) => Self::Count(k),
        }
    }
}

impl FeaturesPerSplit {
    pub fn resolve(&self, width: usize) -> usize {
        match *self {
            Self::Sqrt => (width as f64).sqrt().ceil() as usize,
            Self::All => width,
            Self::Count(k) => k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestHyperparams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub features_per_split: FeaturesPerSplit,
    /// Draw a bootstrap resample per tree. Turning it off grows every tree
    /// on the full training set (useful for testing).
    pub bootstrap: bool,
}

impl Default for ForestHyperparams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_samples_split: 2,
            features_per_split: FeaturesPerSplit::Sqrt,
            bootstrap: true,
        }
    }
}

impl ForestHyperparams {
    pub fn validate(&self, width: usize) -> Result<()> {
        let k = self.features_per_split.resolve(width);
        if self.n_trees == 0 || self.min_samples_split < 2 || k == 0 || k > width {
            return Err(Error::InvalidHyperparams(format!(
                "forest needs n_trees ≥ 1, min_samples_split ≥ 2 and 1 ≤ features_per_split ≤ {width}, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Leaf {
        label: u8,
        /// Fractions of class 0 and class 1 among the training rows here.
        fractions: [f64; 2],
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    fn leaf(counts: [u64; 2]) -> Self {
        let n = (counts[0] + counts[1]) as f64;
        TreeNode::Leaf {
            label: u8::from(counts[1] > counts[0]),
            fractions: [counts[0] as f64 / n, counts[1] as f64 / n],
        }
    }

    /// The leaf `x` lands in.
    pub fn route(&self, x: &[f64]) -> &TreeNode {
        let mut node = self;
        while let TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } = node
        {
            node = if x[*feature] <= *threshold { left } else { right };
        }
        node
    }

    pub fn vote(&self, x: &[f64]) -> u8 {
        match self.route(x) {
            TreeNode::Leaf { label, .. } => *label,
            TreeNode::Split { .. } => unreachable!("route ends at a leaf"),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => 1 + left.node_count() + right.node_count(),
        }
    }

    /// Largest feature index used by any split.
    fn max_feature(&self) -> Option<usize> {
        match self {
            TreeNode::Leaf { .. } => None,
            TreeNode::Split {
                feature, left, right, ..
            } => [Some(*feature), left.max_feature(), right.max_feature()]
                .into_iter()
                .flatten()
                .max(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    width: usize,
    trees: Vec<TreeNode>,
}

impl ForestModel {
    pub fn from_trees(width: usize, trees: Vec<TreeNode>) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::InvalidInput("forest has no trees".into()));
        }
        if let Some(f) = trees.iter().filter_map(TreeNode::max_feature).max() {
            if f >= width {
                return Err(Error::InvalidInput(format!(
                    "tree splits on feature {f} but width is {width}"
                )));
            }
        }
        Ok(Self { width, trees })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn trees(&self) -> &[TreeNode] {
        &self.trees
    }

    /// Majority vote (tie → 0); the score is the fraction voting 1.
    pub fn predict(&self, x: &[f64]) -> (u8, f64) {
        debug_assert_eq!(x.len(), self.width);
        let ones = self.trees.iter().filter(|t| t.vote(x) == 1).count();
        let n = self.trees.len();
        (u8::from(2 * ones > n), ones as f64 / n as f64)
    }
}

/// `1 − Σ (nₖ/n)²`.
pub fn gini_impurity(counts: [u64; 2]) -> Result<f64> {
    let n = counts[0] + counts[1];
    if n == 0 {
        return Err(Error::InvalidInput("gini impurity of an empty node".into()));
    }
    let n = n as f64;
    Ok(1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    /// Parent impurity minus the size-weighted child impurities.
    pub gain: f64,
}

/// Midpoint between consecutive distinct sorted values `a < b`, kept
/// strictly below `b` so that `a` still routes left.
pub fn midpoint(a: f64, b: f64) -> f64 {
    let m = 0.5 * a + 0.5 * b;
    if m < b {
        m
    } else {
        a
    }
}

fn square_sum(c: [u64; 2]) -> u128 {
    (c[0] as u128).pow(2) + (c[1] as u128).pow(2)
}

/// Child purity `(s_L·n_R + s_R·n_L) / (n_L·n_R)` with `s = Σ countsₖ²`;
/// weighted child impurity is `1 − purity / n`, so larger is better.
#[derive(Clone, Copy)]
struct Purity {
    num: u128,
    den: u128,
}

impl Purity {
    fn new(left: [u64; 2], right: [u64; 2]) -> Self {
        let (nl, nr) = ((left[0] + left[1]) as u128, (right[0] + right[1]) as u128);
        Self {
            num: square_sum(left) * nr + square_sum(right) * nl,
            den: nl * nr,
        }
    }

    fn cmp(&self, other: &Self) -> Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }
}

/// Exhaustive scan for the best Gini split of `rows` among `candidates`.
///
/// Returns `None` when no split has strictly positive gain.
pub fn best_split(rows: &[&[f64]], labels: &[u8], candidates: &[usize]) -> Option<Split> {
    let n = rows.len();
    if n < 2 {
        return None;
    }
    let mut total = [0u64; 2];
    for &l in labels {
        total[l as usize] += 1;
    }
    let mut features = candidates.to_vec();
    features.sort_unstable();
    features.dedup();

    let mut best: Option<(usize, f64, Purity, [u64; 2])> = None;
    let mut order: Vec<usize> = (0..n).collect();
    for &f in &features {
        order.sort_by(|&a, &b| rows[a][f].total_cmp(&rows[b][f]));
        let mut left = [0u64; 2];
        for k in 0..n - 1 {
            left[labels[order[k]] as usize] += 1;
            let (a, b) = (rows[order[k]][f], rows[order[k + 1]][f]);
            if a == b {
                continue;
            }
            let right = [total[0] - left[0], total[1] - left[1]];
            let purity = Purity::new(left, right);
            // Strict improvement keeps the earliest (feature, threshold).
            if best.is_none_or(|(_, _, p, _)| purity.cmp(&p) == Ordering::Greater) {
                best = Some((f, midpoint(a, b), purity, left));
            }
        }
    }

    let (feature, threshold, purity, left) = best?;
    // Positive gain ⇔ (num / den) / n > s_parent / n² ⇔ num·n > s_parent·den.
    if purity.num * n as u128 <= square_sum(total) * purity.den {
        return None;
    }
    let right = [total[0] - left[0], total[1] - left[1]];
    let (nl, nr) = ((left[0] + left[1]) as f64, (right[0] + right[1]) as f64);
    let parent = gini_impurity(total).expect("n ≥ 2");
    let children = (nl * gini_impurity(left).expect("non-empty")
        + nr * gini_impurity(right).expect("non-empty"))
        / n as f64;
    Some(Split {
        feature,
        threshold,
        gain: parent - children,
    })
}

/// Row indices of an `n`-row bootstrap resample.
pub fn bootstrap_indices(n: usize, rng: &mut Rng) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

pub fn bootstrap_sample(train: &Dataset, seed: u64) -> Dataset {
    let idx = bootstrap_indices(train.n_rows(), &mut stream_rng(seed, 0));
    train.subset(&idx)
}

/// Grows one tree; candidate features for each split come from `rng`.
pub fn grow_tree(
    rows: &[&[f64]],
    labels: &[u8],
    width: usize,
    hp: &ForestHyperparams,
    rng: &mut Rng,
) -> TreeNode {
    assert!(!rows.is_empty(), "grow_tree needs at least one row");
    let k = hp.features_per_split.resolve(width).clamp(1, width.max(1));
    let idx: Vec<usize> = (0..rows.len()).collect();
    grow(rows, labels, &idx, 0, width, k, hp, rng)
}

#[allow(clippy::too_many_arguments)]
fn grow(
    rows: &[&[f64]],
    labels: &[u8],
    idx: &[usize],
    depth: usize,
    width: usize,
    k: usize,
    hp: &ForestHyperparams,
    rng: &mut Rng,
) -> TreeNode {
    let mut counts = [0u64; 2];
    for &i in idx {
        counts[labels[i] as usize] += 1;
    }
    let pure = counts[0] == 0 || counts[1] == 0;
    let capped = hp.max_depth.is_some_and(|d| depth >= d);
    if pure || capped || idx.len() < hp.min_samples_split || width == 0 {
        return TreeNode::leaf(counts);
    }

    let candidates = index::sample(rng, width, k).into_vec();
    let local_rows: Vec<&[f64]> = idx.iter().map(|&i| rows[i]).collect();
    let local_labels: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
    let Some(split) = best_split(&local_rows, &local_labels, &candidates) else {
        return TreeNode::leaf(counts);
    };
    let (left, right): (Vec<usize>, Vec<usize>) = idx
        .iter()
        .partition(|&&i| rows[i][split.feature] <= split.threshold);
    TreeNode::Split {
        feature: split.feature,
        threshold: split.threshold,
        left: Box::new(grow(rows, labels, &left, depth + 1, width, k, hp, rng)),
        right: Box::new(grow(rows, labels, &right, depth + 1, width, k, hp, rng)),
    }
}

/// Trains `hp.n_trees` trees; tree `t` draws everything from its own
/// stream of `seed`, so the result does not depend on `exec`.
pub fn train_forest(train: &Dataset, hp: &ForestHyperparams, seed: u64, exec: &Exec) -> Result<ForestModel> {
    hp.validate(train.width())?;
    train.require_both_classes()?;
    let rows: Vec<&[f64]> = train.rows().collect();
    let labels = train.labels();
    let n = rows.len();
    let trees = exec.map((0..hp.n_trees).collect(), |t| {
        let mut rng = stream_rng(seed, t as u64);
        if hp.bootstrap {
            let idx = bootstrap_indices(n, &mut rng);
            let r: Vec<&[f64]> = idx.iter().map(|&i| rows[i]).collect();
            let l: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
            grow_tree(&r, &l, train.width(), hp, &mut rng)
        } else {
            grow_tree(&rows, labels, train.width(), hp, &mut rng)
        }
    });
    ForestModel::from_trees(train.width(), trees)
}
