//! Synthetic cohort generation from per-class marginals.
//!
//! Every feature is drawn independently given the class label. Binary
//! features are Bernoulli, ordinal features draw "above threshold" with a
//! per-class probability and then a uniform level on that side, continuous
//! features are clipped normals, and band features bucket a continuous
//! source feature.
//!
//! Spec documents are TOML:
//!
//! ```toml
//! n_total = 378
//! n_positive = 126
//! seed = 7
//!
//! [[feature]]
//! name = "age"
//! dist = "normal"
//! positive = { mean = 38.8, sd = 8.9 }
//! negative = { mean = 37.9, sd = 9.6 }
//! min = 18.0
//!
//! [[feature]]
//! name = "aneurysm"
//! dist = "bernoulli"
//! positive = 0.135
//! negative = 0.008
//!
//! [[feature]]
//! name = "suzuki_left"
//! dist = "ordinal"
//! above = 2          # level indices > 2 count as above threshold
//! positive = 0.500
//! negative = 0.552
//!
//! [[feature]]
//! name = "age_band"
//! dist = "bands"
//! source = "age"
//! edges = [30.0, 40.0, 50.0, 60.0]
//! ```

use std::collections::HashMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution as _, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::schema::{FeatureKind, FeatureSchema};

/// Minimum age for inclusion.
pub const MIN_AGE: f64 = 18.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "lowercase")]
pub enum Marginal {
    Bernoulli {
        positive: f64,
        negative: f64,
    },
    Ordinal {
        above: usize,
        positive: f64,
        negative: f64,
    },
    Normal {
        positive: Moments,
        negative: Moments,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min: Option<f64>,
    },
    Bands {
        source: String,
        edges: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRule {
    pub name: String,
    #[serde(flatten)]
    pub marginal: Marginal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub n_total: usize,
    pub n_positive: usize,
    pub seed: u64,
    #[serde(rename = "feature")]
    pub features: Vec<FeatureRule>,
}

fn bern(name: &str, positive: f64, negative: f64) -> FeatureRule {
    FeatureRule {
        name: name.to_owned(),
        marginal: Marginal::Bernoulli { positive, negative },
    }
}

fn ordinal(name: &str, above: usize, positive: f64, negative: f64) -> FeatureRule {
    FeatureRule {
        name: name.to_owned(),
        marginal: Marginal::Ordinal {
            above,
            positive,
            negative,
        },
    }
}

impl CohortSpec {
    /// Marginals for [`FeatureSchema::default_moyamoya`]: 378 patients, 126
    /// hemorrhagic, with the reference per-class rates. Features without a
    /// reference rate (stenosis grades, collateral types) get identical rates
    /// in both classes and so carry no signal.
    pub fn default_moyamoya(seed: u64) -> Self {
        let mut features = vec![
            FeatureRule {
                name: "age".into(),
                marginal: Marginal::Normal {
                    positive: Moments { mean: 38.8, sd: 8.9 },
                    negative: Moments { mean: 37.9, sd: 9.6 },
                    min: Some(MIN_AGE),
                },
            },
            bern("female", 0.587, 0.516),
            bern("hypertension", 0.183, 0.353),
            bern("diabetes", 0.024, 0.091),
            bern("antiplatelet", 0.024, 0.056),
            bern("drinking", 0.040, 0.075),
            bern("smoking", 0.071, 0.083),
            bern("hyperlipidemia", 0.008, 0.040),
            bern("ischemic_stroke_history", 0.111, 0.615),
            bern("mrs_ge3", 0.111, 0.079),
            FeatureRule {
                name: "age_band".into(),
                marginal: Marginal::Bands {
                    source: "age".into(),
                    edges: vec![30.0, 40.0, 50.0, 60.0],
                },
            },
        ];
        for side in ["left", "right"] {
            for vessel in ["ica", "aca", "mca", "pca"] {
                // P(grade >= moderate), no class difference.
                features.push(ordinal(&format!("stenosis_{vessel}_{side}"), 1, 0.6, 0.6));
            }
        }
        for side in ["left", "right"] {
            // Suzuki stage > 3.
            features.push(ordinal(&format!("suzuki_{side}"), 2, 0.500, 0.552));
        }
        for side in ["left", "right"] {
            features.push(bern(&format!("acha_pcoa_dilation_{side}"), 0.873, 0.833));
        }
        for side in ["left", "right"] {
            features.push(bern(&format!("leptomeningeal_{side}"), 0.70, 0.70));
            features.push(bern(&format!("duropial_{side}"), 0.35, 0.35));
            features.push(bern(&format!("periventricular_{side}"), 0.40, 0.40));
        }
        features.push(bern("mma_collateral_left", 0.444, 0.341));
        features.push(bern("mma_collateral_right", 0.405, 0.369));
        features.push(bern("unilateral", 0.135, 0.107));
        features.push(bern("aneurysm", 0.135, 0.008));
        Self {
            n_total: 378,
            n_positive: 126,
            seed,
            features,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("cohort spec serializes")
    }

    fn validate(&self, schema: &FeatureSchema) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidCohort(m));
        if self.n_total == 0 {
            return bad("n_total must be at least 1".into());
        }
        if self.n_positive > self.n_total {
            return bad(format!(
                "n_positive {} exceeds n_total {}",
                self.n_positive, self.n_total
            ));
        }
        let rules: HashMap<&str, &Marginal> = self
            .features
            .iter()
            .map(|r| (r.name.as_str(), &r.marginal))
            .collect();
        if rules.len() != self.features.len() {
            return bad("a feature has more than one rule".into());
        }
        for rule in &self.features {
            if schema.index_of(&rule.name).is_none() {
                return bad(format!("rule for unknown feature `{}`", rule.name));
            }
        }
        let prob_ok = |p: f64| (0.0..=1.0).contains(&p);
        for def in schema.features() {
            let Some(marginal) = rules.get(def.name.as_str()) else {
                return bad(format!("no rule for feature `{}`", def.name));
            };
            let name = &def.name;
            match (def.kind, marginal) {
                (FeatureKind::Binary, Marginal::Bernoulli { positive, negative }) => {
                    if !prob_ok(*positive) || !prob_ok(*negative) {
                        return bad(format!("`{name}`: probability outside [0, 1]"));
                    }
                }
                (
                    FeatureKind::Ordinal,
                    Marginal::Ordinal {
                        above,
                        positive,
                        negative,
                    },
                ) => {
                    if !prob_ok(*positive) || !prob_ok(*negative) {
                        return bad(format!("`{name}`: probability outside [0, 1]"));
                    }
                    if *above + 1 >= def.level_count() {
                        return bad(format!(
                            "`{name}`: threshold {above} leaves no level above it"
                        ));
                    }
                }
                (
                    FeatureKind::Continuous,
                    Marginal::Normal {
                        positive, negative, min,
                    },
                ) => {
                    for m in [positive, negative] {
                        if !m.mean.is_finite() || !(m.sd > 0.0 && m.sd.is_finite()) {
                            return bad(format!("`{name}`: needs finite mean and sd > 0"));
                        }
                    }
                    if min.is_some_and(|v| !v.is_finite()) {
                        return bad(format!("`{name}`: non-finite minimum"));
                    }
                }
                (FeatureKind::Ordinal, Marginal::Bands { source, edges }) => {
                    match rules.get(source.as_str()) {
                        Some(Marginal::Normal { .. }) => {}
                        _ => {
                            return bad(format!(
                                "`{name}`: band source `{source}` is not a normal feature"
                            ))
                        }
                    }
                    if edges.len() + 1 != def.level_count() {
                        return bad(format!(
                            "`{name}`: {} edges for {} levels",
                            edges.len(),
                            def.level_count()
                        ));
                    }
                    if edges.windows(2).any(|w| !(w[0] < w[1])) {
                        return bad(format!("`{name}`: band edges must increase"));
                    }
                }
                (kind, _) => {
                    return bad(format!("`{name}`: rule does not fit a {kind:?} feature"));
                }
            }
        }
        Ok(())
    }
}

/// Draws a cohort. A pure function of `(spec, schema)`; `spec.seed` fixes
/// every draw.
pub fn generate_cohort(spec: &CohortSpec, schema: Arc<FeatureSchema>) -> Result<Dataset> {
    spec.validate(&schema)?;
    let mut rng = stream_rng(spec.seed, 0);
    let width = schema.width();

    let mut labels: Vec<u8> = (0..spec.n_total)
        .map(|i| u8::from(i < spec.n_positive))
        .collect();
    labels.shuffle(&mut rng);

    let marginals: Vec<&Marginal> = schema
        .features()
        .iter()
        .map(|def| {
            &spec
                .features
                .iter()
                .find(|r| r.name == def.name)
                .expect("validated")
                .marginal
        })
        .collect();

    let mut x = vec![0.0; spec.n_total * width];
    for (row, &label) in x.chunks_exact_mut(width).zip(&labels) {
        let positive = label == 1;
        for (j, marginal) in marginals.iter().enumerate() {
            row[j] = match marginal {
                Marginal::Bernoulli { positive: p1, negative: p0 } => {
                    let p = if positive { *p1 } else { *p0 };
                    f64::from(u8::from(rng.random_bool(p)))
                }
                Marginal::Ordinal {
                    above,
                    positive: p1,
                    negative: p0,
                } => {
                    let p = if positive { *p1 } else { *p0 };
                    let levels = schema.features()[j].level_count();
                    let level = if rng.random_bool(p) {
                        rng.random_range(above + 1..levels)
                    } else {
                        rng.random_range(0..=*above)
                    };
                    level as f64
                }
                Marginal::Normal {
                    positive: m1,
                    negative: m0,
                    min,
                } => {
                    let m = if positive { m1 } else { m0 };
                    let value = Normal::new(m.mean, m.sd).expect("validated").sample(&mut rng);
                    min.map_or(value, |lo| value.max(lo))
                }
                Marginal::Bands { .. } => 0.0,
            };
        }
        for (j, marginal) in marginals.iter().enumerate() {
            if let Marginal::Bands { source, edges } = marginal {
                let src = schema.index_of(source).expect("validated");
                row[j] = edges.iter().filter(|&&e| row[src] >= e).count() as f64;
            }
        }
    }

    let ids = (1..=spec.n_total).map(|i| i.to_string()).collect();
    Dataset::new(schema, x, labels, ids)
}

/// Per-class empirical mean of one feature (the rate, for binary features).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureSummary {
    pub name: String,
    pub positive_mean: f64,
    pub negative_mean: f64,
}

pub fn summarize(data: &Dataset) -> Vec<FeatureSummary> {
    let positives = data.positives() as f64;
    let negatives = (data.n_rows() - data.positives()) as f64;
    data.schema()
        .features()
        .iter()
        .enumerate()
        .map(|(j, def)| {
            let (mut s1, mut s0) = (0.0, 0.0);
            for (row, &label) in data.rows().zip(data.labels()) {
                if label == 1 {
                    s1 += row[j];
                } else {
                    s0 += row[j];
                }
            }
            FeatureSummary {
                name: def.name.clone(),
                positive_mean: if positives > 0.0 { s1 / positives } else { f64::NAN },
                negative_mean: if negatives > 0.0 { s0 / negatives } else { f64::NAN },
            }
        })
        .collect()
}
