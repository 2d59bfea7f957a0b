//! Patient feature schema and record encoding.
//!
//! A schema is an ordered list of feature definitions. Each feature is binary
//! (encoded 0/1), ordinal (level `i` encoded as `i`), or continuous (raw value,
//! z-scored later by [`crate::scaler`]). The column order of every dataset
//! follows the schema order.
//!
//! Schemas are read from TOML documents of the form
//!
//! ```toml
//! label = "label"
//!
//! [[feature]]
//! name = "age"
//! kind = "continuous"
//! group = "demographic"
//!
//! [[feature]]
//! name = "stenosis_ica_left"
//! kind = "ordinal"
//! group = "radiographic"
//! levels = ["normal", "minor", "moderate", "severe"]
//! ```

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stenosis severity grades: 0-25%, 25-50%, 50-75% and 75-100% occlusion.
pub const STENOSIS_LEVELS: [&str; 4] = ["normal", "minor", "moderate", "severe"];

/// Suzuki angiographic stages I to VI.
pub const SUZUKI_LEVELS: [&str; 6] = ["I", "II", "III", "IV", "V", "VI"];

/// Age bands used by the placeholder 11th demographic feature.
pub const AGE_BAND_LEVELS: [&str; 5] = ["18-29", "30-39", "40-49", "50-59", "60+"];

/// Expected (demographic, radiographic) feature counts.
pub const EXPECTED_GROUP_COUNTS: (usize, usize) = (11, 22);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Binary,
    Ordinal,
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureGroup {
    Demographic,
    Radiographic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    pub kind: FeatureKind,
    pub group: FeatureGroup,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<String>>,
}

impl FeatureDef {
    pub fn binary(name: &str, group: FeatureGroup) -> Self {
        Self {
            name: name.to_owned(),
            kind: FeatureKind::Binary,
            group,
            levels: None,
        }
    }

    pub fn continuous(name: &str, group: FeatureGroup) -> Self {
        Self {
            name: name.to_owned(),
            kind: FeatureKind::Continuous,
            group,
            levels: None,
        }
    }

    pub fn ordinal(name: &str, group: FeatureGroup, levels: &[&str]) -> Self {
        Self {
            name: name.to_owned(),
            kind: FeatureKind::Ordinal,
            group,
            levels: Some(levels.iter().map(|s| (*s).to_owned()).collect()),
        }
    }

    /// Number of ordinal levels, zero for other kinds.
    pub fn level_count(&self) -> usize {
        self.levels.as_ref().map_or(0, Vec::len)
    }

    fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::InvalidSchema("empty feature name".into()));
        }
        match (self.kind, &self.levels) {
            (FeatureKind::Ordinal, Some(levels)) => {
                if levels.len() < 2 {
                    return Err(Error::InvalidSchema(format!(
                        "ordinal feature `{}` needs at least 2 levels",
                        self.name
                    )));
                }
                let mut seen = HashSet::new();
                for level in levels {
                    // Bare integers are reserved for encoded level indices.
                    if level.trim().parse::<i64>().is_ok() {
                        return Err(Error::InvalidSchema(format!(
                            "ordinal feature `{}` uses integer level label `{level}`",
                            self.name
                        )));
                    }
                    if !seen.insert(level.trim().to_lowercase()) {
                        return Err(Error::InvalidSchema(format!(
                            "ordinal feature `{}` repeats level `{level}`",
                            self.name
                        )));
                    }
                }
                Ok(())
            }
            (FeatureKind::Ordinal, None) => Err(Error::InvalidSchema(format!(
                "ordinal feature `{}` has no levels",
                self.name
            ))),
            (_, Some(_)) => Err(Error::InvalidSchema(format!(
                "feature `{}` declares levels but is not ordinal",
                self.name
            ))),
            (_, None) => Ok(()),
        }
    }

    /// Encodes one raw cell value.
    ///
    /// Binary accepts `0/1`, `true/false`, `yes/no`. Ordinal accepts a level
    /// label (case-insensitive; a label's first word also matches, so
    /// `"moderate occlusion"` resolves against level `"moderate"` and vice
    /// versa) or an integer level index.
    pub fn encode(&self, raw: &str) -> Result<f64> {
        let value = raw.trim();
        match self.kind {
            FeatureKind::Binary => match value.to_ascii_lowercase().as_str() {
                "1" | "1.0" | "true" | "yes" | "y" => Ok(1.0),
                "0" | "0.0" | "false" | "no" | "n" => Ok(0.0),
                _ => Err(Error::NotBinary {
                    feature: self.name.clone(),
                    value: raw.to_owned(),
                }),
            },
            FeatureKind::Continuous => match value.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::NotNumeric {
                    feature: self.name.clone(),
                    value: raw.to_owned(),
                }),
            },
            FeatureKind::Ordinal => {
                let levels = self.levels.as_deref().unwrap_or_default();
                self.level_index(levels, value)
                    .map(|i| i as f64)
                    .ok_or_else(|| Error::UnknownLevel {
                        feature: self.name.clone(),
                        value: raw.to_owned(),
                    })
            }
        }
    }

    fn level_index(&self, levels: &[String], value: &str) -> Option<usize> {
        let wanted = value.to_lowercase();
        if let Some(i) = levels.iter().position(|l| l.trim().to_lowercase() == wanted) {
            return Some(i);
        }
        let first_word = |s: &str| s.split_whitespace().next().unwrap_or("").to_lowercase();
        let wanted_head = first_word(&wanted);
        if let Some(i) = levels.iter().position(|l| {
            let head = first_word(l);
            head == wanted || head == wanted_head && !head.is_empty()
        }) {
            return Some(i);
        }
        // Numeric index, as written back by `Dataset::write_csv`.
        match value.parse::<f64>() {
            Ok(v) if v.fract() == 0.0 && v >= 0.0 && (v as usize) < levels.len() => {
                Some(v as usize)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    #[serde(rename = "label", default = "default_label")]
    label_name: String,
    #[serde(rename = "feature")]
    features: Vec<FeatureDef>,
}

fn default_label() -> String {
    "label".to_owned()
}

impl FeatureSchema {
    /// Validates and builds a schema. A group-count mismatch with the
    /// expected 11 + 22 split is logged, not rejected.
    pub fn new(features: Vec<FeatureDef>, label_name: impl Into<String>) -> Result<Self> {
        let schema = Self {
            features,
            label_name: label_name.into(),
        };
        schema.validate()?;
        if let Some(warning) = schema.group_count_warning() {
            log::warn!("{warning}");
        }
        Ok(schema)
    }

    fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::InvalidSchema("no features".into()));
        }
        if self.label_name.trim().is_empty() {
            return Err(Error::InvalidSchema("empty label name".into()));
        }
        let mut names = HashSet::new();
        for def in &self.features {
            def.validate()?;
            if !names.insert(def.name.as_str()) {
                return Err(Error::DuplicateFeature(def.name.clone()));
            }
        }
        if names.contains(self.label_name.as_str()) {
            return Err(Error::InvalidSchema(format!(
                "label column `{}` collides with a feature name",
                self.label_name
            )));
        }
        Ok(())
    }

    pub fn features(&self) -> &[FeatureDef] {
        &self.features
    }

    pub fn label_name(&self) -> &str {
        &self.label_name
    }

    pub fn width(&self) -> usize {
        self.features.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&FeatureDef> {
        self.features.iter().find(|f| f.name == name)
    }

    /// (demographic, radiographic) counts.
    pub fn group_counts(&self) -> (usize, usize) {
        let demographic = self
            .features
            .iter()
            .filter(|f| f.group == FeatureGroup::Demographic)
            .count();
        (demographic, self.features.len() - demographic)
    }

    pub fn group_count_warning(&self) -> Option<String> {
        let counts = self.group_counts();
        (counts != EXPECTED_GROUP_COUNTS).then(|| {
            format!(
                "schema has {} demographic and {} radiographic features, expected {} and {}",
                counts.0, counts.1, EXPECTED_GROUP_COUNTS.0, EXPECTED_GROUP_COUNTS.1
            )
        })
    }

    /// Indices of continuous features.
    pub fn continuous_indices(&self) -> Vec<usize> {
        self.features
            .iter()
            .enumerate()
            .filter(|(_, f)| f.kind == FeatureKind::Continuous)
            .map(|(i, _)| i)
            .collect()
    }

    /// Encodes a record keyed by feature name into a vector in schema order.
    pub fn encode_record(&self, record: &HashMap<String, String>) -> Result<Vec<f64>> {
        self.features
            .iter()
            .map(|def| {
                let raw = record
                    .get(&def.name)
                    .ok_or_else(|| Error::MissingField(def.name.clone()))?;
                def.encode(raw)
            })
            .collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("schema serializes")
    }

    /// Built-in reconstruction of the 33-feature moyamoya schema.
    ///
    /// Demographic (11): age, sex, the eight vascular-risk and history flags,
    /// admission mRS ≥ 3, and an age-band placeholder for the unlisted 11th
    /// variable. Radiographic (22): stenosis grade of ICA/ACA/MCA/PCA on each
    /// side, Suzuki stage per side, AChA/PCoA dilation per side, three
    /// collateral types per side, MMA collaterals per side, unilateral
    /// disease, and associated aneurysm.
    pub fn default_moyamoya() -> Self {
        use FeatureGroup::{Demographic as D, Radiographic as R};
        let mut features = vec![
            FeatureDef::continuous("age", D),
            FeatureDef::binary("female", D),
            FeatureDef::binary("hypertension", D),
            FeatureDef::binary("diabetes", D),
            FeatureDef::binary("antiplatelet", D),
            FeatureDef::binary("drinking", D),
            FeatureDef::binary("smoking", D),
            FeatureDef::binary("hyperlipidemia", D),
            FeatureDef::binary("ischemic_stroke_history", D),
            FeatureDef::binary("mrs_ge3", D),
            FeatureDef::ordinal("age_band", D, &AGE_BAND_LEVELS),
        ];
        for side in ["left", "right"] {
            for vessel in ["ica", "aca", "mca", "pca"] {
                features.push(FeatureDef::ordinal(
                    &format!("stenosis_{vessel}_{side}"),
                    R,
                    &STENOSIS_LEVELS,
                ));
            }
        }
        for side in ["left", "right"] {
            features.push(FeatureDef::ordinal(
                &format!("suzuki_{side}"),
                R,
                &SUZUKI_LEVELS,
            ));
        }
        for side in ["left", "right"] {
            features.push(FeatureDef::binary(&format!("acha_pcoa_dilation_{side}"), R));
        }
        for side in ["left", "right"] {
            for kind in ["leptomeningeal", "duropial", "periventricular"] {
                features.push(FeatureDef::binary(&format!("{kind}_{side}"), R));
            }
        }
        for side in ["left", "right"] {
            features.push(FeatureDef::binary(&format!("mma_collateral_{side}"), R));
        }
        features.push(FeatureDef::binary("unilateral", R));
        features.push(FeatureDef::binary("aneurysm", R));
        Self::new(features, "label").expect("built-in schema is valid")
    }
}

/// Parses a schema document, or returns the built-in default when `None`.
pub fn load_schema(document: Option<&str>) -> Result<FeatureSchema> {
    match document {
        None => Ok(FeatureSchema::default_moyamoya()),
        Some(text) => {
            let raw: FeatureSchema = toml::from_str(text)?;
            FeatureSchema::new(raw.features, raw.label_name)
        }
    }
}
