//! Declarative dataset description: features, target and feasibility constraints.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::constraint::ConstraintSpec;
use crate::error::{io_err, CfxError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    Categorical,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default)]
    pub immutable: bool,
    /// Category names from lowest to highest, required when a non-continuous
    /// feature takes part in a constraint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordinal_ranks: Option<Vec<String>>,
}

impl FeatureSpec {
    /// Position of `category` in the ordinal ranking.
    pub fn rank_of(&self, category: &str) -> Option<usize> {
        self.ordinal_ranks
            .as_ref()
            .and_then(|r| r.iter().position(|c| c == category))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub name: String,
    pub positive: String,
}

fn default_missing() -> Vec<String> {
    vec![String::new(), "?".to_string(), "NA".to_string()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub features: Vec<FeatureSpec>,
    pub target: TargetSpec,
    #[serde(default)]
    pub constraints: Vec<ConstraintSpec>,
    /// Cell values treated as missing during cleaning.
    #[serde(default = "default_missing")]
    pub missing_values: Vec<String>,
}

impl DatasetSchema {
    pub fn from_json(text: &str) -> Result<Self> {
        let schema: DatasetSchema = serde_json::from_str(text).map_err(|e| CfxError::Schema(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn feature(&self, name: &str) -> Option<&FeatureSpec> {
        self.features.iter().find(|f| f.name == name)
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn count_kind(&self, kind: FeatureKind) -> usize {
        self.features.iter().filter(|f| f.kind == kind).count()
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(CfxError::Schema("no features declared".into()));
        }
        let mut seen = HashSet::new();
        for f in &self.features {
            if f.name.is_empty() {
                return Err(CfxError::Schema("feature with empty name".into()));
            }
            if !seen.insert(f.name.as_str()) {
                return Err(CfxError::Schema(format!("duplicate feature `{}`", f.name)));
            }
            if let Some(ranks) = &f.ordinal_ranks {
                if f.kind == FeatureKind::Continuous {
                    return Err(CfxError::Schema(format!(
                        "continuous feature `{}` cannot have ordinal ranks",
                        f.name
                    )));
                }
                let unique: HashSet<_> = ranks.iter().collect();
                if unique.len() != ranks.len() || ranks.is_empty() {
                    return Err(CfxError::Schema(format!(
                        "ordinal ranks of `{}` must be non-empty and distinct",
                        f.name
                    )));
                }
            }
        }
        if seen.contains(self.target.name.as_str()) {
            return Err(CfxError::Schema(format!(
                "target `{}` is also listed as a feature",
                self.target.name
            )));
        }
        for c in &self.constraints {
            for name in c.features() {
                let f = self
                    .feature(name)
                    .ok_or_else(|| CfxError::Schema(format!("constraint references unknown feature `{name}`")))?;
                if f.kind != FeatureKind::Continuous && f.ordinal_ranks.is_none() {
                    return Err(CfxError::Schema(format!(
                        "constrained feature `{name}` needs ordinal_ranks"
                    )));
                }
            }
            if let ConstraintSpec::Binary {
                cause_feature,
                effect_feature,
                c1,
                c2,
                ..
            } = c
            {
                if cause_feature == effect_feature {
                    return Err(CfxError::Schema(format!(
                        "binary constraint on `{cause_feature}` needs two distinct features"
                    )));
                }
                if !c1.is_finite() || !c2.is_finite() {
                    return Err(CfxError::Schema("constraint parameters must be finite".into()));
                }
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the compact JSON form.
    pub fn digest(&self) -> String {
        let text = serde_json::to_string(self).expect("schema serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

pub fn load_schema(path: impl AsRef<Path>) -> Result<DatasetSchema> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    DatasetSchema::from_json(&text)
}
