//! Feasibility constraints between an input and its counterfactual.
//!
//! A unary constraint restricts the direction a single feature may move
//! (age never decreases). A binary constraint ties an effect to a cause:
//! raising the cause requires the effect to strictly increase, keeping the
//! cause fixed requires the effect not to decrease, and lowering the cause
//! is never feasible.

use serde::{Deserialize, Serialize};

use crate::encoding::{EncodingState, ScalarView};
use crate::error::{CfxError, Result};
use crate::instance::Instance;
use crate::schema::{DatasetSchema, FeatureKind, FeatureSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    NonDecrease,
    NonIncrease,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryMode {
    /// Penalizes only the region where the constraint is violated.
    #[default]
    Hinge,
    /// `(x2_cf - c1 - c2 * x1_cf) - min(0, c2)` taken verbatim; unbounded below.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    Unary,
    Binary,
}

fn default_c2() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ConstraintSpec {
    Unary {
        feature: String,
        #[serde(default)]
        direction: Direction,
    },
    Binary {
        cause_feature: String,
        effect_feature: String,
        #[serde(default)]
        c1: f64,
        #[serde(default = "default_c2")]
        c2: f64,
        #[serde(default)]
        mode: BinaryMode,
    },
}

impl ConstraintSpec {
    pub fn kind(&self) -> ConstraintKind {
        match self {
            ConstraintSpec::Unary { .. } => ConstraintKind::Unary,
            ConstraintSpec::Binary { .. } => ConstraintKind::Binary,
        }
    }

    pub fn features(&self) -> Vec<&str> {
        match self {
            ConstraintSpec::Unary { feature, .. } => vec![feature],
            ConstraintSpec::Binary {
                cause_feature,
                effect_feature,
                ..
            } => vec![cause_feature, effect_feature],
        }
    }

    /// Binds feature names to encoded columns.
    pub fn resolve(&self, encoding: &EncodingState) -> Result<ResolvedConstraint> {
        Ok(match self {
            ConstraintSpec::Unary { feature, direction } => ResolvedConstraint::Unary {
                view: encoding.scalar_view(feature)?,
                direction: *direction,
            },
            ConstraintSpec::Binary {
                cause_feature,
                effect_feature,
                c1,
                c2,
                mode,
            } => ResolvedConstraint::Binary {
                cause: encoding.scalar_view(cause_feature)?,
                effect: encoding.scalar_view(effect_feature)?,
                c1: *c1,
                c2: *c2,
                mode: *mode,
            },
        })
    }
}

/// A constraint bound to encoded columns, ready for loss evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum ResolvedConstraint {
    Unary {
        view: ScalarView,
        direction: Direction,
    },
    Binary {
        cause: ScalarView,
        effect: ScalarView,
        c1: f64,
        c2: f64,
        mode: BinaryMode,
    },
}

impl ResolvedConstraint {
    pub fn kind(&self) -> ConstraintKind {
        match self {
            ResolvedConstraint::Unary { .. } => ConstraintKind::Unary,
            ResolvedConstraint::Binary { .. } => ConstraintKind::Binary,
        }
    }
}

/// Comparable scalar for a raw value: the number itself for continuous
/// features, the ordinal rank otherwise.
fn ordered_value(instance: &Instance, spec: &FeatureSpec) -> Result<f64> {
    let value = instance
        .get(&spec.name)
        .ok_or_else(|| CfxError::Data(format!("instance lacks feature `{}`", spec.name)))?;
    match spec.kind {
        FeatureKind::Continuous => value
            .as_number()
            .ok_or_else(|| CfxError::Data(format!("feature `{}` is not numeric", spec.name))),
        FeatureKind::Categorical | FeatureKind::Binary => {
            if spec.ordinal_ranks.is_none() {
                return Err(CfxError::Schema(format!(
                    "feature `{}` has no ordinal_ranks",
                    spec.name
                )));
            }
            let label = value.as_text();
            spec.rank_of(&label).map(|r| r as f64).ok_or_else(|| {
                CfxError::Data(format!(
                    "value `{label}` of `{}` is not in its ordinal ranks",
                    spec.name
                ))
            })
        }
    }
}

fn lookup<'a>(schema: &'a DatasetSchema, name: &str) -> Result<&'a FeatureSpec> {
    schema
        .feature(name)
        .ok_or_else(|| CfxError::Schema(format!("unknown feature `{name}`")))
}

/// Whether the move from `input` to `cf` satisfies `spec`.
pub fn check_constraint(
    input: &Instance,
    cf: &Instance,
    spec: &ConstraintSpec,
    schema: &DatasetSchema,
) -> Result<bool> {
    match spec {
        ConstraintSpec::Unary { feature, direction } => {
            let f = lookup(schema, feature)?;
            let (before, after) = (ordered_value(input, f)?, ordered_value(cf, f)?);
            Ok(match direction {
                Direction::NonDecrease => after >= before,
                Direction::NonIncrease => after <= before,
            })
        }
        ConstraintSpec::Binary {
            cause_feature,
            effect_feature,
            ..
        } => {
            let cause = lookup(schema, cause_feature)?;
            let effect = lookup(schema, effect_feature)?;
            let (c0, c1) = (ordered_value(input, cause)?, ordered_value(cf, cause)?);
            let (e0, e1) = (ordered_value(input, effect)?, ordered_value(cf, effect)?);
            Ok(if c1 > c0 {
                e1 > e0
            } else if c1 == c0 {
                e1 >= e0
            } else {
                false
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> DatasetSchema {
        DatasetSchema::from_json(
            r#"{"features": [
                {"name":"age","kind":"continuous"},
                {"name":"education","kind":"categorical",
                 "ordinal_ranks":["School","HS-grad","Bachelors","Doctorate"]}],
               "target": {"name":"income","positive":">50K"},
               "constraints": [
                {"type":"unary","feature":"age"},
                {"type":"binary","cause_feature":"education","effect_feature":"age"}]}"#,
        )
        .unwrap()
    }

    fn inst(age: f64, ed: &str) -> Instance {
        Instance::new().with("age", age).with("education", ed)
    }

    #[test]
    fn identity_is_feasible() {
        let s = schema();
        let x = inst(38.0, "HS-grad");
        for c in &s.constraints {
            assert!(check_constraint(&x, &x, c, &s).unwrap());
        }
    }

    #[test]
    fn education_up_requires_strict_age_increase() {
        let s = schema();
        let binary = &s.constraints[1];
        let x = inst(38.0, "HS-grad");
        assert!(!check_constraint(&x, &inst(38.0, "Doctorate"), binary, &s).unwrap());
        assert!(check_constraint(&x, &inst(43.55, "Doctorate"), binary, &s).unwrap());
    }

    #[test]
    fn education_down_is_infeasible() {
        let s = schema();
        let x = inst(38.0, "Bachelors");
        assert!(!check_constraint(&x, &inst(50.0, "School"), &s.constraints[1], &s).unwrap());
    }

    #[test]
    fn unary_directions() {
        let s = schema();
        let x = inst(38.0, "HS-grad");
        let up = ConstraintSpec::Unary {
            feature: "age".into(),
            direction: Direction::NonDecrease,
        };
        let down = ConstraintSpec::Unary {
            feature: "age".into(),
            direction: Direction::NonIncrease,
        };
        assert!(!check_constraint(&x, &inst(37.0, "HS-grad"), &up, &s).unwrap());
        assert!(check_constraint(&x, &inst(37.0, "HS-grad"), &down, &s).unwrap());
    }

    #[test]
    fn missing_ranks_error() {
        let mut s = schema();
        s.features[1].ordinal_ranks = None;
        let x = inst(38.0, "HS-grad");
        assert!(check_constraint(&x, &x, &s.constraints[1], &s).is_err());
    }
}
