//! Turning decoder output into checked, human-readable counterfactuals.

use serde::{Deserialize, Serialize};

use crate::constraint::{check_constraint, ConstraintKind};
use crate::encoding::{EncodedKind, EncodingState};
use crate::error::{CfxError, Result};
use crate::instance::Instance;
use crate::schema::DatasetSchema;
use crate::vae::MutableMask;

/// Normalized change above which a continuous feature counts as changed.
pub const CHANGE_TOLERANCE: f64 = 1e-3;

/// Whether all constraints of each kind hold; a kind without constraints
/// holds vacuously.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeasibilityFlags {
    pub unary: bool,
    pub binary: bool,
}

impl FeasibilityFlags {
    pub fn get(&self, kind: ConstraintKind) -> bool {
        match kind {
            ConstraintKind::Unary => self.unary,
            ConstraintKind::Binary => self.binary,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CFResult {
    pub input: Instance,
    pub input_vector: Vec<f64>,
    pub cf: Instance,
    pub cf_vector: Vec<f64>,
    pub input_class: u8,
    pub cf_class: u8,
    pub desired_class: u8,
    pub feasible: FeasibilityFlags,
    /// Outcome of each schema constraint, in schema order.
    pub constraint_flags: Vec<bool>,
    #[serde(rename = "sparsity")]
    pub sparsity_count: usize,
    /// L1 distance over continuous features in normalized units.
    pub cont_l1: f64,
    pub cat_changes: usize,
    pub changed_features: Vec<String>,
}

impl CFResult {
    pub fn is_valid(&self) -> bool {
        self.cf_class == self.desired_class
    }
}

/// Puts decoder output back into a full vector: immutable columns come from
/// `x_full`, mutable ones from `x_cf_mutable`, and the result is projected
/// onto valid one-hot / binary / `[0,1]` values.
pub fn assemble_counterfactual(
    x_full: &[f64],
    x_cf_mutable: &[f64],
    mask: &MutableMask,
    state: &EncodingState,
) -> Result<Vec<f64>> {
    if mask.width() != state.width {
        return Err(CfxError::Shape("mask and encoding disagree on width".into()));
    }
    let mut out = mask.scatter(x_full, x_cf_mutable)?;
    state.project(&mut out);
    for c in mask.immutable_columns() {
        out[c] = x_full[c];
    }
    Ok(out)
}

/// Decodes `cf_vector`, reusing the input's raw value for every feature
/// whose encoded columns did not move so unchanged values survive exactly.
fn decode_relative(
    state: &EncodingState,
    input: &Instance,
    input_vector: &[f64],
    cf_vector: &[f64],
) -> Result<Instance> {
    let mut cf = state.decode(cf_vector)?;
    for f in &state.features {
        let cols = f.columns();
        if input_vector[cols.clone()] == cf_vector[cols] {
            if let Some(v) = input.get(&f.name) {
                cf.insert(f.name.clone(), v.clone());
            }
        }
    }
    Ok(cf)
}

/// Fully populated result for an (input, counterfactual) pair.
#[allow(clippy::too_many_arguments)]
pub fn describe_counterfactual(
    schema: &DatasetSchema,
    state: &EncodingState,
    input: &Instance,
    input_vector: &[f64],
    cf_vector: &[f64],
    input_class: u8,
    cf_class: u8,
    desired_class: u8,
) -> Result<CFResult> {
    if input_vector.len() != state.width || cf_vector.len() != state.width {
        return Err(CfxError::Shape("vectors do not match the encoding width".into()));
    }
    let cf = decode_relative(state, input, input_vector, cf_vector)?;
    let mut constraint_flags = Vec::with_capacity(schema.constraints.len());
    let mut feasible = FeasibilityFlags {
        unary: true,
        binary: true,
    };
    for spec in &schema.constraints {
        let ok = check_constraint(input, &cf, spec, schema)?;
        constraint_flags.push(ok);
        match spec.kind() {
            ConstraintKind::Unary => feasible.unary &= ok,
            ConstraintKind::Binary => feasible.binary &= ok,
        }
    }

    let mut changed_features = Vec::new();
    let mut cont_l1 = 0.0;
    let mut cat_changes = 0;
    for f in &state.features {
        let changed = match &f.kind {
            EncodedKind::Continuous { .. } => {
                let d = (cf_vector[f.offset] - input_vector[f.offset]).abs();
                cont_l1 += d;
                d > CHANGE_TOLERANCE
            }
            EncodedKind::Categorical { .. } => {
                let c = input.get(&f.name).map(|v| v.as_text()) != cf.get(&f.name).map(|v| v.as_text());
                cat_changes += usize::from(c);
                c
            }
            EncodedKind::Binary { .. } => {
                input.get(&f.name).map(|v| v.as_text()) != cf.get(&f.name).map(|v| v.as_text())
            }
        };
        if changed {
            changed_features.push(f.name.clone());
        }
    }

    Ok(CFResult {
        input: input.clone(),
        input_vector: input_vector.to_vec(),
        cf,
        cf_vector: cf_vector.to_vec(),
        input_class,
        cf_class,
        desired_class,
        feasible,
        constraint_flags,
        sparsity_count: changed_features.len(),
        cont_l1,
        cat_changes,
        changed_features,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::FeatureEncoding;
    use crate::instance::FeatureValue;

    fn state() -> EncodingState {
        EncodingState {
            width: 6,
            features: vec![
                FeatureEncoding {
                    name: "age".into(),
                    immutable: false,
                    offset: 0,
                    kind: EncodedKind::Continuous { min: 0.0, max: 10.0 },
                    ordinal_ranks: None,
                },
                FeatureEncoding {
                    name: "race".into(),
                    immutable: true,
                    offset: 1,
                    kind: EncodedKind::Categorical {
                        vocabulary: vec!["a".into(), "b".into()],
                    },
                    ordinal_ranks: None,
                },
                FeatureEncoding {
                    name: "job".into(),
                    immutable: false,
                    offset: 3,
                    kind: EncodedKind::Categorical {
                        vocabulary: vec!["x".into(), "y".into(), "z".into()],
                    },
                    ordinal_ranks: None,
                },
            ],
        }
    }

    #[test]
    fn identity_assembly() {
        let s = state();
        let mask = MutableMask::from_encoding(&s);
        let x = [0.3, 1.0, 0.0, 0.0, 1.0, 0.0];
        let cf = assemble_counterfactual(&x, &mask.gather(&x).unwrap(), &mask, &s).unwrap();
        assert_eq!(cf, x);
    }

    #[test]
    fn projection_and_immutables() {
        let s = state();
        let mask = MutableMask::from_encoding(&s);
        assert_eq!(mask.columns(), &[0, 3, 4, 5]);
        let x = [0.3, 1.0, 0.0, 0.0, 1.0, 0.0];
        let cf = assemble_counterfactual(&x, &[1.2, 0.4, 0.35, 0.25], &mask, &s).unwrap();
        assert_eq!(cf, vec![1.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
        // idempotent
        let again = assemble_counterfactual(&cf, &mask.gather(&cf).unwrap(), &mask, &s).unwrap();
        assert_eq!(again, cf);
        assert!(assemble_counterfactual(&x[..5], &[0.0; 4], &mask, &s).is_err());
    }

    #[test]
    fn describe_counts_changes() {
        let s = state();
        let schema = DatasetSchema::from_json(
            r#"{"features":[{"name":"age","kind":"continuous"},
                {"name":"race","kind":"categorical","immutable":true},
                {"name":"job","kind":"categorical"}],
                "target":{"name":"y","positive":"1"},
                "constraints":[{"type":"unary","feature":"age"}]}"#,
        )
        .unwrap();
        let input = Instance::new().with("age", 3.0).with("race", "a").with("job", "y");
        let xv = s.encode(&input).unwrap();
        let cfv = vec![0.25, 1.0, 0.0, 0.0, 0.0, 1.0];
        let r = describe_counterfactual(&schema, &s, &input, &xv, &cfv, 0, 1, 1).unwrap();
        assert_eq!(r.changed_features, vec!["age", "job"]);
        assert_eq!(r.sparsity_count, 2);
        assert_eq!(r.cat_changes, 1);
        assert!((r.cont_l1 - 0.05).abs() < 1e-12);
        assert!(!r.feasible.unary);
        assert!(r.feasible.binary);
        assert!(r.is_valid());

        let same = describe_counterfactual(&schema, &s, &input, &xv, &xv, 0, 0, 1).unwrap();
        assert_eq!(same.cf.get("age"), Some(&FeatureValue::Number(3.0)));
        assert_eq!(same.sparsity_count, 0);
        assert!(same.feasible.unary);
    }
}
