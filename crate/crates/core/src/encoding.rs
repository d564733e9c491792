//! Invertible mapping between raw instances and `[0,1]` model vectors.
//!
//! Continuous features are min-max normalized, categorical features become
//! one-hot groups and binary features a single 0/1 column. Columns follow the
//! schema's feature order.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CfxError, FieldError, Result};
use crate::ingest::RawTable;
use crate::instance::{FeatureValue, Instance};
use crate::nn::Matrix;
use crate::schema::{DatasetSchema, FeatureKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EncodedKind {
    Continuous { min: f64, max: f64 },
    Categorical { vocabulary: Vec<String> },
    Binary { zero: String, one: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEncoding {
    pub name: String,
    pub immutable: bool,
    pub offset: usize,
    #[serde(flatten)]
    pub kind: EncodedKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordinal_ranks: Option<Vec<String>>,
}

impl FeatureEncoding {
    pub fn width(&self) -> usize {
        match &self.kind {
            EncodedKind::Categorical { vocabulary } => vocabulary.len(),
            _ => 1,
        }
    }

    pub fn feature_kind(&self) -> FeatureKind {
        match self.kind {
            EncodedKind::Continuous { .. } => FeatureKind::Continuous,
            EncodedKind::Categorical { .. } => FeatureKind::Categorical,
            EncodedKind::Binary { .. } => FeatureKind::Binary,
        }
    }

    pub fn columns(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.width()
    }

    /// Normalized ordinal rank in `[0,1]` of a category label.
    fn normalized_rank(&self, label: &str) -> Option<f64> {
        let ranks = self.ordinal_ranks.as_ref()?;
        let pos = ranks.iter().position(|r| r == label)?;
        Some(if ranks.len() > 1 {
            pos as f64 / (ranks.len() - 1) as f64
        } else {
            0.0
        })
    }
}

/// Fitted encoder state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingState {
    pub features: Vec<FeatureEncoding>,
    pub width: usize,
}

/// Differentiable scalar reading of one feature from an encoded vector, used
/// by constraint penalties.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarView {
    /// A single column, optionally flipped (`1 - v`).
    Column { col: usize, flip: bool },
    /// Expected normalized rank over a one-hot group, weighting each category
    /// by its (relaxed) activation.
    Ranked { cols: Vec<usize>, ranks: Vec<f64> },
}

/// Below this total group mass the expected rank is taken as 0 with zero
/// gradient; the `1 / total` factor would otherwise overflow.
const RANK_MIN_MASS: f64 = 1e-9;

impl ScalarView {
    pub fn value(&self, v: &[f64]) -> f64 {
        match self {
            ScalarView::Column { col, flip } => {
                if *flip {
                    1.0 - v[*col]
                } else {
                    v[*col]
                }
            }
            ScalarView::Ranked { cols, ranks } => {
                let total: f64 = cols.iter().map(|&c| v[c]).sum();
                if total < RANK_MIN_MASS {
                    return 0.0;
                }
                cols.iter().zip(ranks).map(|(&c, r)| v[c] * r).sum::<f64>() / total
            }
        }
    }

    /// Adds `upstream * d value / d v` into `grad`.
    pub fn accumulate_grad(&self, v: &[f64], upstream: f64, grad: &mut [f64]) {
        if upstream == 0.0 {
            return;
        }
        match self {
            ScalarView::Column { col, flip } => {
                grad[*col] += if *flip { -upstream } else { upstream };
            }
            ScalarView::Ranked { cols, ranks } => {
                let total: f64 = cols.iter().map(|&c| v[c]).sum();
                if total < RANK_MIN_MASS {
                    return;
                }
                let value = self.value(v);
                for (&c, r) in cols.iter().zip(ranks) {
                    grad[c] += upstream * (r - value) / total;
                }
            }
        }
    }
}

impl EncodingState {
    pub fn feature(&self, name: &str) -> Option<&FeatureEncoding> {
        self.features.iter().find(|f| f.name == name)
    }

    pub fn scalar_view(&self, name: &str) -> Result<ScalarView> {
        let f = self
            .feature(name)
            .ok_or_else(|| CfxError::Encoding(format!("unknown feature `{name}`")))?;
        let missing_ranks = || CfxError::Schema(format!("feature `{name}` needs ordinal_ranks for constraints"));
        Ok(match &f.kind {
            EncodedKind::Continuous { .. } => ScalarView::Column {
                col: f.offset,
                flip: false,
            },
            EncodedKind::Binary { zero, one } => {
                let (rz, ro) = (
                    f.normalized_rank(zero).ok_or_else(missing_ranks)?,
                    f.normalized_rank(one).ok_or_else(missing_ranks)?,
                );
                ScalarView::Column {
                    col: f.offset,
                    flip: ro < rz,
                }
            }
            EncodedKind::Categorical { vocabulary } => ScalarView::Ranked {
                cols: f.columns().collect(),
                ranks: vocabulary
                    .iter()
                    .map(|c| f.normalized_rank(c).ok_or_else(missing_ranks))
                    .collect::<Result<_>>()?,
            },
        })
    }

    /// Per-feature validation with one entry per problem.
    pub fn validate_instance(&self, instance: &Instance) -> Result<()> {
        let mut errors = Vec::new();
        for f in &self.features {
            let Some(value) = instance.get(&f.name) else {
                errors.push(FieldError {
                    field: f.name.clone(),
                    message: "missing".into(),
                });
                continue;
            };
            let problem = match &f.kind {
                EncodedKind::Continuous { .. } => match value.as_number() {
                    Some(v) if v.is_finite() => None,
                    _ => Some("expected a finite number".to_string()),
                },
                EncodedKind::Categorical { vocabulary } => {
                    let label = value.as_text();
                    (!vocabulary.contains(&label))
                        .then(|| format!("unknown category `{label}` (expected one of {vocabulary:?})"))
                }
                EncodedKind::Binary { zero, one } => {
                    let label = value.as_text();
                    (label != *zero && label != *one)
                        .then(|| format!("unknown value `{label}` (expected `{zero}` or `{one}`)"))
                }
            };
            if let Some(message) = problem {
                errors.push(FieldError {
                    field: f.name.clone(),
                    message,
                });
            }
        }
        for name in instance.0.keys() {
            if self.feature(name).is_none() {
                errors.push(FieldError {
                    field: name.clone(),
                    message: "not a schema feature".into(),
                });
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(CfxError::InvalidInstance(errors))
        }
    }

    /// Continuous values outside the fitted range are clamped.
    pub fn encode(&self, instance: &Instance) -> Result<Vec<f64>> {
        self.validate_instance(instance)?;
        let mut out = vec![0.0; self.width];
        for f in &self.features {
            let value = &instance.0[&f.name];
            match &f.kind {
                EncodedKind::Continuous { min, max } => {
                    let v = value.as_number().expect("validated");
                    out[f.offset] = ((v - min) / (max - min)).clamp(0.0, 1.0);
                }
                EncodedKind::Categorical { vocabulary } => {
                    let label = value.as_text();
                    let idx = vocabulary.iter().position(|c| *c == label).expect("validated");
                    out[f.offset + idx] = 1.0;
                }
                EncodedKind::Binary { one, .. } => {
                    out[f.offset] = if value.as_text() == *one { 1.0 } else { 0.0 };
                }
            }
        }
        Ok(out)
    }

    pub fn decode(&self, vector: &[f64]) -> Result<Instance> {
        if vector.len() != self.width {
            return Err(CfxError::Shape(format!(
                "vector has width {}, encoding expects {}",
                vector.len(),
                self.width
            )));
        }
        let mut inst = Instance::new();
        for f in &self.features {
            let value = match &f.kind {
                EncodedKind::Continuous { min, max } => {
                    FeatureValue::Number(min + vector[f.offset].clamp(0.0, 1.0) * (max - min))
                }
                EncodedKind::Categorical { vocabulary } => {
                    let idx = argmax(&vector[f.columns()]);
                    FeatureValue::Text(vocabulary[idx].clone())
                }
                EncodedKind::Binary { zero, one } => FeatureValue::Text(if vector[f.offset] >= 0.5 {
                    one.clone()
                } else {
                    zero.clone()
                }),
            };
            inst.insert(f.name.clone(), value);
        }
        Ok(inst)
    }

    /// Snaps a relaxed vector onto the valid encoding: argmax one-hot per
    /// group, binary threshold at 0.5, continuous clamp to `[0,1]`.
    pub fn project(&self, vector: &mut [f64]) {
        for f in &self.features {
            match &f.kind {
                EncodedKind::Continuous { .. } => {
                    vector[f.offset] = vector[f.offset].clamp(0.0, 1.0);
                }
                EncodedKind::Categorical { .. } => {
                    let group = &mut vector[f.columns()];
                    let idx = argmax(group);
                    group.iter_mut().for_each(|v| *v = 0.0);
                    group[idx] = 1.0;
                }
                EncodedKind::Binary { .. } => {
                    vector[f.offset] = if vector[f.offset] >= 0.5 { 1.0 } else { 0.0 };
                }
            }
        }
    }

    /// Encodes every row of a cleaned table together with its 0/1 label.
    pub fn encode_table(&self, table: &RawTable, schema: &DatasetSchema) -> Result<EncodedDataset> {
        let cols = table.schema_columns(schema)?;
        let target_col = *cols.last().expect("target column");
        let mut data = Vec::with_capacity(table.len() * self.width);
        let mut labels = Vec::with_capacity(table.len());
        for (r, row) in table.rows.iter().enumerate() {
            let mut inst = Instance::new();
            for (f, &c) in self.features.iter().zip(&cols) {
                inst.insert(f.name.clone(), FeatureValue::Text(row[c].clone()));
            }
            let v = self.encode(&inst).map_err(|e| match e {
                CfxError::InvalidInstance(errs) => {
                    CfxError::Encoding(format!("row {r}: {}", CfxError::InvalidInstance(errs)))
                }
                other => other,
            })?;
            data.extend(v);
            labels.push(u8::from(row[target_col] == schema.target.positive));
        }
        Ok(EncodedDataset {
            matrix: Matrix::new(table.len(), self.width, data)?,
            labels,
        })
    }

    /// Encoded column indices that belong to mutable features.
    pub fn mutable_columns(&self) -> Vec<usize> {
        self.features
            .iter()
            .filter(|f| !f.immutable)
            .flat_map(|f| f.columns())
            .collect()
    }

    pub fn mutable_feature_count(&self) -> usize {
        self.features.iter().filter(|f| !f.immutable).count()
    }
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn first_appearance(values: impl Iterator<Item = String>) -> Vec<String> {
    let mut seen = Vec::new();
    for v in values {
        if !seen.contains(&v) {
            seen.push(v);
        }
    }
    seen
}

pub fn fit_encoding(table: &RawTable, schema: &DatasetSchema) -> Result<EncodingState> {
    let cols = table.schema_columns(schema)?;
    if table.is_empty() {
        return Err(CfxError::Data("cannot fit an encoding on an empty table".into()));
    }
    let mut features = Vec::with_capacity(schema.features.len());
    let mut offset = 0;
    for (spec, &c) in schema.features.iter().zip(&cols) {
        let column = || table.rows.iter().map(move |r| r[c].clone());
        let kind = match spec.kind {
            FeatureKind::Continuous => {
                let mut min = f64::INFINITY;
                let mut max = f64::NEG_INFINITY;
                for (r, raw) in column().enumerate() {
                    let v: f64 = raw.parse().map_err(|_| {
                        CfxError::Encoding(format!("row {r}: `{raw}` in `{}` is not numeric", spec.name))
                    })?;
                    min = min.min(v);
                    max = max.max(v);
                }
                if max <= min {
                    return Err(CfxError::Encoding(format!(
                        "continuous feature `{}` is constant",
                        spec.name
                    )));
                }
                EncodedKind::Continuous { min, max }
            }
            FeatureKind::Categorical => EncodedKind::Categorical {
                vocabulary: first_appearance(column()),
            },
            FeatureKind::Binary => {
                let observed = first_appearance(column());
                if observed.len() != 2 {
                    return Err(CfxError::Encoding(format!(
                        "binary feature `{}` has {} distinct values",
                        spec.name,
                        observed.len()
                    )));
                }
                let (zero, one) = match &spec.ordinal_ranks {
                    Some(r) if r.len() == 2 => (r[0].clone(), r[1].clone()),
                    _ => (observed[0].clone(), observed[1].clone()),
                };
                EncodedKind::Binary { zero, one }
            }
        };
        if let Some(ranks) = &spec.ordinal_ranks {
            let mut observed = first_appearance(column());
            let mut expected = ranks.clone();
            observed.sort();
            expected.sort();
            if observed != expected {
                return Err(CfxError::Encoding(format!(
                    "ordinal ranks of `{}` are not a permutation of its observed values {observed:?}",
                    spec.name
                )));
            }
        }
        let enc = FeatureEncoding {
            name: spec.name.clone(),
            immutable: spec.immutable,
            offset,
            kind,
            ordinal_ranks: spec.ordinal_ranks.clone(),
        };
        offset += enc.width();
        features.push(enc);
    }
    Ok(EncodingState {
        features,
        width: offset,
    })
}

/// Encoded rows and 0/1 labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset {
    pub matrix: Matrix,
    pub labels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded 80/10/10 shuffle split; train and validation sizes are floored,
/// the test split takes the remainder.
pub fn split_indices(n: usize, seed: u64) -> Result<SplitIndices> {
    if n < 10 {
        return Err(CfxError::Data(format!("need at least 10 rows to split, got {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = n * 8 / 10;
    let n_val = n / 10;
    let test = idx.split_off(n_train + n_val);
    let validation = idx.split_off(n_train);
    Ok(SplitIndices {
        train: idx,
        validation,
        test,
    })
}

impl EncodedDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> EncodedDataset {
        EncodedDataset {
            matrix: self.matrix.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn split(&self, seed: u64) -> Result<(EncodedDataset, EncodedDataset, EncodedDataset)> {
        let s = split_indices(self.len(), seed)?;
        Ok((self.subset(&s.train), self.subset(&s.validation), self.subset(&s.test)))
    }
}
