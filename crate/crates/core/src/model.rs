//! A trained counterfactual model: schema, encoder, classifier and generator
//! bundled together, plus the end-to-end fit / generate / evaluate entry
//! points.

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{train_classifier, ClassifierModel, Prediction};
use crate::constraint::ResolvedConstraint;
use crate::encoding::{fit_encoding, split_indices, EncodedDataset, EncodingState};
use crate::error::{CfxError, Result};
use crate::generate::{assemble_counterfactual, describe_counterfactual, CFResult};
use crate::ingest::RawTable;
use crate::instance::Instance;
use crate::metrics::{config_digest, MetricsReport};
use crate::nn::Matrix;
use crate::schema::DatasetSchema;
use crate::train::{train_cf_model, EpochLog, TrainConfig};
use crate::vae::{sample_latent, MutableMask, VaeModel};

/// Upper bound on counterfactuals per request.
pub const MAX_K: usize = 50;

/// Summary of a training run, stored with the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainingSummary {
    pub rows: usize,
    pub train_rows: usize,
    pub classifier_validation_accuracy: f64,
    pub classifier_test_accuracy: f64,
    pub epochs: Vec<EpochLog>,
}

#[derive(Debug, Clone)]
pub struct CfModel {
    pub schema: DatasetSchema,
    pub encoding: EncodingState,
    pub classifier: ClassifierModel,
    pub vae: VaeModel,
    pub mask: MutableMask,
    pub config: TrainConfig,
    pub summary: TrainingSummary,
}

/// The three encoded splits of a dataset.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: EncodedDataset,
    pub validation: EncodedDataset,
    pub test: EncodedDataset,
}

impl Splits {
    pub fn new(data: &EncodedDataset, seed: u64) -> Result<Self> {
        let s = split_indices(data.len(), seed)?;
        Ok(Self {
            train: data.subset(&s.train),
            validation: data.subset(&s.validation),
            test: data.subset(&s.test),
        })
    }
}

/// Resolves the schema constraints that match the configured mode.
pub fn training_constraints(
    schema: &DatasetSchema,
    encoding: &EncodingState,
    config: &TrainConfig,
) -> Result<Vec<ResolvedConstraint>> {
    let kind = config.constraint_mode.kind();
    schema
        .constraints
        .iter()
        .filter(|c| c.kind() == kind)
        .map(|c| c.resolve(encoding))
        .collect()
}

/// Per-row seed so rows can be processed in any order with identical output.
fn row_rng(seed: u64, row: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row as u64);
    rng
}

impl CfModel {
    /// Fits the encoder on the cleaned table, then trains the classifier and
    /// the generator on the seeded training split.
    pub fn fit(table: &RawTable, schema: &DatasetSchema, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let encoding = fit_encoding(table, schema)?;
        let data = encoding.encode_table(table, schema)?;
        Self::fit_encoded(schema.clone(), encoding, &data, config)
    }

    pub fn fit_encoded(
        schema: DatasetSchema,
        encoding: EncodingState,
        data: &EncodedDataset,
        config: &TrainConfig,
    ) -> Result<Self> {
        let splits = Splits::new(data, config.seed)?;
        info!(
            "split {} rows into {} train / {} validation / {} test",
            data.len(),
            splits.train.len(),
            splits.validation.len(),
            splits.test.len()
        );
        let classifier = train_classifier(&splits.train, &splits.validation, &config.classifier, config.seed)?;
        let summary_val = classifier.accuracy(&splits.validation)?;
        let summary_test = classifier.accuracy(&splits.test)?;
        info!("classifier accuracy: validation {summary_val:.4}, test {summary_test:.4}");
        let mask = MutableMask::from_encoding(&encoding);
        let constraints = training_constraints(&schema, &encoding, config)?;
        let (vae, epochs) = train_cf_model(&classifier, &encoding, &splits.train, &mask, &constraints, config)?;
        Ok(Self {
            schema,
            encoding,
            classifier,
            vae,
            mask,
            config: config.clone(),
            summary: TrainingSummary {
                rows: data.len(),
                train_rows: splits.train.len(),
                classifier_validation_accuracy: summary_val,
                classifier_test_accuracy: summary_test,
                epochs,
            },
        })
    }

    pub fn predict(&self, instance: &Instance) -> Result<Prediction> {
        let x = self.encoding.encode(instance)?;
        self.classifier.predict(&x)
    }

    /// `k` counterfactuals for a raw instance. `desired` defaults to the
    /// opposite of the current prediction.
    pub fn generate(
        &self,
        instance: &Instance,
        desired: Option<u8>,
        k: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<CFResult>> {
        let x = self.encoding.encode(instance)?;
        self.generate_for_vector(instance, &x, desired, k, rng)
    }

    pub fn generate_for_vector(
        &self,
        instance: &Instance,
        x: &[f64],
        desired: Option<u8>,
        k: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<CFResult>> {
        if k == 0 || k > MAX_K {
            return Err(CfxError::Config(format!("k must be in 1..={MAX_K}, got {k}")));
        }
        if matches!(desired, Some(d) if d > 1) {
            return Err(CfxError::Config("desired class must be 0 or 1".into()));
        }
        let input_class = self.classifier.predict(x)?.class;
        let desired = desired.unwrap_or(1 - input_class);
        let x_mut = self.mask.gather(x)?;
        let rows: Vec<Vec<f64>> = vec![x_mut; k];
        let want = vec![desired; k];
        let (mu, logvar) = self.vae.encode_latent(&Matrix::from_rows(&rows)?, &want)?;
        let z = sample_latent(&mu, &logvar, rng);
        let decoded = self.vae.decode_cf(&z, &want)?;
        decoded
            .iter_rows()
            .map(|row| {
                let cf = assemble_counterfactual(x, row, &self.mask, &self.encoding)?;
                let cf_class = self.classifier.predict(&cf)?.class;
                describe_counterfactual(
                    &self.schema,
                    &self.encoding,
                    instance,
                    x,
                    &cf,
                    input_class,
                    cf_class,
                    desired,
                )
            })
            .collect()
    }

    /// One counterfactual per row of `data`, each row seeded independently
    /// from `seed` so the output does not depend on thread scheduling.
    pub fn counterfactuals_for(&self, data: &EncodedDataset, seed: u64) -> Result<Vec<CFResult>> {
        if data.is_empty() {
            return Err(CfxError::Data("no rows to explain".into()));
        }
        (0..data.len())
            .into_par_iter()
            .map(|i| {
                let x = data.matrix.row(i);
                let instance = self.encoding.decode(x)?;
                let mut rng = row_rng(seed, i);
                let mut out = self.generate_for_vector(&instance, x, None, 1, &mut rng)?;
                Ok(out.remove(0))
            })
            .collect()
    }

    /// Re-encodes `table` with the stored encoding and reproduces the
    /// training-time split.
    pub fn splits(&self, table: &RawTable) -> Result<Splits> {
        let data = self.encoding.encode_table(table, &self.schema)?;
        Splits::new(&data, self.config.seed)
    }

    /// One counterfactual per row of `data` plus the metric report.
    pub fn evaluate(&self, data: &EncodedDataset, seed: u64) -> Result<(Vec<CFResult>, MetricsReport)> {
        let results = self.counterfactuals_for(data, seed)?;
        let report = MetricsReport::from_results(&results, config_digest(&self.config))?;
        Ok((results, report))
    }

    pub fn training_constraints(&self) -> Result<Vec<ResolvedConstraint>> {
        training_constraints(&self.schema, &self.encoding, &self.config)
    }
}
