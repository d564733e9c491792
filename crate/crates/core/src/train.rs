//! Training loop for the counterfactual VAE against a frozen classifier.

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{ClassifierConfig, ClassifierModel};
use crate::constraint::{ConstraintKind, ResolvedConstraint};
use crate::encoding::{EncodedDataset, EncodingState};
use crate::error::{CfxError, Result};
use crate::loss::{batch_loss, BatchTerms, LossComponents, LossWeights, SparsityMode};
use crate::nn::{Matrix, Module, Optimizer, OptimizerConfig};
use crate::vae::{MutableMask, VaeModel, LATENT_DIM};

/// Which constraint family the generator is trained and scored against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintMode {
    Unary,
    Binary,
}

impl ConstraintMode {
    pub fn kind(self) -> ConstraintKind {
        match self {
            ConstraintMode::Unary => ConstraintKind::Unary,
            ConstraintMode::Binary => ConstraintKind::Binary,
        }
    }
}

impl std::str::FromStr for ConstraintMode {
    type Err = CfxError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unary" => Ok(ConstraintMode::Unary),
            "binary" => Ok(ConstraintMode::Binary),
            other => Err(CfxError::Config(format!(
                "constraint mode must be `unary` or `binary`, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout: f64,
    pub latent_dim: usize,
    pub weights: LossWeights,
    pub constraint_mode: ConstraintMode,
    pub sparsity_mode: SparsityMode,
    pub optimizer: OptimizerConfig,
    /// Scale of extra Gaussian noise on the latent code during training.
    pub latent_noise: f64,
    /// Score the projected counterfactual with the classifier and pass the
    /// gradient straight through the projection. When false the classifier
    /// sees the relaxed decoder output.
    pub straight_through: bool,
    pub classifier: ClassifierConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.2,
            batch_size: 2048,
            epochs: 25,
            dropout: 0.3,
            latent_dim: LATENT_DIM,
            weights: LossWeights::default(),
            constraint_mode: ConstraintMode::Unary,
            sparsity_mode: SparsityMode::L1,
            optimizer: OptimizerConfig::default(),
            latent_noise: 0.0,
            straight_through: true,
            classifier: ClassifierConfig::default(),
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(CfxError::Config("batch size must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(CfxError::Config("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(CfxError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.latent_dim == 0 {
            return Err(CfxError::Config("latent dimension must be positive".into()));
        }
        if !(self.latent_noise.is_finite() && self.latent_noise >= 0.0) {
            return Err(CfxError::Config("latent noise must be non-negative".into()));
        }
        self.weights.validate()
    }
}

/// Mean loss components over one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub total: f64,
    pub components: LossComponents,
    /// Fraction of training rows whose relaxed counterfactual already scores
    /// the desired class higher.
    pub validity_rate: f64,
}

/// Desired class for each row: the opposite of the classifier's prediction.
pub fn desired_classes(classifier: &ClassifierModel, data: &EncodedDataset) -> Result<Vec<u8>> {
    Ok(classifier
        .predict_batch(&data.matrix)?
        .into_iter()
        .map(|c| 1 - c)
        .collect())
}

fn projected(cf: &Matrix, encoding: &EncodingState) -> Matrix {
    let mut out = cf.clone();
    for r in 0..out.rows() {
        encoding.project(out.row_mut(r));
    }
    out
}

/// Trains a fresh VAE; returns the final-epoch model and per-epoch losses.
pub fn train_cf_model(
    classifier: &ClassifierModel,
    encoding: &EncodingState,
    train: &EncodedDataset,
    mask: &MutableMask,
    constraints: &[ResolvedConstraint],
    config: &TrainConfig,
) -> Result<(VaeModel, Vec<EpochLog>)> {
    config.validate()?;
    if !classifier.is_frozen() {
        return Err(CfxError::NotFrozen);
    }
    if train.matrix.cols() != mask.width() {
        return Err(CfxError::Shape("training data width differs from the mask".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut vae = VaeModel::new(mask.mutable_width(), config.latent_dim, config.dropout, &mut rng)?;
    if config.epochs == 0 {
        warn!("zero epochs requested; returning an untrained generator");
        return Ok((vae, Vec::new()));
    }
    if train.is_empty() {
        return Err(CfxError::Data("empty training split".into()));
    }
    let desired = desired_classes(classifier, train)?;
    let x_mut_all = mask.gather_matrix(&train.matrix)?;
    let n_rows = x_mut_all.rows() as f64;
    let means: Vec<f64> = (0..x_mut_all.cols())
        .map(|c| x_mut_all.iter_rows().map(|r| r[c]).sum::<f64>() / n_rows)
        .collect();
    vae.init_output_bias(&means)?;
    let mut opt = Optimizer::new(config.optimizer, config.learning_rate);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut sum = LossComponents::default();
        let mut total = 0.0;
        let mut seen = 0usize;
        let mut hits = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let x = train.matrix.select_rows(chunk);
            let want: Vec<u8> = chunk.iter().map(|&i| desired[i]).collect();
            let x_mut = mask.gather_matrix(&x)?;
            vae.zero_grad();
            let fwd = vae.forward_train(&x_mut, &want, true, config.latent_noise, &mut rng)?;
            let cf = mask.scatter_matrix(&x, &fwd.output)?;
            let (logits, tape) = if config.straight_through {
                classifier.scores_for_loss(&projected(&cf, encoding))?
            } else {
                classifier.scores_for_loss(&cf)?
            };
            let terms = BatchTerms {
                x: &x,
                cf: &cf,
                logits: &logits,
                desired: &want,
                mu: &fwd.mu,
                logvar: &fwd.logvar,
                mutable_columns: mask.columns(),
                constraints,
                sparsity_mode: config.sparsity_mode,
            };
            let loss = match batch_loss(&terms, &config.weights) {
                Ok(l) if l.total.is_finite() => l,
                _ => return Err(CfxError::Diverged(epoch)),
            };
            let mut grad_cf = loss.grad_cf.clone();
            grad_cf.add_assign(&classifier.input_gradient(&tape, &loss.grad_logits)?)?;
            let grad_out = mask.gather_matrix(&grad_cf)?;
            vae.backward(&fwd, &grad_out, &loss.grad_mu, &loss.grad_logvar)?;
            opt.step(&mut vae).map_err(|e| match e {
                CfxError::NonFiniteGradient(_) => CfxError::Diverged(epoch),
                other => other,
            })?;

            for (i, &d) in want.iter().enumerate() {
                let (a, b) = (logits.get(i, d as usize), logits.get(i, 1 - d as usize));
                hits += usize::from(a > b);
            }
            let w = chunk.len() as f64;
            sum.validity += loss.components.validity * w;
            sum.proximity += loss.components.proximity * w;
            sum.feasibility += loss.components.feasibility * w;
            sum.sparsity += loss.components.sparsity * w;
            sum.kl += loss.components.kl * w;
            total += loss.total * w;
            seen += chunk.len();
        }
        if !vae.all_finite() {
            return Err(CfxError::Diverged(epoch));
        }
        let n = seen as f64;
        let components = LossComponents {
            validity: sum.validity / n,
            proximity: sum.proximity / n,
            feasibility: sum.feasibility / n,
            sparsity: sum.sparsity / n,
            kl: sum.kl / n,
        };
        let log = EpochLog {
            epoch,
            total: total / n,
            components,
            validity_rate: hits as f64 / n,
        };
        info!(
            "epoch {epoch}: valid {:.3} total {:.4} validity {:.4} proximity {:.4} feasibility {:.4} sparsity {:.4} kl {:.4}",
            log.validity_rate,
            log.total,
            components.validity,
            components.proximity,
            components.feasibility,
            components.sparsity,
            components.kl
        );
        history.push(log);
    }
    vae.clear_caches();
    Ok((vae, history))
}
