//! Feasibility-aware counterfactual explanations for tabular binary
//! classifiers: a from-scratch classifier and conditional VAE, a constrained
//! training objective, evaluation metrics, t-SNE manifolds and a JSON model
//! bundle.

pub mod bundle;
pub mod classifier;
pub mod constraint;
pub mod encoding;
pub mod error;
pub mod generate;
pub mod ingest;
pub mod instance;
pub mod loss;
pub mod manifold;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod schema;
pub mod train;
pub mod tsne;
pub mod vae;

pub use bundle::{CFModelBundle, FORMAT_VERSION};
pub use classifier::{ClassifierConfig, ClassifierModel, Prediction};
pub use constraint::{check_constraint, BinaryMode, ConstraintKind, ConstraintSpec, Direction};
pub use encoding::{fit_encoding, EncodedDataset, EncodingState};
pub use error::{CfxError, FieldError, Result};
pub use generate::{CFResult, FeasibilityFlags};
pub use ingest::{load_and_clean, RawTable};
pub use instance::{FeatureValue, Instance};
pub use loss::{LossWeights, SparsityMode};
pub use manifold::{build_manifold, export_manifold, read_manifold, ManifoldPoint, PointSource};
pub use metrics::{config_digest, emit_report, MetricsReport};
pub use model::{CfModel, Splits, TrainingSummary, MAX_K};
pub use schema::{load_schema, DatasetSchema, FeatureKind, FeatureSpec};
pub use train::{ConstraintMode, TrainConfig};
pub use tsne::{tsne_embed, TsneConfig};
