//! Single-file JSON persistence of a trained model.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::{ClassifierModel, ClassifierParams};
use crate::encoding::EncodingState;
use crate::error::{io_err, CfxError, Result};
use crate::metrics::MetricsReport;
use crate::model::{CfModel, TrainingSummary};
use crate::schema::DatasetSchema;
use crate::train::TrainConfig;
use crate::vae::{MutableMask, VaeModel, VaeParams};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CFModelBundle {
    pub format_version: u32,
    pub schema: DatasetSchema,
    /// Hex SHA-256 of `schema`; checked on load.
    pub schema_digest: String,
    pub encoding: EncodingState,
    pub classifier: ClassifierParams,
    pub vae: VaeParams,
    pub config: TrainConfig,
    pub summary: TrainingSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<MetricsReport>,
}

impl CFModelBundle {
    pub fn from_model(model: &CfModel) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            schema: model.schema.clone(),
            schema_digest: model.schema.digest(),
            encoding: model.encoding.clone(),
            classifier: model.classifier.to_params(),
            vae: model.vae.to_params(),
            config: model.config.clone(),
            summary: model.summary.clone(),
            report: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            format_version: u32,
        }
        let header: Header = serde_json::from_str(text)?;
        if header.format_version != FORMAT_VERSION {
            return Err(CfxError::Bundle(format!(
                "unsupported format version {} (expected {FORMAT_VERSION})",
                header.format_version
            )));
        }
        let bundle: Self = serde_json::from_str(text)?;
        bundle.schema.validate()?;
        if bundle.schema.digest() != bundle.schema_digest {
            return Err(CfxError::Bundle(
                "schema digest does not match the embedded schema".into(),
            ));
        }
        Ok(bundle)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(io_err(path))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json(&text)
    }

    /// Rebuilds the runnable model, checking every weight shape against the
    /// encoding.
    pub fn into_model(self) -> Result<CfModel> {
        let classifier = ClassifierModel::from_params(&self.classifier)?;
        if classifier.inputs() != self.encoding.width {
            return Err(CfxError::Bundle(format!(
                "classifier expects {} inputs but the encoding has width {}",
                classifier.inputs(),
                self.encoding.width
            )));
        }
        let vae = VaeModel::from_params(&self.vae)?;
        let mask = MutableMask::from_encoding(&self.encoding);
        if vae.mutable_width() != mask.mutable_width() {
            return Err(CfxError::Bundle(format!(
                "generator expects {} mutable columns but the encoding has {}",
                vae.mutable_width(),
                mask.mutable_width()
            )));
        }
        Ok(CfModel {
            schema: self.schema,
            encoding: self.encoding,
            classifier,
            vae,
            mask,
            config: self.config,
            summary: self.summary,
        })
    }
}

impl CfModel {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        CFModelBundle::from_model(self).save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        CFModelBundle::load(path)?.into_model()
    }
}
