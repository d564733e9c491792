//! HTTP JSON API over a loaded, read-only model.

use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cfx_core::encoding::FeatureEncoding;
use cfx_core::{CfModel, CfxError, DatasetSchema, EncodedDataset, Instance, ManifoldPoint, Prediction};
use serde::{Deserialize, Serialize};

use crate::commands::{counterfactuals, manifold, CounterfactualsResponse};

pub struct AppState {
    pub model: CfModel,
    /// Training split for `/api/manifold`; absent when no data was given.
    pub train: Option<EncodedDataset>,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/schema", get(schema))
        .route("/api/predict", post(predict))
        .route("/api/counterfactuals", post(generate))
        .route("/api/manifold", get(manifold_points))
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { error: &self.message })).into_response()
    }
}

impl From<CfxError> for ApiError {
    fn from(e: CfxError) -> Self {
        let status = match e {
            CfxError::InvalidInstance(_) | CfxError::Config(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, e.body_text())
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Serialize)]
struct SchemaResponse<'a> {
    #[serde(flatten)]
    schema: &'a DatasetSchema,
    /// Category vocabularies and continuous ranges seen in training.
    domains: &'a [FeatureEncoding],
}

async fn schema(State(state): State<Arc<AppState>>) -> Response {
    Json(SchemaResponse {
        schema: &state.model.schema,
        domains: &state.model.encoding.features,
    })
    .into_response()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictRequest {
    pub instance: Instance,
}

async fn predict(
    State(state): State<Arc<AppState>>,
    body: Result<Json<PredictRequest>, JsonRejection>,
) -> ApiResult<Prediction> {
    let Json(req) = body?;
    Ok(Json(state.model.predict(&req.instance)?))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterfactualsRequest {
    pub instance: Instance,
    #[serde(default)]
    pub desired_class: Option<u8>,
    #[serde(default = "one")]
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}

async fn generate(
    State(state): State<Arc<AppState>>,
    body: Result<Json<CounterfactualsRequest>, JsonRejection>,
) -> ApiResult<CounterfactualsResponse> {
    let Json(req) = body?;
    Ok(Json(counterfactuals(
        &state.model,
        &req.instance,
        req.desired_class,
        req.k,
        req.seed,
    )?))
}

#[derive(Debug, Deserialize)]
pub struct ManifoldQuery {
    #[serde(default = "default_points")]
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_points() -> usize {
    500
}

async fn manifold_points(
    State(state): State<Arc<AppState>>,
    query: Result<Query<ManifoldQuery>, QueryRejection>,
) -> ApiResult<Vec<ManifoldPoint>> {
    let Query(q) = query?;
    if state.train.is_none() {
        return Err(ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "manifold needs training data; start the service with --data",
        ));
    }
    let points = tokio::task::spawn_blocking(move || {
        let train = state.train.as_ref().expect("checked above");
        manifold(&state.model, train, q.n, q.seed)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(points))
}
