//! JSON API and server-sent event stream over a [`ServiceHandle`].

use std::convert::Infallible;
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use futures::stream::{self, Stream};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::broadcast::error::RecvError;

use tactile_core::detect::TrialVerdict;
use tactile_core::model::{GestureKind, RegionId, Thresholds};

use crate::live::{ServiceError, SessionState};
use crate::runtime::{ServiceHandle, SessionSummary};

pub struct ApiError(ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        Self(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match self.0 {
            ServiceError::State(_) => StatusCode::CONFLICT,
            ServiceError::Domain(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
            ServiceError::Unavailable => StatusCode::SERVICE_UNAVAILABLE,
        };
        (status, Json(json!({ "error": self.0.to_string() }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Deserialize)]
pub struct StartSession {
    pub participant: String,
}

#[derive(Debug, Deserialize)]
pub struct StartTrial {
    pub gesture: String,
    pub region: String,
}

#[derive(Debug, Deserialize)]
pub struct SetThresholds {
    pub thresholds: Vec<i64>,
}

#[derive(Debug, Serialize)]
pub struct ThresholdsBody {
    pub thresholds: Thresholds,
}

pub fn router(handle: ServiceHandle) -> Router {
    Router::new()
        .route("/session", post(start_session).delete(stop_session))
        .route("/trial", post(start_trial).delete(stop_trial))
        .route("/config/thresholds", put(set_thresholds))
        .route("/state", get(state))
        .route("/events", get(events))
        .with_state(handle)
}

async fn start_session(State(h): State<ServiceHandle>, Json(body): Json<StartSession>) -> ApiResult<SessionState> {
    Ok(Json(h.start_session(body.participant).await?))
}

async fn stop_session(State(h): State<ServiceHandle>) -> ApiResult<SessionSummary> {
    Ok(Json(h.stop_session().await?))
}

async fn start_trial(State(h): State<ServiceHandle>, Json(body): Json<StartTrial>) -> ApiResult<SessionState> {
    let gesture: GestureKind = body
        .gesture
        .parse()
        .map_err(|e: tactile_core::ModelError| ServiceError::Domain(e.to_string()))?;
    let region: RegionId = body
        .region
        .parse()
        .map_err(|e: tactile_core::ModelError| ServiceError::Domain(e.to_string()))?;
    Ok(Json(h.start_trial(gesture, region).await?))
}

async fn stop_trial(State(h): State<ServiceHandle>) -> ApiResult<TrialVerdict> {
    Ok(Json(h.stop_trial().await?))
}

async fn set_thresholds(State(h): State<ServiceHandle>, Json(body): Json<SetThresholds>) -> ApiResult<ThresholdsBody> {
    let thresholds = h.set_thresholds(body.thresholds).await?;
    Ok(Json(ThresholdsBody { thresholds }))
}

async fn state(State(h): State<ServiceHandle>) -> ApiResult<SessionState> {
    Ok(Json(h.snapshot().await?))
}

/// Live `frame`, `touch` and `trial` messages. A slow client skips the
/// messages it missed.
async fn events(State(h): State<ServiceHandle>) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let rx = h.subscribe();
    let stream = stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(event) => {
                    let sse = Event::default().json_data(&*event).expect("events serialize");
                    return Some((Ok(sse), rx));
                }
                Err(RecvError::Lagged(n)) => tracing::debug!(skipped = n, "event subscriber lagged"),
                Err(RecvError::Closed) => return None,
            }
        }
    });
    Sse::new(stream).keep_alive(KeepAlive::new().interval(Duration::from_secs(15)))
}
