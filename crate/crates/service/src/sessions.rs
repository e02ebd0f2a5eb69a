use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::Json;
use neyman_core::allocation::Allocation;
use neyman_core::designs::{Arm, CaseLabel, DesignConfig, DesignSpec, DesignState, StageAllocation, StageEstimate};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ApiError;
use crate::store::{new_id, now, AuditEntry, LastSubmit, Session};
use crate::AppState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreatedSession {
    pub id: String,
    pub config: DesignConfig,
    pub stage: StageAllocation,
    pub case_label: CaseLabel,
}

/// Observations of the pending stage. `stage`, when given, must name the
/// pending stage; it also makes duplicate detection exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageObservations {
    pub treated: Vec<f64>,
    pub control: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageResult {
    pub id: String,
    pub completed_stage: usize,
    pub next: Option<StageAllocation>,
    pub case_label: Option<CaseLabel>,
    /// Estimate computed from data up to the completed stage, if one was.
    pub estimate: Option<StageEstimate>,
    pub frozen_arm: Option<Arm>,
    pub case_path: Vec<CaseLabel>,
    pub cumulative: Allocation,
    pub complete: bool,
    pub totals: Option<Allocation>,
    pub tau_hat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub id: String,
    pub created_at: u64,
    pub updated_at: u64,
    pub config: DesignConfig,
    pub case_path: Vec<CaseLabel>,
    pub stages: Vec<StageAllocation>,
    pub pending: Option<StageAllocation>,
    pub cumulative: Allocation,
    pub estimates: Vec<StageEstimate>,
    pub frozen_arm: Option<Arm>,
    pub complete: bool,
    pub totals: Option<Allocation>,
    pub tau_hat: Option<f64>,
    pub audit: Vec<AuditEntry>,
}

fn digest(payload: &StageObservations) -> String {
    let bytes = serde_json::to_vec(payload).expect("observations serialize");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn result_of(id: &str, state: &DesignState, completed: usize, next: Option<StageAllocation>) -> StageResult {
    let finished = state.finalize().ok();
    StageResult {
        id: id.to_string(),
        completed_stage: completed,
        next,
        case_label: next.map(|s| s.case_label),
        estimate: state.estimates().last().filter(|e| e.stage == completed).copied(),
        frozen_arm: state.frozen_arm(),
        case_path: state.case_path(),
        cumulative: state.cumulative(),
        complete: state.is_complete(),
        totals: finished.map(|f| f.0),
        tau_hat: finished.map(|f| f.1),
    }
}

pub async fn create(State(app): State<AppState>, body: Bytes) -> Result<(StatusCode, Json<CreatedSession>), ApiError> {
    let spec: DesignSpec = serde_json::from_slice(&body).map_err(ApiError::invalid_json)?;
    let config = spec.to_config()?;
    let (state, first) = DesignState::start(config.clone())?;
    let t = now();
    let session = Session {
        id: new_id(),
        created_at: t,
        updated_at: t,
        state,
        audit: Vec::new(),
        last_submit: None,
    };
    app.store.save(&session)?;
    Ok((
        StatusCode::CREATED,
        Json(CreatedSession {
            id: session.id,
            config,
            stage: first,
            case_label: first.case_label,
        }),
    ))
}

pub async fn submit(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<serde_json::Value>, ApiError> {
    let obs: StageObservations = serde_json::from_slice(&body).map_err(ApiError::invalid_json)?;
    let lock = app.store.lock(&id);
    let _guard = lock.lock().await;
    let mut session = app.store.load(&id)?.ok_or_else(|| ApiError::not_found("session", &id))?;
    let digest = digest(&obs);

    let pending = session.state.pending().copied();
    if let Some(last) = &session.last_submit {
        // Without an explicit stage, a repeated payload that still fits the
        // pending stage is taken as new data.
        let fits = pending.is_some_and(|p| obs.treated.len() as u64 == p.t1 && obs.control.len() as u64 == p.t0);
        if last.digest == digest && (obs.stage.is_some() || !fits) {
            return Ok(Json(last.response.clone()));
        }
    }
    let pending = pending.ok_or_else(|| ApiError::from(neyman_core::Error::WrongStage("experiment is complete".into())))?;
    if let Some(stage) = obs.stage {
        if stage != pending.stage {
            return Err(neyman_core::Error::WrongStage(format!(
                "stage {stage} submitted but stage {} is pending",
                pending.stage
            ))
            .into());
        }
    }

    let next = session.state.submit(&obs.treated, &obs.control)?;
    let response = serde_json::to_value(result_of(&id, &session.state, pending.stage, next))
        .map_err(|e| ApiError::internal(e.to_string()))?;
    let t = now();
    session.audit.push(AuditEntry {
        stage: pending.stage,
        allocation: pending,
        digest: digest.clone(),
        at: t,
    });
    session.updated_at = t;
    session.last_submit = Some(LastSubmit { digest, response: response.clone() });
    app.store.save(&session)?;
    Ok(Json(response))
}

pub async fn get(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionSnapshot>, ApiError> {
    let session = app.store.load(&id)?.ok_or_else(|| ApiError::not_found("session", &id))?;
    let s = &session.state;
    let finished = s.finalize().ok();
    Ok(Json(SessionSnapshot {
        id: session.id.clone(),
        created_at: session.created_at,
        updated_at: session.updated_at,
        config: s.config().clone(),
        case_path: s.case_path(),
        stages: s.stages().to_vec(),
        pending: s.pending().copied(),
        cumulative: s.cumulative(),
        estimates: s.estimates().to_vec(),
        frozen_arm: s.frozen_arm(),
        complete: s.is_complete(),
        totals: finished.map(|f| f.0),
        tau_hat: finished.map(|f| f.1),
        audit: session.audit,
    }))
}
