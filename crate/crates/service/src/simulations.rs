use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use neyman_core::designs::DesignSpec;
use neyman_core::montecarlo::{compare_designs, BatchOptions, DesignSummary, Population, PopulationSpec, RNG_SCHEME};
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use crate::error::{ApiError, ErrorBody};
use crate::store::new_id;
use crate::AppState;

pub const SIMULATION_SCHEMA: &str = "neyman.simulation.v1";

/// Requests with more trajectories than this run as background jobs.
pub const SYNC_LIMIT: u64 = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PopulationInput {
    Spec(PopulationSpec),
    Explicit(Population),
}

impl PopulationInput {
    fn build(&self) -> neyman_core::Result<Population> {
        match self {
            PopulationInput::Spec(s) => s.build(),
            PopulationInput::Explicit(p) => {
                p.validate()?;
                Ok(p.clone())
            }
        }
    }
}

/// One design (`design`) or several run on shared outcomes (`designs`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationRequest {
    #[serde(default)]
    pub design: Option<DesignSpec>,
    #[serde(default)]
    pub designs: Option<Vec<DesignSpec>>,
    pub population: PopulationInput,
    pub n: u64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResponse {
    pub schema: String,
    pub rng: String,
    pub master_seed: u64,
    pub n: u64,
    pub population: String,
    pub results: Vec<DesignSummary>,
}

pub fn run(req: &SimulationRequest) -> neyman_core::Result<SimulationResponse> {
    let specs: Vec<&DesignSpec> = match (&req.design, &req.designs) {
        (Some(d), None) => vec![d],
        (None, Some(ds)) if !ds.is_empty() => ds.iter().collect(),
        _ => {
            return Err(neyman_core::Error::InvalidSpec(
                "give exactly one of design or a non-empty designs list".into(),
            ))
        }
    };
    let configs = specs.iter().map(|s| s.to_config()).collect::<neyman_core::Result<Vec<_>>>()?;
    let pop = req.population.build()?;
    let opts = BatchOptions { workers: None, bound: req.bound };
    let results = compare_designs(&configs, &pop, req.master_seed, req.n, &opts)?;
    Ok(SimulationResponse {
        schema: SIMULATION_SCHEMA.into(),
        rng: RNG_SCHEME.into(),
        master_seed: req.master_seed,
        n: req.n,
        population: pop.label(),
        results,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum JobStatus {
    Running,
    Done { result: SimulationResponse },
    Failed { error: ErrorBody },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobView {
    pub job_id: String,
    #[serde(flatten)]
    pub status: JobStatus,
}

/// Background simulations, at most `workers` running at once.
pub struct Jobs {
    map: Mutex<HashMap<String, JobStatus>>,
    permits: Arc<Semaphore>,
}

impl Jobs {
    pub fn new(workers: usize) -> Self {
        Self {
            map: Mutex::new(HashMap::new()),
            permits: Arc::new(Semaphore::new(workers.max(1))),
        }
    }

    fn set(&self, id: &str, status: JobStatus) {
        self.map.lock().expect("job table poisoned").insert(id.to_string(), status);
    }

    fn get(&self, id: &str) -> Option<JobStatus> {
        self.map.lock().expect("job table poisoned").get(id).cloned()
    }
}

async fn run_pooled(jobs: &Jobs, req: SimulationRequest) -> Result<SimulationResponse, ApiError> {
    let _permit = jobs.permits.acquire().await.map_err(|e| ApiError::internal(e.to_string()))?;
    tokio::task::spawn_blocking(move || run(&req))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map_err(ApiError::from)
}

pub async fn create(State(app): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: SimulationRequest = serde_json::from_slice(&body).map_err(ApiError::invalid_json)?;
    if req.n <= SYNC_LIMIT {
        return Ok(Json(run_pooled(&app.jobs, req).await?).into_response());
    }
    // Reject bad specs now rather than in the job.
    if let Some(d) = &req.design {
        d.to_config()?;
    }
    req.population.build()?;
    let job_id = new_id();
    app.jobs.set(&job_id, JobStatus::Running);
    let (jobs, id) = (app.jobs.clone(), job_id.clone());
    tokio::spawn(async move {
        let status = match run_pooled(&jobs, req).await {
            Ok(result) => JobStatus::Done { result },
            Err(e) => JobStatus::Failed { error: e.body },
        };
        jobs.set(&id, status);
    });
    Ok((StatusCode::ACCEPTED, Json(JobView { job_id, status: JobStatus::Running })).into_response())
}

pub async fn get(State(app): State<AppState>, Path(job_id): Path<String>) -> Result<Json<JobView>, ApiError> {
    let status = app.jobs.get(&job_id).ok_or_else(|| ApiError::not_found("job", &job_id))?;
    Ok(Json(JobView { job_id, status }))
}
