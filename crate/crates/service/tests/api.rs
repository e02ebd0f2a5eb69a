use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use neyman_core::designs::{DesignSpec, DesignState};
use neyman_service::{router, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

struct Harness {
    app: Router,
    _dir: tempfile::TempDir,
}

impl Harness {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let app = router(AppState::open(dir.path(), 2).unwrap());
        Self { app, _dir: dir }
    }

    async fn raw(&self, method: &str, uri: &str, body: Option<String>) -> (StatusCode, Vec<u8>) {
        let req = Request::builder()
            .method(method)
            .uri(uri)
            .header("content-type", "application/json")
            .body(body.map(Body::from).unwrap_or_else(Body::empty))
            .unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        (status, to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec())
    }

    async fn call(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let (status, bytes) = self.raw(method, uri, body.map(|b| b.to_string())).await;
        (status, serde_json::from_slice(&bytes).unwrap())
    }
}

fn ones(n: u64) -> Vec<f64> {
    vec![1.0; n as usize]
}

#[tokio::test]
async fn two_stage_session_end_to_end() {
    let h = Harness::new();
    let (status, created) = h.call("POST", "/v1/sessions", Some(json!({"M": 2, "T": 10000, "beta": 1}))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!((created["stage"]["t1"].as_u64(), created["stage"]["t0"].as_u64()), (Some(50), Some(50)));
    assert_eq!(created["case_label"], "Init");
    let id = created["id"].as_str().unwrap().to_string();

    let (status, snap) = h.call("GET", &format!("/v1/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(snap["case_path"], json!(["Init"]));

    let treated: Vec<f64> = (0..50).map(|i| 3.0 * (i % 2) as f64).collect();
    let control: Vec<f64> = (0..50).map(|i| (i % 2) as f64).collect();
    let (status, r) = h
        .call("POST", &format!("/v1/sessions/{id}/stages"), Some(json!({"treated": treated, "control": control})))
        .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(r["case_label"], "Plugin2Stage");
    assert_eq!((r["next"]["t1"].as_u64(), r["next"]["t0"].as_u64()), (Some(7450), Some(2450)));
    assert!(r["estimate"]["sigma1_hat"].as_f64().unwrap() > 0.0);

    let (_, snap) = h.call("GET", &format!("/v1/sessions/{id}"), None).await;
    assert_eq!(snap["case_path"].as_array().unwrap().len(), 2);

    let (status, r) = h
        .call(
            "POST",
            &format!("/v1/sessions/{id}/stages"),
            Some(json!({"treated": ones(7450), "control": vec![0.0; 2450]})),
        )
        .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(r["complete"], true);
    assert_eq!(r["next"], Value::Null);
    assert_eq!((r["totals"]["t1"].as_u64(), r["totals"]["t0"].as_u64()), (Some(7500), Some(2500)));
    assert!(r["tau_hat"].is_number());

    let (status, err) = h
        .call("POST", &format!("/v1/sessions/{id}/stages"), Some(json!({"treated": [1.0], "control": []})))
        .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["code"], "WrongStage");
}

#[tokio::test]
async fn create_errors() {
    let h = Harness::new();
    let (status, _) = h.call("POST", "/v1/sessions", Some(json!({"M": 3, "T": 16, "schedule": "thm3"}))).await;
    assert_eq!(status, StatusCode::CREATED);
    let (status, err) = h.call("POST", "/v1/sessions", Some(json!({"M": 3, "T": 8, "schedule": "thm3"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["code"], "InfeasibleConfig");
    assert!(err["detail"]["violation"].as_str().unwrap().contains("b_1"));
    let (status, err) = h.raw("POST", "/v1/sessions", Some("{not json".into())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(serde_json::from_slice::<Value>(&err).unwrap()["code"], "InvalidJson");
    let (status, err) = h.call("GET", "/v1/sessions/0123abcd", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["code"], "NotFound");
}

#[tokio::test]
async fn count_mismatch_and_duplicates() {
    let h = Harness::new();
    let (_, created) = h.call("POST", "/v1/sessions", Some(json!({"M": 3, "T": 1000, "schedule": "thm3"}))).await;
    let id = created["id"].as_str().unwrap();
    let uri = format!("/v1/sessions/{id}/stages");

    let (status, err) = h.call("POST", &uri, Some(json!({"treated": ones(3), "control": ones(12)}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["code"], "CountMismatch");
    assert_eq!(err["detail"]["expected"]["treated"], 12);

    let (status, err) = h
        .call("POST", &uri, Some(json!({"treated": ones(12), "control": ones(12), "stage": 2})))
        .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["code"], "WrongStage");

    let treated: Vec<f64> = (0..12).map(|i| (i % 3) as f64).collect();
    let control: Vec<f64> = (0..12).map(|i| (i % 2) as f64).collect();
    let body = json!({"treated": treated, "control": control, "stage": 1}).to_string();
    let (s1, first) = h.raw("POST", &uri, Some(body.clone())).await;
    let (s2, again) = h.raw("POST", &uri, Some(body)).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(first, again);

    let (_, snap) = h.call("GET", &format!("/v1/sessions/{id}"), None).await;
    assert_eq!(snap["audit"].as_array().unwrap().len(), 1);
    assert_eq!(snap["case_path"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn service_matches_the_state_machine() {
    let spec = json!({"M": 4, "T": 2000, "schedule": "thm3"});
    let config = serde_json::from_value::<DesignSpec>(spec.clone()).unwrap().to_config().unwrap();
    let (mut direct, mut stage) = DesignState::start(config).unwrap();

    let h = Harness::new();
    let (_, created) = h.call("POST", "/v1/sessions", Some(spec)).await;
    let id = created["id"].as_str().unwrap();
    let mut k = 0u64;
    loop {
        let treated: Vec<f64> = (0..stage.t1).map(|i| ((i * 7 + k) % 11) as f64).collect();
        let control: Vec<f64> = (0..stage.t0).map(|i| ((i * 3 + k) % 4) as f64).collect();
        k += 1;
        let (status, r) = h
            .call("POST", &format!("/v1/sessions/{id}/stages"), Some(json!({"treated": treated, "control": control})))
            .await;
        assert_eq!(status, StatusCode::OK);
        let next = direct.submit(&treated, &control).unwrap();
        assert_eq!(r["next"], serde_json::to_value(next).unwrap());
        match next {
            Some(s) => stage = s,
            None => {
                let (_, tau) = direct.finalize().unwrap();
                assert_eq!(r["tau_hat"].as_f64().unwrap().to_bits(), tau.to_bits());
                break;
            }
        }
    }
    let (_, snap) = h.call("GET", &format!("/v1/sessions/{id}"), None).await;
    assert_eq!(snap["case_path"], serde_json::to_value(direct.case_path()).unwrap());
}

#[tokio::test]
async fn simulations_are_deterministic() {
    let h = Harness::new();
    let body = json!({
        "design": {"M": 3, "T": 500, "schedule": "thm3"},
        "population": "gaussian:rho=2",
        "n": 200,
        "master_seed": 7
    })
    .to_string();
    let (s1, a) = h.raw("POST", "/v1/simulations", Some(body.clone())).await;
    let (s2, b) = h.raw("POST", "/v1/simulations", Some(body)).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(a, b);
    let v: Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(v["schema"], "neyman.simulation.v1");
    assert_eq!(v["results"][0]["summary"]["n_trajectories"], 200);

    let (status, one) = h
        .call(
            "POST",
            "/v1/simulations",
            Some(json!({"design": {"M": 2, "T": 100, "beta": 1}, "population": "gaussian:rho=3", "n": 1})),
        )
        .await;
    assert_eq!(status, StatusCode::OK);
    let s = &one["results"][0]["summary"];
    assert_eq!(s["mean_ratio"], s["p95_ratio"]);
    assert_eq!(s["var_tau_hat"].as_f64(), Some(0.0));

    let (status, err) = h
        .call("POST", "/v1/simulations", Some(json!({"design": {"M": 2, "T": 100, "beta": 1}, "population": "nope", "n": 1})))
        .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["code"], "InvalidSpec");
}

#[tokio::test]
async fn comparison_on_the_reference_population() {
    let h = Harness::new();
    let (status, v) = h
        .call(
            "POST",
            "/v1/simulations",
            Some(json!({
                "designs": [{"M": 1, "T": 1000}, {"M": 2, "T": 1000, "schedule": "preset"}],
                "population": "table1",
                "n": 10000,
                "master_seed": 3
            })),
        )
        .await;
    assert_eq!(status, StatusCode::OK);
    let var = |i: usize| v["results"][i]["summary"]["var_tau_hat"].as_f64().unwrap();
    let reduction = 1.0 - var(1) / var(0);
    assert!((0.05..=0.13).contains(&reduction), "{reduction}");
}

#[tokio::test]
async fn large_batches_become_jobs() {
    let h = Harness::new();
    let (status, job) = h
        .call(
            "POST",
            "/v1/simulations",
            Some(json!({"design": {"M": 1, "T": 20}, "population": "gaussian:rho=1", "n": 10001})),
        )
        .await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let id = job["job_id"].as_str().unwrap();
    let mut done = None;
    for _ in 0..500 {
        let (status, v) = h.call("GET", &format!("/v1/simulations/{id}"), None).await;
        assert_eq!(status, StatusCode::OK);
        if v["status"] == "done" {
            done = Some(v);
            break;
        }
        tokio::time::sleep(std::time::Duration::from_millis(20)).await;
    }
    let v = done.expect("job finished");
    assert_eq!(v["result"]["results"][0]["summary"]["n_trajectories"], 10001);
    let (status, _) = h.call("GET", "/v1/simulations/ffff", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

fn golden(name: &str) -> String {
    std::fs::read_to_string(format!("{}/../cli/tests/golden/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

#[tokio::test]
async fn replaying_the_advise_transcript_gives_the_same_allocations() {
    let values = |line: &str| -> Vec<f64> { line.split_whitespace().skip(2).map(|w| w.parse().unwrap()).collect() };
    let input = golden("advise_two_stage.in");
    let obs: Vec<&str> = input.lines().filter(|l| l.starts_with("OBS")).collect();
    let output = golden("advise_two_stage.out");
    let expected: Vec<(u64, u64)> = output
        .lines()
        .filter_map(|l| l.strip_prefix("STAGE "))
        .map(|l| {
            let w: Vec<&str> = l.split_whitespace().collect();
            (w[2].parse().unwrap(), w[3].parse().unwrap())
        })
        .collect();

    let h = Harness::new();
    let (_, created) = h.call("POST", "/v1/sessions", Some(json!({"M": 2, "T": 16, "beta": 1}))).await;
    let id = created["id"].as_str().unwrap();
    let mut seen = vec![(created["stage"]["t1"].as_u64().unwrap(), created["stage"]["t0"].as_u64().unwrap())];
    let mut last = Value::Null;
    for pair in obs.chunks(2) {
        let (status, r) = h
            .call(
                "POST",
                &format!("/v1/sessions/{id}/stages"),
                Some(json!({"treated": values(pair[0]), "control": values(pair[1])})),
            )
            .await;
        assert_eq!(status, StatusCode::OK);
        if let Some(next) = r["next"].as_object() {
            seen.push((next["t1"].as_u64().unwrap(), next["t0"].as_u64().unwrap()));
        }
        last = r;
    }
    assert_eq!(seen, expected);
    let done = output.lines().last().unwrap();
    assert_eq!(done, format!("DONE tau_hat={} t1={} t0={}", last["tau_hat"].as_f64().unwrap(), last["totals"]["t1"], last["totals"]["t0"]));
}
