use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use policyscope::data::{write_cases_csv, write_policy_csv};
use policyscope::synth::{generate, Preset};
use policyscope_service::{router, AppState, Store};

fn app(data_dir: Option<std::path::PathBuf>) -> Router {
    router(AppState::new(Store::open(data_dir).unwrap()))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let builder = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => builder.header("content-type", "application/json").body(Body::from(b.to_string())).unwrap(),
        None => builder.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn upload(app: &Router, preset: Preset) -> String {
    let s = generate(preset, 3);
    let (status, body) = call(
        app,
        "POST",
        "/datasets",
        Some(json!({ "cases": write_cases_csv(&s.records), "policy": write_policy_csv(&s.records) })),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    body["dataset_id"].as_str().unwrap().to_string()
}

fn assert_error(body: &Value, code: &str) {
    assert_eq!(body["error"]["code"], code, "{body}");
    assert!(body["error"]["message"].as_str().is_some_and(|m| !m.is_empty()));
}

async fn wait_for_job(app: &Router, id: &str) -> Value {
    for _ in 0..600 {
        let (status, job) = call(app, "GET", &format!("/jobs/{id}"), None).await;
        assert_eq!(status, StatusCode::OK);
        if job["status"] == "done" || job["status"] == "failed" {
            return job;
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    panic!("job {id} did not finish");
}

fn tiny_config() -> Value {
    json!({
        "model": { "window": 7, "recurrent_hidden": 4, "pathway_dense": 3, "head_hidden": 3 },
        "training": { "epochs": 2 }
    })
}

#[tokio::test]
async fn health_reports_version() {
    let (status, body) = call(&app(None), "GET", "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
    assert_eq!(body["version"], env!("CARGO_PKG_VERSION"));
}

#[tokio::test]
async fn upload_validation() {
    let app = app(None);
    let (status, body) = call(&app, "POST", "/datasets", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error(&body, "bad_request");

    let bad_policy =
        "country,date,school,workplace,gatherings,transport,travel\nQA,2020-03-01,0,0,0,0,0\nQA,2020-03-02,9,0,0,0,0\n";
    let (status, body) = call(
        &app,
        "POST",
        "/datasets",
        Some(json!({ "cases": "country,date,new_cases\nQA,2020-03-01,1\n", "policy": bad_policy })),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let msg = body["error"]["message"].as_str().unwrap();
    assert!(msg.contains("line 3") && msg.contains("SchoolClosing"), "{msg}");

    let id = upload(&app, Preset::Constant).await;
    assert!(!id.is_empty());
}

#[tokio::test]
async fn rt_endpoint() {
    let app = app(None);
    let id = upload(&app, Preset::Constant).await;
    let (status, body) = call(&app, "GET", &format!("/datasets/{id}/rt?country=K01"), None).await;
    assert_eq!(status, StatusCode::OK);
    let entries = body.as_array().unwrap();
    assert!(!entries.is_empty());
    for e in entries {
        assert!((e["mode"].as_f64().unwrap() - 1.0).abs() <= 0.02);
        for key in ["date", "mean", "ci_low", "ci_high"] {
            assert!(!e[key].is_null(), "{key}");
        }
    }
    let (status, body) = call(&app, "GET", &format!("/datasets/{id}/rt?country=XX"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_error(&body, "not_found");
    let (status, _) = call(&app, "GET", "/datasets/nope/rt?country=K01", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let short = json!({
        "cases": "country,date,new_cases\nQA,2020-03-01,4\nQA,2020-03-02,5\nQA,2020-03-03,6\n",
        "policy": "country,date,school,workplace,gatherings,transport,travel\nQA,2020-03-01,0,0,0,0,0\n"
    });
    let (_, created) = call(&app, "POST", "/datasets", Some(short)).await;
    let short_id = created["dataset_id"].as_str().unwrap();
    let (status, body) = call(&app, "GET", &format!("/datasets/{short_id}/rt?country=QA"), None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_error(&body, "unprocessable");
}

#[tokio::test]
async fn cluster_endpoint() {
    let app = app(None);
    let id = upload(&app, Preset::ThreeBlobs).await;
    let req = json!({ "k_min": 1, "k_max": 8, "seed": 5 });
    let (status, first) = call(&app, "POST", &format!("/datasets/{id}/cluster"), Some(req.clone())).await;
    assert_eq!(status, StatusCode::OK, "{first}");
    assert_eq!(first["chosen_k"], 3);
    assert_eq!(first["elbow_curve"].as_array().unwrap().len(), 8);
    let sizes: Vec<usize> =
        first["clusters"].as_array().unwrap().iter().map(|c| c["countries"].as_array().unwrap().len()).collect();
    assert_eq!(sizes.iter().sum::<usize>(), 90);
    let (_, second) = call(&app, "POST", &format!("/datasets/{id}/cluster"), Some(req)).await;
    assert_eq!(first, second);

    let two = generate(Preset::Constant, 0);
    let records = &two.records[..2];
    let (_, created) = call(
        &app,
        "POST",
        "/datasets",
        Some(json!({ "cases": write_cases_csv(records), "policy": write_policy_csv(records) })),
    )
    .await;
    let small = created["dataset_id"].as_str().unwrap();
    let (status, body) = call(&app, "POST", &format!("/datasets/{small}/cluster"), Some(json!({}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_error(&body, "unprocessable");
}

#[tokio::test]
async fn training_lifecycle_and_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(Some(dir.path().to_path_buf()));
    let id = upload(&app, Preset::PlantedPolicyEffect).await;

    let (status, body) =
        call(&app, "POST", "/models", Some(json!({ "dataset_id": id, "country": "XX", "variant": "proposed" }))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_error(&body, "not_found");
    let (status, _) = call(
        &app,
        "POST",
        "/models",
        Some(json!({ "dataset_id": "missing", "country": "C01", "variant": "proposed" })),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, job) = call(
        &app,
        "POST",
        "/models",
        Some(json!({
            "dataset_id": id, "country": "C01", "variant": "proposed",
            "config": tiny_config(), "seed": 4, "train_until": "2020-06-23"
        })),
    )
    .await;
    assert_eq!(status, StatusCode::ACCEPTED);
    assert_eq!(job["kind"], "train");
    let job_id = job["id"].as_str().unwrap();
    let done = wait_for_job(&app, job_id).await;
    assert_eq!(done["status"], "done", "{done}");
    let (_, again) = call(&app, "GET", &format!("/jobs/{job_id}"), None).await;
    assert_eq!(again, done);

    let model_id = done["model_id"].as_str().unwrap();
    let (_, models) = call(&app, "GET", "/models", None).await;
    assert_eq!(models.as_array().unwrap().len(), 1);
    let (status, entry) = call(&app, "GET", &format!("/models/{model_id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(entry["target_country"], "C01");
    assert_eq!(entry["variant"], "proposed");
    assert_eq!(entry["cluster_countries"].as_array().unwrap().len(), 6);
    assert!(dir.path().join(entry["artifact"].as_str().unwrap()).is_file());

    let (status, forecast) = call(
        &app,
        "POST",
        &format!("/models/{model_id}/forecast"),
        Some(json!({ "start": "2020-06-23", "horizon": 5 })),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{forecast}");
    assert_eq!(forecast.as_array().unwrap().len(), 5);
    assert_eq!(forecast[0]["date"], "2020-06-23");

    let (status, body) = call(
        &app,
        "POST",
        &format!("/models/{model_id}/forecast"),
        Some(json!({ "start": "2020-06-23", "horizon": 0 })),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error(&body, "bad_request");
    let (status, _) = call(
        &app,
        "POST",
        &format!("/models/{model_id}/forecast"),
        Some(json!({ "start": "2020-02-16", "horizon": 3 })),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) =
        call(&app, "POST", "/models/nope/forecast", Some(json!({ "start": "2020-06-23", "horizon": 3 }))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let identity = json!({ "name": "identity", "start": "2020-06-23", "horizon": 7, "overrides": [] });
    let (status, result) = call(&app, "POST", &format!("/models/{model_id}/whatif"), Some(identity.clone())).await;
    assert_eq!(status, StatusCode::OK, "{result}");
    assert!(result["delta"].as_array().unwrap().iter().all(|d| d.as_f64() == Some(0.0)));
    assert_eq!(result["cumulative_delta"], 0.0);

    let borders = json!({
        "name": "lift-borders", "start": "2020-06-23", "horizon": 7,
        "overrides": [{ "indicator": "TravelControls", "level": 0, "from": 0, "to": 6 }]
    });
    let whatif_uri = format!("/models/{model_id}/whatif");
    let (a, b) = tokio::join!(
        call(&app, "POST", &whatif_uri, Some(borders.clone())),
        call(&app, "POST", &whatif_uri, Some(borders))
    );
    assert_eq!(a.0, StatusCode::OK);
    assert_eq!(a, b);

    let bad = json!({
        "name": "bad", "start": "2020-06-23", "horizon": 7,
        "overrides": [{ "indicator": "GatheringRestrictions", "level": 5, "from": 0, "to": 6 }]
    });
    let (status, body) = call(&app, "POST", &format!("/models/{model_id}/whatif"), Some(bad)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error(&body, "bad_request");

    // A fresh process over the same directory sees the same registry.
    let reopened = self::app(Some(dir.path().to_path_buf()));
    let (_, models_after) = call(&reopened, "GET", "/models", None).await;
    assert_eq!(models_after, models);
    let (_, replay) = call(&reopened, "POST", &format!("/models/{model_id}/whatif"), Some(identity)).await;
    assert_eq!(replay, result);
}

#[tokio::test]
async fn failed_training_is_reported() {
    let app = app(None);
    let id = upload(&app, Preset::Constant).await;
    let (_, job) = call(
        &app,
        "POST",
        "/models",
        Some(json!({
            "dataset_id": id, "country": "K01", "variant": "proposed",
            "config": tiny_config(), "train_until": "2020-02-18"
        })),
    )
    .await;
    let done = wait_for_job(&app, job["id"].as_str().unwrap()).await;
    assert_eq!(done["status"], "failed");
    assert!(done["detail"].as_str().unwrap().contains("dataset error"), "{done}");
}

#[tokio::test]
async fn unknown_route_uses_error_envelope() {
    let (status, body) = call(&app(None), "GET", "/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_error(&body, "not_found");
    let (status, _) = call(&app(None), "GET", "/ui", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}
