use std::time::{Duration, Instant};

use axum::body::{to_bytes, Body};
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use specshape::eigensolve::FemOrder;
use specshape::experiment::FamilyData;
use specshape::geometry::FamilyKind;
use specshape::spectral_ae::{ModelBundle, Template};
use specshape_server::{router, AppState};
use tower::ServiceExt;

const K: usize = 10;

fn contour_data() -> FamilyData {
    FamilyData::generate(FamilyKind::Contour2d, 32, 12, 8, 5, K, FemOrder::Linear, None).unwrap()
}

fn contour_model(data: &FamilyData) -> ModelBundle {
    ModelBundle::build_dense(Template::of_shape(&data.shapes[0]), K, 7).unwrap()
}

fn app() -> (Router, ModelBundle, FamilyData) {
    let data = contour_data();
    let model = contour_model(&data);
    let state = AppState::new(Some(model.clone()), Some(data.clone()));
    (router(state), model, data)
}

async fn send(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let v = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, v)
}

async fn post(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    send(app, Method::POST, uri, Some(body)).await
}

fn flat(v: &Value) -> Vec<f64> {
    v.as_array()
        .unwrap()
        .iter()
        .flat_map(|p| p.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()))
        .collect()
}

fn error_field(v: &Value) -> Option<&str> {
    v["error"]["field"].as_str()
}

#[tokio::test]
async fn model_endpoint_and_atomic_reload() {
    let data = contour_data();
    let state = AppState::new(None, Some(data.clone()));
    let app = router(state.clone());
    let (s, v) = send(&app, Method::GET, "/model", None).await;
    assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(v["error"]["status"], 503);
    let (s, _) = post(&app, "/decode", json!({"eigenvalues": vec![0.0; K]})).await;
    assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE);

    state.load_model(contour_model(&data));
    let (s, v) = send(&app, Method::GET, "/model", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["k"], K);
    assert_eq!(v["latent_dim"], 30);
    assert_eq!(v["template"]["n"], 32);
    assert_eq!(v["template"]["dim"], 2);
    assert!(v["normalization"]["eigen_scale"].is_number());
}

#[tokio::test]
async fn decode_matches_library() {
    let (app, model, data) = app();
    let spectrum = data.spectrum(9, K).to_vec();
    let (s, v) = post(&app, "/decode", json!({ "eigenvalues": spectrum })).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["vertices"].as_array().unwrap().len(), 32);
    let expected = model.decode(&model.spec_to_latent(&spectrum).unwrap()).unwrap();
    assert_eq!(flat(&v["vertices"]), expected);

    let latent = model.spec_to_latent(&spectrum).unwrap();
    let (s, w) = post(&app, "/decode-latent", json!({ "latent": latent })).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(w["vertices"], v["vertices"]);
}

#[tokio::test]
async fn malformed_requests_are_400_with_fields() {
    let (app, _, _) = app();
    let (s, v) = post(&app, "/decode", json!({"eigenvalues": [0.0, 1.0]})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(error_field(&v), Some("eigenvalues"));
    assert!(v["error"]["message"].as_str().unwrap().contains("expected 10"));

    let (s, v) = post(&app, "/decode-latent", json!({"latent": [1.0]})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(error_field(&v), Some("latent"));

    let (s, _) = post(&app, "/decode", json!({"eigenvalues": vec![0.0; K], "extra": 1})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = post(&app, "/decode", json!({"eigen": vec![0.0; K]})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = post(&app, "/decode", json!({"eigenvalues": "no"})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let req = Request::post("/decode").body(Body::from("{not json")).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);

    let (s, v) = post(&app, "/band", json!({"base_spectrum": vec![0.0; K], "lo": 3, "hi": K, "factor": 1.0})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(error_field(&v), Some("hi"));
    let (s, v) = post(&app, "/band", json!({"base_spectrum": vec![0.0; K], "lo": 1, "hi": 2, "factor": -1.0})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(error_field(&v), Some("factor"));
}

#[tokio::test]
async fn encode_predicts_spectrum_through_rho() {
    let (app, model, data) = app();
    let coords = data.shapes[10].flat_coords();
    let pts: Vec<Vec<f64>> = coords.chunks(2).map(<[f64]>::to_vec).collect();
    let (s, v) = post(&app, "/encode", json!({"shape": {"vertices": pts}})).await;
    assert_eq!(s, StatusCode::OK);
    let latent = model.encode(&coords).unwrap();
    let got: Vec<f64> = serde_json::from_value(v["latent"].clone()).unwrap();
    assert_eq!(got, latent);
    let spec: Vec<f64> = serde_json::from_value(v["predicted_spectrum"].clone()).unwrap();
    assert_eq!(spec, model.latent_to_spec(&latent).unwrap());

    let (s, v) = post(&app, "/encode", json!({"shape": {"vertices": pts[..5]}})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(error_field(&v), Some("shape.vertices"));
    let (s, _) = post(&app, "/encode", json!({"shape": {"vertices": [[1.0, 2.0, 3.0]]}})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn band_at_factor_one_equals_decode() {
    let (app, _, data) = app();
    let base = data.spectrum(8, K).to_vec();
    assert_eq!(base[0], 0.0);
    let (_, d) = post(&app, "/decode", json!({ "eigenvalues": base })).await;
    let (s, b) = post(&app, "/band", json!({"base_spectrum": base, "lo": 1, "hi": 5, "factor": 1.0})).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(b["vertices"], d["vertices"]);
    assert_eq!(b["spectrum"], json!(base));

    let (_, b) = post(&app, "/band", json!({"base_spectrum": base, "lo": 1, "hi": 5, "factor": 0.7})).await;
    let spec: Vec<f64> = serde_json::from_value(b["spectrum"].clone()).unwrap();
    assert!((spec[1] - 0.7 * base[1]).abs() < 1e-12);
    assert_eq!(spec[6..], base[6..]);
}

#[tokio::test]
async fn samples_listing() {
    let (app, _, data) = app();
    let (s, v) = send(&app, Method::GET, "/samples?n=3", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["total"], 12);
    let samples = v["samples"].as_array().unwrap();
    assert_eq!(samples.len(), 3);
    assert_eq!(samples[2]["id"], 2);
    assert_eq!(samples[2]["spectrum"], json!(data.spectrum(2, K)));

    let (_, v) = send(&app, Method::GET, "/samples", None).await;
    assert_eq!(v["samples"].as_array().unwrap().len(), 12);
    let (s, v) = send(&app, Method::GET, "/samples?n=lots", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(error_field(&v), Some("n"));

    let bare = router(AppState::new(Some(contour_model(&data)), None));
    let (s, _) = send(&bare, Method::GET, "/samples", None).await;
    assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE);
}

#[tokio::test]
async fn style_transfer_endpoint() {
    let (app, model, data) = app();
    let style = data.spectrum(11, K).to_vec();
    let body = json!({"spec_style": style, "pose_sample_id": 9, "w": 0.0, "steps": 40});
    let (s, v) = post(&app, "/style-transfer", body.clone()).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let curve = v["alignment"].as_array().unwrap();
    assert!(!curve.is_empty() && curve.len() <= 41);
    let best = v["best_step"].as_u64().unwrap() as usize;
    let objective = |i: usize| curve[i]["objective"].as_f64().unwrap();
    assert!(objective(best) <= objective(0));
    let latent: Vec<f64> = serde_json::from_value(v["latent"].clone()).unwrap();
    assert_eq!(flat(&v["vertices"]), model.decode(&latent).unwrap());

    // Same request, same answer.
    let (_, again) = post(&app, "/style-transfer", body).await;
    assert_eq!(again, v);

    let (s, v) = post(&app, "/style-transfer", json!({"spec_style": style, "pose_sample_id": 99})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(error_field(&v), Some("pose_sample_id"));
    let (s, _) = post(&app, "/style-transfer", json!({"spec_style": style, "pose_sample_id": 1, "w": -1.0})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn numerical_failure_is_422() {
    let data = contour_data();
    let mut model = contour_model(&data);
    for p in model.nets.decoder.params_mut() {
        p.iter_mut().for_each(|x| *x = f32::NAN);
    }
    let app = router(AppState::new(Some(model), None));
    let (s, v) = post(&app, "/decode", json!({"eigenvalues": data.spectrum(0, K)})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["status"], 422);
}

#[tokio::test]
async fn api_listing_names_every_endpoint() {
    let (app, _, _) = app();
    let (s, v) = send(&app, Method::GET, "/api", None).await;
    assert_eq!(s, StatusCode::OK);
    let paths: Vec<&str> = v["endpoints"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["path"].as_str().unwrap())
        .collect();
    for p in ["/model", "/decode", "/decode-latent", "/encode", "/style-transfer", "/samples?n=", "/band", "/api"] {
        assert!(paths.contains(&p), "{p} missing");
    }
}

#[tokio::test]
async fn cors_allows_localhost_only() {
    let (app, _, _) = app();
    let preflight = |origin: &str| {
        Request::builder()
            .method(Method::OPTIONS)
            .uri("/decode")
            .header(header::ORIGIN, origin)
            .header(header::ACCESS_CONTROL_REQUEST_METHOD, "POST")
            .body(Body::empty())
            .unwrap()
    };
    for origin in ["http://localhost:5173", "http://127.0.0.1:8080", "http://localhost"] {
        let resp = app.clone().oneshot(preflight(origin)).await.unwrap();
        assert_eq!(resp.headers().get(header::ACCESS_CONTROL_ALLOW_ORIGIN).unwrap(), origin);
    }
    for origin in ["http://example.com", "http://localhost.evil.com", "http://localhost:80x"] {
        let resp = app.clone().oneshot(preflight(origin)).await.unwrap();
        assert!(resp.headers().get(header::ACCESS_CONTROL_ALLOW_ORIGIN).is_none(), "{origin}");
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_decodes_match_serial() {
    let (app, _, data) = app();
    let bodies: Vec<Value> = (0..100)
        .map(|i| json!({"eigenvalues": data.spectrum(i % 12, K)}))
        .collect();
    let mut serial = Vec::new();
    for b in &bodies {
        serial.push(post(&app, "/decode", b.clone()).await);
    }
    let mut set = tokio::task::JoinSet::new();
    for (i, b) in bodies.into_iter().enumerate() {
        let app = app.clone();
        set.spawn(async move { (i, post(&app, "/decode", b).await) });
    }
    let mut concurrent = vec![None; 100];
    while let Some(r) = set.join_next().await {
        let (i, out) = r.unwrap();
        concurrent[i] = Some(out);
    }
    for (i, (s, c)) in serial.iter().zip(concurrent).enumerate() {
        assert_eq!(s.0, StatusCode::OK);
        assert_eq!(Some(s), c.as_ref(), "request {i}");
    }
}

#[tokio::test]
async fn decode_latency_at_2000_points() {
    let model = ModelBundle::build_dense(Template { n: 2000, dim: 3, faces: None }, 30, 1).unwrap();
    let app = router(AppState::new(Some(model), None));
    let spectrum: Vec<f64> = (0..30).map(|i| i as f64).collect();
    let body = json!({ "eigenvalues": spectrum });
    post(&app, "/decode", body.clone()).await;
    let mut times: Vec<Duration> = Vec::new();
    for _ in 0..40 {
        let t = Instant::now();
        let (s, _) = post(&app, "/decode", body.clone()).await;
        times.push(t.elapsed());
        assert_eq!(s, StatusCode::OK);
    }
    times.sort();
    let p95 = times[times.len() * 95 / 100];
    assert!(p95 < Duration::from_millis(50), "p95 {p95:?}");
}
