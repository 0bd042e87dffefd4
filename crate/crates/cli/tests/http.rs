use std::time::Duration;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use proptest::prelude::*;
use serde_json::{json, Value};
use tower::ServiceExt;

use dragwarp::server::{router, AppState, ServerConfig};
use dragwarp_core::api::{decode_base64, encode_base64, WarpResponse};
use dragwarp_core::fgrid::write_fgrid;
use dragwarp_core::grid::{FeatureGrid, Mask};
use dragwarp_core::imageio::{grid_to_png, image_to_grid, mask_to_png};
use dragwarp_core::rng::NoiseStream;

const BOUNDARY: &str = "dragwarp-test-boundary";

fn app_with(config: ServerConfig) -> (Router, AppState) {
    let state = AppState::new(&config);
    (router(state.clone(), config.assets.clone()), state)
}

fn app() -> Router {
    app_with(ServerConfig::default()).0
}

fn image(h: usize, w: usize, seed: u64) -> FeatureGrid {
    let mut s = NoiseStream::new(seed, 0);
    FeatureGrid::new(h, w, 3, (0..h * w * 3).map(|_| (s.next_u64() % 256) as f64 / 255.0).collect()).unwrap()
}

fn multipart(parts: &[(&str, &[u8])]) -> Request<Body> {
    let mut body = Vec::new();
    for (name, bytes) in parts {
        body.extend_from_slice(
            format!(
                "--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"{name}\"; filename=\"{name}.bin\"\r\nContent-Type: application/octet-stream\r\n\r\n"
            )
            .as_bytes(),
        );
        body.extend_from_slice(bytes);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{BOUNDARY}--\r\n").as_bytes());
    Request::post("/api/session")
        .header(header::CONTENT_TYPE, format!("multipart/form-data; boundary={BOUNDARY}"))
        .body(Body::from(body))
        .unwrap()
}

fn post_json(uri: &str, body: impl Into<Body>) -> Request<Body> {
    Request::post(uri)
        .header(header::CONTENT_TYPE, "application/json")
        .body(body.into())
        .unwrap()
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn create_session(app: &Router, grid: &FeatureGrid) -> String {
    let png = grid_to_png(grid).unwrap();
    let (status, body) = send(app, multipart(&[("image", &png)])).await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["h"], grid.height());
    assert_eq!(v["w"], grid.width());
    v["id"].as_str().unwrap().to_string()
}

fn assert_error_body(body: &[u8], code: &str) {
    let v: Value = serde_json::from_slice(body).unwrap_or_else(|_| panic!("not JSON: {}", String::from_utf8_lossy(body)));
    assert_eq!(v["error"], code, "{v}");
    assert!(v["detail"].is_string());
}

#[tokio::test]
async fn healthz() {
    let (status, body) = send(&app(), Request::get("/healthz").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, b"ok");
}

#[tokio::test]
async fn null_drag_round_trips_pixels() {
    let app = app();
    let grid = image(16, 20, 1);
    let id = create_session(&app, &grid).await;
    let req = json!({"id": id, "drags": {"pairs": [{"handle": [4, 5], "target": [4, 5]}]}});
    let (status, body) = send(&app, post_json("/api/warp", req.to_string())).await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    let res: WarpResponse = serde_json::from_slice(&body).unwrap();
    let decoded = image_to_grid(&decode_base64(&res.image_png).unwrap()).unwrap();
    assert_eq!(decoded, grid);
    assert_eq!(res.diagnostics.voids_filled, 0);
    assert_eq!(res.diagnostics.moved + res.diagnostics.static_count, 16 * 20);
    assert_eq!(res.drags[0].landing, [4.0, 5.0]);
}

#[tokio::test]
async fn warp_is_repeatable_byte_for_byte() {
    let app = app();
    let id = create_session(&app, &image(24, 24, 2)).await;
    let cells: Vec<_> = (6..16).flat_map(|y| (6..16).map(move |x| (x, y))).collect();
    let mask = encode_base64(&mask_to_png(&Mask::from_cells(24, 24, &cells).unwrap()).unwrap());
    let req = json!({
        "id": id,
        "drags": {"pairs": [{"handle": [10, 10], "target": [14, 12]}], "mask": format!("data:image/png;base64,{mask}")},
        "params": {"beta": 0.5}
    })
    .to_string();
    let (s1, b1) = send(&app, post_json("/api/warp", req.clone())).await;
    let (s2, b2) = send(&app, post_json("/api/warp", req)).await;
    assert_eq!(s1, StatusCode::OK, "{}", String::from_utf8_lossy(&b1));
    assert_eq!((s1, &b1), (s2, &b2));
    let res: WarpResponse = serde_json::from_slice(&b1).unwrap();
    assert_eq!(res.diagnostics.moved + res.diagnostics.static_count, 100);
}

#[tokio::test]
async fn unknown_session_is_404() {
    let req = json!({"id": "nope", "drags": {"pairs": [{"handle": [0, 0], "target": [1, 0]}]}});
    let (status, body) = send(&app(), post_json("/api/warp", req.to_string())).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_error_body(&body, "no_such_session");
    let (status, body) = send(&app(), Request::get("/api/session/nope/depth.png").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_error_body(&body, "no_such_session");
}

#[tokio::test]
async fn depth_png_and_uploaded_depth() {
    let app = app();
    let grid = image(4, 6, 3);
    let depth = FeatureGrid::new(4, 6, 1, (0..24).map(|i| i as f64).collect()).unwrap();
    let (status, body) = send(
        &app,
        multipart(&[("image", &grid_to_png(&grid).unwrap()), ("depth", &write_fgrid(&depth))]),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let id = serde_json::from_slice::<Value>(&body).unwrap()["id"].as_str().unwrap().to_string();
    let res = app
        .clone()
        .oneshot(Request::get(format!("/api/session/{id}/depth.png")).body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(res.status(), StatusCode::OK);
    assert_eq!(res.headers()[header::CONTENT_TYPE], "image/png");
    let png = res.into_body().collect().await.unwrap().to_bytes();
    let g = image_to_grid(&png).unwrap();
    assert_eq!(g.shape(), (4, 6));
    assert_eq!(g.cell(0, 0)[0], 0.0);
    assert_eq!(g.cell(5, 3)[0], 1.0);
}

#[tokio::test]
async fn session_upload_errors_are_json() {
    let app = app();
    let (status, body) = send(&app, multipart(&[("depth", b"FGRD")])).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error_body(&body, "missing_image");
    let (status, body) = send(&app, multipart(&[("image", b"not a png")])).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error_body(&body, "bad_image");
    let png = grid_to_png(&image(2, 2, 0)).unwrap();
    let (status, body) = send(&app, multipart(&[("image", &png), ("depth", b"FGRD\n{}\n")])).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error_body(&body, "bad_depth");
    let (status, body) = send(&app, post_json("/api/session", "{}")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error_body(&body, "bad_multipart");
}

#[tokio::test]
async fn warp_validation_errors() {
    let app = app();
    let id = create_session(&app, &image(8, 8, 4)).await;
    let cases = [
        ("{", StatusCode::BAD_REQUEST, "invalid_json"),
        (r#"{"id": 3}"#, StatusCode::BAD_REQUEST, "invalid_request"),
        (&*json!({"id": id, "drags": {"pairs": []}}).to_string(), StatusCode::BAD_REQUEST, "invalid_request"),
        (&*json!({"id": id, "drags": {"pairs": [{"handle": [1, 1], "target": [2, 2]}], "mask": "%%"}}).to_string(), StatusCode::BAD_REQUEST, "bad_mask"),
        (&*json!({"id": id, "drags": {"pairs": [{"handle": [20, 1], "target": [2, 2]}]}}).to_string(), StatusCode::UNPROCESSABLE_ENTITY, "drag_out_of_bounds"),
        (&*json!({"id": id, "drags": {"pairs": [{"handle": [1, 1], "target": [2, 2]}]}, "params": {"alpha": 3}}).to_string(), StatusCode::UNPROCESSABLE_ENTITY, "invalid_params"),
    ];
    for (body, status, code) in cases {
        let (s, b) = send(&app, post_json("/api/warp", body.to_string())).await;
        assert_eq!(s, status, "{body}: {}", String::from_utf8_lossy(&b));
        assert_error_body(&b, code);
    }
}

#[tokio::test]
async fn unknown_routes_and_methods_are_json() {
    let app = app();
    let (status, body) = send(&app, Request::get("/api/nothing").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_error_body(&body, "not_found");
    let (status, body) = send(&app, Request::get("/api/warp").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::METHOD_NOT_ALLOWED);
    assert_error_body(&body, "method_not_allowed");
}

#[tokio::test]
async fn static_assets_served_from_directory() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<html>studio</html>").unwrap();
    let (app, _) = app_with(ServerConfig {
        assets: Some(dir.path().to_path_buf()),
        ..Default::default()
    });
    let (status, body) = send(&app, Request::get("/index.html").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, b"<html>studio</html>");
    let (status, body) = send(&app, Request::get("/api/missing").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_error_body(&body, "not_found");
}

#[tokio::test]
async fn saturated_pool_reports_busy() {
    let (app, _) = app_with(ServerConfig {
        workers: 0,
        warp_budget: Duration::from_millis(50),
        ..Default::default()
    });
    let id = create_session(&app, &image(4, 4, 5)).await;
    let req = json!({"id": id, "drags": {"pairs": [{"handle": [1, 1], "target": [1, 1]}]}});
    let (status, body) = send(&app, post_json("/api/warp", req.to_string())).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_error_body(&body, "busy");
}

#[tokio::test]
async fn idle_sessions_expire() {
    let (app, state) = app_with(ServerConfig {
        ttl: Duration::from_millis(30),
        ..Default::default()
    });
    let id = create_session(&app, &image(4, 4, 6)).await;
    assert_eq!(state.session_count(), 1);
    tokio::time::sleep(Duration::from_millis(60)).await;
    let req = json!({"id": id, "drags": {"pairs": [{"handle": [1, 1], "target": [1, 1]}]}});
    let (status, body) = send(&app, post_json("/api/warp", req.to_string())).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_error_body(&body, "no_such_session");
    assert_eq!(state.session_count(), 0);
}

fn malformed_body() -> impl Strategy<Value = Vec<u8>> {
    prop_oneof![
        proptest::collection::vec(any::<u8>(), 0..200),
        "[ -~]{0,120}".prop_map(String::into_bytes),
        (any::<i32>(), any::<f64>(), "[a-z]{0,6}").prop_map(|(a, b, s)| {
            json!({"id": s, "drags": {"pairs": [{"handle": [a, b], "target": [b, a]}]}, "params": {"mu": b}})
                .to_string()
                .into_bytes()
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn malformed_warp_bodies_get_json_errors(body in malformed_body()) {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
        rt.block_on(async {
            let (status, bytes) = send(&app(), post_json("/api/warp", body)).await;
            prop_assert!(status.is_client_error(), "{status}");
            let v: Value = serde_json::from_slice(&bytes).map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert!(v["error"].is_string() && v["detail"].is_string());
            Ok(())
        })?;
    }
}
