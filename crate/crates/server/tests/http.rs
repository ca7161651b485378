use std::net::SocketAddr;
use std::sync::Arc;

use relaq_client::{Client, ClientError};
use relaq_core::preprocess::BuildConfig;
use relaq_core::querymodel::parse_query;
use relaq_core::synth::{correlated_walks, fig5_dataset, FIG5_QUERY};
use relaq_core::wire::{GuidanceRequest, UploadParams};
use relaq_server::{start, AppState, RunningServer, ServerConfig};

fn params(sampling: usize, box_length: usize) -> UploadParams {
    UploadParams { sampling_length: sampling, box_length, step_unit: "hour".into() }
}

async fn server(config: ServerConfig) -> (RunningServer, Client) {
    let state = Arc::new(AppState::open(config).unwrap());
    let server = start(SocketAddr::from(([127, 0, 0, 1], 0)), state).await.unwrap();
    let client = Client::new(server.url());
    (server, client)
}

async fn fig5_upload(client: &Client) -> String {
    client.upload(fig5_dataset().to_csv().into_bytes(), None, &params(1, 4)).await.unwrap().id
}

#[tokio::test]
async fn upload_is_idempotent_and_listed() {
    let (_s, client) = server(ServerConfig::default()).await;
    client.health().await.unwrap();
    let a = client.upload(fig5_dataset().to_csv().into_bytes(), None, &params(1, 4)).await.unwrap();
    let b = client.upload(fig5_dataset().to_csv().into_bytes(), None, &params(1, 4)).await.unwrap();
    assert_eq!(a.id, b.id);
    assert_eq!((a.series, a.length), (3, 6));
    assert_eq!(a.step_unit, "hour");
    assert_eq!(client.list().await.unwrap(), vec![a.id.clone()]);
    let other = client.upload(fig5_dataset().to_csv().into_bytes(), None, &params(1, 3)).await.unwrap();
    assert_ne!(other.id, a.id);
    assert!(client.status(&a.id).await.unwrap().all_ready());
}

#[tokio::test]
async fn bad_uploads_report_code_and_row() {
    let (_s, client) = server(ServerConfig::default()).await;
    let csv = "time,a,b\n2021-01-01T00:00:00Z,1,2\n2021-01-01T02:00:00Z,1,2\n2021-01-01T01:00:00Z,1,2\n";
    let err = client.upload(csv.as_bytes().to_vec(), None, &params(1, 1)).await.unwrap_err();
    assert_eq!(err.status().map(|s| s.as_u16()), Some(400));
    assert_eq!(err.code(), Some("NonMonotonicTime"));
    let ClientError::Api { body, .. } = err else { unreachable!() };
    assert_eq!(body.row, Some(3));

    let err = client.upload(fig5_dataset().to_csv().into_bytes(), None, &params(1, 40)).await.unwrap_err();
    assert_eq!(err.code(), Some("WindowTooLong"));
}

#[tokio::test]
async fn fig5_over_http() {
    let (_s, client) = server(ServerConfig::default()).await;
    let id = fig5_upload(&client).await;
    let resp = client.query(&id, &parse_query(FIG5_QUERY).unwrap()).await.unwrap();
    let scores: Vec<f64> = resp.results.iter().map(|r| r.score).collect();
    assert_eq!(scores.len(), 2);
    assert!((scores[0] - 2.94).abs() < 1e-9 && (scores[1] - 2.93).abs() < 1e-9);
    assert_eq!(resp.results[0].fragments["B"].series, "LA");
    assert_eq!(resp.results[0].fragments["A"].start_time, "2021-01-01T00:00:00Z");
    assert!(!resp.truncated);
}

#[tokio::test]
async fn identical_concurrent_queries_give_identical_bodies() {
    let (_s, client) = server(ServerConfig::default()).await;
    let id = client.upload(correlated_walks(12, 400, 0.6, 2).to_csv().into_bytes(), None, &params(4, 40)).await.unwrap().id;
    let query = r#"{"mode": "fuzzy", "sampling_length": 4, "box_length": 40,
        "timeboxes": [{"id": "A", "name": "s001"}, {"id": "B", "offset": 8}],
        "relalinks": [{"id": "c", "kind": "correlation", "source": "A", "target": "B", "threshold": [0.7, 1]}]}"#;
    let calls = (0..8).map(|_| {
        let client = client.clone();
        let id = id.clone();
        tokio::spawn(async move { client.query_raw(&id, query).await.unwrap() })
    });
    let mut bodies = Vec::new();
    for call in calls {
        bodies.push(call.await.unwrap());
    }
    assert!(bodies.windows(2).all(|w| w[0] == w[1]));
}

#[tokio::test]
async fn query_errors() {
    let (_s, client) = server(ServerConfig::default()).await;
    let id = fig5_upload(&client).await;

    let err = client.query_raw("nope", FIG5_QUERY).await.unwrap_err();
    assert_eq!(err.status().map(|s| s.as_u16()), Some(404));

    let unknown = FIG5_QUERY.replace("\"SF\"", "\"NYC\"");
    let err = client.query_raw(&id, &unknown).await.unwrap_err();
    assert_eq!(err.code(), Some("UnknownSeries"));
    let ClientError::Api { body, .. } = err else { unreachable!() };
    assert_eq!(body.path.as_deref(), Some("/timeboxes/0/name"));

    let bad_kind = FIG5_QUERY.replace("\"correlation\"", "\"telepathy\"");
    let err = client.query_raw(&id, &bad_kind).await.unwrap_err();
    assert_eq!(err.code(), Some("SchemaViolation"));
}

#[tokio::test]
async fn guidance_and_unresolved_focus() {
    let (_s, client) = server(ServerConfig::default()).await;
    let id = client.upload(correlated_walks(10, 300, 0.7, 4).to_csv().into_bytes(), None, &params(3, 30)).await.unwrap().id;
    let q = parse_query(r#"{"sampling_length": 3, "box_length": 30, "timeboxes": [{"id": "A", "name": "s002"}]}"#).unwrap();
    let matrix = client.guidance(&id, &GuidanceRequest { query: q, focus: "A".into(), max_lag_steps: Some(2) }).await.unwrap();
    assert!(!matrix.rows.is_empty() && matrix.rows.len() <= 20);
    let total: f64 = matrix.rows.iter().flat_map(|r| r.cells()).map(|c| c.confidence).sum();
    assert!((total - 1.0).abs() < 1e-9);

    // a default focus whose query matches nothing cannot be resolved
    let q = parse_query(
        r#"{"sampling_length": 3, "box_length": 30,
            "timeboxes": [{"id": "A", "name": "s002"}, {"id": "B"}],
            "relalinks": [{"id": "c", "kind": "correlation", "source": "A", "target": "B", "threshold": [-1, -0.9999]}]}"#,
    )
    .unwrap();
    let err = client.guidance(&id, &GuidanceRequest { query: q.clone(), focus: "B".into(), max_lag_steps: None }).await.unwrap_err();
    assert_eq!(err.status().map(|s| s.as_u16()), Some(409));
    assert_eq!(err.code(), Some("FocusUnresolved"));

    let err = client.guidance(&id, &GuidanceRequest { query: q, focus: "Z".into(), max_lag_steps: None }).await.unwrap_err();
    assert_eq!(err.code(), Some("UnknownFocus"));
}

#[tokio::test]
async fn trend_suggestions() {
    let (_s, client) = server(ServerConfig::default()).await;
    let id = fig5_upload(&client).await;
    let global = client.trend_suggestions(&id, None, "").await.unwrap();
    let sum: f64 = global.iter().map(|s| s.ratio).sum();
    assert!((sum - 1.0).abs() < 1e-9);
    assert!(global.windows(2).all(|w| w[0].ratio >= w[1].ratio));
    let one = client.trend_suggestions(&id, Some("SF"), "a").await.unwrap();
    assert!(one.iter().all(|s| ('a'..='d').contains(&s.symbol)));
    let err = client.trend_suggestions(&id, Some("NYC"), "").await.unwrap_err();
    assert_eq!(err.status().map(|s| s.as_u16()), Some(404));
    let err = client.trend_suggestions(&id, None, "xyz").await.unwrap_err();
    assert_eq!(err.code(), Some("InvalidPrefix"));
}

#[tokio::test]
async fn cors_preflight_is_allowed() {
    let (s, _client) = server(ServerConfig::default()).await;
    let resp = reqwest::Client::new()
        .request(reqwest::Method::OPTIONS, format!("{}/v1/datasets", s.url()))
        .header("Origin", "http://localhost:5173")
        .header("Access-Control-Request-Method", "POST")
        .send()
        .await
        .unwrap();
    assert!(resp.status().is_success());
    assert!(resp.headers().contains_key("access-control-allow-origin"));
}

#[tokio::test]
async fn uploads_persist_and_reload() {
    let dir = tempfile::tempdir().unwrap();
    let config = ServerConfig { data_dir: Some(dir.path().to_path_buf()), build: BuildConfig::default(), ..ServerConfig::default() };
    let id = {
        let (_s, client) = server(config.clone()).await;
        let id = fig5_upload(&client).await;
        // the save runs in the background; wait for the manifest
        for _ in 0..200 {
            if dir.path().join(&id).join("manifest.json").is_file() {
                break;
            }
            tokio::time::sleep(std::time::Duration::from_millis(10)).await;
        }
        id
    };
    let (_s, client) = server(config).await;
    assert_eq!(client.list().await.unwrap(), vec![id.clone()]);
    let resp = client.query(&id, &parse_query(FIG5_QUERY).unwrap()).await.unwrap();
    assert_eq!(resp.results.len(), 2);
}
