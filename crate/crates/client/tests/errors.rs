use relaq_client::{Client, ClientError};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpListener;

/// Answers every connection with `response` verbatim.
async fn canned(response: &'static str) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        while let Ok((mut sock, _)) = listener.accept().await {
            let mut buf = [0u8; 4096];
            let _ = sock.read(&mut buf).await;
            let _ = sock.write_all(response.as_bytes()).await;
        }
    });
    format!("http://{addr}/")
}

#[tokio::test]
async fn error_bodies_are_decoded() {
    let body = r#"{"error":"UnknownSeries","detail":"no series \"NYC\"","path":"/timeboxes/0/name"}"#;
    let response: &'static str = Box::leak(
        format!("HTTP/1.1 400 Bad Request\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}", body.len())
            .into_boxed_str(),
    );
    let client = Client::new(canned(response).await);
    let err = client.query_raw("x", "{}").await.unwrap_err();
    assert_eq!(err.code(), Some("UnknownSeries"));
    assert_eq!(err.status().map(|s| s.as_u16()), Some(400));
    let ClientError::Api { body, .. } = err else { unreachable!() };
    assert_eq!(body.path.as_deref(), Some("/timeboxes/0/name"));
}

#[tokio::test]
async fn non_json_errors_keep_the_text() {
    let client = Client::new(canned("HTTP/1.1 502 Bad Gateway\r\ncontent-length: 4\r\nconnection: close\r\n\r\noops").await);
    let err = client.list().await.unwrap_err();
    assert_eq!(err.code(), Some("502"));
    assert!(err.to_string().contains("oops"));
}

#[tokio::test]
async fn unreachable_server_is_a_transport_error() {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let err = Client::new(format!("http://{addr}")).health().await.unwrap_err();
    assert!(matches!(err, ClientError::Transport(_)));
    assert_eq!(err.code(), None);
}

#[tokio::test]
async fn garbage_success_bodies_fail_to_decode() {
    let client = Client::new(canned("HTTP/1.1 200 OK\r\ncontent-length: 3\r\nconnection: close\r\n\r\nnah").await);
    assert!(matches!(client.list().await.unwrap_err(), ClientError::Decode(_)));
}
