//! Wire-protocol tests for the HTTP providers against a local mock server.

use std::io::{Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;

use repogen_core::semantic::{
    ChatMessage, ChatProvider, EmbeddingProvider, HttpChatProvider, HttpEmbedder, ProviderEndpoint,
    RetryPolicy,
};

struct Received {
    path: String,
    authorization: Option<String>,
    body: serde_json::Value,
}

/// One-shot HTTP server: answers `responses` in order, records requests.
fn mock_server(responses: Vec<(u16, String)>) -> (String, mpsc::Receiver<Received>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        for (status, body) in responses {
            let Ok((mut stream, _)) = listener.accept() else {
                return;
            };
            let mut buf = Vec::new();
            let mut chunk = [0u8; 4096];
            let (path, authorization, content_length, mut body_start) = loop {
                let n = stream.read(&mut chunk).unwrap();
                buf.extend_from_slice(&chunk[..n]);
                if let Some(end) = find_header_end(&buf) {
                    let head = String::from_utf8_lossy(&buf[..end]).into_owned();
                    let mut lines = head.lines();
                    let request_line = lines.next().unwrap_or_default().to_string();
                    let path = request_line
                        .split(' ')
                        .nth(1)
                        .unwrap_or_default()
                        .to_string();
                    let mut authorization = None;
                    let mut content_length = 0usize;
                    for line in lines {
                        let lower = line.to_ascii_lowercase();
                        if let Some(value) = lower.strip_prefix("content-length:") {
                            content_length = value.trim().parse().unwrap_or(0);
                        }
                        if lower.starts_with("authorization:") {
                            authorization =
                                Some(line.splitn(2, ':').nth(1).unwrap_or("").trim().to_string());
                        }
                    }
                    break (path, authorization, content_length, end + 4);
                }
            };
            while buf.len() < body_start + content_length {
                let n = stream.read(&mut chunk).unwrap();
                if n == 0 {
                    break;
                }
                buf.extend_from_slice(&chunk[..n]);
            }
            if body_start > buf.len() {
                body_start = buf.len();
            }
            let body_bytes = &buf[body_start..(body_start + content_length).min(buf.len())];
            let request_body: serde_json::Value =
                serde_json::from_slice(body_bytes).unwrap_or(serde_json::Value::Null);
            tx.send(Received {
                path,
                authorization,
                body: request_body,
            })
            .ok();

            let response = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len(),
            );
            stream.write_all(response.as_bytes()).unwrap();
        }
    });
    (format!("http://{addr}"), rx)
}

fn find_header_end(buf: &[u8]) -> Option<usize> {
    buf.windows(4).position(|w| w == b"\r\n\r\n")
}

fn endpoint(base_url: &str, credential_env: Option<&str>) -> ProviderEndpoint {
    ProviderEndpoint {
        base_url: base_url.to_string(),
        model: "test-model".to_string(),
        credential_env: credential_env.map(String::from),
        temperature: 0.0,
        timeout_secs: 5,
    }
}

#[test]
fn chat_provider_speaks_the_chat_completions_protocol() {
    let reply = serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": "def f():\n    return 1"}}]
    });
    let (base_url, rx) = mock_server(vec![(200, reply.to_string())]);

    std::env::set_var("REPOGEN_TEST_CHAT_KEY", "sk-test-123");
    let provider =
        HttpChatProvider::new(endpoint(&base_url, Some("REPOGEN_TEST_CHAT_KEY"))).unwrap();
    let messages = vec![
        ChatMessage::new("system", "You write code."),
        ChatMessage::new("user", "write f"),
    ];
    let output = provider.chat(&messages).unwrap();
    assert_eq!(output, "def f():\n    return 1");

    let received = rx.recv().unwrap();
    assert_eq!(received.path, "/chat/completions");
    assert_eq!(
        received.authorization.as_deref(),
        Some("Bearer sk-test-123")
    );
    assert_eq!(received.body["model"], "test-model");
    assert_eq!(received.body["temperature"], 0.0);
    assert_eq!(received.body["messages"][0]["role"], "system");
    assert_eq!(received.body["messages"][1]["content"], "write f");
}

#[test]
fn chat_provider_reports_http_failures_as_provider_errors() {
    let (base_url, _rx) = mock_server(vec![(500, "{}".to_string())]);
    let provider = HttpChatProvider::new(endpoint(&base_url, None)).unwrap();
    let err = provider
        .chat(&[ChatMessage::new("user", "hi")])
        .unwrap_err();
    assert!(matches!(err, repogen_core::Error::Provider { .. }));
}

#[test]
fn chat_provider_recovers_after_failures_with_retries() {
    let reply = serde_json::json!({
        "choices": [{"message": {"content": "ok"}}]
    });
    let (base_url, _rx) = mock_server(vec![
        (500, "{}".to_string()),
        (502, "{}".to_string()),
        (200, reply.to_string()),
    ]);
    let provider = HttpChatProvider::new(endpoint(&base_url, None)).unwrap();
    let messages = vec![ChatMessage::new("user", "hi")];
    let output = repogen_core::semantic::with_retries(RetryPolicy::no_backoff(2), || {
        provider.chat(&messages)
    })
    .unwrap();
    assert_eq!(output, "ok");
}

#[test]
fn embedder_speaks_the_embeddings_protocol_and_checks_dimension() {
    let reply = serde_json::json!({"data": [{"embedding": [0.25, -0.5, 1.0]}]});
    let (base_url, rx) = mock_server(vec![(200, reply.to_string())]);
    let provider = HttpEmbedder::new(endpoint(&base_url, None), 3).unwrap();
    let vector = provider.embed("alpha beta").unwrap();
    assert_eq!(vector, vec![0.25, -0.5, 1.0]);

    let received = rx.recv().unwrap();
    assert_eq!(received.path, "/embeddings");
    assert_eq!(received.body["input"], "alpha beta");
    assert_eq!(received.body["model"], "test-model");

    // dimension mismatch is a consistency error
    let reply = serde_json::json!({"data": [{"embedding": [0.25, -0.5]}]});
    let (base_url, _rx) = mock_server(vec![(200, reply.to_string())]);
    let provider = HttpEmbedder::new(endpoint(&base_url, None), 3).unwrap();
    assert!(matches!(
        provider.embed("alpha").unwrap_err(),
        repogen_core::Error::Consistency(_)
    ));
}
