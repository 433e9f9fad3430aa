//! HTTP backend against a local mock server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use autoguide::http::{HttpBackend, RetryPolicy};
use autoguide_core::lm::{BackendKind, Sampling};
use autoguide_core::{ChatRequest, LanguageModel, LmError};

struct Seen {
    headers: String,
    body: String,
}

/// Serves the given `(status, body)` responses in order, one per connection.
fn serve(responses: Vec<(u16, &'static str)>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    thread::spawn(move || {
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut headers = String::new();
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                if line == "\r\n" {
                    break;
                }
                headers.push_str(&line);
            }
            let mut buf = vec![0; length];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(Seen { headers, body: String::from_utf8(buf).unwrap() });
            let reply = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            let mut stream = reader.into_inner();
            stream.write_all(reply.as_bytes()).unwrap();
        }
    });
    (url, seen)
}

const OK: &str = r#"{"choices":[{"message":{"role":"assistant","content":"go north"}}],"usage":{"prompt_tokens":12,"completion_tokens":3}}"#;

fn fast() -> RetryPolicy {
    RetryPolicy { max_retries: 3, base_delay: Duration::from_millis(1) }
}

fn request() -> ChatRequest {
    ChatRequest::user("gpt-x", "Where now?", Sampling::default())
}

#[test]
fn success_parses_text_and_usage() {
    let (url, seen) = serve(vec![(200, OK)]);
    let backend = HttpBackend::new(&url, "secret").unwrap().with_retry(fast());
    let r = backend.complete(&request()).unwrap();
    assert_eq!((r.text.as_str(), r.prompt_tokens, r.completion_tokens), ("go north", 12, 3));
    assert_eq!(r.backend, BackendKind::Http);
    let seen = seen.lock().unwrap();
    assert!(seen[0].headers.starts_with("POST /v1/chat/completions "));
    assert!(seen[0].headers.to_ascii_lowercase().contains("authorization: bearer secret"));
    let body: ChatRequest = serde_json::from_str(&seen[0].body).unwrap();
    assert_eq!(body, request());
}

#[test]
fn retries_server_errors_then_succeeds() {
    let (url, seen) = serve(vec![(503, "busy"), (429, "slow down"), (200, OK)]);
    let backend = HttpBackend::new(&url, "k").unwrap().with_retry(fast());
    assert_eq!(backend.complete(&request()).unwrap().text, "go north");
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn gives_up_after_three_retries() {
    let (url, seen) = serve(vec![(500, "a"), (500, "b"), (500, "c"), (502, "last")]);
    let backend = HttpBackend::new(&url, "k").unwrap().with_retry(fast());
    assert_eq!(backend.complete(&request()), Err(LmError::Http { status: 502, body: "last".into() }));
    assert_eq!(seen.lock().unwrap().len(), 4);
}

#[test]
fn client_errors_are_not_retried() {
    let (url, seen) = serve(vec![(401, "denied")]);
    let backend = HttpBackend::new(&url, "k").unwrap().with_retry(fast());
    assert_eq!(backend.complete(&request()), Err(LmError::Http { status: 401, body: "denied".into() }));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn malformed_body_is_reported() {
    let (url, _) = serve(vec![(200, r#"{"choices":[]}"#)]);
    let backend = HttpBackend::new(&url, "k").unwrap().with_retry(fast());
    assert!(matches!(backend.complete(&request()), Err(LmError::MalformedResponse(_))));
}

#[test]
fn invalid_requests_never_reach_the_network() {
    let backend = HttpBackend::new("http://127.0.0.1:9", "k").unwrap();
    let mut r = request();
    r.max_tokens = 0;
    assert!(matches!(backend.complete(&r), Err(LmError::InvalidRequest(_))));
}
