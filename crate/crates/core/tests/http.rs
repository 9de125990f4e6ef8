//! The HTTP backend against a one-shot local server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread::JoinHandle;
use std::time::Duration;

use hra_core::backend::{BackendError, DecodeParams, HttpBackend, HttpConfig, LlmBackend};

/// Answers one request with `status` and `body`; yields the raw request.
fn serve_once(status: u16, body: &'static str) -> (String, JoinHandle<String>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let handle = std::thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut head = String::new();
        let mut length = 0;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                length = v.trim().parse().unwrap();
            }
            head.push_str(&line);
            if line == "\r\n" {
                break;
            }
        }
        let mut payload = vec![0; length];
        reader.read_exact(&mut payload).unwrap();
        let mut stream = stream;
        write!(
            stream,
            "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        )
        .unwrap();
        head + &String::from_utf8(payload).unwrap()
    });
    (url, handle)
}

fn backend(url: String, key: Option<&str>) -> HttpBackend {
    HttpBackend::new(HttpConfig {
        url,
        api_key: key.map(str::to_string),
        model: "local-model".into(),
        timeout: Duration::from_secs(10),
    })
    .unwrap()
}

#[test]
fn completion_with_usage() {
    let (url, server) = serve_once(
        200,
        r#"{"choices":[{"message":{"content":"yes"}}],"usage":{"prompt_tokens":11,"completion_tokens":1}}"#,
    );
    let c = backend(url, Some("secret")).complete("Is Tokyo in Japan?", &DecodeParams::default()).unwrap();
    assert_eq!(c.text, "yes");
    assert_eq!((c.tokens_in, c.tokens_out, c.estimated), (11, 1, false));

    let request = server.join().unwrap();
    assert!(request.starts_with("POST /v1/chat/completions"));
    assert!(request.to_ascii_lowercase().contains("authorization: bearer secret"));
    let json: serde_json::Value = serde_json::from_str(&request[request.find("\r\n\r\n").unwrap() + 4..]).unwrap();
    assert_eq!(json["model"], "local-model");
    assert_eq!(json["messages"][1]["content"], "Is Tokyo in Japan?");
}

#[test]
fn rejected_credentials_are_an_auth_error() {
    let (url, server) = serve_once(401, r#"{"error":"bad key"}"#);
    let err = backend(url, None).complete("p", &DecodeParams::default()).unwrap_err();
    assert!(matches!(err, BackendError::Auth(_)), "{err:?}");
    assert!(!server.join().unwrap().to_ascii_lowercase().contains("authorization:"));
}

#[test]
fn server_errors_keep_status_and_body() {
    let (url, server) = serve_once(503, "overloaded");
    match backend(url, None).complete("p", &DecodeParams::default()) {
        Err(BackendError::Status { status, body }) => assert_eq!((status, body.as_str()), (503, "overloaded")),
        other => panic!("unexpected {other:?}"),
    }
    server.join().unwrap();
}

#[test]
fn unreachable_server_is_a_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let err = backend(format!("http://127.0.0.1:{port}/"), None).complete("p", &DecodeParams::default()).unwrap_err();
    assert!(matches!(err, BackendError::Transport(_)), "{err:?}");
}
