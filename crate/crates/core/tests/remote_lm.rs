//! The HTTP adapter speaks the wire protocol, and failures surface as the
//! right error variants instead of junk scores.

mod common;

use std::time::Duration;

use base64::Engine as _;
use common::TestHttpServer;
use gramdec::lm::{LanguageModel, LmError, RemoteLm};

fn vocab_json() -> String {
    let engine = base64::engine::general_purpose::STANDARD;
    let tokens: Vec<String> = ["", "a", "b", "ab"]
        .iter()
        .map(|t| engine.encode(t.as_bytes()))
        .collect();
    serde_json::json!({ "tokens": tokens, "eos_id": 0 }).to_string()
}

#[test]
fn vocab_and_scores_roundtrip() {
    let server = TestHttpServer::start(
        vec![
            ("GET /vocab", vocab_json()),
            ("POST /score", r#"{"scores": [0.1, 0.2, 0.3, 0.4]}"#.to_string()),
        ],
        None,
    );
    let lm = RemoteLm::connect(&server.base_url, Duration::from_secs(2)).unwrap();
    assert_eq!(lm.vocabulary().len(), 4);
    assert_eq!(lm.vocabulary().eos_id(), 0);
    assert_eq!(lm.vocabulary().token_bytes(3), b"ab");
    let scores = lm.scores(&[1, 2]).unwrap();
    assert_eq!(scores, vec![0.1, 0.2, 0.3, 0.4]);
}

#[test]
fn slow_server_times_out() {
    let server = TestHttpServer::start(
        vec![("GET /vocab", vocab_json())],
        Some(Duration::from_millis(600)),
    );
    let err = match RemoteLm::connect(&server.base_url, Duration::from_millis(100)) {
        Ok(_) => panic!("connect should have timed out"),
        Err(e) => e,
    };
    assert!(matches!(err, LmError::Timeout), "got {:?}", err);
}

#[test]
fn missing_route_is_a_transport_error() {
    let server = TestHttpServer::start(vec![("GET /vocab", vocab_json())], None);
    let lm = RemoteLm::connect(&server.base_url, Duration::from_secs(2)).unwrap();
    let err = lm.scores(&[1]).unwrap_err();
    assert!(
        matches!(&err, LmError::Transport(msg) if msg.contains("404")),
        "got {:?}",
        err
    );
}

#[test]
fn malformed_scores_are_a_schema_error() {
    let server = TestHttpServer::start(
        vec![
            ("GET /vocab", vocab_json()),
            ("POST /score", r#"{"wrong": true}"#.to_string()),
        ],
        None,
    );
    let lm = RemoteLm::connect(&server.base_url, Duration::from_secs(2)).unwrap();
    let err = lm.scores(&[1]).unwrap_err();
    assert!(matches!(err, LmError::Schema(_)), "got {:?}", err);
}
