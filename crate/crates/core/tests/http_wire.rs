//! Wire-level tests against a scripted local HTTP server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};
use specfi::embedding::{Embedder, EmbeddingCache, ProviderConfig};
use specfi::llm::{ChatModel, ChatRequest, HttpChatModel, LlmConfig};
use specfi::Error;

#[derive(Debug, Clone)]
struct Seen {
    path: String,
    authorization: Option<String>,
    body: Value,
}

/// Serves `script` responses in order, one connection each, and records the requests.
fn serve(script: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    thread::spawn(move || {
        for (status, body) in script {
            let Ok((stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let path = request_line.split_whitespace().nth(1).unwrap_or("").to_string();
            let mut length = 0;
            let mut authorization = None;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let (name, value) = line.split_once(':').unwrap();
                match name.to_ascii_lowercase().as_str() {
                    "content-length" => length = value.trim().parse().unwrap(),
                    "authorization" => authorization = Some(value.trim().to_string()),
                    _ => {}
                }
            }
            let mut buf = vec![0; length];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(Seen {
                path,
                authorization,
                body: serde_json::from_slice(&buf).unwrap_or(Value::Null),
            });
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (format!("http://{addr}"), seen)
}

fn provider(base: &str, key_env: &str) -> ProviderConfig {
    ProviderConfig {
        endpoint: format!("{base}/v1/embeddings"),
        model: "test-embed".into(),
        instruction: String::new(),
        dimension: 3,
        batch_size: 8,
        max_retries: 2,
        backoff_ms: 1,
        timeout: Duration::from_secs(5),
        api_key_env: key_env.into(),
        ..ProviderConfig::default()
    }
}

fn embeddings(rows: &[(usize, [f64; 3])]) -> String {
    let data: Vec<Value> = rows.iter().map(|(i, v)| json!({"index": i, "embedding": v})).collect();
    json!({"object": "list", "data": data}).to_string()
}

#[test]
fn embedding_request_shape_order_and_cache() {
    std::env::set_var("SPECFI_TEST_KEY_EMBED", "secret-1");
    let (base, seen) = serve(vec![(200, embeddings(&[(1, [0.0, 2.0, 0.0]), (0, [3.0, 0.0, 4.0])]))]);
    let embedder = Embedder::from_config(&provider(&base, "SPECFI_TEST_KEY_EMBED"), EmbeddingCache::in_memory()).unwrap();
    let texts = vec!["first".to_string(), "second".to_string()];
    let v = embedder.embed_with(&texts, "").unwrap();
    // Vectors round-trip through the f32 cache.
    let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-6);
    assert!(close(v[0].values(), &[0.6, 0.0, 0.8]), "{:?}", v[0]);
    assert!(close(v[1].values(), &[0.0, 1.0, 0.0]), "{:?}", v[1]);

    // Served from the cache: the server has no responses left.
    let again = embedder.embed_with(&texts, "").unwrap();
    assert_eq!(again, v);
    assert_eq!(embedder.backend_calls(), 1);

    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 1);
    assert_eq!(seen[0].path, "/v1/embeddings");
    assert_eq!(seen[0].authorization.as_deref(), Some("Bearer secret-1"));
    assert_eq!(seen[0].body, json!({"model": "test-embed", "input": ["first", "second"]}));
}

#[test]
fn embedding_retries_server_errors() {
    let (base, seen) = serve(vec![
        (503, "{}".into()),
        (429, "{}".into()),
        (200, embeddings(&[(0, [1.0, 1.0, 0.0])])),
    ]);
    let embedder = Embedder::from_config(&provider(&base, "SPECFI_TEST_KEY_UNSET"), EmbeddingCache::in_memory()).unwrap();
    let v = embedder.embed_one("x", "").unwrap();
    assert!(v.is_unit_normalized());
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 3);
    assert!(seen.iter().all(|s| s.authorization.is_none()));
}

#[test]
fn embedding_failures_map_to_exit_codes() {
    let (base, _) = serve(vec![(400, r#"{"error":"bad"}"#.into())]);
    let embedder = Embedder::from_config(&provider(&base, "SPECFI_TEST_KEY_UNSET"), EmbeddingCache::in_memory()).unwrap();
    let e = embedder.embed_one("x", "").unwrap_err();
    assert_eq!(e.exit_code(), 2, "{e}");

    let (base, seen) = serve(vec![(500, "{}".into()); 3]);
    let embedder = Embedder::from_config(&provider(&base, "SPECFI_TEST_KEY_UNSET"), EmbeddingCache::in_memory()).unwrap();
    match embedder.embed_one("x", "").unwrap_err() {
        e @ Error::Provider { attempts: 3, .. } => assert_eq!(e.exit_code(), 3),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(seen.lock().unwrap().len(), 3);

    let (base, _) = serve(vec![(200, embeddings(&[(0, [1.0, 0.0, 0.0]), (1, [0.0, 1.0, 0.0])]))]);
    let embedder = Embedder::from_config(&provider(&base, "SPECFI_TEST_KEY_UNSET"), EmbeddingCache::in_memory()).unwrap();
    assert!(embedder.embed_one("only one input", "").is_err());
}

#[test]
fn wrong_dimension_is_rejected() {
    let body = json!({"data": [{"index": 0, "embedding": [1.0, 0.0]}]}).to_string();
    let (base, _) = serve(vec![(200, body)]);
    let embedder = Embedder::from_config(&provider(&base, "SPECFI_TEST_KEY_UNSET"), EmbeddingCache::in_memory()).unwrap();
    assert!(matches!(embedder.embed_one("x", "").unwrap_err(), Error::DimensionMismatch { .. }));
}

#[test]
fn chat_request_shape() {
    std::env::set_var("SPECFI_TEST_KEY_CHAT", "secret-2");
    let reply = json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": "generated text"}}]});
    let (base, seen) = serve(vec![(502, "{}".into()), (200, reply.to_string())]);
    let llm = HttpChatModel::new(LlmConfig {
        endpoint: format!("{base}/v1/chat/completions"),
        model: "test-chat".into(),
        backoff_ms: 1,
        api_key_env: "SPECFI_TEST_KEY_CHAT".into(),
        ..LlmConfig::default()
    });
    let text = llm
        .complete(&ChatRequest {
            system: "sys".into(),
            user: "usr".into(),
            temperature: 0.7,
            max_tokens: 64,
            seed: Some(11),
        })
        .unwrap();
    assert_eq!(text, "generated text");
    assert_eq!(llm.calls(), 2);
    let seen = seen.lock().unwrap();
    assert_eq!(seen[1].path, "/v1/chat/completions");
    assert_eq!(seen[1].authorization.as_deref(), Some("Bearer secret-2"));
    assert_eq!(
        seen[1].body,
        json!({
            "model": "test-chat",
            "messages": [{"role": "system", "content": "sys"}, {"role": "user", "content": "usr"}],
            "temperature": 0.7,
            "max_tokens": 64,
            "seed": 11
        })
    );
}

#[test]
fn chat_seed_omitted_when_unsupported() {
    let reply = json!({"choices": [{"message": {"content": "ok"}}]});
    let (base, seen) = serve(vec![(200, reply.to_string())]);
    let llm = HttpChatModel::new(LlmConfig {
        endpoint: format!("{base}/v1/chat/completions"),
        supports_seed: false,
        api_key_env: "SPECFI_TEST_KEY_UNSET".into(),
        ..LlmConfig::default()
    });
    let req = ChatRequest { system: String::new(), user: "u".into(), temperature: 1.0, max_tokens: 8, seed: Some(3) };
    assert_eq!(llm.complete(&req).unwrap(), "ok");
    let body = &seen.lock().unwrap()[0].body;
    assert!(body.get("seed").is_none());
    assert_eq!(body["messages"].as_array().unwrap().len(), 1);
}
