use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use fyi_core::gateway::{
    chat_response_body, extract_json_object, mock_backend, mock_gateway, validate_payload, Backend, GatewayConfig,
    GatewayError, GatewayHandle, HttpBackend, HttpReply, RoleTag, SchemaId, Sleeper, StructuredRequest,
    TransportFailure, ENV_API_KEY,
};
use proptest::prelude::*;
use serde::Deserialize;
use serde_json::{json, Value};

type Scripted = Result<HttpReply, TransportFailure>;

/// Replays a fixed script of replies and records every wire body it saw.
#[derive(Default)]
struct ScriptedBackend {
    script: Mutex<VecDeque<Scripted>>,
    bodies: Mutex<Vec<Value>>,
}

impl ScriptedBackend {
    fn new(script: impl IntoIterator<Item = Scripted>) -> Arc<Self> {
        Arc::new(Self {
            script: Mutex::new(script.into_iter().collect()),
            bodies: Mutex::default(),
        })
    }

    fn calls(&self) -> usize {
        self.bodies.lock().unwrap().len()
    }
}

impl Backend for ScriptedBackend {
    fn post(&self, _request: &StructuredRequest, body: &Value) -> Result<HttpReply, TransportFailure> {
        self.bodies.lock().unwrap().push(body.clone());
        self.script.lock().unwrap().pop_front().unwrap_or(Err(TransportFailure::Io("script exhausted".into())))
    }

    fn name(&self) -> &str {
        "scripted"
    }
}

#[derive(Default)]
struct RecordingSleeper(Mutex<Vec<Duration>>);

impl Sleeper for RecordingSleeper {
    fn sleep(&self, d: Duration) {
        self.0.lock().unwrap().push(d);
    }
}

fn ok(content: &str) -> Scripted {
    Ok(HttpReply {
        status: 200,
        body: chat_response_body(content),
    })
}

fn status(code: u16) -> Scripted {
    Ok(HttpReply {
        status: code,
        body: "busy".into(),
    })
}

fn handle(backend: Arc<ScriptedBackend>, config: GatewayConfig) -> (GatewayHandle, Arc<RecordingSleeper>) {
    let sleeper = Arc::new(RecordingSleeper::default());
    let h = GatewayHandle::with_sleeper(backend, config, sleeper.clone(), 9).unwrap();
    (h, sleeper)
}

fn locator_request() -> StructuredRequest {
    StructuredRequest::new(RoleTag::Locator, "move the cup")
}

const RELOCATION: &str = r#"{"instance_id": "cup_1", "position": [0.1, 0.2, 0.75]}"#;

#[derive(Deserialize)]
struct Fixtures {
    valid: serde_json::Map<String, Value>,
    malformed: Vec<Malformed>,
}

#[derive(Deserialize)]
struct Malformed {
    name: String,
    schema: SchemaId,
    reply: String,
    expected: String,
}

fn fixtures() -> Fixtures {
    serde_json::from_str(include_str!("fixtures/malformed_replies.json")).unwrap()
}

fn role_for(schema: SchemaId) -> RoleTag {
    RoleTag::ALL.into_iter().find(|r| r.schema() == schema).unwrap()
}

#[test]
fn malformed_replies_are_caught() {
    let f = fixtures();
    assert_eq!(f.malformed.len(), 20);
    for m in &f.malformed {
        let extracted = extract_json_object(&m.reply);
        match m.expected.as_str() {
            "no_json" => assert_eq!(extracted, None, "{}", m.name),
            "schema_error" => {
                let v = extracted.unwrap_or_else(|| panic!("{}: no object extracted", m.name));
                assert!(validate_payload(m.schema, v).is_err(), "{}", m.name);
            }
            other => panic!("{}: unknown expectation {other}", m.name),
        }
        let valid = f.valid[&m.schema.to_string()].to_string();
        assert!(validate_payload(m.schema, serde_json::from_str(&valid).unwrap()).is_ok());
        let request = StructuredRequest::new(role_for(m.schema), "anything");

        // One repair round-trip recovers.
        let backend = ScriptedBackend::new([ok(&m.reply), ok(&valid)]);
        let (h, sleeper) = handle(backend.clone(), GatewayConfig::default());
        let payload = h.send(&request).unwrap_or_else(|e| panic!("{}: {e}", m.name));
        assert_eq!(payload.schema(), m.schema);
        assert_eq!(backend.calls(), 2, "{}", m.name);
        assert!(sleeper.0.lock().unwrap().is_empty());
        let repair = &backend.bodies.lock().unwrap()[1];
        let messages = repair["messages"].as_array().unwrap();
        assert_eq!(messages.len(), 4);
        assert_eq!(messages[2], json!({"role": "assistant", "content": m.reply}));
        assert_eq!(messages[3]["role"], "user");

        // A second bad reply is final.
        let backend = ScriptedBackend::new([ok(&m.reply), ok(&m.reply), ok(&valid)]);
        let (h, _) = handle(backend.clone(), GatewayConfig::default());
        let err = h.send(&request).unwrap_err();
        assert!(matches!(err, GatewayError::SchemaError { schema, .. } if schema == m.schema), "{}: {err}", m.name);
        assert_eq!(backend.calls(), 2);
    }
}

#[test]
fn rate_limit_then_success() {
    let backend = ScriptedBackend::new([status(429), ok(RELOCATION)]);
    let (h, sleeper) = handle(backend.clone(), GatewayConfig::default());
    let p = h.send(&locator_request()).unwrap().into_relocation().unwrap();
    assert_eq!(p.instance_id, "cup_1");
    assert_eq!(backend.calls(), 2);
    assert_eq!(h.requests_dispatched(), 2);
    let sleeps = sleeper.0.lock().unwrap();
    assert_eq!(sleeps.len(), 1);
    assert!(sleeps[0] >= Duration::from_millis(500) && sleeps[0] < Duration::from_millis(1000), "{sleeps:?}");
}

#[test]
fn backoff_grows_geometrically_until_attempts_run_out() {
    let backend = ScriptedBackend::new((0..10).map(|_| status(503)));
    let config = GatewayConfig::default();
    let (h, sleeper) = handle(backend.clone(), config.clone());
    let err = h.send(&locator_request()).unwrap_err();
    let GatewayError::TransportError { trace, .. } = err else { panic!("{err}") };
    assert_eq!(trace.len(), config.max_attempts as usize);
    assert_eq!(backend.calls(), config.max_attempts as usize);
    let sleeps = sleeper.0.lock().unwrap();
    assert_eq!(sleeps.len(), config.max_attempts as usize - 1);
    for (retry, d) in sleeps.iter().enumerate() {
        let base = 500.0 * 2f64.powi(retry as i32);
        let ms = d.as_millis() as f64;
        assert!(base <= ms && ms <= 2.0 * base, "retry {retry}: {ms} ms");
    }
}

#[test]
fn timeouts_and_client_errors() {
    let backend = ScriptedBackend::new((0..5).map(|_| Err(TransportFailure::Timeout)));
    let (h, _) = handle(backend, GatewayConfig::default());
    assert!(matches!(h.send(&locator_request()), Err(GatewayError::Timeout { attempts: 5, .. })));

    let backend = ScriptedBackend::new([status(400), ok(RELOCATION)]);
    let (h, sleeper) = handle(backend.clone(), GatewayConfig::default());
    assert!(matches!(h.send(&locator_request()), Err(GatewayError::TransportError { .. })));
    assert_eq!(backend.calls(), 1);
    assert!(sleeper.0.lock().unwrap().is_empty());
}

#[test]
fn request_budget_is_enforced() {
    let backend = ScriptedBackend::new((0..10).map(|_| ok(RELOCATION)));
    let config = GatewayConfig {
        request_budget: 3,
        ..GatewayConfig::default()
    };
    let (h, _) = handle(backend.clone(), config);
    for _ in 0..3 {
        h.send(&locator_request()).unwrap();
    }
    assert!(matches!(h.send(&locator_request()), Err(GatewayError::BudgetExhausted { used: 3, limit: 3 })));
    assert_eq!(backend.calls(), 3);
}

/// Sleeps briefly inside `post` and tracks how many calls overlap.
#[derive(Default)]
struct SlowBackend {
    current: AtomicUsize,
    peak: AtomicUsize,
}

impl Backend for SlowBackend {
    fn post(&self, _request: &StructuredRequest, _body: &Value) -> Result<HttpReply, TransportFailure> {
        let now = self.current.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        std::thread::sleep(Duration::from_millis(5));
        self.current.fetch_sub(1, Ordering::SeqCst);
        Ok(HttpReply {
            status: 200,
            body: chat_response_body(RELOCATION),
        })
    }

    fn name(&self) -> &str {
        "slow"
    }
}

#[test]
fn concurrency_never_exceeds_max_inflight() {
    let backend = Arc::new(SlowBackend::default());
    let config = GatewayConfig {
        max_inflight: 2,
        ..GatewayConfig::default()
    };
    let h = GatewayHandle::with_sleeper(backend.clone(), config, Arc::new(RecordingSleeper::default()), 0).unwrap();
    std::thread::scope(|s| {
        for _ in 0..16 {
            s.spawn(|| {
                for _ in 0..3 {
                    h.send(&locator_request()).unwrap();
                }
            });
        }
    });
    assert_eq!(h.requests_dispatched(), 48);
    assert!(h.peak_inflight() <= 2 && h.peak_inflight() >= 1);
    assert!(backend.peak.load(Ordering::SeqCst) <= 2);
}

#[test]
fn api_key_is_never_serialized() {
    let config = GatewayConfig {
        api_key: Some("sk-secret-value".into()),
        ..GatewayConfig::default()
    };
    let text = serde_json::to_string(&config).unwrap();
    assert!(!text.contains("sk-secret-value") && !text.contains("api_key"));
    let back: GatewayConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(back.api_key, None);
    assert!(matches!(HttpBackend::new(&back), Err(GatewayError::MissingApiKey)));
}

/// Serves one canned chat-completions reply and hands back the raw request.
fn one_shot_server(reply_body: String) -> (String, std::thread::JoinHandle<(Vec<String>, Value)>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let server = std::thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut headers = Vec::new();
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let line = line.trim_end().to_owned();
            if line.is_empty() {
                break;
            }
            headers.push(line);
        }
        let len: usize = headers
            .iter()
            .find_map(|h| h.to_ascii_lowercase().strip_prefix("content-length:").map(|v| v.trim().parse().unwrap()))
            .unwrap();
        let mut body = vec![0; len];
        reader.read_exact(&mut body).unwrap();
        let mut out = stream;
        write!(
            out,
            "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
            reply_body.len(),
            reply_body
        )
        .unwrap();
        (headers, serde_json::from_slice(&body).unwrap())
    });
    (url, server)
}

#[test]
fn http_backend_speaks_chat_completions_over_loopback() {
    let (endpoint, server) = one_shot_server(chat_response_body(RELOCATION));
    let config = GatewayConfig {
        endpoint,
        model: "test-model".into(),
        api_key: Some("loopback-key".into()),
        timeout_s: 10.0,
        ..GatewayConfig::default()
    };
    let h = GatewayHandle::new(Arc::new(HttpBackend::new(&config).unwrap()), config).unwrap();
    let p = h.send(&locator_request()).unwrap().into_relocation().unwrap();
    assert_eq!(p.instance_id, "cup_1");

    let (headers, body) = server.join().unwrap();
    assert!(headers[0].starts_with("POST /v1/chat/completions "), "{}", headers[0]);
    assert!(headers.iter().any(|h| h.eq_ignore_ascii_case("authorization: Bearer loopback-key")), "{headers:?}");
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["temperature"], 0);
    let messages = body["messages"].as_array().unwrap();
    assert_eq!(messages[0]["role"], "system");
    assert_eq!(messages[1], json!({"role": "user", "content": "move the cup"}));
}

/// Talks to a real endpoint; run with `--ignored` and the API key set.
#[test]
#[ignore = "needs network access and FYI_LLM_API_KEY"]
fn live_endpoint_answers_the_planner() {
    if std::env::var(ENV_API_KEY).map_or(true, |k| k.is_empty()) {
        eprintln!("{ENV_API_KEY} not set; skipping");
        return;
    }
    let config = GatewayConfig::default().with_env();
    let h = GatewayHandle::new(Arc::new(HttpBackend::new(&config).unwrap()), config).unwrap();
    let request = StructuredRequest::new(RoleTag::Locator, "Reply with instance_id \"cup_1\" and position [0, 0, 0.75].");
    assert!(h.send(&request).is_ok());
}

#[test]
fn mock_roles_are_deterministic_and_scoped() {
    let request = StructuredRequest::new(
        RoleTag::Collector,
        fyi_core::gateway::prompts::user_prompt("Decompose.", "Place two cups on a table.", &json!({})),
    );
    let a = format!("{:?}", mock_gateway(1).send(&request).unwrap());
    let b = format!("{:?}", mock_gateway(2).send(&request).unwrap());
    assert_eq!(a, b);

    let only_judge = mock_backend("judge", 0).unwrap();
    assert!(matches!(only_judge.send(&request), Err(GatewayError::TransportError { .. })));
    assert!(matches!(mock_backend("painter", 0), Err(GatewayError::UnknownRole(r)) if r == "painter"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn attempts_never_exceed_the_cap(
        codes in proptest::collection::vec(prop_oneof![Just(200u16), Just(429), Just(500), Just(503), Just(0)], 0..12),
        max_attempts in 1u32..6,
        bad_first in any::<bool>(),
    ) {
        let script: Vec<Scripted> = codes
            .iter()
            .enumerate()
            .map(|(i, &c)| match c {
                0 => Err(TransportFailure::Timeout),
                200 if bad_first && i == 0 => ok("not json"),
                200 => ok(RELOCATION),
                c => status(c),
            })
            .collect();
        let backend = ScriptedBackend::new(script);
        let config = GatewayConfig { max_attempts, ..GatewayConfig::default() };
        let (h, sleeper) = handle(backend.clone(), config);
        let result = h.send(&locator_request());
        prop_assert!(backend.calls() <= max_attempts as usize);
        prop_assert_eq!(h.requests_dispatched(), backend.calls() as u64);
        prop_assert!(sleeper.0.lock().unwrap().len() < max_attempts as usize);
        if let Ok(p) = result {
            prop_assert_eq!(p.schema(), SchemaId::RelocationProposal);
        }
    }
}
