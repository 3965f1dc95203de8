//! Step-protocol client against an in-process HTTP server, plus in-process
//! logits sources.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Duration;

use clinibench::guided::{
    schema_regex, GenerationBudget, MaskAutomaton, SchemaConfig, SchemaMode, Vocabulary,
};
use clinibench::inference::{
    generate, generate_all, DecodeSpec, HttpSource, InferenceError, LogitsSource, OpenResponse,
    RandomLogits, RetryPolicy, ScriptedLogits, StepRequest,
};

fn vocab() -> &'static Vocabulary {
    static V: OnceLock<Vocabulary> = OnceLock::new();
    V.get_or_init(|| Vocabulary::synthetic(300, 7))
}

fn automaton() -> &'static MaskAutomaton {
    static A: OnceLock<MaskAutomaton> = OnceLock::new();
    A.get_or_init(|| MaskAutomaton::compile(&schema_regex(SchemaMode::Plain), vocab()).unwrap())
}

fn schema() -> &'static SchemaConfig {
    static S: OnceLock<SchemaConfig> = OnceLock::new();
    S.get_or_init(SchemaConfig::default)
}

fn spec() -> DecodeSpec<'static> {
    DecodeSpec {
        automaton: automaton(),
        vocab: vocab(),
        budget: GenerationBudget::default(),
        mode: SchemaMode::Plain,
        schema: schema(),
    }
}

fn fast_retry() -> RetryPolicy {
    RetryPolicy { attempts: 3, base_delay: Duration::from_millis(5), timeout: Duration::from_secs(10) }
}

/// Step log entry: (session id, had prompt, token ids).
type StepLog = Vec<(String, bool, Vec<u32>)>;

struct Server {
    url: String,
    log: Arc<Mutex<StepLog>>,
    hits: Arc<AtomicUsize>,
}

struct Backend {
    source: Box<dyn LogitsSource + Send>,
    hash_override: Option<String>,
    /// Answer this many requests with 503 before serving.
    fail_first: usize,
    passthrough: Option<String>,
}

fn respond(stream: &mut TcpStream, status: &str, body: &str) {
    let _ = write!(
        stream,
        "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
}

fn handle(mut stream: TcpStream, backend: &Backend, log: &Mutex<StepLog>, hits: &AtomicUsize) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut line = String::new();
    if reader.read_line(&mut line).unwrap_or(0) == 0 {
        return;
    }
    let path = line.split_whitespace().nth(1).unwrap_or("").to_owned();
    let mut len = 0;
    loop {
        let mut h = String::new();
        reader.read_line(&mut h).unwrap();
        if h.trim().is_empty() {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                len = v.trim().parse().unwrap();
            }
        }
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body).unwrap();
    if hits.fetch_add(1, Ordering::SeqCst) < backend.fail_first {
        respond(&mut stream, "503 Service Unavailable", "{}");
        return;
    }
    let json: serde_json::Value = serde_json::from_slice(&body).unwrap();
    let out = match path.as_str() {
        "/open" => {
            let mut r = backend.source.open(json["prompt"].as_str().unwrap()).unwrap();
            if let Some(h) = &backend.hash_override {
                r.vocab_hash = h.clone();
            }
            serde_json::to_string(&r).unwrap()
        }
        "/step" => {
            let req: StepRequest = serde_json::from_value(json).unwrap();
            log.lock().unwrap().push((req.session_id.clone(), req.prompt.is_some(), req.token_ids.clone()));
            serde_json::to_string(&backend.source.step(&req).unwrap()).unwrap()
        }
        "/generate" => serde_json::json!({ "text": backend.passthrough.clone().unwrap() }).to_string(),
        _ => return respond(&mut stream, "404 Not Found", "{}"),
    };
    respond(&mut stream, "200 OK", &out);
}

fn serve(backend: Backend) -> Server {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let backend = Arc::new(backend);
    let log = Arc::new(Mutex::new(Vec::new()));
    let hits = Arc::new(AtomicUsize::new(0));
    let (b, l, h) = (backend.clone(), log.clone(), hits.clone());
    std::thread::spawn(move || {
        for stream in listener.incoming().flatten() {
            let (b, l, h) = (b.clone(), l.clone(), h.clone());
            std::thread::spawn(move || handle(stream, &b, &l, &h));
        }
    });
    Server { url, log, hits }
}

fn random_backend(seed: u64) -> Backend {
    Backend {
        source: Box::new(RandomLogits::new(vocab(), seed)),
        hash_override: None,
        fail_first: 0,
        passthrough: None,
    }
}

fn jobs(n: usize) -> Vec<(String, String)> {
    (0..n).map(|i| (format!("n{i}"), format!("prompt {i}"))).collect()
}

#[test]
fn uniform_logits_over_http_give_valid_json() {
    let server = serve(random_backend(1));
    let client = HttpSource::new(&server.url, fast_retry());
    let out = generate_all(&client, &jobs(6), spec(), 3);
    for (i, r) in out.iter().enumerate() {
        let r = r.as_ref().unwrap();
        assert_eq!(r.note_id, format!("n{i}"));
        assert!(r.valid_json && r.count == 20, "{}", r.raw);
        assert!(r.tokens.unwrap() <= 1500);
    }
    // each session sends its prompt once, then grows its token list by one per step
    let log = server.log.lock().unwrap();
    let mut by_session: HashMap<&str, Vec<(bool, &Vec<u32>)>> = HashMap::new();
    for (s, p, t) in log.iter() {
        by_session.entry(s).or_default().push((*p, t));
    }
    assert_eq!(by_session.len(), 6);
    for steps in by_session.values_mut() {
        steps.sort_by_key(|(_, t)| t.len());
        for (k, (had_prompt, tokens)) in steps.iter().enumerate() {
            assert_eq!(*had_prompt, k == 0);
            assert_eq!(tokens.len(), k);
            if k > 0 {
                assert!(tokens.starts_with(steps[k - 1].1));
            }
        }
    }
}

#[test]
fn results_do_not_depend_on_concurrency() {
    let src = RandomLogits::new(vocab(), 42);
    let strip = |rs: Vec<Result<_, InferenceError>>| {
        rs.into_iter().map(|r: Result<clinibench::guided::GenerationRecord, _>| r.unwrap().raw).collect::<Vec<_>>()
    };
    let serial = strip(generate_all(&src, &jobs(8), spec(), 1));
    let parallel = strip(generate_all(&src, &jobs(8), spec(), 4));
    assert_eq!(serial, parallel);
    assert!(serial.windows(2).all(|w| w[0] != w[1]));
}

#[test]
fn scripted_source_reproduces_its_target() {
    let descs: Vec<String> = (0..20).map(|i| format!("Diagnosis number {i}")).collect();
    let target = serde_json::json!({ "diagnoses": descs }).to_string();
    let scripted = ScriptedLogits::new(vocab(), [("p".to_owned(), target.clone())]).unwrap();
    let server = serve(Backend { source: Box::new(scripted), hash_override: None, fail_first: 0, passthrough: None });
    let client = HttpSource::new(&server.url, fast_retry());
    let r = generate(&client, "p", spec()).unwrap();
    assert_eq!(r.raw, target);
    assert_eq!(r.descriptions, descs);
    assert!(r.valid_json);
}

#[test]
fn vocab_hash_mismatch_is_reported() {
    let mut backend = random_backend(1);
    backend.hash_override = Some("00".repeat(32));
    let server = serve(backend);
    let client = HttpSource::new(&server.url, fast_retry());
    assert!(matches!(generate(&client, "p", spec()), Err(InferenceError::VocabMismatch { .. })));
}

#[test]
fn unreachable_endpoint_fails_after_three_attempts() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let client = HttpSource::new(&format!("http://127.0.0.1:{port}"), fast_retry());
    match client.open("p") {
        Err(InferenceError::Transport { attempts, .. }) => assert_eq!(attempts, 3),
        other => panic!("expected transport error, got {other:?}"),
    }
}

#[test]
fn server_errors_are_retried() {
    let mut backend = random_backend(1);
    backend.fail_first = 2;
    let server = serve(backend);
    let client = HttpSource::new(&server.url, fast_retry());
    let r: OpenResponse = client.open("p").unwrap();
    assert_eq!(r.vocab_hash, vocab().hash_hex());
    assert_eq!(server.hits.load(Ordering::SeqCst), 3);

    let mut backend = random_backend(1);
    backend.fail_first = 3;
    let server = serve(backend);
    let client = HttpSource::new(&server.url, fast_retry());
    assert!(matches!(client.open("p"), Err(InferenceError::Transport { attempts: 3, .. })));
}

#[test]
fn passthrough_parses_server_text() {
    let text = serde_json::json!({ "diagnoses": (0..20).map(|i| format!("dx {i}")).collect::<Vec<_>>() }).to_string();
    let mut backend = random_backend(1);
    backend.passthrough = Some(text.clone());
    let server = serve(backend);
    let client = HttpSource::new(&server.url, fast_retry());
    let r = client
        .generate_passthrough("p", &schema_regex(SchemaMode::Plain), 1500, SchemaMode::Plain, schema())
        .unwrap();
    assert_eq!(r.raw, text);
    assert!(r.valid_json);
}
