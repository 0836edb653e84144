use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use mandel::agents::{run_idea_generation, AgentLimits, IdeaGenEnv, ModelParams, Outcome, PromptSet};
use mandel::clock::LogicalClock;
use mandel::literature::CorpusSearch;
use mandel::llmbackend::{
    load_script, record_session, save_script, ApiKey, BackendError, ChatBackend, ChatMessage, ChatRequest, LiveBackend,
    LiveConfig, ReplayBackend, ReplayScript, RetryPolicy, ScriptError,
};
use mandel::store::{CatalogEntry, PublishedCatalog, Store};
use mandel_testkit::scripted::envelope;
use mandel_testkit::synth;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const KEY: &str = "sk-test-3f9a1c77e2b54d0d";

/// Minimal HTTP/1.1 server answering each request with the next canned
/// `(status, body)` and keeping the raw requests.
struct StubServer {
    url: String,
    requests: Arc<Mutex<Vec<String>>>,
}

impl StubServer {
    fn start(replies: Vec<(u16, String)>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let seen = requests.clone();
        thread::spawn(move || {
            for (stream, (status, body)) in listener.incoming().zip(replies) {
                let mut stream = stream.unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut head = String::new();
                let mut length = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        length = v.trim().parse().unwrap();
                    }
                    head.push_str(&line);
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                }
                let mut payload = vec![0; length];
                reader.read_exact(&mut payload).unwrap();
                head.push_str(&String::from_utf8_lossy(&payload));
                seen.lock().unwrap().push(head);
                let response = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(response.as_bytes()).unwrap();
            }
        });
        Self { url, requests }
    }

    fn requests(&self) -> Vec<String> {
        self.requests.lock().unwrap().clone()
    }
}

fn completion(content: &str) -> (u16, String) {
    let body = serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": content}}],
        "usage": {"prompt_tokens": 12, "completion_tokens": 5},
    });
    (200, body.to_string())
}

fn live(url: &str) -> LiveBackend {
    let config = LiveConfig {
        endpoint: url.to_string(),
        retry: RetryPolicy {
            attempts: 3,
            base_delay: Duration::from_millis(5),
        },
        max_in_flight: 2,
        request_timeout: Duration::from_secs(10),
    };
    LiveBackend::new(config, ApiKey::new(KEY)).unwrap()
}

fn request(agent: &str, text: &str) -> ChatRequest {
    ChatRequest::new(
        agent,
        vec![ChatMessage::system("be brief"), ChatMessage::user(text)],
        "gpt-4o",
        0.7,
    )
    .unwrap()
}

fn accepted_flow() -> Vec<String> {
    let proposal = |n| {
        envelope(
            "combine them",
            "final answer",
            &format!("Title: Swap {n}\nAbstract: Heralded swap number {n}.\nTarget: GHZ"),
        )
    };
    vec![
        proposal(1),
        envelope("known", "reject", "Already in the pool."),
        proposal(2),
        envelope("new", "accept", "Looks novel."),
        envelope("doable", "accept", "Feasible."),
    ]
}

struct World {
    corpus: mandel::literature::Corpus,
    search: CorpusSearch,
    catalog: PublishedCatalog,
    prompts: PromptSet,
}

impl World {
    fn new() -> Self {
        let corpus = synth::corpus(8);
        Self {
            search: CorpusSearch::new(Arc::new(corpus.clone())),
            corpus,
            catalog: PublishedCatalog::new(vec![CatalogEntry {
                name: "GHZ3".into(),
                description: "three-photon GHZ state".into(),
            }])
            .unwrap(),
            prompts: PromptSet::default(),
        }
    }

    fn run(&self, backend: &dyn ChatBackend, store: &Store) -> mandel::agents::IdeaRun {
        let clock = LogicalClock::new();
        let env = IdeaGenEnv {
            backend,
            literature: &self.search,
            corpus: &self.corpus,
            store,
            catalog: &self.catalog,
            prompts: &self.prompts,
            limits: AgentLimits::default(),
            model: ModelParams::default(),
            clock: &clock,
            variant: "main".into(),
        };
        run_idea_generation(&env, "run-0001", &synth::pair(0), &mut ChaCha8Rng::seed_from_u64(3)).unwrap()
    }
}

#[test]
fn recorded_live_session_replays_identically() {
    let flow = accepted_flow();
    let server = StubServer::start(flow.iter().map(|c| completion(c)).collect());
    let dir = tempfile::tempdir().unwrap();
    let script_path = dir.path().join("script.jsonl");
    let world = World::new();

    let recording = record_session(live(&server.url), &script_path).unwrap();
    let live_store = Store::open(dir.path().join("live")).unwrap();
    let live_run = world.run(&recording, &live_store);
    assert_eq!(live_run.outcome, Outcome::FullAccept);

    let sent = server.requests();
    assert_eq!(sent.len(), flow.len());
    assert!(sent.iter().all(|r| r.contains(&format!("Bearer {KEY}"))));

    let script = load_script(&script_path).unwrap();
    assert_eq!(script.len(), flow.len());
    let replay = ReplayBackend::new(script);
    let replay_store = Store::open(dir.path().join("replay")).unwrap();
    let replay_run = world.run(&replay, &replay_store);
    assert_eq!(replay_run, live_run);
    assert_eq!(replay.remaining(), 0);

    let live_log = live_store.run_log_text("run-0001").unwrap();
    assert_eq!(live_log, replay_store.run_log_text("run-0001").unwrap());
    for text in [std::fs::read_to_string(&script_path).unwrap(), live_log] {
        assert!(!text.contains(KEY));
    }
}

#[test]
fn tampered_script_reports_the_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("script.jsonl");
    let mut script = ReplayScript::default();
    script.push("researcher/user", "x");
    script.push("judge/user", "y");
    save_script(&script, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap().replace("judge/user", "novelty/user");
    std::fs::write(&path, text).unwrap();

    let replay = ReplayBackend::from_file(&path).unwrap();
    replay.complete(&request("researcher", "a")).unwrap();
    match replay.complete(&request("judge", "b")) {
        Err(BackendError::FingerprintMismatch { index, expected, actual }) => {
            assert_eq!((index, expected.as_str(), actual.as_str()), (1, "novelty/user", "judge/user"));
        }
        other => panic!("{other:?}"),
    }
    assert!(matches!(
        ReplayBackend::new(ReplayScript::default()).complete(&request("judge", "b")),
        Err(BackendError::ScriptExhausted { index: 0 })
    ));
}

#[test]
fn malformed_script_line_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.jsonl");
    let good = ReplayScript::default();
    let mut one = good.clone();
    one.push("researcher/user", "ok");
    std::fs::write(&path, one.to_text() + "{\"fingerprint\": 3}\n").unwrap();
    match load_script(&path) {
        Err(ScriptError::Format { line, .. }) => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
}

proptest! {
    #[test]
    fn scripts_survive_save_and_load(
        records in prop::collection::vec(("[a-z]{1,8}/(user|assistant)", any::<String>()), 0..8)
    ) {
        let mut script = ReplayScript::default();
        for (f, r) in &records {
            script.push(f.clone(), r.clone());
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        save_script(&script, &path).unwrap();
        prop_assert_eq!(load_script(&path).unwrap(), script.clone());
        prop_assert_eq!(ReplayScript::parse(&script.to_text()).unwrap(), script);
    }
}

#[test]
fn transient_errors_are_retried() {
    let server = StubServer::start(vec![(503, "{}".into()), (429, "{}".into()), completion("Thought: t\nAction: accept\nAction Input: ok")]);
    let reply = live(&server.url).complete(&request("judge", "q")).unwrap();
    assert!(reply.content.contains("Action: accept"));
    assert_eq!(reply.usage.prompt_tokens, 12);
    assert_eq!(server.requests().len(), 3);
}

#[test]
fn retries_give_up_after_the_budget() {
    let server = StubServer::start(vec![(500, "{}".into()); 3]);
    assert!(matches!(live(&server.url).complete(&request("judge", "q")), Err(BackendError::Transport(_))));
}

#[test]
fn auth_failures_are_not_retried_and_hide_the_key() {
    let echo = format!("{{\"error\": \"bad key {KEY}\"}}");
    let server = StubServer::start(vec![(401, echo.clone()), (400, echo)]);
    let backend = live(&server.url);
    let err = backend.complete(&request("judge", "q")).unwrap_err();
    assert!(matches!(err, BackendError::Auth(_)));
    assert!(!err.to_string().contains(KEY));
    let err = backend.complete(&request("judge", "q")).unwrap_err();
    assert!(matches!(err, BackendError::InvalidRequest(_)));
    assert!(!err.to_string().contains(KEY));
    assert!(!format!("{backend:?}").contains(KEY));
    assert_eq!(server.requests().len(), 2);
}

#[test]
fn empty_completion_is_an_error() {
    let server = StubServer::start(vec![completion("   ")]);
    assert!(matches!(live(&server.url).complete(&request("judge", "q")), Err(BackendError::EmptyResponse)));
}
