//! In-process chat backends driven by closures, with a request log.

use std::sync::Mutex;

use mandel::llmbackend::{BackendError, ChatBackend, ChatRequest, ChatResponse, Usage};
use mandel::protocol::Role;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

type Policy = Box<dyn FnMut(&ChatRequest) -> String + Send>;

/// Answers each request with `policy(request)` and remembers every request.
pub struct ScriptedBackend {
    policy: Mutex<Policy>,
    log: Mutex<Vec<ChatRequest>>,
}

impl ScriptedBackend {
    pub fn new(policy: impl FnMut(&ChatRequest) -> String + Send + 'static) -> Self {
        Self {
            policy: Mutex::new(Box::new(policy)),
            log: Mutex::new(Vec::new()),
        }
    }

    /// Answers from a fixed list of `(agent, response)` pairs, in order,
    /// panicking on an unexpected agent.
    pub fn from_turns(turns: Vec<(Role, String)>) -> Self {
        let mut turns = turns.into_iter();
        Self::new(move |req| {
            let (role, text) = turns.next().unwrap_or_else(|| panic!("script exhausted at {}", req.agent));
            assert_eq!(req.agent, role.as_str(), "unexpected agent");
            text
        })
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.log.lock().unwrap().clone()
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        self.log.lock().unwrap().push(request.clone());
        let content = (self.policy.lock().unwrap())(request);
        Ok(ChatResponse {
            content,
            usage: Usage::default(),
        })
    }
}

pub fn envelope(thought: &str, action: &str, input: &str) -> String {
    format!("Thought: {thought}\nAction: {action}\nAction Input: {input}")
}

/// Probabilities steering [`random_agents`].
#[derive(Debug, Clone, Copy)]
pub struct AgentOdds {
    pub arxiv: f64,
    pub novelty_accept: f64,
    pub judge_accept: f64,
}

/// A policy where every agent decides at random. Feedback and notes carry
/// unique tokens (`NOVELTY-FB-<n>`, `JUDGE-FB-<n>`, `MEDIATOR-NOTE-<n>`) so
/// tests can trace them through later contexts.
pub fn random_agents(seed: u64, odds: AgentOdds) -> impl FnMut(&ChatRequest) -> String + Send {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut n = 0usize;
    move |req| {
        n += 1;
        match req.agent.as_str() {
            "researcher" => {
                if rng.gen_bool(odds.arxiv) {
                    envelope("look something up", "arxiv", &format!("query {n}"))
                } else {
                    envelope(
                        "ready",
                        "final answer",
                        &format!("Title: Proposal {n}\nAbstract: Abstract text {n}.\nTarget: state {n}"),
                    )
                }
            }
            "novelty" => {
                if rng.gen_bool(odds.novelty_accept) {
                    envelope("novel", "accept", &format!("fine {n}"))
                } else {
                    envelope("seen before", "reject", &format!("NOVELTY-FB-{n}"))
                }
            }
            "judge" => {
                if rng.gen_bool(odds.judge_accept) {
                    envelope("feasible", "accept", &format!("fine {n}"))
                } else {
                    envelope("not feasible", "reject", &format!("JUDGE-FB-{n}"))
                }
            }
            "mediator" => format!("MEDIATOR-NOTE-{n}"),
            other => panic!("unexpected agent {other}"),
        }
    }
}
