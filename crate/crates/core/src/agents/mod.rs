//! Agent orchestration.
//!
//! Idea generation drives a Researcher against two supervisors (novelty,
//! then feasibility) with a periodic Mediator. Implementation drives the
//! Expert against a design tool until a run succeeds or the retry cap is hit.

mod context;
mod ideagen;
mod implement;
mod prompts;

use std::fmt;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::configschema::{parse_config, render_config, DesignConfig};
use crate::literature::LiteratureError;
use crate::llmbackend::BackendError;
use crate::protocol::{ActionEnvelope, Role};
use crate::store::StoreError;
use crate::toolrunner::{ToolError, ToolOutcome};

pub use context::{
    assemble_expert_context, assemble_feasibility_context, assemble_mediator_context,
    assemble_novelty_context, assemble_researcher_context, HistoryItem, ResearcherInputs,
};
pub use ideagen::{evaluate_feasibility, evaluate_novelty, invoke_mediator, run_idea_generation, IdeaGenEnv};
pub use implement::{extract_config_text, run_implementation, ImplementEnv};
pub use prompts::PromptSet;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConceptPair {
    pub concept_a: String,
    pub concept_b: String,
    pub source_id: String,
}

impl ConceptPair {
    pub fn new(
        concept_a: impl Into<String>,
        concept_b: impl Into<String>,
        source_id: impl Into<String>,
    ) -> Result<Self, AgentError> {
        let pair = Self {
            concept_a: concept_a.into(),
            concept_b: concept_b.into(),
            source_id: source_id.into(),
        };
        pair.check()?;
        Ok(pair)
    }

    fn check(&self) -> Result<(), AgentError> {
        if self.concept_a.trim().is_empty() || self.concept_b.trim().is_empty() {
            return Err(AgentError::MissingInput("concept pair has an empty concept".into()));
        }
        if self.concept_a == self.concept_b {
            return Err(AgentError::MissingInput(format!(
                "concept pair repeats `{}`",
                self.concept_a
            )));
        }
        Ok(())
    }
}

/// Reads concept pairs, one JSON object per line.
pub fn load_concept_pairs(path: impl AsRef<Path>) -> Result<Vec<ConceptPair>, AgentError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| AgentError::MissingInput(format!("{}: {e}", path.display())))?;
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let pair: ConceptPair = serde_json::from_str(line)
            .map_err(|e| AgentError::MissingInput(format!("{} line {}: {e}", path.display(), n + 1)))?;
        pair.check()
            .map_err(|e| AgentError::MissingInput(format!("{} line {}: {e}", path.display(), n + 1)))?;
        pairs.push(pair);
    }
    Ok(pairs)
}

/// A fully accepted research idea.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Idea {
    pub id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub target_description: String,
    pub concepts: ConceptPair,
    pub run_id: String,
    pub created_at: String,
}

/// Title and abstract pulled out of a final-answer payload.
///
/// Lines starting with `Title:` and `Abstract:` (or `Mini-abstract:`) are
/// used when present; otherwise the first line is the title and the whole
/// payload, whitespace-collapsed, is the abstract.
pub fn summarize_proposal(target_description: &str) -> (String, String) {
    let mut title = None;
    let mut abstract_text = None;
    for line in target_description.lines() {
        let trimmed = line.trim().trim_start_matches(['*', '#', '-', ' ']);
        let lower = trimmed.to_ascii_lowercase();
        let value = |prefix: &str| trimmed[prefix.len()..].trim().trim_matches('*').trim().to_string();
        if title.is_none() && lower.starts_with("title:") {
            title = Some(value("title:")).filter(|v| !v.is_empty());
        } else if abstract_text.is_none() && lower.starts_with("mini-abstract:") {
            abstract_text = Some(value("mini-abstract:")).filter(|v| !v.is_empty());
        } else if abstract_text.is_none() && lower.starts_with("abstract:") {
            abstract_text = Some(value("abstract:")).filter(|v| !v.is_empty());
        }
    }
    let squashed = target_description.split_whitespace().collect::<Vec<_>>().join(" ");
    let title = title.unwrap_or_else(|| {
        let first = target_description.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
        first.chars().take(120).collect()
    });
    (title, abstract_text.unwrap_or(squashed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub agent: Role,
    pub decision: Decision,
    pub feedback: String,
}

/// Terminal class of an idea-generation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    FullReject,
    NoveltyAccept,
    FullAccept,
}

impl Outcome {
    pub const ALL: [Outcome; 3] = [Outcome::FullReject, Outcome::NoveltyAccept, Outcome::FullAccept];

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::FullReject => "full_reject",
            Outcome::NoveltyAccept => "novelty_accept",
            Outcome::FullAccept => "full_accept",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How one raw agent turn was interpreted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParsedTurn {
    Envelope { envelope: ActionEnvelope },
    ParseError { error: String },
    Note,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub role: Role,
    pub raw: String,
    pub parsed: ParsedTurn,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MediatorNote {
    /// 1-based proposal count after which the note was produced.
    pub after_proposal: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proposal {
    pub index: usize,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub target_description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArxivLookup {
    pub query: String,
    pub result_ids: Vec<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdeaRun {
    pub run_id: String,
    /// Campaign variant label, e.g. `main`.
    pub variant: String,
    pub concepts: ConceptPair,
    pub seed_abstract_ids: Vec<String>,
    pub transcript: Vec<TranscriptEntry>,
    pub verdicts: Vec<Verdict>,
    pub proposals: Vec<Proposal>,
    pub lookups: Vec<ArxivLookup>,
    pub mediator_notes: Vec<MediatorNote>,
    pub outcome: Outcome,
    /// Number of Researcher final-answer proposals.
    pub iteration_count: usize,
    pub arxiv_queries_used: usize,
    /// Set when the pool received this run's idea.
    pub idea: Option<Idea>,
    /// Why the run stopped early, if it did.
    pub aborted: Option<String>,
    pub finished_at: String,
}

impl IdeaRun {
    pub fn new(run_id: impl Into<String>, variant: impl Into<String>, concepts: ConceptPair) -> Self {
        Self {
            run_id: run_id.into(),
            variant: variant.into(),
            concepts,
            seed_abstract_ids: Vec::new(),
            transcript: Vec::new(),
            verdicts: Vec::new(),
            proposals: Vec::new(),
            lookups: Vec::new(),
            mediator_notes: Vec::new(),
            outcome: Outcome::FullReject,
            iteration_count: 0,
            arxiv_queries_used: 0,
            idea: None,
            aborted: None,
            finished_at: String::new(),
        }
    }

    pub fn calls(&self, role: Role) -> usize {
        self.transcript.iter().filter(|t| t.role == role).count()
    }

    pub fn last_proposal(&self) -> Option<&Proposal> {
        self.proposals.last()
    }
}

/// Classifies a run from its verdict list alone.
pub fn classify_outcome(run: &IdeaRun) -> Outcome {
    classify_verdicts(&run.verdicts)
}

pub fn classify_verdicts(verdicts: &[Verdict]) -> Outcome {
    let accepted_by = |role| {
        verdicts
            .iter()
            .any(|v| v.agent == role && v.decision == Decision::Accept)
    };
    if accepted_by(Role::Judge) {
        Outcome::FullAccept
    } else if accepted_by(Role::NoveltySupervisor) {
        Outcome::NoveltyAccept
    } else {
        Outcome::FullReject
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    /// The parsed config, when the Expert's payload parsed at all.
    #[serde(with = "config_serde")]
    pub config: Option<DesignConfig>,
    pub raw_input: String,
    pub outcome: ToolOutcome,
}

mod config_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(cfg: &Option<DesignConfig>, s: S) -> Result<S::Ok, S::Error> {
        match cfg {
            None => s.serialize_none(),
            Some(cfg) => {
                let value: serde_json::Value =
                    serde_json::from_str(&render_config(cfg)).map_err(serde::ser::Error::custom)?;
                s.serialize_some(&value)
            }
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<DesignConfig>, D::Error> {
        let value: Option<serde_json::Value> = Option::deserialize(d)?;
        value
            .map(|v| parse_config(&v.to_string()).map_err(serde::de::Error::custom))
            .transpose()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImplementationRecord {
    pub impl_id: String,
    pub idea_id: String,
    pub variant: String,
    /// Class of the idea-generation run the idea came from.
    pub source_outcome: Outcome,
    pub transcript: Vec<TranscriptEntry>,
    pub attempts: Vec<Attempt>,
    pub success: bool,
    pub expert_calls: usize,
    pub aborted: Option<String>,
    pub finished_at: String,
}

impl ImplementationRecord {
    pub fn final_attempt(&self) -> Option<&Attempt> {
        self.attempts.last()
    }
}

/// Loop caps. Every field must be at least 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentLimits {
    pub max_novelty_rounds: usize,
    pub max_judge_rounds: usize,
    pub max_arxiv_queries: usize,
    pub retry_cap: usize,
    pub mediator_period: usize,
    pub search_results: usize,
}

impl Default for AgentLimits {
    fn default() -> Self {
        Self {
            max_novelty_rounds: 5,
            max_judge_rounds: 5,
            max_arxiv_queries: 5,
            retry_cap: 10,
            mediator_period: 3,
            search_results: 3,
        }
    }
}

impl AgentLimits {
    pub fn check(&self) -> Result<(), AgentError> {
        let fields = [
            ("max_novelty_rounds", self.max_novelty_rounds),
            ("max_judge_rounds", self.max_judge_rounds),
            ("max_arxiv_queries", self.max_arxiv_queries),
            ("retry_cap", self.retry_cap),
            ("mediator_period", self.mediator_period),
            ("search_results", self.search_results),
        ];
        match fields.iter().find(|(_, v)| *v == 0) {
            Some((name, _)) => Err(AgentError::InvalidLimits(format!("{name} must be at least 1"))),
            None => Ok(()),
        }
    }

    /// Upper bound on Researcher turns in one run.
    pub fn researcher_turn_budget(&self) -> usize {
        self.max_novelty_rounds + self.max_judge_rounds + self.max_arxiv_queries + 1
    }
}

/// Model identity and sampling temperature for every agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    pub model_name: String,
    pub temperature: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            model_name: "o4-mini".into(),
            temperature: 1.0,
        }
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("invalid limits: {0}")]
    InvalidLimits(String),
    #[error("{role} backend failure: {source}")]
    BackendFailure {
        role: Role,
        source: BackendError,
        partial: Box<PartialRun>,
    },
    #[error("{role} produced {attempts} consecutive unparseable turns: {last_error}")]
    ParseFailureExhausted {
        role: Role,
        attempts: usize,
        last_error: String,
        partial: Box<PartialRun>,
    },
    #[error("idea pool is empty")]
    EmptyPool,
    #[error(transparent)]
    Literature(#[from] LiteratureError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Tool(#[from] ToolError),
}

/// Whatever a run had produced before it aborted.
#[derive(Debug, Clone, PartialEq)]
pub enum PartialRun {
    None,
    Idea(IdeaRun),
    Implementation(ImplementationRecord),
}

impl AgentError {
    pub fn partial(&self) -> &PartialRun {
        match self {
            AgentError::BackendFailure { partial, .. } | AgentError::ParseFailureExhausted { partial, .. } => partial,
            _ => &PartialRun::None,
        }
    }

    /// Takes the partial run out of an abort error.
    pub fn into_partial(self) -> PartialRun {
        match self {
            AgentError::BackendFailure { partial, .. } | AgentError::ParseFailureExhausted { partial, .. } => *partial,
            _ => PartialRun::None,
        }
    }
}

/// Uniform draw from the pool.
pub fn select_idea<'a, R: Rng + ?Sized>(pool: &'a [Idea], rng: &mut R) -> Result<&'a Idea, AgentError> {
    if pool.is_empty() {
        return Err(AgentError::EmptyPool);
    }
    Ok(&pool[rng.gen_range(0..pool.len())])
}

/// `n` distinct ideas in draw order, for campaign-mode implementation.
pub fn draw_without_replacement<R: Rng + ?Sized>(pool: &[Idea], n: usize, rng: &mut R) -> Result<Vec<Idea>, AgentError> {
    if pool.is_empty() {
        return Err(AgentError::EmptyPool);
    }
    Ok(rand::seq::index::sample(rng, pool.len(), n.min(pool.len()))
        .into_iter()
        .map(|i| pool[i].clone())
        .collect())
}
