use rand::Rng;

use crate::clock::{iso8601, Clock};
use crate::literature::{sample_seed_abstracts, Corpus, LiteratureSearch, DEFAULT_SEED_COUNT};
use crate::llmbackend::{BackendError, ChatBackend, ChatMessage, ChatRequest};
use crate::protocol::{parse_envelope, ActionEnvelope, Role, RoleGrammar, ACTION_ACCEPT, ACTION_ARXIV};
use crate::store::{IdeaRunSummary, LedgerRecord, PublishedCatalog, Store};

use super::context::{
    assemble_feasibility_context, assemble_mediator_context, assemble_novelty_context, assemble_researcher_context,
    HistoryItem, ResearcherInputs,
};
use super::{
    classify_outcome, summarize_proposal, AgentError, AgentLimits, ArxivLookup, ConceptPair, Decision, Idea, IdeaRun,
    MediatorNote, ModelParams, Outcome, ParsedTurn, PartialRun, PromptSet, Proposal, TranscriptEntry, Verdict,
};

/// Consecutive unparseable turns tolerated from one role before aborting.
const PARSE_ATTEMPTS: usize = 2;

/// Everything an idea-generation run talks to.
pub struct IdeaGenEnv<'a> {
    pub backend: &'a dyn ChatBackend,
    pub literature: &'a dyn LiteratureSearch,
    pub corpus: &'a Corpus,
    pub store: &'a Store,
    pub catalog: &'a PublishedCatalog,
    pub prompts: &'a PromptSet,
    pub limits: AgentLimits,
    pub model: ModelParams,
    pub clock: &'a dyn Clock,
    pub variant: String,
}

/// Why a turn could not be completed.
pub(super) enum Abort {
    Backend(Role, BackendError),
    Parse { role: Role, last_error: String },
}

impl Abort {
    pub(super) fn into_error(self, partial: PartialRun) -> AgentError {
        let partial = Box::new(partial);
        match self {
            Abort::Backend(role, source) => AgentError::BackendFailure { role, source, partial },
            Abort::Parse { role, last_error } => AgentError::ParseFailureExhausted {
                role,
                attempts: PARSE_ATTEMPTS,
                last_error,
                partial,
            },
        }
    }

    fn describe(&self) -> String {
        match self {
            Abort::Backend(role, e) => format!("{role} backend failure: {e}"),
            Abort::Parse { role, last_error } => {
                format!("{role} produced {PARSE_ATTEMPTS} consecutive unparseable turns: {last_error}")
            }
        }
    }
}

pub(super) fn complete(
    backend: &dyn ChatBackend,
    model: &ModelParams,
    role: Role,
    messages: Vec<ChatMessage>,
) -> Result<String, Abort> {
    let request = ChatRequest::new(role.as_str(), messages, &model.model_name, model.temperature)
        .map_err(|e| Abort::Backend(role, e))?;
    backend
        .complete(&request)
        .map(|r| r.content)
        .map_err(|e| Abort::Backend(role, e))
}

/// One envelope-producing turn with a single re-prompt on parse failure.
/// Failed turns and their errors stay in `history`.
pub(super) fn parsed_turn(
    backend: &dyn ChatBackend,
    model: &ModelParams,
    role: Role,
    transcript: &mut Vec<TranscriptEntry>,
    history: &mut Vec<HistoryItem>,
    build: impl Fn(&[HistoryItem]) -> Vec<ChatMessage>,
) -> Result<ActionEnvelope, Abort> {
    let grammar = RoleGrammar::for_role(role);
    let mut last_error = String::new();
    for _ in 0..PARSE_ATTEMPTS {
        let raw = complete(backend, model, role, build(history))?;
        match parse_envelope(&raw, &grammar) {
            Ok(envelope) => {
                transcript.push(TranscriptEntry {
                    role,
                    raw: raw.clone(),
                    parsed: ParsedTurn::Envelope { envelope: envelope.clone() },
                });
                history.push(HistoryItem::OwnTurn(raw));
                return Ok(envelope);
            }
            Err(e) => {
                last_error = e.to_string();
                transcript.push(TranscriptEntry {
                    role,
                    raw: raw.clone(),
                    parsed: ParsedTurn::ParseError { error: last_error.clone() },
                });
                history.push(HistoryItem::OwnTurn(raw));
                history.push(HistoryItem::ParseError(last_error.clone()));
            }
        }
    }
    Err(Abort::Parse { role, last_error })
}

fn verdict(role: Role, envelope: ActionEnvelope) -> Verdict {
    let decision = if envelope.action == ACTION_ACCEPT {
        Decision::Accept
    } else {
        Decision::Reject
    };
    Verdict {
        agent: role,
        decision,
        feedback: envelope.action_input,
    }
}

fn novelty_turn(
    env: &IdeaGenEnv<'_>,
    proposal: &Proposal,
    notes: &[MediatorNote],
    transcript: &mut Vec<TranscriptEntry>,
) -> Result<Verdict, Abort> {
    let pool = env.store.ideas();
    let mut history = Vec::new();
    let envelope = parsed_turn(env.backend, &env.model, Role::NoveltySupervisor, transcript, &mut history, |h| {
        assemble_novelty_context(env.prompts, proposal, &pool, env.catalog, notes, h)
    })?;
    Ok(verdict(Role::NoveltySupervisor, envelope))
}

fn judge_turn(
    env: &IdeaGenEnv<'_>,
    proposal: &Proposal,
    notes: &[MediatorNote],
    transcript: &mut Vec<TranscriptEntry>,
) -> Result<Verdict, Abort> {
    let mut history = Vec::new();
    let envelope = parsed_turn(env.backend, &env.model, Role::Judge, transcript, &mut history, |h| {
        assemble_feasibility_context(env.prompts, proposal, notes, h)
    })?;
    Ok(verdict(Role::Judge, envelope))
}

fn mediator_turn(env: &IdeaGenEnv<'_>, transcript: &mut Vec<TranscriptEntry>) -> Result<String, Abort> {
    let raw = complete(
        env.backend,
        &env.model,
        Role::Mediator,
        assemble_mediator_context(env.prompts, transcript),
    )?;
    transcript.push(TranscriptEntry {
        role: Role::Mediator,
        raw: raw.clone(),
        parsed: ParsedTurn::Note,
    });
    Ok(raw)
}

/// Novelty verdict on `proposal`, judged against the current pool and the
/// published catalogue. The turn is appended to `transcript`.
pub fn evaluate_novelty(
    env: &IdeaGenEnv<'_>,
    proposal: &Proposal,
    notes: &[MediatorNote],
    transcript: &mut Vec<TranscriptEntry>,
) -> Result<Verdict, AgentError> {
    novelty_turn(env, proposal, notes, transcript).map_err(|a| a.into_error(PartialRun::None))
}

/// Feasibility verdict on `proposal` with the tool description in context.
pub fn evaluate_feasibility(
    env: &IdeaGenEnv<'_>,
    proposal: &Proposal,
    notes: &[MediatorNote],
    transcript: &mut Vec<TranscriptEntry>,
) -> Result<Verdict, AgentError> {
    judge_turn(env, proposal, notes, transcript).map_err(|a| a.into_error(PartialRun::None))
}

/// Mediator note on the conversation so far, returned verbatim.
pub fn invoke_mediator(env: &IdeaGenEnv<'_>, transcript: &mut Vec<TranscriptEntry>) -> Result<String, AgentError> {
    mediator_turn(env, transcript).map_err(|a| a.into_error(PartialRun::None))
}

/// `run-0007` becomes `idea-0007`.
pub(crate) fn idea_id_for(run_id: &str) -> String {
    match run_id.strip_prefix("run-") {
        Some(n) => format!("idea-{n}"),
        None => format!("idea-{run_id}"),
    }
}

impl IdeaRun {
    /// The last proposal as an idea record, pooled or not. Used to send
    /// rejected proposals to implementation.
    pub fn proposal_idea(&self) -> Option<Idea> {
        if let Some(idea) = &self.idea {
            return Some(idea.clone());
        }
        let p = self.last_proposal()?;
        Some(Idea {
            id: idea_id_for(&self.run_id),
            title: p.title.clone(),
            abstract_text: p.abstract_text.clone(),
            target_description: p.target_description.clone(),
            concepts: self.concepts.clone(),
            run_id: self.run_id.clone(),
            created_at: self.finished_at.clone(),
        })
    }
}

/// Drives one idea-generation run to a terminal outcome and commits it to
/// the store (run log, pool entry on full accept, ledger line).
///
/// Aborted runs are committed too; the error carries the partial run.
pub fn run_idea_generation<R: Rng + ?Sized>(
    env: &IdeaGenEnv<'_>,
    run_id: &str,
    pair: &ConceptPair,
    rng: &mut R,
) -> Result<IdeaRun, AgentError> {
    env.limits.check()?;
    pair.check()?;
    let seeds = sample_seed_abstracts(env.corpus, DEFAULT_SEED_COUNT, rng)?;
    let mut run = IdeaRun::new(run_id, env.variant.clone(), pair.clone());
    run.seed_abstract_ids = seeds.iter().map(|s| s.arxiv_id.clone()).collect();

    let result = drive(env, &mut run, &seeds);
    let abort = result.err();
    if let Some(a) = &abort {
        run.aborted = Some(a.describe());
    }
    run.outcome = classify_outcome(&run);
    if run.outcome == Outcome::FullAccept {
        let p = run.last_proposal().expect("full accept implies a proposal");
        run.idea = Some(Idea {
            id: idea_id_for(run_id),
            title: p.title.clone(),
            abstract_text: p.abstract_text.clone(),
            target_description: p.target_description.clone(),
            concepts: pair.clone(),
            run_id: run_id.to_string(),
            created_at: iso8601(env.clock.now()),
        });
    }
    run.finished_at = iso8601(env.clock.now());

    env.store.append_run_log(&run)?;
    if let Some(idea) = &run.idea {
        env.store.append_idea(idea)?;
    }
    env.store
        .append_ledger(LedgerRecord::IdeaRun(IdeaRunSummary::from_run(&run)))?;

    match abort {
        None => Ok(run),
        Some(a) => Err(a.into_error(PartialRun::Idea(run))),
    }
}

fn drive(env: &IdeaGenEnv<'_>, run: &mut IdeaRun, seeds: &[crate::literature::AbstractRecord]) -> Result<(), Abort> {
    let limits = env.limits;
    let mut history: Vec<HistoryItem> = Vec::new();
    let mut novelty_rejects = 0;
    let mut judge_rejects = 0;
    let inputs = ResearcherInputs {
        seed_abstracts: seeds,
        tool_docs: &env.prompts.tool_docs,
        limitations: &env.prompts.limitations,
        pair: &run.concepts.clone(),
    };

    for _ in 0..limits.researcher_turn_budget() {
        let envelope = parsed_turn(env.backend, &env.model, Role::Researcher, &mut run.transcript, &mut history, |h| {
            assemble_researcher_context(&env.prompts.researcher, inputs, h)
                .expect("researcher inputs checked before the loop")
        })?;

        if envelope.action == ACTION_ARXIV {
            if run.arxiv_queries_used >= limits.max_arxiv_queries {
                history.push(HistoryItem::ArxivCapReached { cap: limits.max_arxiv_queries });
                continue;
            }
            run.arxiv_queries_used += 1;
            let query = envelope.action_input;
            match env.literature.search(&query, limits.search_results) {
                Ok(records) => {
                    run.lookups.push(ArxivLookup {
                        query: query.clone(),
                        result_ids: records.iter().map(|r| r.arxiv_id.clone()).collect(),
                        error: None,
                    });
                    history.push(HistoryItem::ArxivResults { query, records });
                }
                Err(e) => {
                    run.lookups.push(ArxivLookup {
                        query: query.clone(),
                        result_ids: Vec::new(),
                        error: Some(e.to_string()),
                    });
                    history.push(HistoryItem::ArxivFailed { query, error: e.to_string() });
                }
            }
            continue;
        }

        run.iteration_count += 1;
        let (title, abstract_text) = summarize_proposal(&envelope.action_input);
        let proposal = Proposal {
            index: run.iteration_count,
            title,
            abstract_text,
            target_description: envelope.action_input,
        };
        run.proposals.push(proposal.clone());

        let novelty = novelty_turn(env, &proposal, &run.mediator_notes, &mut run.transcript)?;
        let done;
        if novelty.decision == Decision::Reject {
            novelty_rejects += 1;
            history.push(HistoryItem::Feedback { from: Role::NoveltySupervisor, text: novelty.feedback.clone() });
            run.verdicts.push(novelty);
            done = novelty_rejects >= limits.max_novelty_rounds;
        } else {
            run.verdicts.push(novelty);
            let judge = judge_turn(env, &proposal, &run.mediator_notes, &mut run.transcript)?;
            if judge.decision == Decision::Accept {
                done = true;
            } else {
                judge_rejects += 1;
                history.push(HistoryItem::Feedback { from: Role::Judge, text: judge.feedback.clone() });
                done = judge_rejects >= limits.max_judge_rounds;
            }
            run.verdicts.push(judge);
        }

        if run.iteration_count % limits.mediator_period == 0 {
            let note = mediator_turn(env, &mut run.transcript)?;
            history.push(HistoryItem::MediatorNote(note.clone()));
            run.mediator_notes.push(MediatorNote {
                after_proposal: run.iteration_count,
                text: note,
            });
        }
        if done {
            return Ok(());
        }
    }
    run.aborted = Some(format!(
        "researcher turn budget of {} exhausted",
        limits.researcher_turn_budget()
    ));
    Ok(())
}
