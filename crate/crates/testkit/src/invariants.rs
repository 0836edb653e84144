//! Checks every idea-generation run must satisfy, phrased against the
//! requests the scripted backend actually received.

use mandel::agents::{AgentLimits, IdeaRun, ParsedTurn};
use mandel::llmbackend::ChatRequest;
use mandel::protocol::Role;

/// Mediator notes follow exactly proposals `p, 2p, 3p, ...`.
pub fn mediator_cadence(run: &IdeaRun, limits: &AgentLimits) -> Result<(), String> {
    let expected: Vec<usize> = (1..=run.iteration_count).filter(|k| k % limits.mediator_period == 0).collect();
    let got: Vec<usize> = run.mediator_notes.iter().map(|n| n.after_proposal).collect();
    if got != expected {
        return Err(format!("{}: mediator notes after {got:?}, expected {expected:?}", run.run_id));
    }
    if run.calls(Role::Mediator) != expected.len() {
        return Err(format!("{}: {} mediator calls for {} notes", run.run_id, run.calls(Role::Mediator), expected.len()));
    }
    Ok(())
}

/// Every reject's feedback text reaches the next Researcher request
/// verbatim. Assumes one request per transcript entry.
pub fn feedback_threaded(run: &IdeaRun, requests: &[ChatRequest]) -> Result<(), String> {
    if run.transcript.len() != requests.len() {
        return Err(format!("{}: {} turns for {} requests", run.run_id, run.transcript.len(), requests.len()));
    }
    for (p, entry) in run.transcript.iter().enumerate() {
        if requests[p].agent != entry.role.as_str() {
            return Err(format!("{}: turn {p} is {} but request came from {}", run.run_id, entry.role, requests[p].agent));
        }
        let ParsedTurn::Envelope { envelope } = &entry.parsed else { continue };
        if envelope.action != "reject" {
            continue;
        }
        if let Some(next) = requests[p + 1..].iter().find(|r| r.agent == "researcher") {
            if !next.full_text().contains(&envelope.action_input) {
                return Err(format!("{}: feedback {:?} not threaded", run.run_id, envelope.action_input));
            }
        }
    }
    Ok(())
}

/// The Judge speaks only after the Novelty Supervisor accepted the current
/// proposal.
pub fn judge_follows_novelty_accept(run: &IdeaRun) -> Result<(), String> {
    let mut last_novelty: Option<&str> = None;
    for (p, entry) in run.transcript.iter().enumerate() {
        match (entry.role, &entry.parsed) {
            (Role::NoveltySupervisor, ParsedTurn::Envelope { envelope }) => last_novelty = Some(&envelope.action),
            (Role::Judge, _) if last_novelty != Some("accept") => {
                return Err(format!("{}: judge at turn {p} without a novelty accept", run.run_id))
            }
            (Role::Researcher, _) => last_novelty = None,
            _ => {}
        }
    }
    Ok(())
}

/// Mediator notes reach the next Researcher request.
pub fn notes_reach_researcher(run: &IdeaRun, requests: &[ChatRequest]) -> Result<(), String> {
    for note in &run.mediator_notes {
        let at = run
            .transcript
            .iter()
            .position(|e| e.role == Role::Mediator && e.raw == note.text)
            .ok_or_else(|| format!("{}: note {:?} missing from transcript", run.run_id, note.text))?;
        if let Some(next) = requests[at + 1..].iter().find(|r| r.agent == "researcher") {
            if !next.full_text().contains(&note.text) {
                return Err(format!("{}: note {:?} not in the next researcher context", run.run_id, note.text));
            }
        }
    }
    Ok(())
}

/// Every Novelty request lists every title pooled before the run.
pub fn novelty_sees_pool(run: &IdeaRun, requests: &[ChatRequest], pool_titles: &[String]) -> Result<(), String> {
    for req in requests.iter().filter(|r| r.agent == "novelty") {
        if let Some(t) = pool_titles.iter().find(|t| !req.full_text().contains(t.as_str())) {
            return Err(format!("{}: pooled title {t:?} missing from a novelty prompt", run.run_id));
        }
    }
    Ok(())
}

/// All of the above.
pub fn check_run(
    run: &IdeaRun,
    requests: &[ChatRequest],
    limits: &AgentLimits,
    pool_titles: &[String],
) -> Result<(), String> {
    mediator_cadence(run, limits)?;
    feedback_threaded(run, requests)?;
    judge_follows_novelty_accept(run)?;
    notes_reach_researcher(run, requests)?;
    novelty_sees_pool(run, requests, pool_titles)?;
    if run.arxiv_queries_used > limits.max_arxiv_queries {
        return Err(format!("{}: {} arxiv queries over the cap", run.run_id, run.arxiv_queries_used));
    }
    Ok(())
}
