use std::path::Path;

use crate::clock::{iso8601, Clock};
use crate::configschema::parse_config;
use crate::llmbackend::ChatBackend;
use crate::protocol::{parse_envelope, Role, RoleGrammar};
use crate::store::{ImplementationSummary, LedgerRecord, Store};
use crate::toolrunner::{DesignTool, ToolOutcome};

use super::context::{assemble_expert_context, HistoryItem};
use super::ideagen::complete;
use super::{AgentError, Attempt, Idea, ImplementationRecord, ModelParams, Outcome, ParsedTurn, PartialRun, PromptSet, TranscriptEntry};

pub struct ImplementEnv<'a> {
    pub backend: &'a dyn ChatBackend,
    pub tool: &'a dyn DesignTool,
    pub store: &'a Store,
    pub prompts: &'a PromptSet,
    pub model: ModelParams,
    pub retry_cap: usize,
    pub clock: &'a dyn Clock,
    pub variant: String,
}

/// The JSON object inside an Expert payload: code fences and surrounding
/// prose are dropped.
pub fn extract_config_text(action_input: &str) -> &str {
    let mut text = action_input.trim();
    if let Some(start) = text.find("```") {
        let after = &text[start + 3..];
        let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
        let body = &after[body_start..];
        text = match body.find("```") {
            Some(end) => &body[..end],
            None => body,
        };
        text = text.trim();
    }
    if !text.starts_with('{') {
        if let (Some(a), Some(b)) = (text.find('{'), text.rfind('}')) {
            if a < b {
                text = &text[a..=b];
            }
        }
    }
    text
}

/// Runs the Expert debug loop for `idea` and commits the result (stored
/// design on success, run log, ledger line). Attempt `n` runs the tool in
/// `workdir/attempt-NN`.
pub fn run_implementation(
    env: &ImplementEnv<'_>,
    impl_id: &str,
    idea: &Idea,
    source_outcome: Outcome,
    workdir: &Path,
) -> Result<ImplementationRecord, AgentError> {
    if env.retry_cap == 0 {
        return Err(AgentError::InvalidLimits("retry_cap must be at least 1".into()));
    }
    if idea.target_description.trim().is_empty() {
        return Err(AgentError::MissingInput(format!("idea {} has no target description", idea.id)));
    }
    let mut record = ImplementationRecord {
        impl_id: impl_id.to_string(),
        idea_id: idea.id.clone(),
        variant: env.variant.clone(),
        source_outcome,
        transcript: Vec::new(),
        attempts: Vec::new(),
        success: false,
        expert_calls: 0,
        aborted: None,
        finished_at: String::new(),
    };

    let result = debug_loop(env, idea, workdir, &mut record);
    record.expert_calls = record.attempts.len();
    record.success = record.attempts.last().is_some_and(|a| a.outcome.is_success());
    let failure = match result {
        Ok(()) => None,
        Err(e) => {
            record.aborted = Some(e.to_string());
            Some(e)
        }
    };
    record.finished_at = iso8601(env.clock.now());

    if record.success {
        let n = record.attempts.len();
        let last = record.attempts.last().expect("success implies an attempt");
        let config = last.config.as_ref().expect("successful attempts carry a config");
        env.store
            .store_design(&idea.id, impl_id, config, &last.outcome, n, &attempt_dir(workdir, n))?;
    }
    env.store.append_implementation_log(&record)?;
    env.store
        .append_ledger(LedgerRecord::Implementation(ImplementationSummary::from_record(&record)))?;

    match failure {
        None => Ok(record),
        Some(AgentError::BackendFailure { role, source, .. }) => Err(AgentError::BackendFailure {
            role,
            source,
            partial: Box::new(PartialRun::Implementation(record)),
        }),
        Some(other) => Err(other),
    }
}

fn attempt_dir(workdir: &Path, n: usize) -> std::path::PathBuf {
    workdir.join(format!("attempt-{n:02}"))
}

fn debug_loop(env: &ImplementEnv<'_>, idea: &Idea, workdir: &Path, record: &mut ImplementationRecord) -> Result<(), AgentError> {
    let grammar = RoleGrammar::for_role(Role::Expert);
    let mut history = Vec::new();
    for n in 1..=env.retry_cap {
        let raw = complete(env.backend, &env.model, Role::Expert, assemble_expert_context(env.prompts, idea, &history))
            .map_err(|a| a.into_error(PartialRun::None))?;
        history.push(HistoryItem::OwnTurn(raw.clone()));

        let attempt = match parse_envelope(&raw, &grammar) {
            Err(e) => {
                record.transcript.push(TranscriptEntry {
                    role: Role::Expert,
                    raw: raw.clone(),
                    parsed: ParsedTurn::ParseError { error: e.to_string() },
                });
                Attempt {
                    config: None,
                    raw_input: raw,
                    outcome: ToolOutcome::failure(format!("reply not understood: {e}")),
                }
            }
            Ok(envelope) => {
                record.transcript.push(TranscriptEntry {
                    role: Role::Expert,
                    raw,
                    parsed: ParsedTurn::Envelope { envelope: envelope.clone() },
                });
                match parse_config(extract_config_text(&envelope.action_input)) {
                    Err(e) => Attempt {
                        config: None,
                        raw_input: envelope.action_input,
                        outcome: ToolOutcome::failure(format!("configuration rejected: {e}")),
                    },
                    Ok(config) => {
                        let outcome = env.tool.run(&config, &attempt_dir(workdir, n))?;
                        Attempt {
                            config: Some(config),
                            raw_input: envelope.action_input,
                            outcome,
                        }
                    }
                }
            }
        };
        let success = attempt.outcome.is_success();
        if !success {
            history.push(HistoryItem::ToolFailure(attempt.outcome.message.clone()));
        }
        record.attempts.push(attempt);
        if success {
            break;
        }
    }
    Ok(())
}
