//! Message assembly for every role. Each function returns the full message
//! list for one request: a system prompt, one user message with the fixed
//! inputs, then the running history.

use std::fmt::Write;

use crate::literature::{AbstractRecord, DEFAULT_SEED_COUNT};
use crate::llmbackend::ChatMessage;
use crate::protocol::Role;
use crate::store::PublishedCatalog;

use super::{AgentError, ConceptPair, Idea, MediatorNote, PromptSet, Proposal, TranscriptEntry};

/// One item of a conversation after the opening message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HistoryItem {
    /// A raw turn of the agent being prompted.
    OwnTurn(String),
    ArxivResults { query: String, records: Vec<AbstractRecord> },
    ArxivFailed { query: String, error: String },
    ArxivCapReached { cap: usize },
    Feedback { from: Role, text: String },
    MediatorNote(String),
    ParseError(String),
    ToolFailure(String),
}

impl HistoryItem {
    fn to_message(&self) -> ChatMessage {
        match self {
            HistoryItem::OwnTurn(raw) => ChatMessage::assistant(raw.clone()),
            HistoryItem::ArxivResults { query, records } => {
                let mut text = format!("arXiv results for \"{query}\":\n");
                if records.is_empty() {
                    text.push_str("(no matching papers)\n");
                }
                for (i, r) in records.iter().enumerate() {
                    let _ = write!(text, "\n[{}] {} (arXiv:{})\n{}\n", i + 1, r.title, r.arxiv_id, r.abstract_text);
                }
                ChatMessage::user(text)
            }
            HistoryItem::ArxivFailed { query, error } => {
                ChatMessage::user(format!("arXiv search for \"{query}\" failed: {error}"))
            }
            HistoryItem::ArxivCapReached { cap } => ChatMessage::user(format!(
                "You have used all {cap} arXiv searches for this idea. Give your final answer."
            )),
            HistoryItem::Feedback { from, text } => ChatMessage::user(format!(
                "The {} rejected your proposal. Feedback:\n{text}\n\nRevise the proposal.",
                from.display_name()
            )),
            HistoryItem::MediatorNote(note) => ChatMessage::user(format!("Note from the Mediator:\n{note}")),
            HistoryItem::ParseError(error) => ChatMessage::user(format!(
                "Your last reply could not be read: {error}\nReply again using exactly the required format."
            )),
            HistoryItem::ToolFailure(message) => ChatMessage::user(format!(
                "The design tool reported a failure:\n{message}\n\nFix the configuration and call the tool again."
            )),
        }
    }
}

fn with_history(system: &str, opening: String, history: &[HistoryItem]) -> Vec<ChatMessage> {
    let mut messages = vec![ChatMessage::system(system), ChatMessage::user(opening)];
    messages.extend(history.iter().map(HistoryItem::to_message));
    messages
}

fn require(text: &str, what: &str) -> Result<(), AgentError> {
    if text.trim().is_empty() {
        return Err(AgentError::MissingInput(format!("{what} is empty")));
    }
    Ok(())
}

/// The four fixed Researcher inputs.
#[derive(Debug, Clone, Copy)]
pub struct ResearcherInputs<'a> {
    pub seed_abstracts: &'a [AbstractRecord],
    pub tool_docs: &'a str,
    pub limitations: &'a str,
    pub pair: &'a ConceptPair,
}

/// Opening order: seed abstracts, tool documentation, limitations, concept
/// pair. History follows as separate messages.
pub fn assemble_researcher_context(
    system_prompt: &str,
    inputs: ResearcherInputs<'_>,
    history: &[HistoryItem],
) -> Result<Vec<ChatMessage>, AgentError> {
    if inputs.seed_abstracts.len() != DEFAULT_SEED_COUNT {
        return Err(AgentError::MissingInput(format!(
            "expected {DEFAULT_SEED_COUNT} seed abstracts, got {}",
            inputs.seed_abstracts.len()
        )));
    }
    require(system_prompt, "Researcher prompt")?;
    require(inputs.tool_docs, "tool documentation")?;
    require(inputs.limitations, "limitations text")?;
    inputs.pair.check()?;

    let mut text = String::from("## Papers for inspiration\n");
    for (i, r) in inputs.seed_abstracts.iter().enumerate() {
        let _ = write!(text, "\n[{}] {} (arXiv:{})\n{}\n", i + 1, r.title, r.arxiv_id, r.abstract_text);
    }
    let _ = write!(
        text,
        "\n## Design tool documentation\n{}\n\n## Limitations\n{}\n\n## Required concepts\nYour idea must combine \"{}\" with \"{}\".\n",
        inputs.tool_docs.trim_end(),
        inputs.limitations.trim_end(),
        inputs.pair.concept_a,
        inputs.pair.concept_b
    );
    Ok(with_history(system_prompt, text, history))
}

fn notes_section(notes: &[MediatorNote]) -> String {
    let mut text = String::new();
    if !notes.is_empty() {
        text.push_str("## Mediator notes\n");
        for note in notes {
            let _ = writeln!(text, "{}\n", note.text.trim_end());
        }
    }
    text
}

pub fn assemble_novelty_context(
    prompts: &PromptSet,
    proposal: &Proposal,
    pool: &[Idea],
    catalog: &PublishedCatalog,
    notes: &[MediatorNote],
    history: &[HistoryItem],
) -> Vec<ChatMessage> {
    let mut text = String::from("## Targets already implemented with the tool\n");
    if catalog.entries.is_empty() {
        text.push_str("(none)\n");
    }
    for entry in &catalog.entries {
        let _ = writeln!(text, "- {}: {}", entry.name, entry.description);
    }
    text.push_str("\n## Ideas already accepted by the team\n");
    if pool.is_empty() {
        text.push_str("(none)\n");
    }
    for idea in pool {
        let _ = writeln!(text, "- {}: {}", idea.title, idea.abstract_text);
    }
    text.push('\n');
    text.push_str(&notes_section(notes));
    let _ = write!(text, "## Proposal\n{}\n", proposal.target_description);
    with_history(&prompts.novelty, text, history)
}

pub fn assemble_feasibility_context(
    prompts: &PromptSet,
    proposal: &Proposal,
    notes: &[MediatorNote],
    history: &[HistoryItem],
) -> Vec<ChatMessage> {
    let mut text = format!("## The design tool\n{}\n\n", prompts.tool_description.trim_end());
    text.push_str(&notes_section(notes));
    let _ = write!(text, "## Proposal\n{}\n", proposal.target_description);
    with_history(&prompts.judge, text, history)
}

/// Holds the other agents' prompts and the whole conversation so far.
pub fn assemble_mediator_context(prompts: &PromptSet, transcript: &[TranscriptEntry]) -> Vec<ChatMessage> {
    let mut text = String::new();
    for role in [Role::Researcher, Role::NoveltySupervisor, Role::Judge] {
        let _ = write!(
            text,
            "## {} instructions\n{}\n\n",
            role.display_name(),
            prompts.role_prompt(role).trim_end()
        );
    }
    text.push_str("## Conversation so far\n");
    for entry in transcript {
        let _ = write!(text, "\n[{}]\n{}\n", entry.role.display_name(), entry.raw.trim_end());
    }
    vec![ChatMessage::system(&prompts.mediator), ChatMessage::user(text)]
}

pub fn assemble_expert_context(prompts: &PromptSet, idea: &Idea, history: &[HistoryItem]) -> Vec<ChatMessage> {
    let mut text = format!(
        "## Design tool documentation\n{}\n\n## Limitations\n{}\n\n## Example configurations\n",
        prompts.tool_docs.trim_end(),
        prompts.limitations.trim_end()
    );
    for example in &prompts.examples {
        let _ = write!(text, "\n{}\n", example.trim_end());
    }
    let _ = write!(
        text,
        "\n## Idea: {}\n{}\n\n## Full description\n{}\n",
        idea.title, idea.abstract_text, idea.target_description
    );
    with_history(&prompts.expert, text, history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llmbackend::ChatRole;

    fn seeds() -> Vec<AbstractRecord> {
        (1..=3)
            .map(|i| AbstractRecord {
                arxiv_id: format!("2501.0000{i}"),
                title: format!("Seed paper {i}"),
                abstract_text: format!("Abstract {i}."),
            })
            .collect()
    }

    #[test]
    fn researcher_bundle_contains_all_inputs() {
        let seeds = seeds();
        let pair = ConceptPair::new("quantum memories", "boson sampling", "p1").unwrap();
        let inputs = ResearcherInputs {
            seed_abstracts: &seeds,
            tool_docs: "DOCS",
            limitations: "LIMITS",
            pair: &pair,
        };
        let messages = assemble_researcher_context("SYSTEM", inputs, &[]).unwrap();
        assert_eq!(messages.len(), 2);
        assert_eq!(messages[0].role, ChatRole::System);
        let text = &messages[1].content;
        for needle in ["Seed paper 1", "Seed paper 2", "Seed paper 3", "DOCS", "LIMITS", "quantum memories", "boson sampling"] {
            assert!(text.contains(needle), "{needle}");
        }
        let order: Vec<usize> = ["Seed paper 1", "DOCS", "LIMITS", "quantum memories"]
            .iter()
            .map(|n| text.find(n).unwrap())
            .collect();
        assert!(order.windows(2).all(|w| w[0] < w[1]));
        assert!(!text.contains("rejected"));

        let history = [HistoryItem::Feedback { from: Role::NoveltySupervisor, text: "too close to X".into() }];
        let messages = assemble_researcher_context("SYSTEM", inputs, &history).unwrap();
        assert!(messages[2].content.contains("too close to X"));
    }

    #[test]
    fn researcher_bundle_requires_three_seeds() {
        let seeds = seeds();
        let pair = ConceptPair::new("a", "b", "p").unwrap();
        let inputs = ResearcherInputs {
            seed_abstracts: &seeds[..2],
            tool_docs: "d",
            limitations: "l",
            pair: &pair,
        };
        assert!(matches!(assemble_researcher_context("s", inputs, &[]), Err(AgentError::MissingInput(_))));
    }

    #[test]
    fn mediator_sees_all_prompts() {
        let prompts = PromptSet::default();
        let messages = assemble_mediator_context(&prompts, &[]);
        for role in [Role::Researcher, Role::NoveltySupervisor, Role::Judge] {
            assert!(messages[1].content.contains(prompts.role_prompt(role).trim_end()));
        }
    }
}
