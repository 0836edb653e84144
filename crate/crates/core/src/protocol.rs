//! Agent turn grammar.
//!
//! Every agent except the Mediator answers in three labeled sections:
//!
//! ```text
//! Thought: ...
//! Action: <action name>
//! Action Input: ...
//! ```
//!
//! Labels are matched case-sensitively at the start of a line (leading spaces
//! or tabs allowed). When a turn restates the template, the last well-ordered
//! triple wins: the last `Action Input:` label, the last `Action:` label before
//! it, and the last `Thought:` label before that.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const THOUGHT_LABEL: &str = "Thought:";
pub const ACTION_LABEL: &str = "Action:";
pub const ACTION_INPUT_LABEL: &str = "Action Input:";

/// Agent roles taking part in a campaign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Researcher,
    NoveltySupervisor,
    Judge,
    Mediator,
    Expert,
}

impl Role {
    pub const ALL: [Role; 5] = [
        Role::Researcher,
        Role::NoveltySupervisor,
        Role::Judge,
        Role::Mediator,
        Role::Expert,
    ];

    /// Stable lowercase identifier used in logs, scripts and file names.
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Researcher => "researcher",
            Role::NoveltySupervisor => "novelty",
            Role::Judge => "judge",
            Role::Mediator => "mediator",
            Role::Expert => "expert",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Role::Researcher => "Researcher",
            Role::NoveltySupervisor => "Novelty Supervisor",
            Role::Judge => "Judge",
            Role::Mediator => "Mediator",
            Role::Expert => "Expert",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        Role::ALL.into_iter().find(|r| r.as_str() == s)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub const ACTION_ARXIV: &str = "arxiv";
pub const ACTION_FINAL_ANSWER: &str = "final answer";
pub const ACTION_ACCEPT: &str = "accept";
pub const ACTION_REJECT: &str = "reject";
pub const ACTION_PYTHEUS: &str = "pytheus";

/// Action tokens a role may emit.
pub fn allowed_actions(role: Role) -> BTreeSet<&'static str> {
    let actions: &[&'static str] = match role {
        Role::Researcher => &[ACTION_ARXIV, ACTION_FINAL_ANSWER],
        Role::NoveltySupervisor | Role::Judge => &[ACTION_ACCEPT, ACTION_REJECT],
        Role::Expert => &[ACTION_PYTHEUS],
        Role::Mediator => &[],
    };
    actions.iter().copied().collect()
}

/// The action registry of one role.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoleGrammar {
    pub role: Role,
    pub allowed_actions: BTreeSet<&'static str>,
}

impl RoleGrammar {
    pub fn for_role(role: Role) -> Self {
        Self {
            role,
            allowed_actions: allowed_actions(role),
        }
    }

    pub fn allows(&self, action: &str) -> bool {
        self.allowed_actions.contains(action)
    }
}

/// One parsed agent turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionEnvelope {
    pub thought: String,
    pub action: String,
    pub action_input: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Section {
    Thought,
    Action,
    ActionInput,
}

impl Section {
    pub fn label(self) -> &'static str {
        match self {
            Section::Thought => THOUGHT_LABEL,
            Section::Action => ACTION_LABEL,
            Section::ActionInput => ACTION_INPUT_LABEL,
        }
    }
}

impl fmt::Display for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label().trim_end_matches(':'))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("missing or empty `{0}` section (expected `Thought:`, `Action:`, `Action Input:` in that order)")]
    MissingSection(Section),
    #[error("unknown action `{action}` for {role}; allowed: {allowed}")]
    UnknownAction {
        action: String,
        role: Role,
        allowed: String,
    },
}

impl ActionEnvelope {
    /// Builds an envelope with trimmed sections and a lowercase action.
    pub fn new(
        thought: impl AsRef<str>,
        action: impl AsRef<str>,
        action_input: impl AsRef<str>,
    ) -> Result<Self, ProtocolError> {
        let thought = thought.as_ref().trim();
        let action = action.as_ref().trim().to_lowercase();
        let action_input = action_input.as_ref().trim();
        if thought.is_empty() {
            return Err(ProtocolError::MissingSection(Section::Thought));
        }
        if action.is_empty() {
            return Err(ProtocolError::MissingSection(Section::Action));
        }
        if action_input.is_empty() {
            return Err(ProtocolError::MissingSection(Section::ActionInput));
        }
        Ok(Self {
            thought: thought.to_string(),
            action,
            action_input: action_input.to_string(),
        })
    }
}

/// A label occurrence: byte offset of the label start and of the content after it.
#[derive(Debug, Clone, Copy)]
struct Marker {
    section: Section,
    line_start: usize,
    content_start: usize,
}

fn scan_markers(raw: &str) -> Vec<Marker> {
    let mut markers = Vec::new();
    let mut offset = 0;
    for line in raw.split_inclusive('\n') {
        let indent = line.len() - line.trim_start_matches([' ', '\t']).len();
        let rest = &line[indent..];
        let section = if rest.starts_with(ACTION_INPUT_LABEL) {
            Some(Section::ActionInput)
        } else if rest.starts_with(ACTION_LABEL) {
            Some(Section::Action)
        } else if rest.starts_with(THOUGHT_LABEL) {
            Some(Section::Thought)
        } else {
            None
        };
        if let Some(section) = section {
            markers.push(Marker {
                section,
                line_start: offset,
                content_start: offset + indent + section.label().len(),
            });
        }
        offset += line.len();
    }
    markers
}

/// Parses one agent turn under a role grammar.
pub fn parse_envelope(raw: &str, grammar: &RoleGrammar) -> Result<ActionEnvelope, ProtocolError> {
    let markers = scan_markers(raw);
    let last_before = |section: Section, limit: usize| {
        markers[..limit]
            .iter()
            .rposition(|m| m.section == section)
    };

    let input_idx = last_before(Section::ActionInput, markers.len())
        .ok_or(ProtocolError::MissingSection(Section::ActionInput))?;
    let action_idx = last_before(Section::Action, input_idx)
        .ok_or(ProtocolError::MissingSection(Section::Action))?;
    let thought_idx = last_before(Section::Thought, action_idx)
        .ok_or(ProtocolError::MissingSection(Section::Thought))?;

    let (t, a, i) = (markers[thought_idx], markers[action_idx], markers[input_idx]);
    let thought = &raw[t.content_start..a.line_start];
    let action = &raw[a.content_start..i.line_start];
    let action_input = &raw[i.content_start..];

    let envelope = ActionEnvelope::new(thought, action, action_input)?;
    if envelope.action.contains(['\n', '\r']) || !grammar.allows(&envelope.action) {
        return Err(ProtocolError::UnknownAction {
            action: envelope.action,
            role: grammar.role,
            allowed: describe_allowed(grammar),
        });
    }
    Ok(envelope)
}

fn describe_allowed(grammar: &RoleGrammar) -> String {
    if grammar.allowed_actions.is_empty() {
        "none".to_string()
    } else {
        grammar
            .allowed_actions
            .iter()
            .map(|a| format!("`{a}`"))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

/// Canonical text form of an envelope.
pub fn render_envelope(env: &ActionEnvelope) -> String {
    format!(
        "{THOUGHT_LABEL} {}\n\n{ACTION_LABEL} {}\n\n{ACTION_INPUT_LABEL} {}",
        env.thought, env.action, env.action_input
    )
}
