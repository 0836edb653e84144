use std::fs;
use std::path::Path;

use crate::configschema::{reference_config, render_config};
use crate::protocol::Role;

use super::AgentError;

/// Role prompts and the shared reference texts given to agents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub researcher: String,
    pub novelty: String,
    pub judge: String,
    pub mediator: String,
    pub expert: String,
    /// Design-tool documentation shown to the Researcher and the Expert.
    pub tool_docs: String,
    pub limitations: String,
    /// Capability summary shown to the Judge.
    pub tool_description: String,
    /// Example configurations shown to the Expert.
    pub examples: Vec<String>,
}

const FILES: [&str; 8] = [
    "researcher.txt",
    "novelty.txt",
    "judge.txt",
    "mediator.txt",
    "expert.txt",
    "tool_docs.txt",
    "limitations.txt",
    "tool_description.txt",
];

impl Default for PromptSet {
    fn default() -> Self {
        let examples = ["remote_swap", "kitaev_swap_chain"]
            .into_iter()
            .map(|name| render_config(&reference_config(name).expect("bundled reference config")))
            .collect();
        Self {
            researcher: include_str!("../../prompts/researcher.txt").into(),
            novelty: include_str!("../../prompts/novelty.txt").into(),
            judge: include_str!("../../prompts/judge.txt").into(),
            mediator: include_str!("../../prompts/mediator.txt").into(),
            expert: include_str!("../../prompts/expert.txt").into(),
            tool_docs: include_str!("../../prompts/tool_docs.txt").into(),
            limitations: include_str!("../../prompts/limitations.txt").into(),
            tool_description: include_str!("../../prompts/tool_description.txt").into(),
            examples,
        }
    }
}

impl PromptSet {
    /// Defaults, with every file of the standard names found in `dir`
    /// replacing the corresponding text.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self, AgentError> {
        let dir = dir.as_ref();
        let mut set = Self::default();
        for name in FILES {
            let path = dir.join(name);
            if !path.exists() {
                continue;
            }
            let text = fs::read_to_string(&path)
                .map_err(|e| AgentError::MissingInput(format!("{}: {e}", path.display())))?;
            *set.slot(name) = text;
        }
        Ok(set)
    }

    fn slot(&mut self, file: &str) -> &mut String {
        match file {
            "researcher.txt" => &mut self.researcher,
            "novelty.txt" => &mut self.novelty,
            "judge.txt" => &mut self.judge,
            "mediator.txt" => &mut self.mediator,
            "expert.txt" => &mut self.expert,
            "tool_docs.txt" => &mut self.tool_docs,
            "limitations.txt" => &mut self.limitations,
            "tool_description.txt" => &mut self.tool_description,
            _ => unreachable!("file list is fixed"),
        }
    }

    pub fn role_prompt(&self, role: Role) -> &str {
        match role {
            Role::Researcher => &self.researcher,
            Role::NoveltySupervisor => &self.novelty,
            Role::Judge => &self.judge,
            Role::Mediator => &self.mediator,
            Role::Expert => &self.expert,
        }
    }
}
