//! Campaign statistics computed from the ledger.

mod embed;
mod pca;
mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use regex::Regex;
use serde::Serialize;
use thiserror::Error;

use crate::agents::Outcome;
use crate::protocol::Role;
use crate::store::{read_ledger, IdeaRunSummary, ImplementationSummary, LedgerRecord, StoreError};

pub use embed::{Embedder, EmbeddingMatrix, LiveEmbedder, OfflineEmbedder, OFFLINE_DIMENSION};
pub use pca::{pca_project, Projection};
pub use report::{render_summary, write_report, ReportData, REPORT_FILES};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticsError {
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("embedding matrix rows have different widths")]
    RaggedMatrix,
    #[error("transport error: {0}")]
    Transport(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// Immutable run summaries in ledger order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CampaignLedger {
    pub records: Vec<LedgerRecord>,
}

impl CampaignLedger {
    pub fn new(records: Vec<LedgerRecord>) -> Self {
        Self { records }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AnalyticsError> {
        Ok(Self::new(read_ledger(path)?.into_iter().map(|e| e.record).collect()))
    }

    pub fn idea_runs(&self) -> impl Iterator<Item = &IdeaRunSummary> {
        self.records.iter().filter_map(|r| match r {
            LedgerRecord::IdeaRun(s) => Some(s),
            _ => None,
        })
    }

    pub fn implementations(&self) -> impl Iterator<Item = &ImplementationSummary> {
        self.records.iter().filter_map(|r| match r {
            LedgerRecord::Implementation(s) => Some(s),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Funnel {
    pub full_reject: usize,
    pub novelty_accept: usize,
    pub full_accept: usize,
}

impl Funnel {
    pub fn total(&self) -> usize {
        self.full_reject + self.novelty_accept + self.full_accept
    }

    pub fn get(&self, outcome: Outcome) -> usize {
        match outcome {
            Outcome::FullReject => self.full_reject,
            Outcome::NoveltyAccept => self.novelty_accept,
            Outcome::FullAccept => self.full_accept,
        }
    }

    fn bump(&mut self, outcome: Outcome) {
        match outcome {
            Outcome::FullReject => self.full_reject += 1,
            Outcome::NoveltyAccept => self.novelty_accept += 1,
            Outcome::FullAccept => self.full_accept += 1,
        }
    }
}

pub fn compute_funnel(ledger: &CampaignLedger) -> Funnel {
    let mut funnel = Funnel::default();
    for run in ledger.idea_runs() {
        funnel.bump(run.outcome);
    }
    funnel
}

/// Call-count histogram for one role: calls per run -> number of runs.
/// Expert counts come from implementation runs, the others from idea runs.
pub fn histogram_agent_calls(ledger: &CampaignLedger, role: Role) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    match role {
        Role::Expert => {
            for imp in ledger.implementations() {
                *hist.entry(imp.expert_calls).or_default() += 1;
            }
        }
        _ => {
            for run in ledger.idea_runs() {
                let calls = run.calls.get(role).expect("idea-generation role");
                *hist.entry(calls).or_default() += 1;
            }
        }
    }
    hist
}

/// Idea-role histogram split by run outcome.
pub fn histogram_by_outcome(ledger: &CampaignLedger, role: Role) -> BTreeMap<usize, Funnel> {
    let mut hist: BTreeMap<usize, Funnel> = BTreeMap::new();
    for run in ledger.idea_runs() {
        if let Some(calls) = run.calls.get(role) {
            hist.entry(calls).or_default().bump(run.outcome);
        }
    }
    hist
}

/// Expert calls per implementation run, split into (successful, unsuccessful).
pub fn expert_histogram_by_success(ledger: &CampaignLedger) -> BTreeMap<usize, (usize, usize)> {
    let mut hist: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for imp in ledger.implementations() {
        let slot = hist.entry(imp.expert_calls).or_default();
        if imp.success {
            slot.0 += 1;
        } else {
            slot.1 += 1;
        }
    }
    hist
}

/// An exact success ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Rate {
    pub successes: u64,
    pub attempts: u64,
}

impl Rate {
    pub fn value(&self) -> f64 {
        self.successes as f64 / self.attempts as f64
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{} = {:.4}", self.successes, self.attempts, self.value())
    }
}

fn tally<'a>(imps: impl Iterator<Item = &'a ImplementationSummary>) -> Option<Rate> {
    let (mut successes, mut attempts) = (0, 0);
    for imp in imps {
        attempts += 1;
        successes += u64::from(imp.success);
    }
    (attempts > 0).then_some(Rate { successes, attempts })
}

/// Implementation success per source-idea class. Classes without any
/// implementation run are absent.
pub fn success_rate_by_class(ledger: &CampaignLedger) -> BTreeMap<Outcome, Rate> {
    Outcome::ALL
        .into_iter()
        .filter_map(|class| tally(ledger.implementations().filter(|i| i.source_outcome == class)).map(|r| (class, r)))
        .collect()
}

pub fn overall_success_rate(ledger: &CampaignLedger) -> Option<Rate> {
    tally(ledger.implementations())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ConceptMatch {
    /// Case-insensitive substring.
    #[default]
    Substring,
    /// Case-insensitive, bounded by non-word characters.
    WholeWord,
}

/// Element k is the number of distinct concepts first mentioned somewhere in
/// abstracts 1..=k.
pub fn cumulative_new_concepts<S: AsRef<str>>(abstracts: &[S], concepts: &[String], mode: ConceptMatch) -> Vec<usize> {
    let concepts: Vec<&String> = concepts
        .iter()
        .filter(|c| !c.trim().is_empty())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let matchers: Vec<Box<dyn Fn(&str) -> bool>> = concepts
        .iter()
        .map(|c| -> Box<dyn Fn(&str) -> bool> {
            match mode {
                ConceptMatch::Substring => {
                    let needle = c.to_lowercase();
                    Box::new(move |text: &str| text.contains(&needle))
                }
                ConceptMatch::WholeWord => {
                    let re = Regex::new(&format!(r"(?i)\b{}\b", regex::escape(c.trim()))).expect("escaped pattern");
                    Box::new(move |text: &str| re.is_match(text))
                }
            }
        })
        .collect();
    let mut seen = vec![false; matchers.len()];
    let mut count = 0;
    abstracts
        .iter()
        .map(|a| {
            let text = a.as_ref().to_lowercase();
            for (i, m) in matchers.iter().enumerate() {
                if !seen[i] && m(&text) {
                    seen[i] = true;
                    count += 1;
                }
            }
            count
        })
        .collect()
}
