//! Append-only campaign persistence.
//!
//! Layout under the store root:
//!
//! ```text
//! pool.jsonl                       accepted ideas, one per line
//! ledger.jsonl                     one summary per finished run
//! runs/<run_id>.jsonl              raw turns of one run, then a summary line
//! designs/<idea_id>/<impl_id>/     config.json, outcome.json, tool artifacts
//! work/<impl_id>/attempt-NN/       scratch workdirs of the design tool
//! ```
//!
//! A run is committed in the order run log, pool entry, ledger line. On open,
//! run logs that never reached the ledger are completed, so a crash between
//! steps never loses or duplicates an idea.
//!
//! [`Store::in_memory`] keeps the same semantics without touching disk.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::agents::{ConceptPair, Idea, IdeaRun, ImplementationRecord, Outcome, TranscriptEntry};
use crate::configschema::{render_config, DesignConfig};
use crate::protocol::Role;
use crate::toolrunner::ToolOutcome;

pub const POOL_FILE: &str = "pool.jsonl";
pub const LEDGER_FILE: &str = "ledger.jsonl";
pub const RUNS_DIR: &str = "runs";
pub const DESIGNS_DIR: &str = "designs";
pub const WORK_DIR: &str = "work";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{file} record {record}: {message}")]
    Format { file: String, record: usize, message: String },
    #[error("catalogue name `{name}` repeated at record {record}")]
    DuplicateCatalogName { name: String, record: usize },
    #[error("run log for `{0}` already exists")]
    DuplicateRunLog(String),
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> StoreError + '_ {
    move |e| StoreError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdeaPoolEntry {
    pub seq: u64,
    #[serde(flatten)]
    pub idea: Idea,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub name: String,
    pub description: String,
}

/// Targets implemented before the campaign; names are unique.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PublishedCatalog {
    pub entries: Vec<CatalogEntry>,
}

impl PublishedCatalog {
    pub fn new(entries: Vec<CatalogEntry>) -> Result<Self, StoreError> {
        let mut seen = HashSet::new();
        for (i, e) in entries.iter().enumerate() {
            if !seen.insert(e.name.as_str()) {
                return Err(StoreError::DuplicateCatalogName {
                    name: e.name.clone(),
                    record: i + 1,
                });
            }
        }
        Ok(Self { entries })
    }
}

/// Reads a catalogue: one `{"name", "description"}` object per line.
pub fn load_published_catalog(path: impl AsRef<Path>) -> Result<PublishedCatalog, StoreError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let entries = parse_lines::<CatalogEntry>(&text, &path.display().to_string())?;
    PublishedCatalog::new(entries)
}

fn parse_lines<T: for<'de> Deserialize<'de>>(text: &str, file: &str) -> Result<Vec<T>, StoreError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| StoreError::Format {
                file: file.to_string(),
                record: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleCalls {
    pub researcher: usize,
    pub novelty: usize,
    pub judge: usize,
    pub mediator: usize,
}

impl RoleCalls {
    pub fn get(&self, role: Role) -> Option<usize> {
        match role {
            Role::Researcher => Some(self.researcher),
            Role::NoveltySupervisor => Some(self.novelty),
            Role::Judge => Some(self.judge),
            Role::Mediator => Some(self.mediator),
            Role::Expert => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdeaRunSummary {
    pub run_id: String,
    pub variant: String,
    pub outcome: Outcome,
    pub concepts: ConceptPair,
    pub calls: RoleCalls,
    pub proposals: usize,
    pub arxiv_queries: usize,
    pub idea_id: Option<String>,
    pub title: Option<String>,
    /// Abstract of the pooled idea, else of the last proposal.
    #[serde(rename = "abstract")]
    pub abstract_text: Option<String>,
    pub aborted: Option<String>,
    pub finished_at: String,
}

impl IdeaRunSummary {
    pub fn from_run(run: &IdeaRun) -> Self {
        let (title, abstract_text) = match (&run.idea, run.last_proposal()) {
            (Some(idea), _) => (Some(idea.title.clone()), Some(idea.abstract_text.clone())),
            (None, Some(p)) => (Some(p.title.clone()), Some(p.abstract_text.clone())),
            (None, None) => (None, None),
        };
        Self {
            run_id: run.run_id.clone(),
            variant: run.variant.clone(),
            outcome: run.outcome,
            concepts: run.concepts.clone(),
            calls: RoleCalls {
                researcher: run.calls(Role::Researcher),
                novelty: run.calls(Role::NoveltySupervisor),
                judge: run.calls(Role::Judge),
                mediator: run.calls(Role::Mediator),
            },
            proposals: run.iteration_count,
            arxiv_queries: run.arxiv_queries_used,
            idea_id: run.idea.as_ref().map(|i| i.id.clone()),
            title,
            abstract_text,
            aborted: run.aborted.clone(),
            finished_at: run.finished_at.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImplementationSummary {
    pub impl_id: String,
    pub idea_id: String,
    pub variant: String,
    pub source_outcome: Outcome,
    pub expert_calls: usize,
    pub attempts: usize,
    pub success: bool,
    pub design_dir: Option<String>,
    pub aborted: Option<String>,
    pub finished_at: String,
}

impl ImplementationSummary {
    pub fn from_record(record: &ImplementationRecord) -> Self {
        Self {
            impl_id: record.impl_id.clone(),
            idea_id: record.idea_id.clone(),
            variant: record.variant.clone(),
            source_outcome: record.source_outcome,
            expert_calls: record.expert_calls,
            attempts: record.attempts.len(),
            success: record.success,
            design_dir: record
                .success
                .then(|| design_rel_dir(&record.idea_id, &record.impl_id)),
            aborted: record.aborted.clone(),
            finished_at: record.finished_at.clone(),
        }
    }
}

fn design_rel_dir(idea_id: &str, impl_id: &str) -> String {
    format!("{DESIGNS_DIR}/{idea_id}/{impl_id}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LedgerRecord {
    IdeaRun(IdeaRunSummary),
    Implementation(ImplementationSummary),
}

impl LedgerRecord {
    pub fn id(&self) -> &str {
        match self {
            LedgerRecord::IdeaRun(r) => &r.run_id,
            LedgerRecord::Implementation(r) => &r.impl_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub seq: u64,
    #[serde(flatten)]
    pub record: LedgerRecord,
}

/// Reads a ledger file; sequence numbers must run 1, 2, 3, ...
pub fn read_ledger(path: impl AsRef<Path>) -> Result<Vec<LedgerEntry>, StoreError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let entries: Vec<LedgerEntry> = parse_lines(&text, &path.display().to_string())?;
    check_sequence(entries.iter().map(|e| e.seq), &path.display().to_string())?;
    Ok(entries)
}

fn check_sequence(seqs: impl Iterator<Item = u64>, file: &str) -> Result<(), StoreError> {
    for (i, seq) in seqs.enumerate() {
        if seq != i as u64 + 1 {
            return Err(StoreError::Format {
                file: file.to_string(),
                record: i + 1,
                message: format!("sequence number {seq}, expected {}", i + 1),
            });
        }
    }
    Ok(())
}

/// One line of a run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum RunLogLine {
    Turn {
        seq: usize,
        #[serde(flatten)]
        entry: TranscriptEntry,
    },
    IdeaRun { run: IdeaRun },
    Implementation { record: ImplementationRecord },
}

/// A parsed run log.
#[derive(Debug, Clone, PartialEq)]
pub enum RunLog {
    Idea(IdeaRun),
    Implementation(ImplementationRecord),
}

impl RunLog {
    pub fn ledger_record(&self) -> LedgerRecord {
        match self {
            RunLog::Idea(run) => LedgerRecord::IdeaRun(IdeaRunSummary::from_run(run)),
            RunLog::Implementation(rec) => LedgerRecord::Implementation(ImplementationSummary::from_record(rec)),
        }
    }
}

fn render_run_log(turns: &[TranscriptEntry], summary: RunLogLine) -> String {
    let mut out = String::new();
    for (i, entry) in turns.iter().enumerate() {
        let line = RunLogLine::Turn {
            seq: i + 1,
            entry: entry.clone(),
        };
        out.push_str(&serde_json::to_string(&line).expect("run log serializes"));
        out.push('\n');
    }
    out.push_str(&serde_json::to_string(&summary).expect("run log serializes"));
    out.push('\n');
    out
}

pub fn parse_run_log(text: &str, file: &str) -> Result<RunLog, StoreError> {
    let lines: Vec<RunLogLine> = parse_lines(text, file)?;
    let n = lines.len();
    let mut turns = Vec::new();
    for (i, line) in lines.into_iter().enumerate() {
        let fail = |message: &str| StoreError::Format {
            file: file.to_string(),
            record: i + 1,
            message: message.to_string(),
        };
        match line {
            RunLogLine::Turn { seq, entry } if i + 1 < n => {
                if seq != i + 1 {
                    return Err(fail("turn sequence out of order"));
                }
                turns.push(entry);
            }
            RunLogLine::IdeaRun { mut run } if i + 1 == n => {
                run.transcript = turns;
                return Ok(RunLog::Idea(run));
            }
            RunLogLine::Implementation { mut record } if i + 1 == n => {
                record.transcript = turns;
                return Ok(RunLog::Implementation(record));
            }
            _ => return Err(fail("summary line must come last and exactly once")),
        }
    }
    Err(StoreError::Format {
        file: file.to_string(),
        record: n,
        message: "run log has no summary line".into(),
    })
}

/// A successful implementation as kept for human review.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignArtifact {
    pub idea_id: String,
    pub impl_id: String,
    #[serde(skip)]
    pub config: Option<DesignConfig>,
    pub outcome: ToolOutcome,
    /// Artifact paths inside the design directory.
    pub artifacts: Vec<String>,
    pub attempts: usize,
}

struct AppendFile {
    path: PathBuf,
    file: Option<File>,
}

impl AppendFile {
    fn append(&mut self, line: &str) -> Result<(), StoreError> {
        if let Some(file) = self.file.as_mut() {
            file.write_all(line.as_bytes()).map_err(io_err(&self.path))?;
            file.sync_data().map_err(io_err(&self.path))?;
        }
        Ok(())
    }
}

struct PoolState {
    out: AppendFile,
    entries: Vec<IdeaPoolEntry>,
}

struct LedgerState {
    out: AppendFile,
    entries: Vec<LedgerEntry>,
}

pub struct Store {
    root: Option<PathBuf>,
    pool: Mutex<PoolState>,
    ledger: Mutex<LedgerState>,
    memory_logs: Mutex<BTreeMap<String, String>>,
    next_run: AtomicU64,
    next_impl: AtomicU64,
    recovered: usize,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("root", &self.root).finish_non_exhaustive()
    }
}

/// Loads a JSONL file, dropping an incomplete final line left by a crash.
fn load_appendable<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, StoreError> {
    let file_name = path.display().to_string();
    let mut text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    if !text.is_empty() && !text.ends_with('\n') {
        let keep = text.rfind('\n').map_or(0, |i| i + 1);
        warn!(file = %file_name, dropped = text.len() - keep, "truncating incomplete trailing record");
        text.truncate(keep);
        let file = OpenOptions::new().write(true).open(path).map_err(io_err(path))?;
        file.set_len(keep as u64).map_err(io_err(path))?;
        file.sync_all().map_err(io_err(path))?;
    }
    parse_lines(&text, &file_name)
}

fn open_append(path: &Path) -> Result<File, StoreError> {
    OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))
}

fn numeric_suffix(id: &str, prefix: &str) -> Option<u64> {
    id.strip_prefix(prefix)?.parse().ok()
}

/// Writes `text` to `path` through a temporary file and a rename.
fn write_atomic(path: &Path, text: &str) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    let mut file = File::create(&tmp).map_err(io_err(&tmp))?;
    file.write_all(text.as_bytes()).map_err(io_err(&tmp))?;
    file.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

impl Store {
    /// A store that lives only in memory.
    pub fn in_memory() -> Self {
        Self {
            root: None,
            pool: Mutex::new(PoolState {
                out: AppendFile { path: PathBuf::new(), file: None },
                entries: Vec::new(),
            }),
            ledger: Mutex::new(LedgerState {
                out: AppendFile { path: PathBuf::new(), file: None },
                entries: Vec::new(),
            }),
            memory_logs: Mutex::new(BTreeMap::new()),
            next_run: AtomicU64::new(1),
            next_impl: AtomicU64::new(1),
            recovered: 0,
        }
    }

    /// Opens (creating if needed) a store rooted at `root` and completes any
    /// run that was logged but not yet recorded in the ledger.
    pub fn open(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        let root = root.as_ref().to_path_buf();
        for dir in [root.clone(), root.join(RUNS_DIR), root.join(DESIGNS_DIR)] {
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        let pool_path = root.join(POOL_FILE);
        let ledger_path = root.join(LEDGER_FILE);
        let pool_entries: Vec<IdeaPoolEntry> = load_appendable(&pool_path)?;
        check_sequence(pool_entries.iter().map(|e| e.seq), POOL_FILE)?;
        let ledger_entries: Vec<LedgerEntry> = load_appendable(&ledger_path)?;
        check_sequence(ledger_entries.iter().map(|e| e.seq), LEDGER_FILE)?;

        let mut logs = Vec::new();
        let runs_dir = root.join(RUNS_DIR);
        for dirent in fs::read_dir(&runs_dir).map_err(io_err(&runs_dir))? {
            let path = dirent.map_err(io_err(&runs_dir))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("jsonl") {
                continue;
            }
            let text = fs::read_to_string(&path).map_err(io_err(&path))?;
            logs.push(parse_run_log(&text, &path.display().to_string())?);
        }

        let max_id = |prefix: &str| {
            let from_logs = logs.iter().filter_map(|l| match l {
                RunLog::Idea(r) => numeric_suffix(&r.run_id, prefix),
                RunLog::Implementation(r) => numeric_suffix(&r.impl_id, prefix),
            });
            let from_ledger = ledger_entries.iter().filter_map(|e| numeric_suffix(e.record.id(), prefix));
            from_logs.chain(from_ledger).max().unwrap_or(0)
        };
        let next_run = max_id("run-") + 1;
        let next_impl = max_id("impl-") + 1;

        let mut store = Self {
            pool: Mutex::new(PoolState {
                out: AppendFile {
                    file: Some(open_append(&pool_path)?),
                    path: pool_path,
                },
                entries: pool_entries,
            }),
            ledger: Mutex::new(LedgerState {
                out: AppendFile {
                    file: Some(open_append(&ledger_path)?),
                    path: ledger_path,
                },
                entries: ledger_entries,
            }),
            root: Some(root),
            memory_logs: Mutex::new(BTreeMap::new()),
            next_run: AtomicU64::new(next_run),
            next_impl: AtomicU64::new(next_impl),
            recovered: 0,
        };
        store.recovered = store.recover(logs)?;
        Ok(store)
    }

    fn recover(&self, mut logs: Vec<RunLog>) -> Result<usize, StoreError> {
        let recorded: HashSet<String> = self.ledger_entries().iter().map(|e| e.record.id().to_string()).collect();
        // Completion order; an idea run sorts before implementations that finished in the same tick.
        logs.sort_by_cached_key(|log| {
            let record = log.ledger_record();
            let (finished, rank) = match &record {
                LedgerRecord::IdeaRun(s) => (s.finished_at.clone(), 0),
                LedgerRecord::Implementation(s) => (s.finished_at.clone(), 1),
            };
            (finished, rank, record.id().to_string())
        });
        let mut count = 0;
        for log in logs {
            let record = log.ledger_record();
            if recorded.contains(record.id()) {
                continue;
            }
            if let RunLog::Idea(run) = &log {
                if let Some(idea) = &run.idea {
                    if !self.list_ideas().iter().any(|e| e.idea.id == idea.id) {
                        self.append_idea(idea)?;
                    }
                }
            }
            warn!(id = record.id(), "recovering ledger record from run log");
            self.append_ledger(record)?;
            count += 1;
        }
        Ok(count)
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    /// Runs completed from their logs during [`Store::open`].
    pub fn recovered(&self) -> usize {
        self.recovered
    }

    pub fn next_run_id(&self) -> String {
        format!("run-{:04}", self.next_run.fetch_add(1, Ordering::SeqCst))
    }

    pub fn next_impl_id(&self) -> String {
        format!("impl-{:04}", self.next_impl.fetch_add(1, Ordering::SeqCst))
    }

    /// Appends an idea; returns its sequence number (previous maximum + 1).
    pub fn append_idea(&self, idea: &Idea) -> Result<u64, StoreError> {
        let mut pool = self.pool.lock().unwrap_or_else(|e| e.into_inner());
        let entry = IdeaPoolEntry {
            seq: pool.entries.len() as u64 + 1,
            idea: idea.clone(),
        };
        let mut line = serde_json::to_string(&entry).expect("pool entry serializes");
        line.push('\n');
        pool.out.append(&line)?;
        let seq = entry.seq;
        pool.entries.push(entry);
        Ok(seq)
    }

    pub fn list_ideas(&self) -> Vec<IdeaPoolEntry> {
        self.pool.lock().unwrap_or_else(|e| e.into_inner()).entries.clone()
    }

    pub fn ideas(&self) -> Vec<Idea> {
        self.list_ideas().into_iter().map(|e| e.idea).collect()
    }

    pub fn append_ledger(&self, record: LedgerRecord) -> Result<u64, StoreError> {
        let mut ledger = self.ledger.lock().unwrap_or_else(|e| e.into_inner());
        let entry = LedgerEntry {
            seq: ledger.entries.len() as u64 + 1,
            record,
        };
        let mut line = serde_json::to_string(&entry).expect("ledger entry serializes");
        line.push('\n');
        ledger.out.append(&line)?;
        let seq = entry.seq;
        ledger.entries.push(entry);
        Ok(seq)
    }

    pub fn ledger_entries(&self) -> Vec<LedgerEntry> {
        self.ledger.lock().unwrap_or_else(|e| e.into_inner()).entries.clone()
    }

    pub fn ledger_records(&self) -> Vec<LedgerRecord> {
        self.ledger_entries().into_iter().map(|e| e.record).collect()
    }

    fn write_log(&self, id: &str, text: String) -> Result<(), StoreError> {
        match &self.root {
            Some(root) => {
                let path = root.join(RUNS_DIR).join(format!("{id}.jsonl"));
                if path.exists() {
                    return Err(StoreError::DuplicateRunLog(id.to_string()));
                }
                write_atomic(&path, &text)
            }
            None => {
                let mut logs = self.memory_logs.lock().unwrap_or_else(|e| e.into_inner());
                if logs.contains_key(id) {
                    return Err(StoreError::DuplicateRunLog(id.to_string()));
                }
                logs.insert(id.to_string(), text);
                Ok(())
            }
        }
    }

    /// Writes `runs/<run_id>.jsonl`: every raw turn with its parse, then the run.
    pub fn append_run_log(&self, run: &IdeaRun) -> Result<(), StoreError> {
        let mut header = run.clone();
        header.transcript.clear();
        self.write_log(&run.run_id, render_run_log(&run.transcript, RunLogLine::IdeaRun { run: header }))
    }

    pub fn append_implementation_log(&self, record: &ImplementationRecord) -> Result<(), StoreError> {
        let mut header = record.clone();
        header.transcript.clear();
        self.write_log(
            &record.impl_id,
            render_run_log(&record.transcript, RunLogLine::Implementation { record: header }),
        )
    }

    /// Raw text of a stored run log.
    pub fn run_log_text(&self, id: &str) -> Result<String, StoreError> {
        match &self.root {
            Some(root) => {
                let path = root.join(RUNS_DIR).join(format!("{id}.jsonl"));
                fs::read_to_string(&path).map_err(io_err(&path))
            }
            None => self
                .memory_logs
                .lock()
                .unwrap_or_else(|e| e.into_inner())
                .get(id)
                .cloned()
                .ok_or_else(|| StoreError::Io {
                    path: id.to_string(),
                    message: "no such run log".into(),
                }),
        }
    }

    pub fn read_run_log(&self, id: &str) -> Result<RunLog, StoreError> {
        parse_run_log(&self.run_log_text(id)?, id)
    }

    /// Scratch directory for the design tool runs of one implementation.
    pub fn work_dir(&self, impl_id: &str) -> Option<PathBuf> {
        self.root.as_ref().map(|r| r.join(WORK_DIR).join(impl_id))
    }

    /// Copies a successful attempt into `designs/<idea_id>/<impl_id>/`.
    /// Relative artifact paths are resolved against `attempt_dir`.
    pub fn store_design(
        &self,
        idea_id: &str,
        impl_id: &str,
        config: &DesignConfig,
        outcome: &ToolOutcome,
        attempts: usize,
        attempt_dir: &Path,
    ) -> Result<DesignArtifact, StoreError> {
        let mut artifact = DesignArtifact {
            idea_id: idea_id.to_string(),
            impl_id: impl_id.to_string(),
            config: Some(config.clone()),
            outcome: outcome.clone(),
            artifacts: Vec::new(),
            attempts,
        };
        let Some(root) = &self.root else {
            artifact.artifacts = outcome.artifacts.clone();
            return Ok(artifact);
        };
        let dir = root.join(design_rel_dir(idea_id, impl_id));
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        for reported in &outcome.artifacts {
            let src = attempt_dir.join(reported);
            let rel = if Path::new(reported).is_absolute() {
                PathBuf::from(Path::new(reported).file_name().unwrap_or_default())
            } else {
                PathBuf::from(reported)
            };
            let dst = dir.join("artifacts").join(&rel);
            if let Some(parent) = dst.parent() {
                fs::create_dir_all(parent).map_err(io_err(parent))?;
            }
            fs::copy(&src, &dst).map_err(io_err(&src))?;
            artifact.artifacts.push(format!("artifacts/{}", rel.to_string_lossy().replace('\\', "/")));
        }
        write_atomic(&dir.join("config.json"), &render_config(config))?;
        let meta = serde_json::to_string_pretty(&artifact).expect("design serializes") + "\n";
        write_atomic(&dir.join("outcome.json"), &meta)?;
        Ok(artifact)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idea(n: usize) -> Idea {
        Idea {
            id: format!("idea-{n:04}"),
            title: format!("Idea {n}"),
            abstract_text: "abstract".into(),
            target_description: "target".into(),
            concepts: ConceptPair::new("a", "b", "src").unwrap(),
            run_id: format!("run-{n:04}"),
            created_at: "2025-01-01T00:00:00Z".into(),
        }
    }

    #[test]
    fn first_append_is_one() {
        let store = Store::in_memory();
        assert!(store.list_ideas().is_empty());
        assert_eq!(store.append_idea(&idea(1)).unwrap(), 1);
        assert_eq!(store.append_idea(&idea(2)).unwrap(), 2);
    }

    #[test]
    fn reload_reproduces_pool() {
        let dir = tempfile::tempdir().unwrap();
        {
            let store = Store::open(dir.path()).unwrap();
            for n in 1..=5 {
                store.append_idea(&idea(n)).unwrap();
            }
        }
        let store = Store::open(dir.path()).unwrap();
        assert_eq!(store.ideas(), (1..=5).map(idea).collect::<Vec<_>>());
    }

    #[test]
    fn torn_tail_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        {
            let store = Store::open(dir.path()).unwrap();
            store.append_idea(&idea(1)).unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(dir.path().join(POOL_FILE)).unwrap();
        f.write_all(b"{\"seq\":2,\"id\":\"idea-00").unwrap();
        drop(f);
        let store = Store::open(dir.path()).unwrap();
        assert_eq!(store.list_ideas().len(), 1);
        assert_eq!(store.append_idea(&idea(2)).unwrap(), 2);
        drop(store);
        assert_eq!(Store::open(dir.path()).unwrap().list_ideas().len(), 2);
    }

    #[test]
    fn catalog_names_unique() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cat.jsonl");
        fs::write(&path, "{\"name\":\"ghz\",\"description\":\"GHZ state\"}\n{\"name\":\"ghz\",\"description\":\"again\"}\n").unwrap();
        assert!(matches!(load_published_catalog(&path), Err(StoreError::DuplicateCatalogName { record: 2, .. })));
        fs::write(&path, "{\"name\":\"ghz\"}\n").unwrap();
        assert!(matches!(load_published_catalog(&path), Err(StoreError::Format { record: 1, .. })));
    }

    #[test]
    fn ids_continue_after_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        assert_eq!(store.next_run_id(), "run-0001");
        let mut run = IdeaRun::new("run-0001", "main", ConceptPair::new("a", "b", "s").unwrap());
        run.finished_at = "2025-01-01T00:00:00Z".into();
        store.append_run_log(&run).unwrap();
        assert_eq!(store.append_run_log(&run), Err(StoreError::DuplicateRunLog("run-0001".into())));
        drop(store);
        let store = Store::open(dir.path()).unwrap();
        assert_eq!(store.recovered(), 1);
        assert_eq!(store.next_run_id(), "run-0002");
        assert_eq!(store.ledger_entries().len(), 1);
    }
}
