//! Campaign settings and the multi-run drivers behind the command line.
//!
//! A campaign file is TOML. Relative paths inside it resolve against the
//! directory holding the file.
//!
//! ```toml
//! seed = 7
//! variant = "main"
//! runs = 1
//! implement_accepted = true
//!
//! [backend]
//! kind = "replay"
//! script = "script.jsonl"
//!
//! [tool]
//! kind = "stub"
//!
//! [paths]
//! store = "store"
//! corpus = "corpus.jsonl"
//! concepts = "concepts.jsonl"
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;
use tracing::{info, warn};

use crate::agents::{
    draw_without_replacement, load_concept_pairs, run_idea_generation, run_implementation, AgentError, AgentLimits,
    ConceptPair, Idea, IdeaGenEnv, IdeaRun, ImplementEnv, ImplementationRecord, ModelParams, Outcome, PartialRun,
    PromptSet,
};
use crate::clock::{Clock, LogicalClock, SystemClock};
use crate::literature::{load_corpus, ArxivClient, Corpus, CorpusSearch, HttpFetcher, LiteratureError, LiteratureSearch};
use crate::llmbackend::{
    record_session, BackendError, ChatBackend, LiveBackend, LiveConfig, ReplayBackend, ScriptError,
};
use crate::store::{load_published_catalog, LedgerRecord, PublishedCatalog, RunLog, Store, StoreError};
use crate::toolrunner::{BridgeTool, DesignTool, StubTool, ToolError, DEFAULT_TOOL_TIMEOUT};

/// Stream offset for the implementation draw, disjoint from per-run streams.
const IMPLEMENT_STREAM: u64 = 1 << 63;

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("{path}: {message}")]
    Settings { path: String, message: String },
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Literature(#[from] LiteratureError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Script(#[from] ScriptError),
    #[error(transparent)]
    Tool(#[from] ToolError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Live,
    #[default]
    Replay,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSettings {
    pub kind: BackendKind,
    /// Replay script to answer from.
    pub script: Option<PathBuf>,
    /// Live sessions are captured here when set.
    pub record: Option<PathBuf>,
    pub endpoint: String,
    pub max_in_flight: usize,
}

impl Default for BackendSettings {
    fn default() -> Self {
        Self {
            kind: BackendKind::default(),
            script: None,
            record: None,
            endpoint: LiveConfig::default().endpoint,
            max_in_flight: LiveConfig::default().max_in_flight,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ToolChoice {
    #[default]
    Stub,
    Real,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolSettings {
    pub kind: ToolChoice,
    /// Bridge command line; the config path and work directory are appended.
    pub command: Vec<String>,
    pub timeout_secs: u64,
}

impl Default for ToolSettings {
    fn default() -> Self {
        Self {
            kind: ToolChoice::default(),
            command: Vec::new(),
            timeout_secs: DEFAULT_TOOL_TIMEOUT.as_secs(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LiteratureSource {
    Arxiv,
    /// Offline keyword search over the local corpus.
    #[default]
    Corpus,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiteratureSettings {
    pub source: LiteratureSource,
    pub arxiv_endpoint: String,
    pub min_interval_secs: f64,
}

impl Default for LiteratureSettings {
    fn default() -> Self {
        Self {
            source: LiteratureSource::default(),
            arxiv_endpoint: crate::literature::ARXIV_ENDPOINT.into(),
            min_interval_secs: crate::literature::ARXIV_MIN_INTERVAL.as_secs_f64(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSettings {
    pub store: PathBuf,
    pub corpus: PathBuf,
    pub concepts: PathBuf,
    pub catalog: Option<PathBuf>,
    /// Directory of prompt files overriding the bundled texts.
    pub prompts: Option<PathBuf>,
    /// Concept vocabulary for the report, one phrase per line.
    pub concept_list: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSettings {
    pub endpoint: String,
    pub model: String,
}

impl Default for EmbeddingSettings {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/embeddings".into(),
            model: "text-embedding-3-large".into(),
        }
    }
}

/// Every engine knob of a campaign.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSettings {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_variant")]
    pub variant: String,
    /// Idea-generation runs per `run` invocation.
    #[serde(default = "default_runs")]
    pub runs: usize,
    /// Send each newly pooled idea to the Expert right after its run.
    #[serde(default)]
    pub implement_accepted: bool,
    #[serde(default)]
    pub limits: AgentLimits,
    #[serde(default)]
    pub model: ModelParams,
    #[serde(default)]
    pub backend: BackendSettings,
    #[serde(default)]
    pub tool: ToolSettings,
    #[serde(default)]
    pub literature: LiteratureSettings,
    #[serde(default)]
    pub embedding: EmbeddingSettings,
    pub paths: PathSettings,
}

fn default_variant() -> String {
    "main".into()
}

fn default_runs() -> usize {
    1
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl CampaignSettings {
    pub fn parse(text: &str, origin: &str) -> Result<Self, CampaignError> {
        let settings: Self = toml::from_str(text).map_err(|e| CampaignError::Settings {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        settings.limits.check()?;
        if settings.model.temperature < 0.0 {
            return Err(CampaignError::Settings {
                path: origin.to_string(),
                message: "model.temperature must be non-negative".into(),
            });
        }
        Ok(settings)
    }

    /// Reads a campaign file and resolves its relative paths.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CampaignError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| CampaignError::Settings {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut settings = Self::parse(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new("."));
        settings.resolve_paths(base);
        Ok(settings)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let p = &mut self.paths;
        for path in [&mut p.store, &mut p.corpus, &mut p.concepts] {
            resolve(base, path);
        }
        for path in [&mut p.catalog, &mut p.prompts, &mut p.concept_list, &mut self.backend.script, &mut self.backend.record]
            .into_iter()
            .flatten()
        {
            resolve(base, path);
        }
    }
}

/// Reads a concept vocabulary: one phrase per non-blank line.
pub fn load_concept_list(path: impl AsRef<Path>) -> Result<Vec<String>, CampaignError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| CampaignError::Settings {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

/// Deterministic generator for run `index` of a campaign seeded with `seed`.
pub fn run_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// What happened to one run or implementation of a batch.
#[derive(Debug)]
pub struct BatchItem<T> {
    pub id: String,
    pub result: Result<T, AgentError>,
}

/// Result of [`Campaign::run`].
#[derive(Debug, Default)]
pub struct RunBatch {
    pub runs: Vec<BatchItem<IdeaRun>>,
    pub implementations: Vec<BatchItem<ImplementationRecord>>,
}

impl RunBatch {
    pub fn outcomes(&self) -> Vec<Option<Outcome>> {
        self.runs
            .iter()
            .map(|item| match &item.result {
                Ok(run) => Some(run.outcome),
                Err(e) => match e.partial() {
                    PartialRun::Idea(run) => Some(run.outcome),
                    _ => None,
                },
            })
            .collect()
    }

    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|i| i.result.is_err()).count()
            + self.implementations.iter().filter(|i| i.result.is_err()).count()
    }
}

/// Which pooled ideas to implement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IdeaSelector {
    /// Explicit idea ids, in the given order.
    Ids(Vec<String>),
    /// `n` distinct ideas drawn uniformly under the campaign seed.
    Random(usize),
    All,
}

/// An opened campaign: settings plus every resource a run needs.
pub struct Campaign {
    settings: CampaignSettings,
    store: Store,
    backend: Arc<dyn ChatBackend>,
    replay: Option<Arc<ReplayBackend>>,
    literature: Box<dyn LiteratureSearch>,
    corpus: Corpus,
    catalog: PublishedCatalog,
    prompts: PromptSet,
    pairs: Vec<ConceptPair>,
    tool: Box<dyn DesignTool>,
    clock: Box<dyn Clock>,
}

impl Campaign {
    pub fn open(settings: CampaignSettings) -> Result<Self, CampaignError> {
        settings.limits.check()?;
        let paths = &settings.paths;
        let (backend, replay): (Arc<dyn ChatBackend>, _) = match settings.backend.kind {
            BackendKind::Replay => {
                let script = settings.backend.script.as_ref().ok_or_else(|| CampaignError::Settings {
                    path: "backend.script".into(),
                    message: "replay backend needs a script".into(),
                })?;
                let replay = Arc::new(ReplayBackend::from_file(script)?);
                (replay.clone(), Some(replay))
            }
            BackendKind::Live => {
                let config = LiveConfig {
                    endpoint: settings.backend.endpoint.clone(),
                    max_in_flight: settings.backend.max_in_flight,
                    ..LiveConfig::default()
                };
                let live = LiveBackend::from_env(config)?;
                match &settings.backend.record {
                    Some(path) => (Arc::new(record_session(live, path)?), None),
                    None => (Arc::new(live), None),
                }
            }
        };
        let corpus = load_corpus(&paths.corpus)?;
        let literature: Box<dyn LiteratureSearch> = match settings.literature.source {
            LiteratureSource::Corpus => Box::new(CorpusSearch::new(Arc::new(corpus.clone()))),
            LiteratureSource::Arxiv => Box::new(ArxivClient::new(
                settings.literature.arxiv_endpoint.clone(),
                HttpFetcher::new()?,
                Duration::from_secs_f64(settings.literature.min_interval_secs.max(0.0)),
            )),
        };
        let catalog = match &paths.catalog {
            Some(p) => load_published_catalog(p)?,
            None => PublishedCatalog::default(),
        };
        let prompts = match &paths.prompts {
            Some(dir) => PromptSet::from_dir(dir)?,
            None => PromptSet::default(),
        };
        let pairs = load_concept_pairs(&paths.concepts)?;
        if pairs.is_empty() {
            return Err(AgentError::MissingInput(format!("{} holds no concept pairs", paths.concepts.display())).into());
        }
        let tool: Box<dyn DesignTool> = match settings.tool.kind {
            ToolChoice::Stub => Box::new(StubTool::new()),
            ToolChoice::Real => Box::new(BridgeTool::new(
                settings.tool.command.clone(),
                Duration::from_secs(settings.tool.timeout_secs),
            )?),
        };
        let clock: Box<dyn Clock> = match replay {
            Some(_) => Box::new(LogicalClock::new()),
            None => Box::new(SystemClock),
        };
        let store = Store::open(&paths.store)?;
        if store.recovered() > 0 {
            warn!(count = store.recovered(), "completed interrupted runs from their logs");
        }
        Ok(Self {
            settings,
            store,
            backend,
            replay,
            literature,
            corpus,
            catalog,
            prompts,
            pairs,
            tool,
            clock,
        })
    }

    pub fn settings(&self) -> &CampaignSettings {
        &self.settings
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    /// Replay exchanges not yet consumed, if replaying.
    pub fn replay_remaining(&self) -> Option<usize> {
        self.replay.as_ref().map(|r| r.remaining())
    }

    fn effective_parallel(&self, requested: usize) -> usize {
        if self.replay.is_some() && requested > 1 {
            warn!(requested, "replay backend is sequential; running one at a time");
            return 1;
        }
        requested.max(1)
    }

    fn idea_env(&self) -> IdeaGenEnv<'_> {
        IdeaGenEnv {
            backend: &*self.backend,
            literature: &*self.literature,
            corpus: &self.corpus,
            store: &self.store,
            catalog: &self.catalog,
            prompts: &self.prompts,
            limits: self.settings.limits,
            model: self.settings.model.clone(),
            clock: &*self.clock,
            variant: self.settings.variant.clone(),
        }
    }

    fn implement_env(&self) -> ImplementEnv<'_> {
        ImplementEnv {
            backend: &*self.backend,
            tool: &*self.tool,
            store: &self.store,
            prompts: &self.prompts,
            model: self.settings.model.clone(),
            retry_cap: self.settings.limits.retry_cap,
            clock: &*self.clock,
            variant: self.settings.variant.clone(),
        }
    }

    fn run_one(&self, run_id: &str) -> Result<IdeaRun, AgentError> {
        let index = run_id.strip_prefix("run-").and_then(|n| n.parse().ok()).unwrap_or(0);
        let mut rng = run_rng(self.settings.seed, index);
        let pair = &self.pairs[rng.gen_range(0..self.pairs.len())];
        let result = run_idea_generation(&self.idea_env(), run_id, pair, &mut rng);
        match &result {
            Ok(run) => info!(run = run_id, outcome = run.outcome.as_str(), "run finished"),
            Err(e) => warn!(run = run_id, error = %e, "run aborted"),
        }
        result
    }

    /// Executes `n` idea-generation runs. A failing run is reported in the
    /// batch and does not stop the others.
    pub fn run(&self, n: usize, parallel: usize) -> RunBatch {
        let ids: Vec<String> = (0..n).map(|_| self.store.next_run_id()).collect();
        let runs = par_map(&ids, self.effective_parallel(parallel), |id| self.run_one(id));
        let mut batch = RunBatch {
            runs: ids.into_iter().zip(runs).map(|(id, result)| BatchItem { id, result }).collect(),
            implementations: Vec::new(),
        };
        if self.settings.implement_accepted {
            let accepted: Vec<(Idea, Outcome)> = batch
                .runs
                .iter()
                .filter_map(|item| item.result.as_ref().ok()?.idea.clone())
                .map(|idea| (idea, Outcome::FullAccept))
                .collect();
            batch.implementations = self.implement_ideas(accepted, parallel);
        }
        batch
    }

    /// Ideas eligible for implementation with the outcome class of the run
    /// that produced them. With `ignore_rejections`, the last proposal of
    /// every idea run is eligible, pooled or not.
    pub fn candidates(&self, ignore_rejections: bool) -> Result<Vec<(Idea, Outcome)>, CampaignError> {
        if !ignore_rejections {
            return Ok(self.store.ideas().into_iter().map(|i| (i, Outcome::FullAccept)).collect());
        }
        let mut out = Vec::new();
        for record in self.store.ledger_records() {
            let LedgerRecord::IdeaRun(summary) = record else { continue };
            if let RunLog::Idea(run) = self.store.read_run_log(&summary.run_id)? {
                if let Some(idea) = run.proposal_idea() {
                    out.push((idea, run.outcome));
                }
            }
        }
        Ok(out)
    }

    /// Runs the Expert loop on the selected ideas.
    pub fn implement(
        &self,
        selector: &IdeaSelector,
        ignore_rejections: bool,
        parallel: usize,
    ) -> Result<Vec<BatchItem<ImplementationRecord>>, CampaignError> {
        let candidates = self.candidates(ignore_rejections)?;
        if candidates.is_empty() {
            return Err(AgentError::EmptyPool.into());
        }
        let chosen = match selector {
            IdeaSelector::All => candidates,
            IdeaSelector::Ids(ids) => ids
                .iter()
                .map(|id| {
                    candidates
                        .iter()
                        .find(|(idea, _)| &idea.id == id)
                        .cloned()
                        .ok_or_else(|| AgentError::MissingInput(format!("no eligible idea with id `{id}`")))
                })
                .collect::<Result<_, _>>()?,
            IdeaSelector::Random(n) => {
                let done = self.store.ledger_records().iter().filter(|r| matches!(r, LedgerRecord::Implementation(_))).count();
                let mut rng = run_rng(self.settings.seed, IMPLEMENT_STREAM + done as u64);
                let ideas: Vec<Idea> = candidates.iter().map(|(i, _)| i.clone()).collect();
                draw_without_replacement(&ideas, *n, &mut rng)?
                    .into_iter()
                    .map(|idea| {
                        let class = candidates.iter().find(|(c, _)| c.id == idea.id).map_or(Outcome::FullAccept, |c| c.1);
                        (idea, class)
                    })
                    .collect()
            }
        };
        Ok(self.implement_ideas(chosen, parallel))
    }

    fn implement_ideas(&self, ideas: Vec<(Idea, Outcome)>, parallel: usize) -> Vec<BatchItem<ImplementationRecord>> {
        let jobs: Vec<(String, Idea, Outcome)> = ideas
            .into_iter()
            .map(|(idea, class)| (self.store.next_impl_id(), idea, class))
            .collect();
        let env = self.implement_env();
        let results = par_map(&jobs, self.effective_parallel(parallel), |(impl_id, idea, class)| {
            let workdir = self
                .store
                .work_dir(impl_id)
                .unwrap_or_else(|| std::env::temp_dir().join("mandel-work").join(impl_id));
            if workdir.exists() {
                // Left behind by an implementation that never reached its log.
                fs::remove_dir_all(&workdir).map_err(|e| {
                    AgentError::Tool(ToolError::Io {
                        path: workdir.clone(),
                        message: e.to_string(),
                    })
                })?;
            }
            run_implementation(&env, impl_id, idea, *class, &workdir)
        });
        jobs.into_iter()
            .zip(results)
            .map(|((id, _, _), result)| BatchItem { id, result })
            .collect()
    }

    /// Concatenated run logs of `ids`, in order: the session transcript.
    pub fn transcript(&self, ids: &[String]) -> Result<String, CampaignError> {
        let mut out = String::new();
        for id in ids {
            out.push_str(&self.store.run_log_text(id)?);
        }
        Ok(out)
    }
}

/// Applies `f` to every item on up to `workers` threads, preserving order.
fn par_map<T: Sync, U: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> U + Sync) -> Vec<U> {
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<U>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers.min(items.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(item) = items.get(i) else { break };
                let value = f(item);
                *slots[i].lock().unwrap_or_else(|e| e.into_inner()) = Some(value);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().unwrap_or_else(|e| e.into_inner()).expect("every slot filled"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_settings() {
        let s = CampaignSettings::parse(
            "[paths]\nstore = \"s\"\ncorpus = \"c.jsonl\"\nconcepts = \"p.jsonl\"\n",
            "inline",
        )
        .unwrap();
        assert_eq!(s.limits, AgentLimits::default());
        assert_eq!(s.backend.kind, BackendKind::Replay);
        assert_eq!(s.tool.kind, ToolChoice::Stub);
        assert_eq!(s.runs, 1);
    }

    #[test]
    fn zero_cap_rejected() {
        let text = "[limits]\nmediator_period = 0\n[paths]\nstore = \"s\"\ncorpus = \"c\"\nconcepts = \"p\"\n";
        assert!(CampaignSettings::parse(text, "inline").is_err());
        let text = "bogus = 1\n[paths]\nstore = \"s\"\ncorpus = \"c\"\nconcepts = \"p\"\n";
        assert!(CampaignSettings::parse(text, "inline").is_err());
    }

    #[test]
    fn paths_resolve_against_the_file() {
        let mut s = CampaignSettings::parse(
            "[backend]\nscript = \"x.jsonl\"\n[paths]\nstore = \"/abs\"\ncorpus = \"c\"\nconcepts = \"p\"\n",
            "inline",
        )
        .unwrap();
        s.resolve_paths(Path::new("/base"));
        assert_eq!(s.paths.store, PathBuf::from("/abs"));
        assert_eq!(s.paths.corpus, PathBuf::from("/base/c"));
        assert_eq!(s.backend.script, Some(PathBuf::from("/base/x.jsonl")));
    }

    #[test]
    fn par_map_keeps_order() {
        let items: Vec<usize> = (0..50).collect();
        assert_eq!(par_map(&items, 4, |x| x * 2), items.iter().map(|x| x * 2).collect::<Vec<_>>());
    }

    #[test]
    fn run_streams_differ() {
        let a: u64 = run_rng(1, 1).gen();
        let b: u64 = run_rng(1, 2).gen();
        assert_ne!(a, b);
        assert_eq!(a, run_rng(1, 1).gen::<u64>());
    }
}
