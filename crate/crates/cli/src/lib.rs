//! Command-line front end: campaign runs, Expert implementation, config
//! validation, analytics reports and replay checks.
//!
//! Exit codes are a scripting contract: 0 success, 1 domain failure
//! (invalid config, aborted run, transcript mismatch), 2 usage error.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mandel::analytics::{write_report, CampaignLedger, ConceptMatch, Embedder, LiveEmbedder, OfflineEmbedder};
use mandel::campaign::{
    load_concept_list, BackendKind, BatchItem, Campaign, CampaignSettings, IdeaSelector, RunBatch, ToolChoice,
};
use mandel::configschema::{parse_config, validate_config};
use mandel::llmbackend::{ApiKey, API_KEY_ENV};
use mandel::store::LEDGER_FILE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendFlag {
    /// Chat model over HTTP, key from the environment.
    Live,
    /// Recorded script, no network.
    Replay,
    /// Offline hashing embedder for reports.
    StubEmbed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ToolFlag {
    Real,
    Stub,
}

#[derive(Debug, Parser)]
#[command(name = "mandel", version, about = "Multi-agent design campaigns for quantum-optics experiments")]
pub struct Cli {
    /// Campaign settings file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the campaign seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendFlag>,
    #[arg(long, global = true, value_enum)]
    pub tool: Option<ToolFlag>,
    /// Concurrent runs; replay always runs one at a time.
    #[arg(long, global = true, default_value_t = 1)]
    pub parallel: usize,
    /// Store directory for run/implement/replay, output directory for report.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Execute idea-generation runs.
    Run {
        /// Number of runs; defaults to the campaign's `runs`.
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Hand pooled ideas to the Expert.
    Implement(ImplementArgs),
    /// Check design-tool configs.
    Validate {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Write the analytics bundle for a ledger.
    Report {
        /// Ledger file; defaults to the campaign store's ledger.
        #[arg(long)]
        ledger: Option<PathBuf>,
        /// Concept vocabulary, one phrase per line.
        #[arg(long)]
        concepts: Option<PathBuf>,
        /// Match concepts as whole words instead of substrings.
        #[arg(long)]
        whole_word: bool,
    },
    /// Re-run a campaign from a script and compare its transcript.
    Replay {
        /// Replay script; defaults to the campaign's `backend.script`.
        #[arg(long)]
        script: Option<PathBuf>,
        /// Expected transcript. Without it the transcript is printed.
        #[arg(long)]
        expect: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct ImplementArgs {
    /// Idea ids to implement.
    #[arg(long = "idea", conflicts_with_all = ["random", "all"])]
    pub ideas: Vec<String>,
    /// Draw this many ideas uniformly without replacement.
    #[arg(long)]
    pub random: Option<usize>,
    #[arg(long, conflicts_with = "random")]
    pub all: bool,
    /// Also consider proposals that were not accepted into the pool.
    #[arg(long)]
    pub ignore_rejections: bool,
}

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    Failure = 1,
    Usage = 2,
}

/// Misuse of the command line that clap cannot detect on its own.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

/// Maps an error from [`execute`] to its exit status.
pub fn exit_for(err: &anyhow::Error) -> Exit {
    if err.is::<UsageError>() {
        Exit::Usage
    } else {
        Exit::Failure
    }
}

fn load_settings(cli: &Cli) -> Result<CampaignSettings> {
    let path = cli.config.as_ref().ok_or_else(|| usage("this command needs --config"))?;
    let mut settings = CampaignSettings::load(path)?;
    if let Some(seed) = cli.seed {
        settings.seed = seed;
    }
    match cli.backend {
        Some(BackendFlag::Live) => settings.backend.kind = BackendKind::Live,
        Some(BackendFlag::Replay) => settings.backend.kind = BackendKind::Replay,
        Some(BackendFlag::StubEmbed) | None => {}
    }
    match cli.tool {
        Some(ToolFlag::Real) => settings.tool.kind = ToolChoice::Real,
        Some(ToolFlag::Stub) => settings.tool.kind = ToolChoice::Stub,
        None => {}
    }
    if let Some(out) = &cli.out {
        settings.paths.store = out.clone();
    }
    Ok(settings)
}

/// Runs one parsed command line, writing human-readable results to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<Exit> {
    if cli.parallel == 0 {
        return Err(usage("--parallel must be at least 1"));
    }
    match &cli.command {
        Command::Run { runs } => cmd_run(cli, *runs, out),
        Command::Implement(args) => cmd_implement(cli, args, out),
        Command::Validate { paths } => cmd_validate(paths, out),
        Command::Report {
            ledger,
            concepts,
            whole_word,
        } => cmd_report(cli, ledger.as_deref(), concepts.as_deref(), *whole_word, out),
        Command::Replay { script, expect } => cmd_replay(cli, script.as_deref(), expect.as_deref(), out),
    }
}

fn print_batch(batch: &RunBatch, out: &mut dyn Write) -> Result<bool> {
    let mut clean = true;
    for item in &batch.runs {
        match &item.result {
            Ok(run) => writeln!(out, "{} {}", item.id, run.outcome.as_str())?,
            Err(e) => {
                clean = false;
                writeln!(out, "{} aborted: {e}", item.id)?;
            }
        }
    }
    Ok(print_implementations(&batch.implementations, out)? && clean)
}

fn print_implementations(items: &[BatchItem<mandel::agents::ImplementationRecord>], out: &mut dyn Write) -> Result<bool> {
    let mut clean = true;
    for item in items {
        match &item.result {
            Ok(rec) => {
                let verdict = if rec.success { "success" } else { "failure" };
                writeln!(out, "{} {} {verdict} after {} attempt(s)", item.id, rec.idea_id, rec.attempts.len())?;
            }
            Err(e) => {
                clean = false;
                writeln!(out, "{} aborted: {e}", item.id)?;
            }
        }
    }
    Ok(clean)
}

fn cmd_run(cli: &Cli, runs: Option<usize>, out: &mut dyn Write) -> Result<Exit> {
    let settings = load_settings(cli)?;
    let n = runs.unwrap_or(settings.runs);
    let campaign = Campaign::open(settings)?;
    let batch = campaign.run(n, cli.parallel);
    let clean = print_batch(&batch, out)?;
    Ok(if clean { Exit::Success } else { Exit::Failure })
}

fn cmd_implement(cli: &Cli, args: &ImplementArgs, out: &mut dyn Write) -> Result<Exit> {
    let selector = match (&args.ideas[..], args.random, args.all) {
        ([], Some(n), false) => IdeaSelector::Random(n),
        ([], None, true) => IdeaSelector::All,
        ([], None, false) => IdeaSelector::Random(1),
        (ids, None, false) => IdeaSelector::Ids(ids.to_vec()),
        _ => return Err(usage("choose one of --idea, --random, --all")),
    };
    let campaign = Campaign::open(load_settings(cli)?)?;
    let items = campaign.implement(&selector, args.ignore_rejections, cli.parallel)?;
    let clean = print_implementations(&items, out)?;
    Ok(if clean { Exit::Success } else { Exit::Failure })
}

fn cmd_validate(paths: &[PathBuf], out: &mut dyn Write) -> Result<Exit> {
    let mut all_valid = true;
    for path in paths {
        let shown = path.display();
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                all_valid = false;
                writeln!(out, "{shown}: unreadable: {e}")?;
                continue;
            }
        };
        let cfg = match parse_config(&text) {
            Ok(cfg) => cfg,
            Err(e) => {
                all_valid = false;
                writeln!(out, "{shown}: {e}")?;
                continue;
            }
        };
        let report = validate_config(&cfg);
        for w in &report.warnings {
            writeln!(out, "{shown}: warning {} at {}: {}", w.rule, w.path, w.message)?;
        }
        for e in &report.errors {
            writeln!(out, "{shown}: error {} at {}: {}", e.rule, e.path, e.message)?;
        }
        if report.is_valid() {
            writeln!(out, "{shown}: ok")?;
        } else {
            all_valid = false;
        }
    }
    Ok(if all_valid { Exit::Success } else { Exit::Failure })
}

fn cmd_report(
    cli: &Cli,
    ledger: Option<&Path>,
    concepts: Option<&Path>,
    whole_word: bool,
    out: &mut dyn Write,
) -> Result<Exit> {
    let settings = match &cli.config {
        Some(path) => Some(CampaignSettings::load(path)?),
        None => None,
    };
    let ledger_path = match (ledger, &settings) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(s)) => s.paths.store.join(LEDGER_FILE),
        (None, None) => return Err(usage("report needs --ledger or --config")),
    };
    let concept_path = concepts
        .map(Path::to_path_buf)
        .or_else(|| settings.as_ref().and_then(|s| s.paths.concept_list.clone()));
    let concept_list = match concept_path {
        Some(p) => load_concept_list(p)?,
        None => Vec::new(),
    };
    let embedder: Box<dyn Embedder> = match cli.backend {
        Some(BackendFlag::Live) => {
            let key = ApiKey::from_env().ok_or_else(|| anyhow!("environment variable {API_KEY_ENV} is not set"))?;
            let defaults = mandel::campaign::EmbeddingSettings::default();
            let embedding = settings.as_ref().map_or(defaults, |s| s.embedding.clone());
            Box::new(LiveEmbedder::new(embedding.endpoint, embedding.model, key)?)
        }
        _ => Box::new(OfflineEmbedder::default()),
    };
    let mode = if whole_word { ConceptMatch::WholeWord } else { ConceptMatch::Substring };
    let ledger = CampaignLedger::load(&ledger_path).with_context(|| format!("reading {}", ledger_path.display()))?;
    let out_dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("report"));
    let data = write_report(&ledger, &concept_list, mode, &*embedder, &out_dir)?;
    writeln!(out, "{}", data.summary)?;
    if let Some(note) = &data.projection_note {
        writeln!(out, "projection skipped: {note}")?;
    }
    writeln!(out, "report written to {}", out_dir.display())?;
    Ok(Exit::Success)
}

fn first_difference(a: &str, b: &str) -> (usize, String, String) {
    let (mut la, mut lb) = (a.lines(), b.lines());
    let mut n = 1;
    loop {
        match (la.next(), lb.next()) {
            (Some(x), Some(y)) if x == y => n += 1,
            (x, y) => return (n, x.unwrap_or("<end>").to_string(), y.unwrap_or("<end>").to_string()),
        }
    }
}

fn cmd_replay(cli: &Cli, script: Option<&Path>, expect: Option<&Path>, out: &mut dyn Write) -> Result<Exit> {
    if cli.backend == Some(BackendFlag::Live) {
        return Err(usage("replay cannot use the live backend"));
    }
    let mut settings = load_settings(cli)?;
    settings.backend.kind = BackendKind::Replay;
    if let Some(s) = script {
        settings.backend.script = Some(s.to_path_buf());
    }
    let scratch;
    if cli.out.is_none() {
        scratch = tempfile::tempdir().context("creating a scratch store")?;
        settings.paths.store = scratch.path().to_path_buf();
    }
    let runs = settings.runs;
    let campaign = Campaign::open(settings)?;
    let batch = campaign.run(runs, 1);
    let mut sink = Vec::new();
    let clean = print_batch(&batch, &mut sink)?;
    if !clean {
        out.write_all(&sink)?;
        return Ok(Exit::Failure);
    }
    let ids: Vec<String> = batch
        .runs
        .iter()
        .map(|i| i.id.clone())
        .chain(batch.implementations.iter().map(|i| i.id.clone()))
        .collect();
    let transcript = campaign.transcript(&ids)?;
    let left = campaign.replay_remaining().unwrap_or(0);
    let Some(expect) = expect else {
        out.write_all(transcript.as_bytes())?;
        return Ok(if left == 0 { Exit::Success } else { Exit::Failure });
    };
    let expected = fs::read_to_string(expect).with_context(|| format!("reading {}", expect.display()))?;
    if left > 0 {
        writeln!(out, "mismatch: {left} scripted exchange(s) never requested")?;
        return Ok(Exit::Failure);
    }
    if transcript != expected {
        let (line, want, got) = first_difference(&expected, &transcript);
        writeln!(out, "mismatch at line {line}\n  expected: {want}\n  actual:   {got}")?;
        return Ok(Exit::Failure);
    }
    writeln!(out, "transcript matches ({} bytes)", transcript.len())?;
    Ok(Exit::Success)
}
