//! Design-tool invocation: the external bridge subprocess and the built-in
//! deterministic stub.

use std::fs::{self, File};
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use tracing::warn;

use crate::configschema::{config_digest, render_config, validate_config, DesignConfig};

pub const DEFAULT_TOOL_TIMEOUT: Duration = Duration::from_secs(600);
pub const CONFIG_FILE: &str = "config.json";
pub const STUB_ARTIFACT: &str = "best_solution.json";
const BRIDGE_STDERR_FILE: &str = "bridge.stderr";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToolStatus {
    Success,
    Failure,
}

/// Result of one design-tool invocation. Artifact paths are recorded as the
/// tool reported them; relative paths are relative to the workdir.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolOutcome {
    pub status: ToolStatus,
    pub message: String,
    pub artifacts: Vec<String>,
}

impl ToolOutcome {
    pub fn success(message: impl Into<String>, artifacts: Vec<String>) -> Self {
        debug_assert!(!artifacts.is_empty());
        Self {
            status: ToolStatus::Success,
            message: message.into(),
            artifacts,
        }
    }

    pub fn failure(message: impl Into<String>) -> Self {
        let message = message.into();
        let message = if message.trim().is_empty() {
            "design tool failed without a message".to_string()
        } else {
            message
        };
        Self {
            status: ToolStatus::Failure,
            message,
            artifacts: Vec::new(),
        }
    }

    pub fn is_success(&self) -> bool {
        self.status == ToolStatus::Success
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ToolError {
    #[error("workdir {0} is not empty")]
    WorkdirNotEmpty(PathBuf),
    #[error("cannot launch design tool `{command}`: {message}")]
    Spawn { command: String, message: String },
    #[error("empty bridge command")]
    EmptyCommand,
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> ToolError + '_ {
    move |e| ToolError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Creates `workdir` if needed and insists that it holds nothing.
fn prepare_workdir(workdir: &Path) -> Result<(), ToolError> {
    fs::create_dir_all(workdir).map_err(io_err(workdir))?;
    let mut entries = fs::read_dir(workdir).map_err(io_err(workdir))?;
    if entries.next().is_some() {
        return Err(ToolError::WorkdirNotEmpty(workdir.to_path_buf()));
    }
    Ok(())
}

pub trait DesignTool: Send + Sync {
    /// Runs the tool on `cfg` inside an empty `workdir`. Tool-side problems
    /// are `Failure` outcomes; `Err` means the harness itself is broken.
    fn run(&self, cfg: &DesignConfig, workdir: &Path) -> Result<ToolOutcome, ToolError>;
}

impl<T: DesignTool + ?Sized> DesignTool for &T {
    fn run(&self, cfg: &DesignConfig, workdir: &Path) -> Result<ToolOutcome, ToolError> {
        (**self).run(cfg, workdir)
    }
}

impl<T: DesignTool + ?Sized> DesignTool for Box<T> {
    fn run(&self, cfg: &DesignConfig, workdir: &Path) -> Result<ToolOutcome, ToolError> {
        (**self).run(cfg, workdir)
    }
}

impl<T: DesignTool + ?Sized> DesignTool for std::sync::Arc<T> {
    fn run(&self, cfg: &DesignConfig, workdir: &Path) -> Result<ToolOutcome, ToolError> {
        (**self).run(cfg, workdir)
    }
}

/// Forces failure on the first `fail_first` calls. Test harness state only.
#[derive(Debug, Default)]
pub struct FaultPlan {
    fail_first: usize,
    calls: AtomicUsize,
}

impl FaultPlan {
    pub fn fail_first(n: usize) -> Self {
        Self {
            fail_first: n,
            calls: AtomicUsize::new(0),
        }
    }

    /// Registers a call; returns its 1-based number if it must fail.
    fn take(&self) -> Option<usize> {
        let call = self.calls.fetch_add(1, Ordering::SeqCst) + 1;
        (call <= self.fail_first).then_some(call)
    }
}

/// Stub outcome for `cfg`: the first validation error, else success with
/// a single `best_solution.json` artifact.
pub fn stub_tool(cfg: &DesignConfig, fault_plan: Option<&FaultPlan>) -> ToolOutcome {
    if let Some(call) = fault_plan.and_then(FaultPlan::take) {
        return ToolOutcome::failure(format!("injected fault on call {call}"));
    }
    let report = validate_config(cfg);
    if let Some(first) = report.errors.first() {
        return ToolOutcome::failure(first.to_string());
    }
    ToolOutcome::success(
        format!("optimization finished; best solution for config {}", &config_digest(cfg)[..16]),
        vec![STUB_ARTIFACT.to_string()],
    )
}

/// In-process stand-in for the real design tool.
#[derive(Debug, Default)]
pub struct StubTool {
    fault_plan: Option<FaultPlan>,
}

impl StubTool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_fault_plan(plan: FaultPlan) -> Self {
        Self { fault_plan: Some(plan) }
    }
}

impl DesignTool for StubTool {
    fn run(&self, cfg: &DesignConfig, workdir: &Path) -> Result<ToolOutcome, ToolError> {
        prepare_workdir(workdir)?;
        let config_path = workdir.join(CONFIG_FILE);
        fs::write(&config_path, render_config(cfg)).map_err(io_err(&config_path))?;
        let outcome = stub_tool(cfg, self.fault_plan.as_ref());
        if outcome.is_success() {
            let path = workdir.join(STUB_ARTIFACT);
            let body = json!({
                "config_digest": config_digest(cfg),
                "foldername": cfg.foldername,
            });
            let text = serde_json::to_string_pretty(&body).expect("json value serializes") + "\n";
            fs::write(&path, text).map_err(io_err(&path))?;
        }
        Ok(outcome)
    }
}

/// The single line a bridge prints on stdout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BridgeEnvelope {
    pub status: String,
    pub message: String,
    pub artifacts: Vec<String>,
}

pub fn render_bridge_envelope(envelope: &BridgeEnvelope) -> String {
    serde_json::to_string(envelope).expect("envelope serializes")
}

/// Parses bridge stdout. Exactly one non-blank line is allowed.
pub fn parse_bridge_output(stdout: &str) -> Result<BridgeEnvelope, String> {
    let lines: Vec<&str> = stdout.lines().filter(|l| !l.trim().is_empty()).collect();
    let [line] = lines.as_slice() else {
        return Err(format!("expected exactly one envelope line, got {}", lines.len()));
    };
    let envelope: BridgeEnvelope = serde_json::from_str(line).map_err(|e| format!("unparseable envelope: {e}"))?;
    if envelope.status != "success" && envelope.status != "error" {
        return Err(format!("unknown envelope status `{}`", envelope.status));
    }
    Ok(envelope)
}

fn classify_envelope(envelope: BridgeEnvelope, workdir: &Path) -> ToolOutcome {
    if envelope.status == "error" {
        return ToolOutcome::failure(envelope.message);
    }
    if envelope.artifacts.is_empty() {
        return ToolOutcome::failure("bridge protocol error: success envelope lists no artifacts");
    }
    for artifact in &envelope.artifacts {
        if !workdir.join(artifact).exists() {
            return ToolOutcome::failure(format!("bridge protocol error: listed artifact `{artifact}` does not exist"));
        }
    }
    ToolOutcome::success(envelope.message, envelope.artifacts)
}

/// Runs an external bridge as `<command...> <config-path> <workdir>`.
#[derive(Debug, Clone)]
pub struct BridgeTool {
    command: Vec<String>,
    timeout: Duration,
}

impl BridgeTool {
    pub fn new(command: Vec<String>, timeout: Duration) -> Result<Self, ToolError> {
        if command.first().map_or(true, |c| c.trim().is_empty()) {
            return Err(ToolError::EmptyCommand);
        }
        Ok(Self { command, timeout })
    }
}

impl DesignTool for BridgeTool {
    fn run(&self, cfg: &DesignConfig, workdir: &Path) -> Result<ToolOutcome, ToolError> {
        prepare_workdir(workdir)?;
        let config_path = workdir.join(CONFIG_FILE);
        fs::write(&config_path, render_config(cfg)).map_err(io_err(&config_path))?;
        let stderr_path = workdir.join(BRIDGE_STDERR_FILE);
        let stderr = File::create(&stderr_path).map_err(io_err(&stderr_path))?;

        let mut child = Command::new(&self.command[0])
            .args(&self.command[1..])
            .arg(&config_path)
            .arg(workdir)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(stderr)
            .spawn()
            .map_err(|e| ToolError::Spawn {
                command: self.command.join(" "),
                message: e.to_string(),
            })?;

        let mut stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut buf = Vec::new();
            let res = stdout.read_to_end(&mut buf).map(|_| buf);
            let _ = tx.send(res);
        });

        let deadline = Instant::now() + self.timeout;
        let status = loop {
            match child.try_wait().map_err(io_err(workdir))? {
                Some(status) => break status,
                None if Instant::now() >= deadline => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Ok(ToolOutcome::failure(format!(
                        "design tool timed out after {}s",
                        self.timeout.as_secs_f64()
                    )));
                }
                None => thread::sleep(Duration::from_millis(10)),
            }
        };

        // A grandchild may keep the pipe open; do not wait on it forever.
        let grace = deadline.saturating_duration_since(Instant::now()).max(Duration::from_secs(1));
        let bytes = match rx.recv_timeout(grace) {
            Ok(Ok(bytes)) => bytes,
            Ok(Err(e)) => return Ok(ToolOutcome::failure(format!("bridge protocol error: reading stdout: {e}"))),
            Err(_) => return Ok(ToolOutcome::failure("bridge protocol error: stdout not closed after exit")),
        };
        let text = match String::from_utf8(bytes) {
            Ok(t) => t,
            Err(_) => return Ok(ToolOutcome::failure("bridge protocol error: stdout is not UTF-8")),
        };
        let envelope = match parse_bridge_output(&text) {
            Ok(env) => env,
            Err(e) => return Ok(ToolOutcome::failure(format!("bridge protocol error: {e}"))),
        };
        if (envelope.status == "success") != status.success() {
            warn!(status = %envelope.status, exit = ?status.code(), "bridge exit code disagrees with envelope");
        }
        Ok(classify_envelope(envelope, workdir))
    }
}

/// Which design tool to run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ToolKind {
    Stub,
    Real { command: Vec<String> },
}

/// One-shot convenience over [`DesignTool::run`].
pub fn run_tool(cfg: &DesignConfig, workdir: &Path, kind: &ToolKind, timeout: Duration) -> Result<ToolOutcome, ToolError> {
    match kind {
        ToolKind::Stub => StubTool::new().run(cfg, workdir),
        ToolKind::Real { command } => BridgeTool::new(command.clone(), timeout)?.run(cfg, workdir),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::configschema::{reference_config, REFERENCE_CONFIGS};

    #[test]
    fn stub_accepts_every_reference_config() {
        for (name, _) in REFERENCE_CONFIGS {
            let cfg = reference_config(name).unwrap();
            let outcome = stub_tool(&cfg, None);
            assert!(outcome.is_success(), "{name}: {}", outcome.message);
            assert_eq!(outcome.artifacts, [STUB_ARTIFACT]);
        }
    }

    #[test]
    fn stub_names_first_error() {
        let mut cfg = reference_config("kitaev_swap_chain").unwrap();
        cfg.in_nodes.push(cfg.vertex_count() as i64);
        let outcome = stub_tool(&cfg, None);
        assert_eq!(outcome.status, ToolStatus::Failure);
        assert!(outcome.message.starts_with("vertex-range: "), "{}", outcome.message);
        assert!(outcome.message.contains(&cfg.vertex_count().to_string()));
        assert_eq!(stub_tool(&cfg, None), outcome);
    }

    #[test]
    fn fault_plan_fails_then_recovers() {
        let cfg = reference_config("remote_swap").unwrap();
        let plan = FaultPlan::fail_first(1);
        assert!(!stub_tool(&cfg, Some(&plan)).is_success());
        assert!(stub_tool(&cfg, Some(&plan)).is_success());
    }

    #[test]
    fn stub_writes_artifact_and_rejects_dirty_workdir() {
        let dir = tempfile::tempdir().unwrap();
        let work = dir.path().join("w");
        let cfg = reference_config("kitaev_swap_chain").unwrap();
        let outcome = StubTool::new().run(&cfg, &work).unwrap();
        assert!(outcome.is_success());
        assert!(work.join(STUB_ARTIFACT).is_file());
        assert_eq!(
            StubTool::new().run(&cfg, &work),
            Err(ToolError::WorkdirNotEmpty(work.clone()))
        );
    }

    #[test]
    fn envelope_parsing() {
        let ok = parse_bridge_output("{\"status\":\"success\",\"message\":\"m\",\"artifacts\":[\"a\"]}\n").unwrap();
        assert_eq!(ok.artifacts, ["a"]);
        assert!(parse_bridge_output("").is_err());
        assert!(parse_bridge_output("x\n{}\n").is_err());
        assert!(parse_bridge_output("{\"status\":\"done\",\"message\":\"\",\"artifacts\":[]}").is_err());
        assert!(parse_bridge_output("{\"status\":\"error\",\"message\":\"\",\"artifacts\":[],\"extra\":1}").is_err());
        assert_eq!(render_bridge_envelope(&ok), "{\"status\":\"success\",\"message\":\"m\",\"artifacts\":[\"a\"]}");
    }
}
