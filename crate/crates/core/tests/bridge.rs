use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use mandel::configschema::{parse_config, reference_config, render_config};
use mandel::toolrunner::{
    parse_bridge_output, render_bridge_envelope, BridgeEnvelope, BridgeTool, DesignTool, ToolError, ToolOutcome,
    ToolStatus, CONFIG_FILE,
};

/// Runs `body` as a shell bridge (`$1` is the config path, `$2` the work dir).
fn run_bridge(body: &str, timeout: Duration) -> (ToolOutcome, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("bridge.sh");
    fs::write(&script, body).unwrap();
    let work = dir.path().join("work");
    let tool = BridgeTool::new(vec!["sh".into(), script.display().to_string()], timeout).unwrap();
    let outcome = tool.run(&reference_config("remote_swap").unwrap(), &work).unwrap();
    (outcome, dir)
}

fn quick(body: &str) -> ToolOutcome {
    run_bridge(body, Duration::from_secs(10)).0
}

fn assert_failure_mentions(outcome: &ToolOutcome, needle: &str) {
    assert_eq!(outcome.status, ToolStatus::Failure, "{outcome:?}");
    assert!(outcome.message.contains(needle), "{:?} lacks {needle:?}", outcome.message);
}

#[test]
fn success_with_artifact() {
    let (outcome, dir) = run_bridge(
        r#"cp "$1" "$2/best.json"
echo "progress on stderr" >&2
echo '{"status":"success","message":"fidelity 1.0","artifacts":["best.json"]}'
"#,
        Duration::from_secs(10),
    );
    assert!(outcome.is_success(), "{outcome:?}");
    assert_eq!(outcome.artifacts, ["best.json"]);
    assert_eq!(outcome.message, "fidelity 1.0");
    let work = dir.path().join("work");
    let written = fs::read_to_string(work.join(CONFIG_FILE)).unwrap();
    assert_eq!(written, render_config(&reference_config("remote_swap").unwrap()));
    assert_eq!(parse_config(&fs::read_to_string(work.join("best.json")).unwrap()).unwrap(), reference_config("remote_swap").unwrap());
    assert!(fs::read_to_string(work.join("bridge.stderr")).unwrap().contains("progress on stderr"));
}

#[test]
fn listed_artifact_must_exist() {
    let outcome = quick(r#"echo '{"status":"success","message":"ok","artifacts":["nowhere.json"]}'"#);
    assert_failure_mentions(&outcome, "nowhere.json");
    let outcome = quick(r#"echo '{"status":"success","message":"ok","artifacts":[]}'"#);
    assert_failure_mentions(&outcome, "no artifacts");
}

#[test]
fn error_envelope_is_a_failure_with_its_message() {
    let outcome = quick(
        r#"echo '{"status":"error","message":"no perfect matching reaches the target","artifacts":[]}'
exit 3"#,
    );
    assert_failure_mentions(&outcome, "no perfect matching reaches the target");
}

#[test]
fn slow_bridge_times_out() {
    let start = Instant::now();
    let (outcome, _dir) = run_bridge("sleep 5\necho never", Duration::from_millis(300));
    assert_failure_mentions(&outcome, "timed out");
    assert!(start.elapsed() < Duration::from_secs(4));
}

#[test]
fn malformed_stdout_is_a_protocol_error() {
    let two = r#"echo '{"status":"error","message":"a","artifacts":[]}'
echo '{"status":"error","message":"b","artifacts":[]}'"#;
    assert_failure_mentions(&quick(two), "exactly one");
    assert_failure_mentions(&quick("echo 'Traceback (most recent call last):'"), "unparseable");
    assert_failure_mentions(&quick("true"), "exactly one");
    assert_failure_mentions(&quick(r#"echo '{"status":"maybe","message":"","artifacts":[]}'"#), "maybe");
    assert_failure_mentions(&quick(r#"printf '\377\376\n'"#), "UTF-8");
}

#[test]
fn dirty_workdir_and_missing_binary_are_harness_errors() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("leftover"), "x").unwrap();
    let tool = BridgeTool::new(vec!["true".into()], Duration::from_secs(5)).unwrap();
    let cfg = reference_config("remote_swap").unwrap();
    assert!(matches!(tool.run(&cfg, dir.path()), Err(ToolError::WorkdirNotEmpty(_))));

    let missing = BridgeTool::new(vec!["/nonexistent/bridge".into()], Duration::from_secs(5)).unwrap();
    assert!(matches!(missing.run(&cfg, &dir.path().join("fresh")), Err(ToolError::Spawn { .. })));
    assert!(matches!(BridgeTool::new(vec![], Duration::from_secs(1)), Err(ToolError::EmptyCommand)));
}

#[test]
fn envelope_wire_format_round_trips() {
    let env = BridgeEnvelope {
        status: "success".into(),
        message: "done \"quoted\"\nsecond line".into(),
        artifacts: vec!["a.json".into(), "sub/b.json".into()],
    };
    let line = render_bridge_envelope(&env);
    assert!(!line.contains('\n'));
    assert_eq!(parse_bridge_output(&format!("\n{line}\n\n")).unwrap(), env);
    assert!(parse_bridge_output(r#"{"status":"success","message":"","artifacts":[],"extra":1}"#).is_err());
}

#[test]
fn scripts_see_their_arguments() {
    let (outcome, dir) = run_bridge(
        r#"test -f "$1" && test -d "$2" || exit 9
echo ok > "$2/args.txt"
echo '{"status":"success","message":"args fine","artifacts":["args.txt"]}'"#,
        Duration::from_secs(10),
    );
    assert!(outcome.is_success(), "{outcome:?}");
    assert!(Path::new(&dir.path().join("work/args.txt")).is_file());
}
