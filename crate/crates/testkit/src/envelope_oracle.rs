//! Brute-force marker scan: enumerate every well-ordered label triple and keep
//! the last one.

use mandel::protocol::{allowed_actions, Role};
use regex::Regex;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Label {
    Thought,
    Action,
    Input,
}

/// Expected parse result: `Ok((thought, action, input))` or the name of the
/// error (`"missing:thought"`, `"missing:action"`, `"missing:input"`,
/// `"unknown-action"`).
pub type Expected = Result<(String, String, String), &'static str>;

struct Hit {
    label: Label,
    line_start: usize,
    content_start: usize,
}

fn hits(raw: &str) -> Vec<Hit> {
    let re = Regex::new(r"(?m)^[ \t]*(Action Input:|Action:|Thought:)").expect("static pattern");
    re.captures_iter(raw)
        .map(|c| {
            let whole = c.get(0).expect("match");
            let label = match &c[1] {
                "Thought:" => Label::Thought,
                "Action:" => Label::Action,
                _ => Label::Input,
            };
            Hit {
                label,
                line_start: whole.start(),
                content_start: whole.end(),
            }
        })
        .collect()
}

pub fn reference_parse(raw: &str, role: Role) -> Expected {
    let hs = hits(raw);
    let n = hs.len();
    let mut best: Option<(usize, usize, usize)> = None;
    let mut any_input = false;
    let mut any_pair = false;
    for k in 0..n {
        if hs[k].label != Label::Input {
            continue;
        }
        any_input = true;
        for j in 0..k {
            if hs[j].label != Label::Action {
                continue;
            }
            any_pair = true;
            for i in 0..j {
                if hs[i].label != Label::Thought {
                    continue;
                }
                let key = (k, j, i);
                if best.map_or(true, |b| (key.0, key.1, key.2) > (b.0, b.1, b.2)) {
                    best = Some(key);
                }
            }
        }
    }
    let Some((k, j, i)) = best else {
        return Err(if !any_input {
            "missing:input"
        } else if !any_pair {
            "missing:action"
        } else {
            "missing:thought"
        });
    };
    let thought = raw[hs[i].content_start..hs[j].line_start].trim();
    let action = raw[hs[j].content_start..hs[k].line_start].trim().to_lowercase();
    let input = raw[hs[k].content_start..].trim();
    if thought.is_empty() {
        return Err("missing:thought");
    }
    if action.is_empty() {
        return Err("missing:action");
    }
    if input.is_empty() {
        return Err("missing:input");
    }
    if action.contains('\n') || action.contains('\r') || !allowed_actions(role).contains(action.as_str()) {
        return Err("unknown-action");
    }
    Ok((thought.to_string(), action, input.to_string()))
}

/// Maps a production parse result onto the oracle's vocabulary.
pub fn classify(result: &Result<mandel::protocol::ActionEnvelope, mandel::protocol::ProtocolError>) -> Expected {
    use mandel::protocol::{ProtocolError, Section};
    match result {
        Ok(e) => Ok((e.thought.clone(), e.action.clone(), e.action_input.clone())),
        Err(ProtocolError::MissingSection(Section::Thought)) => Err("missing:thought"),
        Err(ProtocolError::MissingSection(Section::Action)) => Err("missing:action"),
        Err(ProtocolError::MissingSection(Section::ActionInput)) => Err("missing:input"),
        Err(ProtocolError::UnknownAction { .. }) => Err("unknown-action"),
    }
}
