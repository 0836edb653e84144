//! Proptest generators for action envelopes and raw model turns.

use mandel::protocol::{allowed_actions, ActionEnvelope, Role};
use proptest::prelude::*;

/// Roles with a non-empty action registry.
pub const ACTING_ROLES: [Role; 4] = [Role::Researcher, Role::NoveltySupervisor, Role::Judge, Role::Expert];

pub fn role() -> impl Strategy<Value = Role> {
    prop::sample::select(ACTING_ROLES.to_vec())
}

fn starts_with_label(line: &str) -> bool {
    let rest = line.trim_start_matches([' ', '\t']);
    rest.starts_with("Thought:") || rest.starts_with("Action:") || rest.starts_with("Action Input:")
}

/// Section text: trimmed, non-empty, and free of label lines.
pub fn section() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9 {}\\[\\]\":,.()'-]{0,30}(\n[a-zA-Z0-9 {}\":,.-]{0,30}){0,4}"
        .prop_map(|s| s.trim().to_string())
        .prop_filter("non-empty, no label lines", |s| !s.is_empty() && !s.lines().any(starts_with_label))
}

/// A role and a valid envelope for it.
pub fn envelope() -> impl Strategy<Value = (Role, ActionEnvelope)> {
    (role(), section(), section(), any::<prop::sample::Index>()).prop_map(|(role, t, i, pick)| {
        let actions: Vec<_> = allowed_actions(role).into_iter().collect();
        let action = actions[pick.index(actions.len())];
        (role, ActionEnvelope::new(t, action, i).unwrap())
    })
}

/// Raw turns assembled from label lines and filler lines in arbitrary order,
/// with duplicates.
pub fn marker_soup() -> impl Strategy<Value = String> {
    let piece = prop_oneof![
        3 => ("[ \t]{0,2}", prop::sample::select(vec!["Thought:", "Action:", "Action Input:"]), "[ a-z]{0,8}")
            .prop_map(|(ws, label, tail)| format!("{ws}{label}{tail}")),
        1 => prop::sample::select(vec![
            " arxiv", " final answer", " accept", " reject", " pytheus", " Accept", " FINAL ANSWER"
        ]).prop_map(|a| format!("Action:{a}")),
        2 => "[a-z ]{0,12}(Action:|Thought:)?[a-z ]{0,6}",
        1 => Just(String::new()),
        1 => Just("thought: lowercase label".to_string()),
    ];
    (prop::collection::vec(piece, 0..10), prop::bool::ANY).prop_map(|(lines, crlf)| {
        lines.join(if crlf { "\r\n" } else { "\n" })
    })
}
