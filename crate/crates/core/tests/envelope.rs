use mandel::protocol::{parse_envelope, render_envelope, ActionEnvelope, ProtocolError, Role, RoleGrammar};
use mandel_testkit::envelope_oracle::{classify, reference_parse};
use mandel_testkit::strategies::{envelope, marker_soup, role};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn parse_inverts_render((role, env) in envelope()) {
        let grammar = RoleGrammar::for_role(role);
        prop_assert_eq!(parse_envelope(&render_envelope(&env), &grammar), Ok(env));
    }

    #[test]
    fn parse_matches_marker_scan(raw in marker_soup(), role in role()) {
        let got = parse_envelope(&raw, &RoleGrammar::for_role(role));
        prop_assert_eq!(classify(&got), reference_parse(&raw, role), "raw: {:?}", raw);
    }

    #[test]
    fn parse_is_total_on_text(raw in any::<String>(), role in role()) {
        let got = parse_envelope(&raw, &RoleGrammar::for_role(role));
        prop_assert_eq!(classify(&got), reference_parse(&raw, role));
    }

    #[test]
    fn parse_is_total_on_bytes(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
        let raw = String::from_utf8_lossy(&bytes);
        for role in Role::ALL {
            let _ = parse_envelope(&raw, &RoleGrammar::for_role(role));
        }
    }
}

#[test]
fn validation_is_role_sensitive() {
    let raw = "Thought: run it\nAction: pytheus\nAction Input: {}";
    assert!(parse_envelope(raw, &RoleGrammar::for_role(Role::Expert)).is_ok());
    match parse_envelope(raw, &RoleGrammar::for_role(Role::Judge)) {
        Err(ProtocolError::UnknownAction { action, role, .. }) => {
            assert_eq!(action, "pytheus");
            assert_eq!(role, Role::Judge);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn multiline_input_renders_byte_for_byte() {
    let expected = include_str!("../fixtures/envelopes/multiline.txt");
    let env = ActionEnvelope::new(
        "The second threshold was too strict.",
        "pytheus",
        "{\n  \"thresholds\": [0.3, 0.1],\n\n  \"num_anc\": 4\n}\n   trailing indented line",
    )
    .unwrap();
    assert_eq!(render_envelope(&env), expected);
    assert_eq!(parse_envelope(expected, &RoleGrammar::for_role(Role::Expert)).unwrap(), env);
}

#[test]
fn accept_verdict_renders_three_sections() {
    let env = ActionEnvelope::new("Novel enough.", "accept", "No overlap with the pool.").unwrap();
    let text = render_envelope(&env);
    assert!(text.contains("\nAction: accept\n"));
    assert_eq!(text.matches("\n\n").count(), 2);
}
