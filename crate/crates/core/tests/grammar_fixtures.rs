//! The bundled grammars parse and accept/reject the strings they should.

use std::sync::Arc;

use gramdec::grammar::{augment_with_delimiters, parse_grammar_text, specialize_terminal, SharedGrammar};
use gramdec::recognizer::{is_member, PrefixStatus, RecognizerState};

const GSM_SYMBOLIC: &str = include_str!("../fixtures/grammars/gsm_symbolic.lark");
const GSM_EXPR: &str = include_str!("../fixtures/grammars/gsm_expr.lark");
const PROVER9: &str = include_str!("../fixtures/grammars/prover9.lark");
const FOL_EXAMPLE: &str = include_str!("../fixtures/datasets/fol_example.txt");

fn load(text: &str) -> SharedGrammar {
    Arc::new(parse_grammar_text(text).expect("fixture grammar must parse"))
}

/// Answers produced by the few-shot templates; each must be a member once
/// wrapped in delimiters.
const TEMPLATE_ANSWERS: &[&str] = &[
    "tf - t",
    "c + nc",
    "ch1 + ch2 - a",
    "m - q * p",
    "c + nc * (d2 - d1 + 1)",
];

#[test]
fn gsm_symbolic_accepts_template_answers() {
    let g = load(GSM_SYMBOLIC);
    for ans in TEMPLATE_ANSWERS {
        let wrapped = format!("<<{}>>", ans);
        assert!(is_member(&g, wrapped.as_bytes()), "rejected {:?}", wrapped);
    }
}

#[test]
fn gsm_expr_accepts_bare_template_answers() {
    let g = load(GSM_EXPR);
    for ans in TEMPLATE_ANSWERS {
        assert!(is_member(&g, ans.as_bytes()), "rejected {:?}", ans);
    }
}

#[test]
fn gsm_operators_and_functions() {
    let g = load(GSM_SYMBOLIC);
    for ok in [
        "<<7 // 2>>",
        "<<7 % 2>>",
        "<<a / b>>",
        "<<int(end_hour - start_hour)>>",
        "<<-x>>",
        "<< tf - t >>",
        "<<first_hour_cost + (int(end_hour - start_hour) - free_hours - 1) * multiplier * first_hour_cost>>",
    ] {
        assert!(is_member(&g, ok.as_bytes()), "rejected {:?}", ok);
    }
    for bad in [
        "<<tf -->>",
        "<<(tf - t>>",
        "<<tf + >>",
        "tf - t",
        // method calls are not part of the language
        "<<int((end_hour - start_hour).total_seconds() / 3600)>>",
    ] {
        assert!(!is_member(&g, bad.as_bytes()), "accepted {:?}", bad);
    }
}

#[test]
fn gsm_type_keyword_beats_variable_lexing() {
    let g = load(GSM_SYMBOLIC);
    // TYPE has priority 4, so "int" never lexes as a variable; a bare "int"
    // must therefore be rejected while "int(x)" is fine.
    assert!(is_member(&g, b"<<int(x)>>"));
    assert!(!is_member(&g, b"<<int>>"));
}

#[test]
fn variable_specialization_restricts_membership() {
    let g = load(GSM_EXPR);
    let spec = Arc::new(
        specialize_terminal(&g, "VARIABLE", &["tf".into(), "t".into()]).unwrap(),
    );
    assert!(is_member(&spec, b"tf - t"));
    assert!(!is_member(&spec, b"x - t"));
    // Maximal munch: "tf" must not lex as "t" then dead "f".
    assert!(is_member(&spec, b"tf"));
    let single = Arc::new(specialize_terminal(&g, "VARIABLE", &["v".into()]).unwrap());
    assert!(is_member(&single, b"v"));
}

#[test]
fn augmented_expr_matches_wrapped_language() {
    // Wrapping the body grammar in delimiters accepts exactly the wrapped
    // strings the self-delimited grammar accepts.
    let body = load(GSM_EXPR);
    let aug = Arc::new(augment_with_delimiters(&body, b"<<", b">>").unwrap());
    let full = load(GSM_SYMBOLIC);
    for ans in TEMPLATE_ANSWERS {
        let wrapped = format!("<<{}>>", ans);
        assert_eq!(
            is_member(&aug, wrapped.as_bytes()),
            is_member(&full, wrapped.as_bytes()),
            "disagreement on {:?}",
            wrapped
        );
        assert!(is_member(&aug, wrapped.as_bytes()));
    }
    assert!(!is_member(&aug, b"<<tf + >>"));
}

#[test]
fn prover9_accepts_full_example() {
    let g = load(PROVER9);
    assert!(is_member(&g, FOL_EXAMPLE.as_bytes()));
}

#[test]
fn prover9_rejects_mutations() {
    let g = load(PROVER9);
    // Unbalanced parenthesis in a premise.
    let unbalanced = FOL_EXAMPLE.replacen("(Perform(x) {xor} Inactive(x))", "(Perform(x) {xor} Inactive(x)", 1);
    assert_ne!(unbalanced, FOL_EXAMPLE);
    assert!(!is_member(&g, unbalanced.as_bytes()));
    // Missing the conclusion section entirely.
    let no_conclusion = &FOL_EXAMPLE[..FOL_EXAMPLE.find("Conclusion:").unwrap()];
    assert!(!is_member(&g, no_conclusion.as_bytes()));
    // Lowercase predicate name.
    let lower = FOL_EXAMPLE.replacen("InClub(bonnie) {and}", "inClub(bonnie) {and}", 1);
    assert!(!is_member(&g, lower.as_bytes()));
    // A comment must end with a newline.
    let clipped = FOL_EXAMPLE.trim_end_matches('\n');
    assert!(!is_member(&g, clipped.as_bytes()));
}

#[test]
fn prover9_partial_document_is_a_viable_prefix() {
    let g = load(PROVER9);
    let cut = FOL_EXAMPLE.find("Premises:").unwrap();
    let st = RecognizerState::init(&g).advance(FOL_EXAMPLE[..cut].as_bytes());
    assert_eq!(st.status(), PrefixStatus::ValidPrefix);
}
