//! The trie-accelerated mask is bit-identical to the per-token oracle on
//! adversarial vocabularies and a spread of recognizer states.

mod common;

use std::sync::Arc;

use gramdec::grammar::{augment_with_delimiters, parse_grammar_text, SharedGrammar};
use gramdec::mask::{compute_mask, compute_mask_naive, TokenTrie, Vocabulary};
use gramdec::recognizer::RecognizerState;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

const GSM_EXPR: &str = include_str!("../fixtures/grammars/gsm_expr.lark");
const PROVER9: &str = include_str!("../fixtures/grammars/prover9.lark");

/// Vocabulary stressing the trie: overlapping prefixes, duplicate spellings,
/// multi-byte operators, bytes the grammars never accept.
fn tricky_vocab() -> Vocabulary {
    let mut tokens: Vec<Vec<u8>> = vec![Vec::new()]; // eos
    for t in [
        "a", "ab", "abc", "b", "(", ")", "((", "))", "<<", ">>", "<", ">", "+", " + ", "-",
        " - ", "//", "/", "%", "*", " ", "  ", "int", "int(", "in", "i", "1", "12", "123",
        "0", "x", "y", "tf", "t", "f", "_", "x_1", "\n", "\t", "\u{00}", "\u{7f}", "Pred",
        "Predicates:", "{and}", "{or}", "{", "}", ":::", "::: ", "q(", "q)",
    ] {
        tokens.push(t.as_bytes().to_vec());
    }
    // Duplicate spellings under distinct ids.
    tokens.push(b"ab".to_vec());
    tokens.push(b" + ".to_vec());
    Vocabulary::new(tokens, 0).unwrap()
}

fn assert_masks_agree(g: &SharedGrammar, vocab: &Vocabulary, trie: &TokenTrie, prefixes: &[Vec<u8>]) {
    for p in prefixes {
        let st = RecognizerState::init(g).advance(p);
        let naive = compute_mask_naive(&st, vocab);
        let fast = compute_mask(&st, vocab, trie);
        assert_eq!(
            naive,
            fast,
            "masks differ after {:?}",
            String::from_utf8_lossy(p)
        );
    }
}

/// Prefixes drawn by random walks that sometimes follow the mask (staying
/// viable) and sometimes inject junk (going dead).
fn random_prefixes(g: &SharedGrammar, vocab: &Vocabulary, trie: &TokenTrie, n: usize, seed: u64) -> Vec<Vec<u8>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for _ in 0..n {
        let mut st = RecognizerState::init(g);
        let mut text: Vec<u8> = Vec::new();
        let steps = rng.gen_range(0..12);
        for _ in 0..steps {
            if rng.gen_bool(0.8) {
                let mask = compute_mask(&st, vocab, trie);
                let allowed: Vec<u32> =
                    mask.iter_allowed().filter(|&t| t != vocab.eos_id()).collect();
                if allowed.is_empty() {
                    break;
                }
                let tok = allowed[rng.gen_range(0..allowed.len())];
                text.extend_from_slice(vocab.token_bytes(tok));
                st.advance_in_place(vocab.token_bytes(tok));
            } else {
                let tok = rng.gen_range(1..vocab.len() as u32);
                text.extend_from_slice(vocab.token_bytes(tok));
                st.advance_in_place(vocab.token_bytes(tok));
            }
        }
        out.push(text);
    }
    out
}

#[test]
fn masks_agree_on_expression_grammar() {
    let g: SharedGrammar = Arc::new(parse_grammar_text(GSM_EXPR).unwrap());
    let vocab = tricky_vocab();
    let trie = TokenTrie::build(&vocab);
    let prefixes = random_prefixes(&g, &vocab, &trie, 120, 11);
    assert_masks_agree(&g, &vocab, &trie, &prefixes);
}

#[test]
fn masks_agree_on_augmented_grammar() {
    let body: SharedGrammar = Arc::new(parse_grammar_text(GSM_EXPR).unwrap());
    let g: SharedGrammar = Arc::new(augment_with_delimiters(&body, b"<<", b">>").unwrap());
    let vocab = tricky_vocab();
    let trie = TokenTrie::build(&vocab);
    let mut prefixes = random_prefixes(&g, &vocab, &trie, 120, 17);
    prefixes.push(b"<<".to_vec());
    prefixes.push(b"<<tf - t".to_vec());
    prefixes.push(b"<<tf - t>".to_vec());
    prefixes.push(b"<<tf - t>>".to_vec());
    assert_masks_agree(&g, &vocab, &trie, &prefixes);
}

#[test]
fn masks_agree_on_logic_grammar() {
    let g: SharedGrammar = Arc::new(parse_grammar_text(PROVER9).unwrap());
    let vocab = tricky_vocab();
    let trie = TokenTrie::build(&vocab);
    let mut prefixes = random_prefixes(&g, &vocab, &trie, 120, 23);
    prefixes.push(b"Predicates:".to_vec());
    prefixes.push(b"Predicates:\nPred(q".to_vec());
    assert_masks_agree(&g, &vocab, &trie, &prefixes);
}

#[test]
fn eos_bit_tracks_membership() {
    let g: SharedGrammar = Arc::new(parse_grammar_text(GSM_EXPR).unwrap());
    let vocab = tricky_vocab();
    let trie = TokenTrie::build(&vocab);
    for (prefix, member) in [
        (&b"tf - t"[..], true),
        (&b"tf -"[..], false),
        (&b"tf"[..], true),
        (&b"junk!"[..], false),
    ] {
        let st = RecognizerState::init(&g).advance(prefix);
        let mask = compute_mask(&st, &vocab, &trie);
        assert_eq!(
            mask.allowed(vocab.eos_id()),
            member,
            "eos bit wrong after {:?}",
            String::from_utf8_lossy(prefix)
        );
    }
}

#[test]
fn duplicate_spellings_share_fate() {
    let g: SharedGrammar = Arc::new(parse_grammar_text(GSM_EXPR).unwrap());
    let vocab = tricky_vocab();
    let trie = TokenTrie::build(&vocab);
    let dup_a: Vec<u32> = (0..vocab.len() as u32)
        .filter(|&t| vocab.token_bytes(t) == b"ab")
        .collect();
    assert!(dup_a.len() >= 2, "fixture needs duplicate spellings");
    let st = RecognizerState::init(&g).advance(b"a");
    let mask = compute_mask(&st, &vocab, &trie);
    for pair in dup_a.windows(2) {
        assert_eq!(mask.allowed(pair[0]), mask.allowed(pair[1]));
    }
}
