//! Decoding loops. Three modes share the sampling machinery:
//!
//! - `unconstrained_generate`: sample from raw scores until eos or budget.
//! - `constrained_generate`: every step is masked against a grammar from the
//!   first generated byte onward.
//! - `adaptive_generate`: generation runs free until the opening delimiter
//!   appears in the text produced since the last window closed; from then on
//!   steps are masked against the delimiter-augmented grammar until the text
//!   ends with the closing delimiter in a member state, at which point the
//!   window closes and generation runs free again. Multiple windows per
//!   generation are possible.
//!
//! The recognizer for an open window advances incrementally per token; the
//! token mask is computed with the shared-prefix trie walk.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::grammar::{augment_with_delimiters, GrammarError, SharedGrammar};
use crate::lm::{LanguageModel, LmError};
use crate::mask::{apply_mask, compute_mask, MaskError, TokenTrie, Vocabulary};
use crate::recognizer::RecognizerState;
use crate::util::find_bytes;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    /// Highest score wins; ties go to the lowest token id.
    Greedy,
    /// Softmax sampling at the given temperature (must be finite and > 0).
    Temperature(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OnNoViable {
    /// Fail the generation with diagnostics.
    Abort,
    /// Append the closing delimiter's token tiling, mark the window as force
    /// closed, and resume free generation.
    CloseWindow,
}

#[derive(Debug, Clone)]
pub struct DecodeOptions {
    pub max_new_tokens: usize,
    pub strategy: Strategy,
    pub seed: u64,
    pub on_no_viable: OnNoViable,
}

impl Default for DecodeOptions {
    fn default() -> DecodeOptions {
        DecodeOptions {
            max_new_tokens: 256,
            strategy: Strategy::Greedy,
            seed: 0,
            on_no_viable: OnNoViable::Abort,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepMode {
    Free,
    Masked,
    /// Appended by the force-close policy, not sampled.
    Forced,
}

#[derive(Debug, Clone)]
pub struct StepRecord {
    pub index: usize,
    pub token_id: u32,
    pub bytes: Vec<u8>,
    pub mode: StepMode,
}

/// A constrained span. Steps `start_step..end_step` were masked (forced
/// steps included). `complete` records whether the window text was a member
/// of the augmented grammar when the window ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowRecord {
    pub start_step: usize,
    pub end_step: usize,
    pub complete: bool,
    pub force_closed: bool,
}

#[derive(Debug, Clone)]
pub struct Generation {
    /// Generated ids, prompt and eos excluded.
    pub tokens: Vec<u32>,
    pub text: Vec<u8>,
    pub steps: Vec<StepRecord>,
    pub windows: Vec<WindowRecord>,
    pub ended_with_eos: bool,
}

#[derive(Debug, Clone)]
pub struct BlockedToken {
    pub id: u32,
    pub bytes: Vec<u8>,
    pub score: f64,
}

#[derive(Debug)]
pub struct NoViableDiagnostics {
    pub step: usize,
    /// Last bytes of the text the recognizer was tracking.
    pub text_tail: Vec<u8>,
    /// Terminals the parser would have accepted next.
    pub expected_terminals: Vec<String>,
    /// Highest-scoring tokens that the mask rejected.
    pub top_blocked: Vec<BlockedToken>,
}

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("no viable token at step {}", .0.step)]
    NoViableToken(Box<NoViableDiagnostics>),
    #[error("temperature must be finite and positive, got {0}")]
    InvalidTemperature(f64),
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
}

const TAIL_BYTES: usize = 32;
const TOP_BLOCKED: usize = 10;

fn sample(scores: &[f64], strategy: Strategy, rng: &mut ChaCha8Rng) -> Result<Option<u32>, DecodeError> {
    match strategy {
        Strategy::Greedy => {
            let mut best: Option<(u32, f64)> = None;
            for (id, &s) in scores.iter().enumerate() {
                if s == f64::NEG_INFINITY {
                    continue;
                }
                if best.map_or(true, |(_, b)| s > b) {
                    best = Some((id as u32, s));
                }
            }
            Ok(best.map(|(id, _)| id))
        }
        Strategy::Temperature(t) => {
            if !t.is_finite() || t <= 0.0 {
                return Err(DecodeError::InvalidTemperature(t));
            }
            let max = scores
                .iter()
                .copied()
                .filter(|s| *s != f64::NEG_INFINITY)
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return Ok(None);
            }
            let weights: Vec<f64> = scores
                .iter()
                .map(|&s| {
                    if s == f64::NEG_INFINITY {
                        0.0
                    } else {
                        ((s - max) / t).exp()
                    }
                })
                .collect();
            let total: f64 = weights.iter().sum();
            let mut draw = rng.gen::<f64>() * total;
            for (id, &w) in weights.iter().enumerate() {
                draw -= w;
                if draw <= 0.0 && w > 0.0 {
                    return Ok(Some(id as u32));
                }
            }
            // Floating point slack: fall back to the last weighted entry.
            Ok(weights
                .iter()
                .rposition(|&w| w > 0.0)
                .map(|id| id as u32))
        }
    }
}

fn diagnostics(
    step: usize,
    rec: &RecognizerState,
    text: &[u8],
    scores: &[f64],
    vocab: &Vocabulary,
) -> Box<NoViableDiagnostics> {
    let tail_at = text.len().saturating_sub(TAIL_BYTES);
    let mut order: Vec<u32> = (0..vocab.len() as u32).collect();
    order.sort_by(|&a, &b| {
        scores[b as usize]
            .partial_cmp(&scores[a as usize])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let top_blocked = order
        .into_iter()
        .take(TOP_BLOCKED)
        .map(|id| BlockedToken {
            id,
            bytes: vocab.token_bytes(id).to_vec(),
            score: scores[id as usize],
        })
        .collect();
    Box::new(NoViableDiagnostics {
        step,
        text_tail: text[tail_at..].to_vec(),
        expected_terminals: rec.expected_terminal_names(),
        top_blocked,
    })
}

/// Free-running generation: no grammar, raw scores.
pub fn unconstrained_generate(
    lm: &dyn LanguageModel,
    prompt: &[u32],
    opts: &DecodeOptions,
) -> Result<Generation, DecodeError> {
    let vocab = lm.vocabulary();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut tokens: Vec<u32> = prompt.to_vec();
    let mut steps = Vec::new();
    let mut ended_with_eos = false;
    while steps.len() < opts.max_new_tokens {
        let scores = lm.scores(&tokens)?;
        if scores.len() != vocab.len() {
            return Err(LmError::VocabMismatch {
                expected: vocab.len(),
                got: scores.len(),
            }
            .into());
        }
        let Some(token) = sample(&scores, opts.strategy, &mut rng)? else {
            let rec_dummy = RecognizerState::init(&empty_grammar());
            return Err(DecodeError::NoViableToken(diagnostics(
                steps.len(),
                &rec_dummy,
                &vocab.detokenize(&tokens[prompt.len()..]),
                &scores,
                vocab,
            )));
        };
        if token == vocab.eos_id() {
            ended_with_eos = true;
            break;
        }
        steps.push(StepRecord {
            index: steps.len(),
            token_id: token,
            bytes: vocab.token_bytes(token).to_vec(),
            mode: StepMode::Free,
        });
        tokens.push(token);
    }
    let generated = tokens[prompt.len()..].to_vec();
    let text = vocab.detokenize(&generated);
    Ok(Generation {
        tokens: generated,
        text,
        steps,
        windows: Vec::new(),
        ended_with_eos,
    })
}

/// Every step masked against `grammar`, which constrains the generated text
/// (the prompt is context only). Eos is allowed exactly when the text so far
/// is a member.
pub fn constrained_generate(
    lm: &dyn LanguageModel,
    grammar: &SharedGrammar,
    prompt: &[u32],
    opts: &DecodeOptions,
) -> Result<Generation, DecodeError> {
    let vocab = lm.vocabulary();
    let trie = TokenTrie::build(vocab);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut rec = RecognizerState::init(grammar);
    let mut tokens: Vec<u32> = prompt.to_vec();
    let mut steps = Vec::new();
    let mut ended_with_eos = false;
    while steps.len() < opts.max_new_tokens {
        let mut scores = lm.scores(&tokens)?;
        if scores.len() != vocab.len() {
            return Err(LmError::VocabMismatch {
                expected: vocab.len(),
                got: scores.len(),
            }
            .into());
        }
        let mask = compute_mask(&rec, vocab, &trie);
        if !mask.any_allowed() {
            return Err(DecodeError::NoViableToken(diagnostics(
                steps.len(),
                &rec,
                &vocab.detokenize(&tokens[prompt.len()..]),
                &scores,
                vocab,
            )));
        }
        apply_mask(&mut scores, &mask)?;
        let Some(token) = sample(&scores, opts.strategy, &mut rng)? else {
            return Err(DecodeError::NoViableToken(diagnostics(
                steps.len(),
                &rec,
                &vocab.detokenize(&tokens[prompt.len()..]),
                &scores,
                vocab,
            )));
        };
        if token == vocab.eos_id() {
            ended_with_eos = true;
            break;
        }
        rec.advance_in_place(vocab.token_bytes(token));
        steps.push(StepRecord {
            index: steps.len(),
            token_id: token,
            bytes: vocab.token_bytes(token).to_vec(),
            mode: StepMode::Masked,
        });
        tokens.push(token);
    }
    let generated = tokens[prompt.len()..].to_vec();
    let text = vocab.detokenize(&generated);
    Ok(Generation {
        tokens: generated,
        text,
        steps,
        windows: Vec::new(),
        ended_with_eos,
    })
}

struct OpenWindow {
    start_step: usize,
    rec: RecognizerState,
}

/// Delimiter-gated constrained generation. `grammar` describes the answer
/// alone; the window is matched against `s1 answer s2`.
pub fn adaptive_generate(
    lm: &dyn LanguageModel,
    grammar: &SharedGrammar,
    s1: &[u8],
    s2: &[u8],
    prompt: &[u32],
    opts: &DecodeOptions,
) -> Result<Generation, DecodeError> {
    let augmented: SharedGrammar = Arc::new(augment_with_delimiters(grammar, s1, s2)?);
    let vocab = lm.vocabulary();
    let trie = TokenTrie::build(vocab);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut tokens: Vec<u32> = prompt.to_vec();
    // Start of the text span that can still open a window.
    let mut pointer = prompt.len();
    let mut window: Option<OpenWindow> = None;
    let mut windows: Vec<WindowRecord> = Vec::new();
    let mut steps: Vec<StepRecord> = Vec::new();
    let mut ended_with_eos = false;

    while steps.len() < opts.max_new_tokens {
        let mut curr_gen = vocab.detokenize(&tokens[pointer..]);

        // Close check first: the window shuts once its text ends with the
        // closing delimiter in a member state. The step that produced the
        // delimiter was masked; this one is free again.
        if let Some(w) = &window {
            if curr_gen.ends_with(s2) && w.rec.is_complete_member() {
                windows.push(WindowRecord {
                    start_step: w.start_step,
                    end_step: steps.len(),
                    complete: true,
                    force_closed: false,
                });
                window = None;
                pointer = tokens.len();
                curr_gen.clear();
            }
        }

        // Open check: the earliest occurrence of the opening delimiter since
        // the last close starts the constrained span.
        if window.is_none() {
            if let Some(at) = find_bytes(&curr_gen, s1) {
                let rec = RecognizerState::init(&augmented).advance(&curr_gen[at..]);
                window = Some(OpenWindow {
                    start_step: steps.len(),
                    rec,
                });
            }
        }

        let mut scores = lm.scores(&tokens)?;
        if scores.len() != vocab.len() {
            return Err(LmError::VocabMismatch {
                expected: vocab.len(),
                got: scores.len(),
            }
            .into());
        }

        let token = if let Some(w) = &window {
            let window_text = &curr_gen[curr_gen.len() - w.rec.consumed()..];
            let mask = compute_mask(&w.rec, vocab, &trie);
            if !mask.any_allowed() {
                match opts.on_no_viable {
                    OnNoViable::Abort => {
                        return Err(DecodeError::NoViableToken(diagnostics(
                            steps.len(),
                            &w.rec,
                            window_text,
                            &scores,
                            vocab,
                        )));
                    }
                    OnNoViable::CloseWindow => {
                        let Some(tiling) = vocab.tokenize_greedy(s2, &trie) else {
                            return Err(DecodeError::NoViableToken(diagnostics(
                                steps.len(),
                                &w.rec,
                                window_text,
                                &scores,
                                vocab,
                            )));
                        };
                        let mut rec = w.rec.clone();
                        for id in tiling {
                            rec.advance_in_place(vocab.token_bytes(id));
                            steps.push(StepRecord {
                                index: steps.len(),
                                token_id: id,
                                bytes: vocab.token_bytes(id).to_vec(),
                                mode: StepMode::Forced,
                            });
                            tokens.push(id);
                        }
                        windows.push(WindowRecord {
                            start_step: window.take().unwrap().start_step,
                            end_step: steps.len(),
                            complete: rec.is_complete_member(),
                            force_closed: true,
                        });
                        pointer = tokens.len();
                        continue;
                    }
                }
            }
            apply_mask(&mut scores, &mask)?;
            match sample(&scores, opts.strategy, &mut rng)? {
                Some(t) => t,
                None => {
                    return Err(DecodeError::NoViableToken(diagnostics(
                        steps.len(),
                        &w.rec,
                        window_text,
                        &scores,
                        vocab,
                    )));
                }
            }
        } else {
            match sample(&scores, opts.strategy, &mut rng)? {
                Some(t) => t,
                None => {
                    let rec_dummy = RecognizerState::init(&empty_grammar());
                    return Err(DecodeError::NoViableToken(diagnostics(
                        steps.len(),
                        &rec_dummy,
                        &vocab.detokenize(&tokens[pointer..]),
                        &scores,
                        vocab,
                    )));
                }
            }
        };

        if token == vocab.eos_id() {
            ended_with_eos = true;
            break;
        }
        let mode = if window.is_some() {
            StepMode::Masked
        } else {
            StepMode::Free
        };
        if let Some(w) = &mut window {
            w.rec.advance_in_place(vocab.token_bytes(token));
        }
        steps.push(StepRecord {
            index: steps.len(),
            token_id: token,
            bytes: vocab.token_bytes(token).to_vec(),
            mode,
        });
        tokens.push(token);
    }

    // A window still open at the end closes where the generation ended.
    if let Some(w) = window.take() {
        windows.push(WindowRecord {
            start_step: w.start_step,
            end_step: steps.len(),
            complete: w.rec.is_complete_member(),
            force_closed: false,
        });
    }

    let generated = tokens[prompt.len()..].to_vec();
    let text = vocab.detokenize(&generated);
    Ok(Generation {
        tokens: generated,
        text,
        steps,
        windows,
        ended_with_eos,
    })
}

/// Placeholder recognizer for diagnostics paths with no active grammar.
fn empty_grammar() -> SharedGrammar {
    use std::sync::OnceLock;
    static EMPTY: OnceLock<SharedGrammar> = OnceLock::new();
    Arc::clone(EMPTY.get_or_init(|| {
        Arc::new(crate::grammar::parse_grammar_text("start: \"\\x00\"\n").unwrap())
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::parse_grammar_text;
    use crate::lm::ScriptedLm;

    fn grammar(text: &str) -> SharedGrammar {
        Arc::new(parse_grammar_text(text).unwrap())
    }

    fn lm(json: &str) -> ScriptedLm {
        ScriptedLm::from_json(json).unwrap()
    }

    // Vocab: 0 eos, 1 "think", 2 "<<", 3 "4", 4 ">>", 5 "x"
    const ADAPTIVE_LM: &str = r#"{
        "tokens": ["", "think", "<<", "4", ">>", "x"],
        "eos_id": 0,
        "entries": [
            {"suffix": "think", "next_token": 2},
            {"suffix": "<<", "next_token": 3},
            {"suffix": "4", "next_token": 4},
            {"suffix": ">>", "next_token": 0}
        ],
        "default": {"next_token": 1}
    }"#;

    #[test]
    fn adaptive_window_lifecycle() {
        let lm = lm(ADAPTIVE_LM);
        let g = grammar("start: NUM\nNUM: /[0-9]+/\n");
        let gen = adaptive_generate(&lm, &g, b"<<", b">>", &[], &DecodeOptions::default())
            .unwrap();
        assert_eq!(gen.text, b"think<<4>>".to_vec());
        assert!(gen.ended_with_eos);
        let modes: Vec<StepMode> = gen.steps.iter().map(|s| s.mode).collect();
        assert_eq!(
            modes,
            vec![
                StepMode::Free,   // think
                StepMode::Free,   // <<
                StepMode::Masked, // 4
                StepMode::Masked, // >>
            ]
        );
        assert_eq!(
            gen.windows,
            vec![WindowRecord {
                start_step: 2,
                end_step: 4,
                complete: true,
                force_closed: false,
            }]
        );
    }

    #[test]
    fn adaptive_mask_blocks_invalid_continuation() {
        // LM wants "x" inside the window; the mask forces the digit.
        let j = r#"{
            "tokens": ["", "think", "<<", "4", ">>", "x"],
            "eos_id": 0,
            "entries": [
                {"suffix": "think", "next_token": 2},
                {"suffix": "<<", "scores": [0.0, 0.0, 0.0, 0.4, 0.0, 9.0]},
                {"suffix": "4", "next_token": 4},
                {"suffix": ">>", "next_token": 0}
            ],
            "default": {"next_token": 1}
        }"#;
        let lm = lm(j);
        let g = grammar("start: NUM\nNUM: /[0-9]+/\n");
        let gen = adaptive_generate(&lm, &g, b"<<", b">>", &[], &DecodeOptions::default())
            .unwrap();
        assert_eq!(gen.text, b"think<<4>>".to_vec());
    }

    #[test]
    fn adaptive_no_window_stays_free() {
        let j = r#"{
            "tokens": ["", "a"],
            "eos_id": 0,
            "entries": [{"suffix": "aaa", "next_token": 0}],
            "default": {"next_token": 1}
        }"#;
        let lm = lm(j);
        let g = grammar("start: \"z\"\n");
        let gen = adaptive_generate(&lm, &g, b"<<", b">>", &[], &DecodeOptions::default())
            .unwrap();
        assert_eq!(gen.text, b"aaa".to_vec());
        assert!(gen.windows.is_empty());
        assert!(gen.steps.iter().all(|s| s.mode == StepMode::Free));
    }

    #[test]
    fn adaptive_force_close_policy() {
        // Inside the window nothing is viable: the grammar wants "z" but no
        // token supplies one.
        let j = r#"{
            "tokens": ["", "go", "<<", ">>", "a"],
            "eos_id": 0,
            "entries": [
                {"suffix": "go", "next_token": 2},
                {"suffix": ">>", "next_token": 4},
                {"suffix": ">>a", "next_token": 0}
            ],
            "default": {"next_token": 1}
        }"#;
        let lm = lm(j);
        let g = grammar("start: \"z\"\n");
        let opts = DecodeOptions {
            on_no_viable: OnNoViable::CloseWindow,
            ..DecodeOptions::default()
        };
        let gen = adaptive_generate(&lm, &g, b"<<", b">>", &[], &opts).unwrap();
        assert_eq!(gen.text, b"go<<>>a".to_vec());
        assert!(gen.ended_with_eos);
        assert_eq!(gen.windows.len(), 1);
        let w = &gen.windows[0];
        assert!(w.force_closed);
        assert!(!w.complete);
        assert_eq!(gen.steps[w.end_step - 1].mode, StepMode::Forced);

        let abort = adaptive_generate(&lm, &g, b"<<", b">>", &[], &DecodeOptions::default());
        match abort {
            Err(DecodeError::NoViableToken(d)) => {
                assert_eq!(d.text_tail, b"<<".to_vec());
                assert!(!d.top_blocked.is_empty());
            }
            other => panic!("expected NoViableToken, got {:?}", other.map(|g| g.text)),
        }
    }

    #[test]
    fn constrained_masks_from_first_step() {
        let j = r#"{
            "tokens": ["", "x", "7", "+", "3"],
            "eos_id": 0,
            "entries": [
                {"suffix": "7", "scores": [0.3, 9.0, 0.1, 0.4, 0.0]},
                {"suffix": "+", "next_token": 4},
                {"suffix": "3", "next_token": 0}
            ],
            "default": {"scores": [0.0, 9.0, 1.0, 0.0, 0.5]}
        }"#;
        let lm = lm(j);
        let g = grammar("start: NUM | NUM \"+\" NUM\nNUM: /[0-9]/\n");
        let gen = constrained_generate(&lm, &g, &[], &DecodeOptions::default()).unwrap();
        // Step 0: "x" blocked, "7" best allowed. Step 1: "+" (0.4) beats
        // eos (0.3). Step 2: "3". Step 3: eos (member).
        assert_eq!(gen.text, b"7+3".to_vec());
        assert!(gen.ended_with_eos);
        assert!(gen.steps.iter().all(|s| s.mode == StepMode::Masked));
    }

    #[test]
    fn constrained_dead_end_aborts() {
        let j = r#"{
            "tokens": ["", "a"],
            "eos_id": 0,
            "entries": [],
            "default": {"next_token": 1}
        }"#;
        let lm = lm(j);
        let g = grammar("start: \"z\"\n");
        let err = constrained_generate(&lm, &g, &[], &DecodeOptions::default());
        assert!(matches!(err, Err(DecodeError::NoViableToken(_))));
    }

    #[test]
    fn unconstrained_runs_to_budget() {
        let j = r#"{
            "tokens": ["", "a"],
            "eos_id": 0,
            "entries": [],
            "default": {"next_token": 1}
        }"#;
        let lm = lm(j);
        let opts = DecodeOptions {
            max_new_tokens: 5,
            ..DecodeOptions::default()
        };
        let gen = unconstrained_generate(&lm, &[], &opts).unwrap();
        assert_eq!(gen.text, b"aaaaa".to_vec());
        assert!(!gen.ended_with_eos);
    }

    #[test]
    fn greedy_breaks_ties_by_lowest_id() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let picked = sample(&[1.0, 5.0, 5.0], Strategy::Greedy, &mut rng).unwrap();
        assert_eq!(picked, Some(1));
        let none = sample(
            &[f64::NEG_INFINITY, f64::NEG_INFINITY],
            Strategy::Greedy,
            &mut rng,
        )
        .unwrap();
        assert_eq!(none, None);
    }

    #[test]
    fn temperature_sampling_is_seed_deterministic() {
        let scores = vec![1.0, 1.1, 0.9, f64::NEG_INFINITY];
        let mut a = ChaCha8Rng::seed_from_u64(42);
        let mut b = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let x = sample(&scores, Strategy::Temperature(0.7), &mut a).unwrap();
            let y = sample(&scores, Strategy::Temperature(0.7), &mut b).unwrap();
            assert_eq!(x, y);
            assert_ne!(x, Some(3), "masked token must never be sampled");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            sample(&scores, Strategy::Temperature(0.0), &mut rng),
            Err(DecodeError::InvalidTemperature(_))
        ));
        // An overwhelming favorite is picked at moderate temperature.
        let spiky = vec![0.0, 100.0, 0.0];
        let picked = sample(&spiky, Strategy::Temperature(1.0), &mut rng).unwrap();
        assert_eq!(picked, Some(1));
    }

    #[test]
    fn prompt_is_context_not_constraint() {
        // Prompt ids produce text that would violate the grammar; generation
        // itself is still well formed.
        let j = r#"{
            "tokens": ["", "x", "7"],
            "eos_id": 0,
            "entries": [{"suffix": "7", "next_token": 0}],
            "default": {"next_token": 2}
        }"#;
        let lm = lm(j);
        let g = grammar("start: NUM\nNUM: /[0-9]/\n");
        let gen = constrained_generate(&lm, &g, &[1], &DecodeOptions::default()).unwrap();
        assert_eq!(gen.text, b"7".to_vec());
        assert_eq!(gen.tokens, vec![2]);
    }
}
