//! Desk-scale evaluation harness: run a method over a JSONL task suite and
//! report how often the output contains a well-formed answer (parse rate)
//! and how often that answer is equivalent to the ground truth (accuracy).
//!
//! Answers are read from the last complete delimiter block in the generated
//! text. Well-formedness is membership of the block interior in the task
//! grammar, with the grammar's VARIABLE terminal specialized to the
//! instance's declared variable names when it has any. Correctness prefers
//! randomized algebraic equivalence and falls back to whitespace-insensitive
//! string equality when either side is not an arithmetic expression.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decode::{
    adaptive_generate, constrained_generate, unconstrained_generate, DecodeOptions,
};
use crate::expr::check_equivalence;
use crate::grammar::{augment_with_delimiters, specialize_terminal, GrammarError, SharedGrammar};
use crate::lm::LanguageModel;
use crate::mask::TokenTrie;
use crate::recognizer::is_member;
use crate::util::find_bytes;
use std::sync::Arc;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dataset line {line}: {msg}")]
    Jsonl { line: usize, msg: String },
    #[error(transparent)]
    Grammar(#[from] GrammarError),
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct TaskInstance {
    pub id: String,
    /// Fed to the model verbatim.
    pub prompt: String,
    /// Alternative prompt for the no-reasoning baseline, when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_no_cot: Option<String>,
    /// Variable names the answer may use; empty means leave the grammar as
    /// declared.
    #[serde(default)]
    pub variables: Vec<String>,
    pub ground_truth: String,
    pub grammar_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Adaptive,
    Constrained,
    Unconstrained,
    UnconstrainedNoCot,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Adaptive => "adaptive",
            Method::Constrained => "constrained",
            Method::Unconstrained => "unconstrained",
            Method::UnconstrainedNoCot => "unconstrained_no_cot",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Method, String> {
        match s {
            "adaptive" => Ok(Method::Adaptive),
            "constrained" => Ok(Method::Constrained),
            "unconstrained" => Ok(Method::Unconstrained),
            "unconstrained_no_cot" => Ok(Method::UnconstrainedNoCot),
            other => Err(format!(
                "unknown method {:?} (expected adaptive|constrained|unconstrained|unconstrained_no_cot)",
                other
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub s1: Vec<u8>,
    pub s2: Vec<u8>,
    pub max_new_tokens: usize,
    pub seed: u64,
    /// Random assignments per equivalence check.
    pub trials: usize,
}

impl Default for EvalConfig {
    fn default() -> EvalConfig {
        EvalConfig {
            s1: b"<<".to_vec(),
            s2: b">>".to_vec(),
            max_new_tokens: 256,
            seed: 0,
            trials: 100,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct InstanceResult {
    pub id: String,
    pub text: String,
    /// Generated tokens (prompt excluded). Vocabulary-specific, so reports
    /// are only comparable under the same model.
    pub tokens: usize,
    pub extracted: Option<String>,
    pub parsed: bool,
    pub correct: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct EvalReport {
    pub method: String,
    pub total: usize,
    pub parsed: usize,
    pub correct: usize,
    /// Percent of all instances with a well-formed extractable answer.
    pub parse_pct: f64,
    /// Percent of all instances answered correctly.
    pub accuracy_pct: f64,
    /// Mean generated tokens per instance.
    pub avg_tokens: f64,
    pub instances: Vec<InstanceResult>,
}

/// Parse a JSONL dataset; blank lines are skipped.
pub fn load_dataset(text: &str) -> Result<Vec<TaskInstance>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let inst: TaskInstance = serde_json::from_str(line).map_err(|e| EvalError::Jsonl {
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(inst);
    }
    Ok(out)
}

/// Interior of the last complete `s1 ... s2` block under a left-to-right
/// non-overlapping scan.
pub fn extract_final_answer(text: &[u8], s1: &[u8], s2: &[u8]) -> Option<Vec<u8>> {
    let mut at = 0;
    let mut last = None;
    while let Some(open) = find_bytes(&text[at..], s1) {
        let inner_start = at + open + s1.len();
        let Some(close) = find_bytes(&text[inner_start..], s2) else {
            break;
        };
        last = Some(text[inner_start..inner_start + close].to_vec());
        at = inner_start + close + s2.len();
    }
    last
}

/// Ground-truth comparison: algebraic when both sides parse as expressions,
/// otherwise whitespace-collapsed string equality.
pub fn answers_match(answer: &str, truth: &str, trials: usize, seed: u64) -> bool {
    match check_equivalence(answer, truth, trials, seed) {
        Ok(v) => v,
        Err(_) => {
            let norm = |s: &str| s.split_whitespace().collect::<Vec<_>>().join(" ");
            norm(answer) == norm(truth)
        }
    }
}

fn instance_grammar(
    base: &SharedGrammar,
    inst: &TaskInstance,
) -> Result<SharedGrammar, GrammarError> {
    if inst.variables.is_empty() {
        return Ok(Arc::clone(base));
    }
    let allowed: Vec<Vec<u8>> = inst
        .variables
        .iter()
        .map(|v| v.as_bytes().to_vec())
        .collect();
    Ok(Arc::new(specialize_terminal(base, "VARIABLE", &allowed)?))
}

fn run_instance(
    lm: &(dyn LanguageModel + Sync),
    trie: &TokenTrie,
    base: &SharedGrammar,
    inst: &TaskInstance,
    method: Method,
    cfg: &EvalConfig,
    index: usize,
) -> InstanceResult {
    let mut result = InstanceResult {
        id: inst.id.clone(),
        text: String::new(),
        tokens: 0,
        extracted: None,
        parsed: false,
        correct: false,
        error: None,
    };
    let grammar = match instance_grammar(base, inst) {
        Ok(g) => g,
        Err(e) => {
            result.error = Some(format!("grammar: {}", e));
            return result;
        }
    };
    let prompt_text = match method {
        Method::UnconstrainedNoCot => inst.prompt_no_cot.as_ref().unwrap_or(&inst.prompt),
        _ => &inst.prompt,
    };
    let Some(prompt) = lm.vocabulary().tokenize_greedy(prompt_text.as_bytes(), trie) else {
        result.error = Some("prompt not tokenizable with this vocabulary".into());
        return result;
    };
    let opts = DecodeOptions {
        max_new_tokens: cfg.max_new_tokens,
        seed: cfg.seed.wrapping_add(index as u64),
        ..DecodeOptions::default()
    };
    let gen = match method {
        Method::Adaptive => adaptive_generate(lm, &grammar, &cfg.s1, &cfg.s2, &prompt, &opts),
        Method::Constrained => {
            match augment_with_delimiters(&grammar, &cfg.s1, &cfg.s2) {
                Ok(aug) => constrained_generate(lm, &Arc::new(aug), &prompt, &opts),
                Err(e) => {
                    result.error = Some(format!("grammar: {}", e));
                    return result;
                }
            }
        }
        Method::Unconstrained | Method::UnconstrainedNoCot => {
            unconstrained_generate(lm, &prompt, &opts)
        }
    };
    let gen = match gen {
        Ok(g) => g,
        Err(e) => {
            result.error = Some(format!("decode: {}", e));
            return result;
        }
    };
    result.text = String::from_utf8_lossy(&gen.text).into_owned();
    result.tokens = gen.tokens.len();
    let Some(answer) = extract_final_answer(&gen.text, &cfg.s1, &cfg.s2) else {
        return result;
    };
    let answer_str = String::from_utf8_lossy(&answer).into_owned();
    result.extracted = Some(answer_str.clone());
    result.parsed = is_member(&grammar, &answer);
    if result.parsed {
        let seed = cfg.seed.wrapping_add((index as u64).wrapping_mul(0x9E3779B97F4A7C15));
        result.correct = answers_match(&answer_str, &inst.ground_truth, cfg.trials, seed);
    }
    result
}

/// Evaluate one method over a suite. Instances run in parallel; results keep
/// dataset order. An empty suite yields zero rates.
pub fn run_eval(
    lm: &(dyn LanguageModel + Sync),
    instances: &[TaskInstance],
    grammar: &SharedGrammar,
    method: Method,
    cfg: &EvalConfig,
) -> EvalReport {
    let trie = TokenTrie::build(lm.vocabulary());
    let results: Vec<InstanceResult> = instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| run_instance(lm, &trie, grammar, inst, method, cfg, i))
        .collect();
    let total = results.len();
    let parsed = results.iter().filter(|r| r.parsed).count();
    let correct = results.iter().filter(|r| r.correct).count();
    let pct = |n: usize| {
        if total == 0 {
            0.0
        } else {
            n as f64 * 100.0 / total as f64
        }
    };
    let token_sum: usize = results.iter().map(|r| r.tokens).sum();
    EvalReport {
        method: method.name().to_string(),
        total,
        parsed,
        correct,
        parse_pct: pct(parsed),
        accuracy_pct: pct(correct),
        avg_tokens: if total == 0 {
            0.0
        } else {
            token_sum as f64 / total as f64
        },
        instances: results,
    }
}
