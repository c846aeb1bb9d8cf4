//! Multi-tape Turing machines with a step-encoding vocabulary, plus a
//! scoring backend that replays a run token by token.
//!
//! A machine has a read-only input tape (0), `work_tapes` scratch tapes, and
//! an output tape (the last index). One step reads every tape, then writes
//! all tapes except the input, moves every head, and changes state. The
//! output is read from the final output-head position rightward up to the
//! first blank.
//!
//! Every applied step is encoded as the ASCII string
//! `[next_state;write,...;move,...]`. The set of possible encodings is
//! finite, so a grammar that accepts `encoding* output` can drive a decoder
//! through an entire simulation: each masked step admits exactly the
//! encodings (or, after the run, the output symbols) as continuations.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use crate::decode::{constrained_generate, DecodeError, DecodeOptions};
use crate::grammar::{build_reasoning_grammar, parse_grammar_text, GrammarError, SharedGrammar};
use crate::lm::{LanguageModel, LmError};
use crate::mask::Vocabulary;
use crate::recognizer::{is_member, RecognizerState};

#[derive(Debug, Error)]
pub enum TmError {
    #[error("malformed machine file: {0}")]
    Schema(String),
    #[error("unknown state {0:?}")]
    UnknownState(String),
    #[error("unknown symbol {0:?}")]
    UnknownSymbol(String),
    #[error("transition table is not total: state {state:?} has no rule for reads {reads:?}")]
    NotTotal { state: String, reads: Vec<String> },
    #[error("input contains a symbol outside the input alphabet near {0:?}")]
    BadInput(String),
    #[error("run exceeded the budget of {0} steps")]
    BudgetExceeded(usize),
}

/// One table entry: successor state, writes for every non-input tape, and a
/// head move for every tape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Action {
    pub next: usize,
    pub writes: Vec<usize>,
    pub moves: Vec<i8>,
}

#[derive(Debug, Deserialize)]
struct RawTransition {
    state: String,
    reads: Vec<String>,
    next: String,
    writes: Vec<String>,
    moves: Vec<i8>,
}

#[derive(Debug, Deserialize)]
struct RawMachine {
    name: String,
    states: Vec<String>,
    tape_alphabet: Vec<String>,
    input_alphabet: Vec<String>,
    blank: String,
    work_tapes: usize,
    start_state: String,
    halt_state: String,
    transitions: Vec<RawTransition>,
    /// Grammar for the machine's outputs, carried with the machine so the
    /// simulation demo is self-contained.
    output_grammar: String,
}

pub struct TuringMachine {
    pub name: String,
    pub states: Vec<String>,
    pub alphabet: Vec<String>,
    pub blank: usize,
    pub input_symbols: Vec<usize>,
    pub work_tapes: usize,
    pub start_state: usize,
    pub halt_state: usize,
    pub output_grammar: String,
    /// Total table indexed by state * |alphabet|^(tapes) + packed reads.
    table: Vec<Option<Action>>,
}

impl TuringMachine {
    pub fn tapes(&self) -> usize {
        self.work_tapes + 2
    }

    fn pack_reads(&self, reads: &[usize]) -> usize {
        let mut key = 0usize;
        for &r in reads {
            key = key * self.alphabet.len() + r;
        }
        key
    }

    pub fn from_json(text: &str) -> Result<TuringMachine, TmError> {
        let raw: RawMachine =
            serde_json::from_str(text).map_err(|e| TmError::Schema(e.to_string()))?;
        let state_ix: HashMap<&str, usize> = raw
            .states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        if state_ix.len() != raw.states.len() {
            return Err(TmError::Schema("duplicate state names".into()));
        }
        let sym_ix: HashMap<&str, usize> = raw
            .tape_alphabet
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        if sym_ix.len() != raw.tape_alphabet.len() {
            return Err(TmError::Schema("duplicate tape symbols".into()));
        }
        if raw.tape_alphabet.iter().any(|s| s.is_empty()) {
            return Err(TmError::Schema("empty tape symbol".into()));
        }
        let state = |name: &str| -> Result<usize, TmError> {
            state_ix
                .get(name)
                .copied()
                .ok_or_else(|| TmError::UnknownState(name.to_string()))
        };
        let sym = |name: &str| -> Result<usize, TmError> {
            sym_ix
                .get(name)
                .copied()
                .ok_or_else(|| TmError::UnknownSymbol(name.to_string()))
        };
        let blank = sym(&raw.blank)?;
        let mut input_symbols = Vec::new();
        for s in &raw.input_alphabet {
            let id = sym(s)?;
            if id == blank {
                return Err(TmError::Schema("blank cannot be an input symbol".into()));
            }
            input_symbols.push(id);
        }
        let start_state = state(&raw.start_state)?;
        let halt_state = state(&raw.halt_state)?;
        let tapes = raw.work_tapes + 2;
        let nsym = raw.tape_alphabet.len();
        let combos = nsym.pow(tapes as u32);

        // Wildcard reads expand to every symbol; more specific transitions
        // win, with declaration order breaking ties.
        let mut order: Vec<usize> = (0..raw.transitions.len()).collect();
        order.sort_by_key(|&i| {
            let stars = raw.transitions[i]
                .reads
                .iter()
                .filter(|r| r.as_str() == "*")
                .count();
            (stars, i)
        });
        let mut table: Vec<Option<Action>> = vec![None; raw.states.len() * combos];
        for i in order {
            let t = &raw.transitions[i];
            let from = state(&t.state)?;
            if from == halt_state {
                return Err(TmError::Schema(format!(
                    "transition out of halt state {:?}",
                    t.state
                )));
            }
            if t.reads.len() != tapes {
                return Err(TmError::Schema(format!(
                    "transition {} has {} reads, machine has {} tapes",
                    i,
                    t.reads.len(),
                    tapes
                )));
            }
            if t.writes.len() != tapes - 1 {
                return Err(TmError::Schema(format!(
                    "transition {} has {} writes, expected {} (input tape is read-only)",
                    i,
                    t.writes.len(),
                    tapes - 1
                )));
            }
            if t.moves.len() != tapes || t.moves.iter().any(|m| !(-1..=1).contains(m)) {
                return Err(TmError::Schema(format!(
                    "transition {} moves must be {} entries of -1|0|1",
                    i, tapes
                )));
            }
            let next = state(&t.next)?;
            // Resolve read patterns: Some(id) fixed, None wildcard.
            let mut fixed: Vec<Option<usize>> = Vec::with_capacity(tapes);
            for r in &t.reads {
                fixed.push(if r == "*" { None } else { Some(sym(r)?) });
            }
            // Enumerate concrete read tuples matching the pattern: an
            // odometer over the wildcard positions.
            let wild: Vec<usize> = fixed
                .iter()
                .enumerate()
                .filter(|(_, f)| f.is_none())
                .map(|(i, _)| i)
                .collect();
            let mut reads: Vec<usize> = fixed.iter().map(|f| f.unwrap_or(0)).collect();
            for combo in 0..nsym.pow(wild.len() as u32) {
                let mut c = combo;
                for &w in &wild {
                    reads[w] = c % nsym;
                    c /= nsym;
                }
                let key = from * combos + self_pack(&reads, nsym);
                if table[key].is_none() {
                    let mut writes = Vec::with_capacity(tapes - 1);
                    for (j, w) in t.writes.iter().enumerate() {
                        // A "*" write keeps the symbol read on that tape.
                        writes.push(if w == "*" { reads[j + 1] } else { sym(w)? });
                    }
                    table[key] = Some(Action {
                        next,
                        writes,
                        moves: t.moves.clone(),
                    });
                }
            }
        }

        let m = TuringMachine {
            name: raw.name,
            states: raw.states,
            alphabet: raw.tape_alphabet,
            blank,
            input_symbols,
            work_tapes: raw.work_tapes,
            start_state,
            halt_state,
            output_grammar: raw.output_grammar,
            table,
        };

        // Totality: every non-halt state must handle every read combination.
        for s in 0..m.states.len() {
            if s == m.halt_state {
                continue;
            }
            for c in 0..combos {
                if m.table[s * combos + c].is_none() {
                    let reads = unpack(c, m.tapes(), nsym)
                        .into_iter()
                        .map(|r| m.alphabet[r].clone())
                        .collect();
                    return Err(TmError::NotTotal {
                        state: m.states[s].clone(),
                        reads,
                    });
                }
            }
        }
        Ok(m)
    }

    /// Map text to input-alphabet symbol ids by longest symbol match.
    pub fn parse_input(&self, text: &str) -> Result<Vec<usize>, TmError> {
        let bytes = text.as_bytes();
        let mut out = Vec::new();
        let mut at = 0;
        while at < bytes.len() {
            let mut hit = None;
            for &s in &self.input_symbols {
                let sym = self.alphabet[s].as_bytes();
                if bytes[at..].starts_with(sym) {
                    if hit.map_or(true, |(_, l)| sym.len() > l) {
                        hit = Some((s, sym.len()));
                    }
                }
            }
            let Some((s, l)) = hit else {
                return Err(TmError::BadInput(text[at..].chars().take(8).collect()));
            };
            out.push(s);
            at += l;
        }
        Ok(out)
    }

    pub fn symbols_to_text(&self, syms: &[usize]) -> String {
        syms.iter().map(|&s| self.alphabet[s].as_str()).collect()
    }

    fn action(&self, state: usize, reads: &[usize]) -> Option<&Action> {
        let combos = self.alphabet.len().pow(self.tapes() as u32);
        self.table[state * combos + self.pack_reads(reads)].as_ref()
    }

    /// ASCII encoding of one applied step.
    pub fn encode_action(&self, a: &Action) -> Vec<u8> {
        let writes: Vec<&str> = a.writes.iter().map(|&w| self.alphabet[w].as_str()).collect();
        let moves: Vec<String> = a.moves.iter().map(|m| m.to_string()).collect();
        format!(
            "[{};{};{}]",
            self.states[a.next],
            writes.join(","),
            moves.join(",")
        )
        .into_bytes()
    }

    /// Sorted distinct encodings of every action in the table.
    pub fn enumerate_encodings(&self) -> Vec<Vec<u8>> {
        let mut out: Vec<Vec<u8>> = self
            .table
            .iter()
            .flatten()
            .map(|a| self.encode_action(a))
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// Run to halt, recording the encoding of every applied step.
    pub fn run(&self, input: &[usize], budget: usize) -> Result<TmRun, TmError> {
        let mut config = Configuration::start(self, input);
        let mut encodings = Vec::new();
        for _ in 0..budget {
            if config.state == self.halt_state {
                return Ok(TmRun {
                    output: config.read_output(self),
                    steps: encodings.len(),
                    encodings,
                });
            }
            let action = self.step(&mut config)?;
            encodings.push(self.encode_action(&action));
        }
        if config.state == self.halt_state {
            return Ok(TmRun {
                output: config.read_output(self),
                steps: encodings.len(),
                encodings,
            });
        }
        Err(TmError::BudgetExceeded(budget))
    }

    /// Apply one step in place; returns the action taken.
    pub fn step(&self, config: &mut Configuration) -> Result<Action, TmError> {
        let reads: Vec<usize> = config.tapes.iter().map(|t| t.read(self.blank)).collect();
        let action = self
            .action(config.state, &reads)
            .cloned()
            .unwrap_or_else(|| unreachable!("table is total"));
        for (j, &w) in action.writes.iter().enumerate() {
            config.tapes[j + 1].write(w, self.blank);
        }
        for (j, &m) in action.moves.iter().enumerate() {
            config.tapes[j].head += m as i64;
        }
        config.state = action.next;
        Ok(action)
    }
}

fn self_pack(reads: &[usize], nsym: usize) -> usize {
    let mut key = 0usize;
    for &r in reads {
        key = key * nsym + r;
    }
    key
}

fn unpack(mut key: usize, tapes: usize, nsym: usize) -> Vec<usize> {
    let mut out = vec![0usize; tapes];
    for i in (0..tapes).rev() {
        out[i] = key % nsym;
        key /= nsym;
    }
    out
}

/// Sparse bi-infinite tape.
#[derive(Debug, Clone)]
pub struct Tape {
    cells: HashMap<i64, usize>,
    pub head: i64,
}

impl Tape {
    fn blank() -> Tape {
        Tape {
            cells: HashMap::new(),
            head: 0,
        }
    }

    fn read(&self, blank: usize) -> usize {
        self.cells.get(&self.head).copied().unwrap_or(blank)
    }

    fn write(&mut self, sym: usize, blank: usize) {
        if sym == blank {
            self.cells.remove(&self.head);
        } else {
            self.cells.insert(self.head, sym);
        }
    }
}

#[derive(Debug, Clone)]
pub struct Configuration {
    pub state: usize,
    pub tapes: Vec<Tape>,
}

impl Configuration {
    pub fn start(m: &TuringMachine, input: &[usize]) -> Configuration {
        let mut tapes = vec![Tape::blank(); m.tapes()];
        for (i, &s) in input.iter().enumerate() {
            tapes[0].cells.insert(i as i64, s);
        }
        Configuration {
            state: m.start_state,
            tapes,
        }
    }

    /// Output-tape symbols from the head rightward to the first blank.
    pub fn read_output(&self, m: &TuringMachine) -> Vec<usize> {
        let tape = &self.tapes[m.tapes() - 1];
        let mut out = Vec::new();
        let mut at = tape.head;
        while let Some(&s) = tape.cells.get(&at) {
            out.push(s);
            at += 1;
        }
        out
    }
}

#[derive(Debug)]
pub struct TmRun {
    pub encodings: Vec<Vec<u8>>,
    pub output: Vec<usize>,
    pub steps: usize,
}

/// A scoring backend that replays one machine run: at each boundary of the
/// expected `encoding* output` token sequence it puts all mass on the next
/// expected token (eos once the sequence is spent) and scores everything
/// uniformly when the context has left the expected path.
pub struct TmLm {
    vocab: Vocabulary,
    expected: Vec<u32>,
    /// Cumulative byte length after each expected token.
    boundaries: Vec<usize>,
    expected_bytes: Vec<u8>,
    malformed: AtomicUsize,
}

impl TmLm {
    pub fn new(m: &TuringMachine, input: &[usize], budget: usize) -> Result<TmLm, TmError> {
        let run = m.run(input, budget)?;
        let enc = m.enumerate_encodings();
        let mut tokens: Vec<Vec<u8>> = vec![Vec::new()];
        tokens.extend(enc.iter().cloned());
        let sym_base = tokens.len() as u32;
        tokens.extend(m.alphabet.iter().map(|s| s.as_bytes().to_vec()));
        let vocab = Vocabulary::new(tokens, 0)
            .map_err(|e| TmError::Schema(format!("vocabulary: {}", e)))?;
        let enc_id: HashMap<&Vec<u8>, u32> = enc
            .iter()
            .enumerate()
            .map(|(i, e)| (e, i as u32 + 1))
            .collect();
        let mut expected = Vec::new();
        for e in &run.encodings {
            expected.push(enc_id[e]);
        }
        for &s in &run.output {
            expected.push(sym_base + s as u32);
        }
        let mut boundaries = Vec::with_capacity(expected.len());
        let mut expected_bytes = Vec::new();
        for &id in &expected {
            expected_bytes.extend_from_slice(vocab.token_bytes(id));
            boundaries.push(expected_bytes.len());
        }
        Ok(TmLm {
            vocab,
            expected,
            boundaries,
            expected_bytes,
            malformed: AtomicUsize::new(0),
        })
    }

    /// How many queries fell off the expected path.
    pub fn malformed_queries(&self) -> usize {
        self.malformed.load(Ordering::Relaxed)
    }

    pub fn expected_text(&self) -> &[u8] {
        &self.expected_bytes
    }
}

impl LanguageModel for TmLm {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn scores(&self, context: &[u32]) -> Result<Vec<f64>, LmError> {
        let n = self.vocab.len();
        let text = self.vocab.detokenize(context);
        if text == self.expected_bytes {
            let mut s = vec![0.0; n];
            s[self.vocab.eos_id() as usize] = 1.0;
            return Ok(s);
        }
        let at_boundary = text.is_empty()
            || (self.expected_bytes.starts_with(&text)
                && self.boundaries.binary_search(&text.len()).is_ok());
        if at_boundary {
            let next = match self.boundaries.binary_search(&text.len()) {
                Ok(i) => self.expected[i + 1],
                Err(_) => self.expected[0],
            };
            let mut s = vec![0.0; n];
            s[next as usize] = 1.0;
            return Ok(s);
        }
        self.malformed.fetch_add(1, Ordering::Relaxed);
        Ok(vec![1.0; n])
    }
}

#[derive(Debug, Error)]
pub enum DemoError {
    #[error(transparent)]
    Tm(#[from] TmError),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

#[derive(Debug)]
pub struct SimulationReport {
    pub machine: String,
    pub input: String,
    pub steps: usize,
    pub output: String,
    pub generated: String,
    /// Generated text equals the step encodings followed by the output.
    pub exact: bool,
    /// The reasoning grammar accepts the generated text.
    pub member: bool,
    /// Every byte prefix of the generated text stayed alive.
    pub prefixes_valid: bool,
}

impl SimulationReport {
    pub fn passed(&self) -> bool {
        self.exact && self.member && self.prefixes_valid
    }
}

/// Decode a full simulation under the machine's reasoning grammar and check
/// the result against a direct run.
pub fn run_reasoning_demo(
    m: &TuringMachine,
    input_text: &str,
    budget: usize,
) -> Result<SimulationReport, DemoError> {
    let input = m.parse_input(input_text)?;
    let run = m.run(&input, budget)?;
    let output_grammar = parse_grammar_text(&m.output_grammar)?;
    let reasoning: SharedGrammar = Arc::new(build_reasoning_grammar(
        &output_grammar,
        &m.enumerate_encodings(),
    )?);
    let lm = TmLm::new(m, &input, budget)?;
    let expected = lm.expected_text().to_vec();
    let opts = DecodeOptions {
        max_new_tokens: lm.expected.len() + 4,
        ..DecodeOptions::default()
    };
    let gen = constrained_generate(&lm, &reasoning, &[], &opts)?;
    let exact = gen.ended_with_eos && gen.text == expected;
    let member = is_member(&reasoning, &gen.text);
    let mut prefixes_valid = true;
    let mut rec = RecognizerState::init(&reasoning);
    for &b in &gen.text {
        rec.advance_in_place(&[b]);
        if !rec.is_alive() {
            prefixes_valid = false;
            break;
        }
    }
    Ok(SimulationReport {
        machine: m.name.clone(),
        input: input_text.to_string(),
        steps: run.steps,
        output: m.symbols_to_text(&run.output),
        generated: String::from_utf8_lossy(&gen.text).into_owned(),
        exact,
        member,
        prefixes_valid,
    })
}
