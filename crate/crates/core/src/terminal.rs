//! Terminal patterns compiled to byte-level DFAs.
//!
//! Wraps a dense anchored DFA and precomputes, per state, whether an
//! accepting state is still reachable. The lexer needs exact liveness:
//! regex-automata's dead state only covers the canonical sink, while any
//! state that cannot reach a match is equally dead for our purposes.

use std::collections::HashMap;

use regex_automata::dfa::{dense, Automaton, StartKind};
use regex_automata::util::start;
use regex_automata::util::syntax;
use regex_automata::{Anchored, MatchKind};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TerminalError {
    #[error("pattern failed to compile: {0}")]
    Compile(String),
    #[error("pattern matches the empty string")]
    MatchesEmpty,
    #[error("pattern matches nothing")]
    MatchesNothing,
}

/// Dense index assigned to each explored DFA state.
pub type TermState = u32;

/// One compiled terminal: transition table over explored states, acceptance,
/// and liveness (accept reachable). State 0 is the start state.
pub struct CompiledTerminal {
    /// transitions[state * 256 + byte] = next state, u32::MAX for dead.
    transitions: Vec<u32>,
    accepting: Vec<bool>,
    live: Vec<bool>,
    /// Some outgoing byte leads to a live state: the match can still grow.
    extendable: Vec<bool>,
    /// A shortest byte string accepted by the pattern.
    pub shortest: Vec<u8>,
}

pub const TERM_DEAD: TermState = u32::MAX;

impl CompiledTerminal {
    pub fn compile(pattern: &str) -> Result<CompiledTerminal, TerminalError> {
        // MatchKind::All keeps transitions out of match states alive, which
        // maximal munch needs: with the default leftmost-first kind a
        // pattern like `t|tf` would go dead after matching `t`.
        let dfa = dense::Builder::new()
            .configure(
                dense::Config::new()
                    .start_kind(StartKind::Anchored)
                    .match_kind(MatchKind::All)
                    .minimize(true),
            )
            .syntax(syntax::Config::new().unicode(false).utf8(false))
            .build(pattern)
            .map_err(|e| TerminalError::Compile(e.to_string()))?;
        let start_id = dfa
            .start_state(&start::Config::new().anchored(Anchored::Yes))
            .map_err(|e| TerminalError::Compile(e.to_string()))?;

        // Explore the reachable byte-transition graph.
        let mut index: HashMap<_, u32> = HashMap::new();
        let mut order = Vec::new();
        index.insert(start_id, 0);
        order.push(start_id);
        let mut transitions: Vec<u32> = Vec::new();
        let mut accepting: Vec<bool> = Vec::new();
        let mut at = 0usize;
        while at < order.len() {
            let sid = order[at];
            at += 1;
            accepting.push(dfa.is_match_state(dfa.next_eoi_state(sid)));
            for b in 0..=255u8 {
                let nid = dfa.next_state(sid, b);
                if dfa.is_dead_state(nid) {
                    transitions.push(TERM_DEAD);
                    continue;
                }
                let slot = match index.get(&nid) {
                    Some(&s) => s,
                    None => {
                        let s = order.len() as u32;
                        index.insert(nid, s);
                        order.push(nid);
                        s
                    }
                };
                transitions.push(slot);
            }
        }
        let n = order.len();

        // Liveness: reverse reachability from accepting states.
        let mut live = accepting.clone();
        loop {
            let mut changed = false;
            for s in 0..n {
                if live[s] {
                    continue;
                }
                for b in 0..256usize {
                    let t = transitions[s * 256 + b];
                    if t != TERM_DEAD && live[t as usize] {
                        live[s] = true;
                        changed = true;
                        break;
                    }
                }
            }
            if !changed {
                break;
            }
        }

        if accepting[0] {
            return Err(TerminalError::MatchesEmpty);
        }
        if !live[0] {
            return Err(TerminalError::MatchesNothing);
        }

        // Shortest accepted string: BFS from the start state.
        let mut back: Vec<Option<(u32, u8)>> = vec![None; n];
        let mut seen = vec![false; n];
        let mut queue = std::collections::VecDeque::new();
        seen[0] = true;
        queue.push_back(0u32);
        let mut hit = None;
        'bfs: while let Some(s) = queue.pop_front() {
            for b in 0..=255u8 {
                let t = transitions[s as usize * 256 + b as usize];
                if t == TERM_DEAD || seen[t as usize] {
                    continue;
                }
                seen[t as usize] = true;
                back[t as usize] = Some((s, b));
                if accepting[t as usize] {
                    hit = Some(t);
                    break 'bfs;
                }
                queue.push_back(t);
            }
        }
        let mut shortest = Vec::new();
        let mut cur = hit.expect("live start state must reach an accept");
        while let Some((p, b)) = back[cur as usize] {
            shortest.push(b);
            cur = p;
        }
        shortest.reverse();

        let extendable: Vec<bool> = (0..n)
            .map(|s| {
                (0..256usize).any(|b| {
                    let t = transitions[s * 256 + b];
                    t != TERM_DEAD && live[t as usize]
                })
            })
            .collect();

        Ok(CompiledTerminal {
            transitions,
            accepting,
            live,
            extendable,
            shortest,
        })
    }

    #[inline]
    pub fn start(&self) -> TermState {
        0
    }

    /// Next state for one byte; TERM_DEAD when no accept is reachable anymore.
    #[inline]
    pub fn next(&self, state: TermState, byte: u8) -> TermState {
        let t = self.transitions[state as usize * 256 + byte as usize];
        if t == TERM_DEAD || !self.live[t as usize] {
            TERM_DEAD
        } else {
            t
        }
    }

    /// Bytes fed so far form a complete match.
    #[inline]
    pub fn is_accepting(&self, state: TermState) -> bool {
        state != TERM_DEAD && self.accepting[state as usize]
    }

    /// The match in progress can still grow by at least one byte.
    #[inline]
    pub fn can_extend(&self, state: TermState) -> bool {
        state != TERM_DEAD && self.extendable[state as usize]
    }

    /// Whether the whole input matches (convenience for tests).
    pub fn matches(&self, input: &[u8]) -> bool {
        let mut s = self.start();
        for &b in input {
            s = self.next(s, b);
            if s == TERM_DEAD {
                return false;
            }
        }
        self.is_accepting(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_walk() {
        let t = CompiledTerminal::compile("int").unwrap();
        assert!(t.matches(b"int"));
        assert!(!t.matches(b"in"));
        assert!(!t.matches(b"intx"));
        assert_eq!(t.shortest, b"int");
    }

    #[test]
    fn char_class_repetition() {
        let t = CompiledTerminal::compile("[a-z_][a-zA-Z0-9_]*").unwrap();
        assert!(t.matches(b"tf"));
        assert!(t.matches(b"end_hour"));
        assert!(!t.matches(b"9x"));
        assert_eq!(t.shortest.len(), 1);
    }

    #[test]
    fn mid_pattern_liveness() {
        let t = CompiledTerminal::compile("abc").unwrap();
        let s = t.next(t.start(), b'a');
        assert_ne!(s, TERM_DEAD);
        assert!(!t.is_accepting(s));
        assert_eq!(t.next(s, b'z'), TERM_DEAD);
    }

    #[test]
    fn dot_excludes_newline() {
        let t = CompiledTerminal::compile(":::.*\n").unwrap();
        assert!(t.matches(b"::: a comment\n"));
        assert!(!t.matches(b"::: no newline"));
        assert!(!t.matches(b":::a\nb\n"));
    }

    #[test]
    fn empty_match_rejected() {
        assert!(matches!(
            CompiledTerminal::compile("a*"),
            Err(TerminalError::MatchesEmpty)
        ));
    }

    #[test]
    fn bad_pattern_rejected() {
        assert!(matches!(
            CompiledTerminal::compile("[unclosed"),
            Err(TerminalError::Compile(_))
        ));
    }

    #[test]
    fn byte_oriented_matching() {
        // Multi-byte UTF-8 sequences are walked byte-wise.
        let t = CompiledTerminal::compile("κ").unwrap();
        assert!(t.matches("κ".as_bytes()));
        assert_eq!(t.shortest, "κ".as_bytes());
    }
}
