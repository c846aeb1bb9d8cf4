//! Incremental byte-level recognition against a grammar.
//!
//! Lexing is greedy and deterministic: all terminal DFAs race over the
//! incoming bytes; when every automaton has died, the best recorded accept
//! wins (priority, then match length, then declaration order) and the
//! remainder is re-lexed from scratch. Committed lexemes feed the Earley
//! chart; `%ignore` lexemes are dropped. Membership at a prefix is decided by
//! simulating end-of-input on a snapshot.
//!
//! Status is exact for membership and death-by-rejection. Viability of a
//! proper extension is an approximation: the next committable terminal must
//! be acceptable to the chart (or ignorable). Grammars whose terminals can
//! merge across token boundaries under maximal munch may be reported viable
//! one commit early; the integration suite bounds this with completion
//! searches on every bundled grammar.

use std::sync::Arc;

use crate::earley::{Chart, ScanCache};
use crate::grammar::{GrammarSpec, TermId};
use crate::terminal::{TermState, TERM_DEAD};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrefixStatus {
    /// Not a member, but some extension is.
    ValidPrefix,
    /// A member with no viable extension.
    Complete,
    /// A member that is also a proper prefix of another member.
    CompleteAndExtensible,
    /// No extension (including none) is a member.
    Dead,
}

impl PrefixStatus {
    pub fn is_member(self) -> bool {
        matches!(
            self,
            PrefixStatus::Complete | PrefixStatus::CompleteAndExtensible
        )
    }
}

#[derive(Debug, Clone, Copy)]
struct BestAccept {
    term: TermId,
    len: usize,
}

/// A recognition snapshot. Cloning is cheap (the chart is copy-on-write);
/// sibling snapshots advance independently.
#[derive(Clone)]
pub struct RecognizerState {
    grammar: Arc<GrammarSpec>,
    chart: Chart,
    /// Bytes of the in-progress lexeme run.
    pending: Vec<u8>,
    /// Terminal DFAs still live for the current run.
    live: Vec<(TermId, TermState)>,
    best: Option<BestAccept>,
    consumed: usize,
    dead: bool,
}

impl RecognizerState {
    pub fn init(grammar: &Arc<GrammarSpec>) -> RecognizerState {
        let chart = Chart::init(grammar);
        let live = fresh_run(grammar);
        RecognizerState {
            grammar: Arc::clone(grammar),
            chart,
            pending: Vec::new(),
            live,
            best: None,
            consumed: 0,
            dead: false,
        }
    }

    pub fn grammar(&self) -> &Arc<GrammarSpec> {
        &self.grammar
    }

    pub fn consumed(&self) -> usize {
        self.consumed
    }

    /// Advance a copy of this state by `bytes`. The original stays usable.
    pub fn advance(&self, bytes: &[u8]) -> RecognizerState {
        let mut next = self.clone();
        next.advance_in_place(bytes);
        next
    }

    pub fn advance_in_place(&mut self, bytes: &[u8]) {
        self.advance_impl(bytes, &mut None);
    }

    /// Advance a copy, memoizing chart scans in `cache` (mask probing).
    pub(crate) fn advance_cached(&self, bytes: &[u8], cache: &mut ScanCache) -> RecognizerState {
        let mut next = self.clone();
        next.advance_impl(bytes, &mut Some(cache));
        next
    }

    pub(crate) fn advance_in_place_cached(&mut self, bytes: &[u8], cache: &mut ScanCache) {
        self.advance_impl(bytes, &mut Some(cache));
    }

    fn advance_impl(&mut self, bytes: &[u8], cache: &mut Option<&mut ScanCache>) {
        for &b in bytes {
            if self.dead {
                return;
            }
            self.consumed += 1;
            self.feed(b, cache);
        }
    }

    /// Feed one byte, committing lexemes as runs die. Iterative so that
    /// commit remainders of arbitrary length cannot overflow the stack.
    fn feed(&mut self, byte: u8, cache: &mut Option<&mut ScanCache>) {
        // Re-lex remainders land here; the common no-commit byte never
        // allocates.
        let mut queue: Vec<u8> = Vec::new();
        let mut qi = 0;
        let mut next = Some(byte);
        while let Some(b) = next {
            if self.dead {
                return;
            }
            self.pending.push(b);
            {
                let RecognizerState { grammar, live, .. } = self;
                live.retain_mut(|(t, st)| {
                    *st = grammar.compiled[*t as usize].next(*st, b);
                    *st != TERM_DEAD
                });
            }
            let mut best = self.best;
            for &(t, st) in &self.live {
                if self.grammar.compiled[t as usize].is_accepting(st) {
                    let cand = BestAccept {
                        term: t,
                        len: self.pending.len(),
                    };
                    if better_of(&self.grammar, best, cand) {
                        best = Some(cand);
                    }
                }
            }
            self.best = best;
            if self.live.is_empty() {
                let Some(ba) = self.best.take() else {
                    self.dead = true;
                    return;
                };
                self.commit(ba.term, cache);
                if self.dead {
                    return;
                }
                // Re-lex everything after the committed lexeme, then resume
                // with the bytes not yet processed.
                let mut rest = self.pending.split_off(ba.len);
                self.pending.clear();
                self.refill_run();
                rest.extend_from_slice(&queue[qi..]);
                queue = rest;
                qi = 0;
            }
            next = if qi < queue.len() {
                qi += 1;
                Some(queue[qi - 1])
            } else {
                None
            };
        }
    }

    fn refill_run(&mut self) {
        self.live.clear();
        let RecognizerState { grammar, live, .. } = self;
        live.extend(
            (0..grammar.terminals.len()).map(|t| (t as TermId, grammar.compiled[t].start())),
        );
    }

    fn commit(&mut self, term: TermId, cache: &mut Option<&mut ScanCache>) {
        if self.grammar.terminals[term as usize].ignored {
            return;
        }
        let ok = match cache {
            Some(c) => self.chart.scan_cached(&self.grammar, term, c),
            None => self.chart.scan(&self.grammar, term),
        };
        if !ok {
            self.dead = true;
        }
    }

    /// Simulate end of input on a copy: flush the pending run through
    /// commits and report chart acceptance.
    fn flush_accepts(&self, cache: &mut Option<&mut ScanCache>) -> bool {
        if self.dead {
            return false;
        }
        if self.pending.is_empty() {
            return self.chart.accepting();
        }
        let mut st = self.clone();
        loop {
            if st.dead {
                return false;
            }
            if st.pending.is_empty() {
                return st.chart.accepting();
            }
            let Some(ba) = st.best.take() else {
                return false;
            };
            st.commit(ba.term, cache);
            if st.dead {
                return false;
            }
            let rest = st.pending.split_off(ba.len);
            st.pending.clear();
            st.refill_run();
            for b in rest {
                if st.dead {
                    return false;
                }
                st.feed(b, cache);
            }
        }
    }

    /// Some proper byte extension keeps recognition alive (approximation
    /// documented at module level).
    fn has_viable_extension(&self, cache: &mut Option<&mut ScanCache>) -> bool {
        if self.dead {
            return false;
        }
        let g = &self.grammar;
        let expected = self.chart.expected();
        let e_nonempty = !expected.is_empty_set();
        let accepting = self.chart.accepting();
        let ignorable = !g.ignored_terms.is_empty();
        if self.pending.is_empty() {
            return e_nonempty || (ignorable && accepting);
        }
        let best_prio = self.best.map(|b| g.terminals[b.term as usize].priority);
        // A live automaton that can still grow may extend the current run to
        // a longer accept, which then wins the commit if its priority holds.
        for &(t, st) in &self.live {
            if !g.compiled[t as usize].can_extend(st) {
                continue;
            }
            if let Some(bp) = best_prio {
                if g.terminals[t as usize].priority < bp {
                    continue;
                }
            }
            if expected.get(t as usize) {
                return true;
            }
            if g.terminals[t as usize].ignored && (e_nonempty || accepting) {
                return true;
            }
        }
        // Otherwise the extension's first byte kills the run and commits the
        // recorded best; the byte itself then starts a fresh lexeme, so the
        // chart after the commit must still expect a terminal (or accept with
        // an ignorable tail available).
        let Some(ba) = self.best else {
            return false;
        };
        if g.terminals[ba.term as usize].ignored {
            return e_nonempty || accepting;
        }
        if !expected.get(ba.term as usize) {
            return false;
        }
        let mut chart = self.chart.clone();
        let ok = match cache {
            Some(c) => chart.scan_cached(g, ba.term, c),
            None => chart.scan(g, ba.term),
        };
        if !ok {
            return false;
        }
        !chart.expected().is_empty_set() || (ignorable && chart.accepting())
    }

    pub fn status(&self) -> PrefixStatus {
        if self.dead {
            return PrefixStatus::Dead;
        }
        let ext = self.has_viable_extension(&mut None);
        let member = self.flush_accepts(&mut None);
        match (member, ext) {
            (true, true) => PrefixStatus::CompleteAndExtensible,
            (true, false) => PrefixStatus::Complete,
            (false, true) => PrefixStatus::ValidPrefix,
            (false, false) => PrefixStatus::Dead,
        }
    }

    /// Fast path for mask probing: equivalent to `status() != Dead`.
    pub fn is_alive(&self) -> bool {
        self.is_alive_impl(&mut None)
    }

    /// `is_alive` with chart scans memoized in `cache` (mask probing).
    pub(crate) fn is_alive_cached(&self, cache: &mut ScanCache) -> bool {
        self.is_alive_impl(&mut Some(cache))
    }

    fn is_alive_impl(&self, cache: &mut Option<&mut ScanCache>) -> bool {
        !self.dead && (self.has_viable_extension(cache) || self.flush_accepts(cache))
    }

    /// Equivalent to `status().is_member()` without the extension check.
    pub fn is_complete_member(&self) -> bool {
        self.flush_accepts(&mut None)
    }

    /// Names of terminals the chart would accept next (diagnostics).
    pub fn expected_terminal_names(&self) -> Vec<String> {
        self.chart
            .expected()
            .iter_ones()
            .map(|t| self.grammar.terminals[t].name.clone())
            .collect()
    }
}

fn fresh_run(g: &GrammarSpec) -> Vec<(TermId, TermState)> {
    (0..g.terminals.len())
        .map(|t| (t as TermId, g.compiled[t].start()))
        .collect()
}

/// Disambiguation order: priority, then match length, then declaration order.
fn better_of(g: &GrammarSpec, current: Option<BestAccept>, cand: BestAccept) -> bool {
    match current {
        None => true,
        Some(b) => {
            let cp = g.terminals[cand.term as usize].priority;
            let bp = g.terminals[b.term as usize].priority;
            cp > bp
                || (cp == bp
                    && (cand.len > b.len
                        || (cand.len == b.len
                            && g.terminals[cand.term as usize].decl_index
                                < g.terminals[b.term as usize].decl_index)))
        }
    }
}

/// Whole-string membership.
pub fn is_member(grammar: &Arc<GrammarSpec>, s: &[u8]) -> bool {
    RecognizerState::init(grammar).advance(s).status().is_member()
}
