//! Earley chart over committed lexer tokens.
//!
//! Columns are immutable once built and shared behind Arc, so recognizer
//! snapshots clone in O(1) via copy-on-write on the column vector. Nullable
//! nonterminals are handled by pre-advancing the predicting item, which keeps
//! the predict/complete loop a plain worklist.

use std::collections::HashMap;
use std::sync::Arc;

use crate::grammar::{GrammarSpec, NtId, Symbol, TermId};
use crate::util::BitSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Item {
    prod: u32,
    dot: u16,
    origin: u32,
}

#[derive(Debug)]
pub struct Column {
    items: Vec<Item>,
    /// Items in this column whose dot sits before the keyed nonterminal.
    waiting: HashMap<NtId, Vec<u32>>,
    /// Terminals some item's dot sits before.
    pub expected: BitSet,
    /// A completed start item spans the whole token stream.
    pub accepting: bool,
}

/// The chart: one column per committed token plus the initial column.
/// Cloning shares all columns.
#[derive(Clone)]
pub struct Chart {
    columns: Arc<Vec<Arc<Column>>>,
}

impl Chart {
    /// Initial chart. For an empty-language grammar the initial column has no
    /// items and expects nothing.
    pub fn init(g: &GrammarSpec) -> Chart {
        let mut col = ColumnBuilder::new(g);
        if !g.language_empty {
            for &p in &g.prods_of[g.start as usize] {
                col.add(
                    Item {
                        prod: p,
                        dot: 0,
                        origin: 0,
                    },
                    g,
                    &[],
                );
            }
        }
        Chart {
            columns: Arc::new(vec![Arc::new(col.finish(g, 0))]),
        }
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn last(&self) -> &Column {
        self.columns.last().expect("chart has at least one column")
    }

    pub fn accepting(&self) -> bool {
        self.last().accepting
    }

    pub fn expected(&self) -> &BitSet {
        &self.last().expected
    }

    /// Scan one terminal, memoized. A chart is frozen once built, so equal
    /// column-vector identity plus terminal implies an equal result; sibling
    /// probes in a mask computation then share one real scan.
    pub fn scan_cached(&mut self, g: &GrammarSpec, term: TermId, cache: &mut ScanCache) -> bool {
        let key = (Arc::as_ptr(&self.columns) as usize, term);
        if let Some((_, result)) = cache.map.get(&key) {
            return match result {
                Some(next) => {
                    *self = next.clone();
                    true
                }
                None => false,
            };
        }
        let source = self.clone();
        let ok = self.scan(g, term);
        let result = if ok { Some(self.clone()) } else { None };
        cache.map.insert(key, (source, result));
        ok
    }

    /// Scan one terminal. Returns false (chart unchanged) when the terminal
    /// is not expected, which the caller treats as a dead state.
    pub fn scan(&mut self, g: &GrammarSpec, term: TermId) -> bool {
        let this_idx = self.columns.len() as u32;
        let mut col = ColumnBuilder::new(g);
        {
            let prev = self.last();
            for item in &prev.items {
                let p = &g.productions[item.prod as usize];
                if p.rhs.get(item.dot as usize) == Some(&Symbol::Term(term)) {
                    col.add(
                        Item {
                            prod: item.prod,
                            dot: item.dot + 1,
                            origin: item.origin,
                        },
                        g,
                        &self.columns,
                    );
                }
            }
        }
        if col.items.is_empty() {
            return false;
        }
        let built = col.finish(g, this_idx);
        Arc::make_mut(&mut self.columns).push(Arc::new(built));
        true
    }
}

/// Scan memo scoped to one mask computation. The stored source chart keeps
/// the keyed column vector alive, so an identity key cannot be reused by a
/// later allocation.
#[derive(Default)]
pub struct ScanCache {
    map: HashMap<(usize, TermId), (Chart, Option<Chart>)>,
}

impl ScanCache {
    pub fn new() -> ScanCache {
        ScanCache::default()
    }
}

struct ColumnBuilder {
    items: Vec<Item>,
    seen: std::collections::HashSet<Item>,
    /// Worklist cursor; items at and past it still need closure processing.
    cursor: usize,
}

impl ColumnBuilder {
    fn new(_g: &GrammarSpec) -> ColumnBuilder {
        ColumnBuilder {
            items: Vec::new(),
            seen: std::collections::HashSet::new(),
            cursor: 0,
        }
    }

    /// Add an item and run the predict/complete closure incrementally.
    /// `prev_columns` is the chart so completions can reach origin columns;
    /// completions targeting the column under construction are resolved
    /// against the items added so far (possible only via nullable chains,
    /// which the pre-advance already covers, and same-column completions of
    /// epsilon productions).
    fn add(&mut self, item: Item, g: &GrammarSpec, prev_columns: &[Arc<Column>]) {
        if !self.seen.insert(item) {
            return;
        }
        self.items.push(item);
        while self.cursor < self.items.len() {
            let it = self.items[self.cursor];
            self.cursor += 1;
            let p = &g.productions[it.prod as usize];
            match p.rhs.get(it.dot as usize) {
                Some(&Symbol::NonTerm(nt)) => {
                    // Predict.
                    let this_idx = prev_columns.len() as u32;
                    for &np in &g.prods_of[nt as usize] {
                        let pred = Item {
                            prod: np,
                            dot: 0,
                            origin: this_idx,
                        };
                        if self.seen.insert(pred) {
                            self.items.push(pred);
                        }
                    }
                    // Nullable pre-advance.
                    if g.nullable[nt as usize] {
                        let adv = Item {
                            prod: it.prod,
                            dot: it.dot + 1,
                            origin: it.origin,
                        };
                        if self.seen.insert(adv) {
                            self.items.push(adv);
                        }
                    }
                }
                Some(&Symbol::Term(_)) => {}
                None => {
                    // Complete: advance items waiting on p.lhs in the origin
                    // column. Origin equal to the current column index means a
                    // same-column completion; those arise only through
                    // nullable productions already handled by the pre-advance,
                    // but are resolved here against local items for safety.
                    let this_idx = prev_columns.len() as u32;
                    if it.origin == this_idx {
                        let local: Vec<Item> = self
                            .items
                            .iter()
                            .filter(|w| {
                                g.productions[w.prod as usize].rhs.get(w.dot as usize)
                                    == Some(&Symbol::NonTerm(p.lhs))
                            })
                            .copied()
                            .collect();
                        for w in local {
                            let adv = Item {
                                prod: w.prod,
                                dot: w.dot + 1,
                                origin: w.origin,
                            };
                            if self.seen.insert(adv) {
                                self.items.push(adv);
                            }
                        }
                    } else if let Some(waits) = prev_columns
                        .get(it.origin as usize)
                        .and_then(|c| c.waiting.get(&p.lhs))
                    {
                        let origin_col = &prev_columns[it.origin as usize];
                        for &wi in waits {
                            let w = origin_col.items[wi as usize];
                            let adv = Item {
                                prod: w.prod,
                                dot: w.dot + 1,
                                origin: w.origin,
                            };
                            if self.seen.insert(adv) {
                                self.items.push(adv);
                            }
                        }
                    }
                }
            }
        }
    }

    fn finish(self, g: &GrammarSpec, _this_idx: u32) -> Column {
        let mut waiting: HashMap<NtId, Vec<u32>> = HashMap::new();
        let mut expected = BitSet::new(g.terminals.len());
        let mut accepting = false;
        for (i, it) in self.items.iter().enumerate() {
            let p = &g.productions[it.prod as usize];
            match p.rhs.get(it.dot as usize) {
                Some(&Symbol::NonTerm(nt)) => {
                    waiting.entry(nt).or_default().push(i as u32);
                }
                Some(&Symbol::Term(t)) => expected.set(t as usize),
                None => {
                    if p.lhs == g.start && it.origin == 0 {
                        accepting = true;
                    }
                }
            }
        }
        Column {
            items: self.items,
            waiting,
            expected,
            accepting,
        }
    }
}
