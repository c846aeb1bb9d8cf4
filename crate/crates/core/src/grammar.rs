//! Grammar definitions: a small Lark-style surface syntax, desugaring into a
//! flat production table, and the grammar transforms used by the decoder
//! (delimiter wrapping, reasoning-prefix augmentation, terminal
//! specialization).
//!
//! The accepted surface syntax:
//!   rule_name: item item | item        lowercase rules, `|` alternatives
//!   TERM_NAME.3: "lit" | /regex/      uppercase terminal defs, `.N` priority
//!   "literal"  /regex/                 inline anonymous terminals
//!   x? x+ x*  ( ... )                  postfix repetition, grouping
//!   -> alias                           recorded, semantically inert
//!   ?rule_name:                        leading `?` accepted, no inlining
//!   %ignore /regex/ | %ignore TERM     lexemes dropped before parsing
//!   // comment                         to end of line

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::terminal::{CompiledTerminal, TerminalError};

pub type NtId = u32;
pub type TermId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Symbol {
    NonTerm(NtId),
    Term(TermId),
}

#[derive(Debug, Clone)]
pub struct Production {
    pub lhs: NtId,
    pub rhs: Vec<Symbol>,
    /// Alias from `-> name`, recorded only.
    pub label: Option<String>,
    /// True when the empty rhs came from `?`/`*` desugaring or a deliberate
    /// epsilon rule added by a transform; bare empty alternatives in source
    /// text are rejected.
    pub epsilon_by_design: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Pattern {
    Literal(Vec<u8>),
    /// Byte-oriented regex source (no anchors; anchoring is added at compile).
    Regex(String),
    /// Finite set of allowed literals, from specialize_terminal.
    OneOf(Vec<Vec<u8>>),
}

impl Pattern {
    /// Regex source equivalent, used for DFA compilation.
    pub fn to_regex_source(&self) -> String {
        match self {
            Pattern::Literal(bytes) => escape_bytes_regex(bytes),
            Pattern::Regex(src) => src.clone(),
            Pattern::OneOf(lits) => lits
                .iter()
                .map(|l| format!("(?:{})", escape_bytes_regex(l)))
                .collect::<Vec<_>>()
                .join("|"),
        }
    }
}

/// Escape arbitrary bytes into a regex matching them literally. Everything
/// outside the unambiguous alphanumeric range is hex-escaped: backslashing
/// punctuation is not safe in general (some escapes like `\<` are assertions,
/// not literals).
fn escape_bytes_regex(bytes: &[u8]) -> String {
    let mut out = String::new();
    for &b in bytes {
        if b.is_ascii_alphanumeric() || b == b'_' || b == b' ' {
            out.push(b as char);
        } else {
            out.push_str(&format!("\\x{:02x}", b));
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct TerminalDef {
    pub name: String,
    pub pattern: Pattern,
    pub priority: i32,
    /// Declaration order; breaks priority+length ties.
    pub decl_index: usize,
    /// Lexemes of this terminal are dropped before parsing.
    pub ignored: bool,
}

/// A parsed, validated, and compiled grammar. Immutable after construction;
/// recognizer states hold it behind an Arc and never mutate it.
pub struct GrammarSpec {
    pub nonterminals: Vec<String>,
    pub productions: Vec<Production>,
    /// Production indices grouped by lhs.
    pub prods_of: Vec<Vec<u32>>,
    pub terminals: Vec<TerminalDef>,
    pub start: NtId,
    /// Nonterminals that derive the empty string.
    pub nullable: Vec<bool>,
    /// True when L(grammar) is empty (start symbol derives no terminal string).
    pub language_empty: bool,
    /// Compiled DFA per terminal, same indexing as `terminals`.
    pub compiled: Vec<CompiledTerminal>,
    /// Terminal ids with `ignored` set.
    pub ignored_terms: Vec<TermId>,
}

impl fmt::Debug for GrammarSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GrammarSpec")
            .field("nonterminals", &self.nonterminals.len())
            .field("productions", &self.productions.len())
            .field("terminals", &self.terminals.len())
            .field("start", &self.nonterminals[self.start as usize])
            .field("language_empty", &self.language_empty)
            .finish()
    }
}

#[derive(Debug, Error)]
pub enum GrammarError {
    #[error("syntax error at line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("undefined symbol reference: {0}")]
    UndefinedSymbol(String),
    #[error("duplicate definition of rule `{0}`")]
    DuplicateRule(String),
    #[error("missing start rule `start`")]
    MissingStart,
    #[error("terminal `{name}`: {source}")]
    Terminal {
        name: String,
        source: TerminalError,
    },
    #[error("unknown terminal `{0}`")]
    UnknownTerminal(String),
    #[error("specialize_terminal requires a nonempty allowed set")]
    EmptyAllowedSet,
    #[error("reasoning encodings must be nonempty and pairwise distinct")]
    BadEncodings,
    #[error("delimiters must be nonempty")]
    EmptyDelimiter,
}

// ---- surface-syntax tokenizer ----

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Name(String),     // lowercase rule name
    TermName(String), // UPPERCASE terminal name
    Str(Vec<u8>),
    Regex(String),
    Colon,
    Pipe,
    Quest,
    Plus,
    Star,
    LParen,
    RParen,
    Arrow,
}

struct Lexed {
    tok: Tok,
    line: usize,
    col: usize,
}

fn syntax_err<T>(line: usize, col: usize, msg: impl Into<String>) -> Result<T, GrammarError> {
    Err(GrammarError::Syntax {
        line,
        col,
        msg: msg.into(),
    })
}

/// Tokenize one definition body (everything after `name:`).
fn lex_body(text: &str, line0: usize) -> Result<Vec<Lexed>, GrammarError> {
    let mut toks = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    let mut line = line0;
    let mut col = 1;
    let advance = |i: &mut usize, line: &mut usize, col: &mut usize, n: usize, b: &[u8]| {
        for _ in 0..n {
            if b[*i] == b'\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
            *i += 1;
        }
    };
    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b' ' | b'\t' | b'\r' | b'\n' => advance(&mut i, &mut line, &mut col, 1, bytes),
            b'/' if i + 1 < bytes.len() && bytes[i + 1] == b'/' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    advance(&mut i, &mut line, &mut col, 1, bytes);
                }
            }
            b'"' => {
                let (l0, c0) = (line, col);
                advance(&mut i, &mut line, &mut col, 1, bytes);
                let mut lit = Vec::new();
                loop {
                    if i >= bytes.len() {
                        return syntax_err(l0, c0, "unterminated string literal");
                    }
                    match bytes[i] {
                        b'"' => {
                            advance(&mut i, &mut line, &mut col, 1, bytes);
                            break;
                        }
                        b'\\' => {
                            if i + 1 >= bytes.len() {
                                return syntax_err(line, col, "dangling escape");
                            }
                            let e = bytes[i + 1];
                            lit.push(match e {
                                b'n' => b'\n',
                                b't' => b'\t',
                                b'r' => b'\r',
                                b'\\' => b'\\',
                                b'"' => b'"',
                                other => other,
                            });
                            advance(&mut i, &mut line, &mut col, 2, bytes);
                        }
                        other => {
                            lit.push(other);
                            advance(&mut i, &mut line, &mut col, 1, bytes);
                        }
                    }
                }
                if lit.is_empty() {
                    return syntax_err(l0, c0, "empty string literal");
                }
                toks.push(Lexed {
                    tok: Tok::Str(lit),
                    line: l0,
                    col: c0,
                });
            }
            b'/' => {
                let (l0, c0) = (line, col);
                advance(&mut i, &mut line, &mut col, 1, bytes);
                let mut src = String::new();
                loop {
                    if i >= bytes.len() || bytes[i] == b'\n' {
                        return syntax_err(l0, c0, "unterminated regex literal");
                    }
                    match bytes[i] {
                        b'/' => {
                            advance(&mut i, &mut line, &mut col, 1, bytes);
                            break;
                        }
                        b'\\' => {
                            if i + 1 >= bytes.len() {
                                return syntax_err(line, col, "dangling escape");
                            }
                            // `\/` unescapes to a plain slash; everything else
                            // passes through to the regex engine untouched.
                            if bytes[i + 1] == b'/' {
                                src.push('/');
                            } else {
                                src.push('\\');
                                src.push(bytes[i + 1] as char);
                            }
                            advance(&mut i, &mut line, &mut col, 2, bytes);
                        }
                        other => {
                            src.push(other as char);
                            advance(&mut i, &mut line, &mut col, 1, bytes);
                        }
                    }
                }
                toks.push(Lexed {
                    tok: Tok::Regex(src),
                    line: l0,
                    col: c0,
                });
            }
            b':' => {
                toks.push(Lexed {
                    tok: Tok::Colon,
                    line,
                    col,
                });
                advance(&mut i, &mut line, &mut col, 1, bytes);
            }
            b'|' => {
                toks.push(Lexed {
                    tok: Tok::Pipe,
                    line,
                    col,
                });
                advance(&mut i, &mut line, &mut col, 1, bytes);
            }
            b'?' => {
                toks.push(Lexed {
                    tok: Tok::Quest,
                    line,
                    col,
                });
                advance(&mut i, &mut line, &mut col, 1, bytes);
            }
            b'+' => {
                toks.push(Lexed {
                    tok: Tok::Plus,
                    line,
                    col,
                });
                advance(&mut i, &mut line, &mut col, 1, bytes);
            }
            b'*' => {
                toks.push(Lexed {
                    tok: Tok::Star,
                    line,
                    col,
                });
                advance(&mut i, &mut line, &mut col, 1, bytes);
            }
            b'(' => {
                toks.push(Lexed {
                    tok: Tok::LParen,
                    line,
                    col,
                });
                advance(&mut i, &mut line, &mut col, 1, bytes);
            }
            b')' => {
                toks.push(Lexed {
                    tok: Tok::RParen,
                    line,
                    col,
                });
                advance(&mut i, &mut line, &mut col, 1, bytes);
            }
            b'-' if i + 1 < bytes.len() && bytes[i + 1] == b'>' => {
                toks.push(Lexed {
                    tok: Tok::Arrow,
                    line,
                    col,
                });
                advance(&mut i, &mut line, &mut col, 2, bytes);
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let (l0, c0) = (line, col);
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    advance(&mut i, &mut line, &mut col, 1, bytes);
                }
                let word = &text[start..i];
                let tok = if word.chars().next().unwrap().is_ascii_uppercase() {
                    Tok::TermName(word.to_string())
                } else {
                    Tok::Name(word.to_string())
                };
                toks.push(Lexed { tok, line: l0, col: c0 });
            }
            other => {
                return syntax_err(line, col, format!("unexpected character `{}`", other as char))
            }
        }
    }
    Ok(toks)
}

// ---- definition chunking ----

struct RawDef {
    line: usize,
    kind: RawKind,
}

enum RawKind {
    Rule {
        name: String,
        body: String,
        body_line: usize,
    },
    Terminal {
        name: String,
        priority: i32,
        body: String,
        body_line: usize,
    },
    Ignore {
        body: String,
        body_line: usize,
    },
}

fn strip_comment(line: &str) -> &str {
    // `//` starts a comment except inside string/regex literals.
    let bytes = line.as_bytes();
    let mut in_str = false;
    let mut in_re = false;
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if in_str {
            if b == b'\\' {
                i += 1;
            } else if b == b'"' {
                in_str = false;
            }
        } else if in_re {
            if b == b'\\' {
                i += 1;
            } else if b == b'/' {
                in_re = false;
            }
        } else {
            match b {
                b'"' => in_str = true,
                b'/' if i + 1 < bytes.len() && bytes[i + 1] == b'/' => return &line[..i],
                b'/' => in_re = true,
                _ => {}
            }
        }
        i += 1;
    }
    line
}

/// Header of a definition line: `name:`, `?name:`, `NAME.3:`, `%ignore`.
fn parse_def_header(line: &str) -> Option<(String, Option<i32>, usize)> {
    let trimmed = line.trim_start();
    if let Some(rest) = trimmed.strip_prefix("%ignore") {
        if rest.is_empty() || rest.starts_with(|c: char| c.is_whitespace()) {
            return Some(("%ignore".to_string(), None, line.len() - rest.len()));
        }
    }
    let mut s = trimmed;
    if let Some(r) = s.strip_prefix('?') {
        s = r;
    }
    let name_len = s
        .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .unwrap_or(s.len());
    if name_len == 0 {
        return None;
    }
    let name = &s[..name_len];
    if !name.chars().next().unwrap().is_ascii_alphabetic() && !name.starts_with('_') {
        return None;
    }
    let mut rest = &s[name_len..];
    let mut priority = None;
    if let Some(r) = rest.strip_prefix('.') {
        let num_len = r
            .find(|c: char| !(c.is_ascii_digit() || c == '-'))
            .unwrap_or(r.len());
        priority = r[..num_len].parse::<i32>().ok();
        priority?;
        rest = &r[num_len..];
    }
    let rest = rest.trim_start();
    if let Some(after) = rest.strip_prefix(':') {
        let consumed = line.len() - after.len();
        return Some((name.to_string(), priority, consumed));
    }
    None
}

fn chunk_definitions(text: &str) -> Result<Vec<RawDef>, GrammarError> {
    let mut defs: Vec<RawDef> = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = strip_comment(raw_line);
        if line.trim().is_empty() {
            continue;
        }
        let trimmed = line.trim_start();
        if trimmed.starts_with('|') {
            match defs.last_mut() {
                Some(def) => match &mut def.kind {
                    RawKind::Rule { body, .. }
                    | RawKind::Terminal { body, .. }
                    | RawKind::Ignore { body, .. } => {
                        body.push('\n');
                        body.push_str(line);
                    }
                },
                None => return syntax_err(lineno, 1, "alternative before any definition"),
            }
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("%ignore") {
            defs.push(RawDef {
                line: lineno,
                kind: RawKind::Ignore {
                    body: rest.to_string(),
                    body_line: lineno,
                },
            });
            continue;
        }
        match parse_def_header(line) {
            Some((name, priority, consumed)) => {
                let body = line[consumed..].to_string();
                let upper = name.chars().next().unwrap().is_ascii_uppercase();
                if upper {
                    defs.push(RawDef {
                        line: lineno,
                        kind: RawKind::Terminal {
                            name,
                            priority: priority.unwrap_or(0),
                            body,
                            body_line: lineno,
                        },
                    });
                } else {
                    if priority.is_some() {
                        return syntax_err(lineno, 1, "priority suffix is only valid on terminals");
                    }
                    defs.push(RawDef {
                        line: lineno,
                        kind: RawKind::Rule {
                            name,
                            body,
                            body_line: lineno,
                        },
                    });
                }
            }
            None => return syntax_err(lineno, 1, "expected `name:` definition"),
        }
    }
    Ok(defs)
}

// ---- rule-body AST ----

enum Node {
    Sym(Tok), // Str / Regex / Name / TermName
    Group(Vec<Vec<Node>>),
    Opt(Box<Node>),
    Plus(Box<Node>),
    Star(Box<Node>),
}

struct BodyParser {
    toks: Vec<Lexed>,
    pos: usize,
    def_line: usize,
}

impl BodyParser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|l| &l.tok)
    }

    fn loc(&self) -> (usize, usize) {
        self.toks
            .get(self.pos.min(self.toks.len().saturating_sub(1)))
            .map(|l| (l.line, l.col))
            .unwrap_or((self.def_line, 1))
    }

    /// alt_list := alt ("|" alt)*
    fn alternatives(&mut self, top: bool) -> Result<Vec<(Vec<Node>, Option<String>)>, GrammarError> {
        let mut alts = Vec::new();
        loop {
            alts.push(self.alternative(top)?);
            match self.peek() {
                Some(Tok::Pipe) => {
                    self.pos += 1;
                }
                _ => break,
            }
        }
        Ok(alts)
    }

    /// alt := item* ("-> alias")?   (alias only at rule top level)
    fn alternative(&mut self, top: bool) -> Result<(Vec<Node>, Option<String>), GrammarError> {
        let mut items = Vec::new();
        let mut label = None;
        loop {
            match self.peek() {
                None | Some(Tok::Pipe) | Some(Tok::RParen) => break,
                Some(Tok::Arrow) => {
                    self.pos += 1;
                    let (l, c) = self.loc();
                    match self.peek() {
                        Some(Tok::Name(n)) => {
                            if !top {
                                return syntax_err(l, c, "alias inside group");
                            }
                            label = Some(n.clone());
                            self.pos += 1;
                        }
                        _ => return syntax_err(l, c, "expected alias name after ->"),
                    }
                    break;
                }
                _ => items.push(self.item()?),
            }
        }
        Ok((items, label))
    }

    fn item(&mut self) -> Result<Node, GrammarError> {
        let mut node = self.atom()?;
        loop {
            match self.peek() {
                Some(Tok::Quest) => {
                    self.pos += 1;
                    node = Node::Opt(Box::new(node));
                }
                Some(Tok::Plus) => {
                    self.pos += 1;
                    node = Node::Plus(Box::new(node));
                }
                Some(Tok::Star) => {
                    self.pos += 1;
                    node = Node::Star(Box::new(node));
                }
                _ => break,
            }
        }
        Ok(node)
    }

    fn atom(&mut self) -> Result<Node, GrammarError> {
        let (l, c) = self.loc();
        match self.peek().cloned() {
            Some(Tok::LParen) => {
                self.pos += 1;
                let alts = self.alternatives(false)?;
                match self.peek() {
                    Some(Tok::RParen) => {
                        self.pos += 1;
                        Ok(Node::Group(alts.into_iter().map(|(n, _)| n).collect()))
                    }
                    _ => syntax_err(l, c, "unclosed group"),
                }
            }
            Some(t @ (Tok::Str(_) | Tok::Regex(_) | Tok::Name(_) | Tok::TermName(_))) => {
                self.pos += 1;
                Ok(Node::Sym(t))
            }
            _ => syntax_err(l, c, "expected symbol, literal, or group"),
        }
    }
}

// ---- builder ----

/// Mutable construction state shared by text parsing and the transforms.
struct Builder {
    nonterminals: Vec<String>,
    nt_ids: HashMap<String, NtId>,
    productions: Vec<Production>,
    terminals: Vec<TerminalDef>,
    named_terms: HashMap<String, TermId>,
    anon_terms: HashMap<Vec<u8>, TermId>,
    fresh_counter: usize,
}

impl Builder {
    fn new() -> Self {
        Builder {
            nonterminals: Vec::new(),
            nt_ids: HashMap::new(),
            productions: Vec::new(),
            terminals: Vec::new(),
            named_terms: HashMap::new(),
            anon_terms: HashMap::new(),
            fresh_counter: 0,
        }
    }

    fn nt(&mut self, name: &str) -> NtId {
        if let Some(&id) = self.nt_ids.get(name) {
            return id;
        }
        let id = self.nonterminals.len() as NtId;
        self.nonterminals.push(name.to_string());
        self.nt_ids.insert(name.to_string(), id);
        id
    }

    fn fresh_nt(&mut self, hint: &str) -> NtId {
        loop {
            let name = format!("__{}_{}", hint, self.fresh_counter);
            self.fresh_counter += 1;
            if !self.nt_ids.contains_key(&name) {
                return self.nt(&name);
            }
        }
    }

    fn literal_term(&mut self, bytes: Vec<u8>) -> TermId {
        if let Some(&id) = self.anon_terms.get(&bytes) {
            return id;
        }
        let id = self.terminals.len() as TermId;
        let name = format!("__LIT_{}", id);
        self.terminals.push(TerminalDef {
            name,
            pattern: Pattern::Literal(bytes.clone()),
            priority: 0,
            decl_index: id as usize,
            ignored: false,
        });
        self.anon_terms.insert(bytes, id);
        id
    }

    fn anon_regex_term(&mut self, src: String) -> TermId {
        let id = self.terminals.len() as TermId;
        let name = format!("__RE_{}", id);
        self.terminals.push(TerminalDef {
            name,
            pattern: Pattern::Regex(src),
            priority: 0,
            decl_index: id as usize,
            ignored: false,
        });
        id
    }

    fn named_term(&mut self, name: &str) -> Option<TermId> {
        self.named_terms.get(name).copied()
    }

    fn define_named_term(
        &mut self,
        name: &str,
        pattern: Pattern,
        priority: i32,
    ) -> Result<TermId, GrammarError> {
        if self.named_terms.contains_key(name) {
            return Err(GrammarError::DuplicateRule(name.to_string()));
        }
        let id = self.terminals.len() as TermId;
        self.terminals.push(TerminalDef {
            name: name.to_string(),
            pattern,
            priority,
            decl_index: id as usize,
            ignored: false,
        });
        self.named_terms.insert(name.to_string(), id);
        Ok(id)
    }

    fn push_prod(&mut self, lhs: NtId, rhs: Vec<Symbol>, label: Option<String>, eps_ok: bool) {
        let epsilon_by_design = rhs.is_empty() && eps_ok;
        self.productions.push(Production {
            lhs,
            rhs,
            label,
            epsilon_by_design,
        });
    }

    /// Lower one AST node to a symbol, materializing helper nonterminals for
    /// groups and repetition.
    fn lower(&mut self, node: Node, pending: &mut Vec<(String, usize)>) -> Symbol {
        match node {
            Node::Sym(Tok::Str(bytes)) => Symbol::Term(self.literal_term(bytes)),
            Node::Sym(Tok::Regex(src)) => Symbol::Term(self.anon_regex_term(src)),
            Node::Sym(Tok::TermName(name)) => match self.named_term(&name) {
                Some(id) => Symbol::Term(id),
                None => {
                    // Forward reference; resolved after all defs are read.
                    pending.push((name.clone(), self.productions.len()));
                    // Placeholder nt with the terminal's name; patched later.
                    Symbol::NonTerm(self.nt(&format!("__FWD_{}", name)))
                }
            },
            Node::Sym(Tok::Name(name)) => Symbol::NonTerm(self.nt(&name)),
            Node::Sym(_) => unreachable!("non-symbol token in Sym node"),
            Node::Group(alts) => {
                let g = self.fresh_nt("grp");
                for alt in alts {
                    let rhs: Vec<Symbol> =
                        alt.into_iter().map(|n| self.lower(n, pending)).collect();
                    self.push_prod(g, rhs, None, false);
                }
                Symbol::NonTerm(g)
            }
            Node::Opt(inner) => {
                let sym = self.lower(*inner, pending);
                let o = self.fresh_nt("opt");
                self.push_prod(o, vec![sym], None, false);
                self.push_prod(o, vec![], None, true);
                Symbol::NonTerm(o)
            }
            Node::Star(inner) => {
                let sym = self.lower(*inner, pending);
                let r = self.fresh_nt("rep");
                self.push_prod(r, vec![Symbol::NonTerm(r), sym], None, false);
                self.push_prod(r, vec![], None, true);
                Symbol::NonTerm(r)
            }
            Node::Plus(inner) => {
                let sym = self.lower(*inner, pending);
                let p = self.fresh_nt("plus");
                self.push_prod(p, vec![sym], None, false);
                self.push_prod(p, vec![Symbol::NonTerm(p), sym], None, false);
                Symbol::NonTerm(p)
            }
        }
    }

    fn finish(mut self, start_name: &str) -> Result<GrammarSpec, GrammarError> {
        let start = match self.nt_ids.get(start_name) {
            Some(&id) => id,
            None => return Err(GrammarError::MissingStart),
        };
        // Every referenced nonterminal needs at least one production.
        let mut has_prod = vec![false; self.nonterminals.len()];
        for p in &self.productions {
            has_prod[p.lhs as usize] = true;
        }
        for p in &self.productions {
            for s in &p.rhs {
                if let Symbol::NonTerm(nt) = s {
                    if !has_prod[*nt as usize] {
                        return Err(GrammarError::UndefinedSymbol(
                            self.nonterminals[*nt as usize].clone(),
                        ));
                    }
                }
            }
        }
        if !has_prod[start as usize] {
            return Err(GrammarError::UndefinedSymbol(start_name.to_string()));
        }

        // Compile terminal DFAs.
        let mut compiled = Vec::with_capacity(self.terminals.len());
        for t in &self.terminals {
            let c = CompiledTerminal::compile(&t.pattern.to_regex_source()).map_err(|e| {
                GrammarError::Terminal {
                    name: t.name.clone(),
                    source: e,
                }
            })?;
            compiled.push(c);
        }

        // Nullability fixpoint.
        let n = self.nonterminals.len();
        let mut nullable = vec![false; n];
        loop {
            let mut changed = false;
            for p in &self.productions {
                if nullable[p.lhs as usize] {
                    continue;
                }
                let all = p.rhs.iter().all(|s| match s {
                    Symbol::NonTerm(nt) => nullable[*nt as usize],
                    Symbol::Term(_) => false,
                });
                if all {
                    nullable[p.lhs as usize] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }

        // Productivity fixpoint: a nonterminal is productive when some
        // production derives a (possibly empty) terminal string. Productions
        // mentioning unproductive nonterminals are dropped so the recognizer
        // never predicts into a dead subtree.
        let mut productive = vec![false; n];
        loop {
            let mut changed = false;
            for p in &self.productions {
                if productive[p.lhs as usize] {
                    continue;
                }
                let all = p.rhs.iter().all(|s| match s {
                    Symbol::NonTerm(nt) => productive[*nt as usize],
                    Symbol::Term(_) => true,
                });
                if all {
                    productive[p.lhs as usize] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let language_empty = !productive[start as usize];
        if !language_empty {
            self.productions.retain(|p| {
                productive[p.lhs as usize]
                    && p.rhs.iter().all(|s| match s {
                        Symbol::NonTerm(nt) => productive[*nt as usize],
                        Symbol::Term(_) => true,
                    })
            });
        }

        let mut prods_of = vec![Vec::new(); n];
        for (i, p) in self.productions.iter().enumerate() {
            prods_of[p.lhs as usize].push(i as u32);
        }

        let ignored_terms = self
            .terminals
            .iter()
            .enumerate()
            .filter(|(_, t)| t.ignored)
            .map(|(i, _)| i as TermId)
            .collect();

        Ok(GrammarSpec {
            nonterminals: self.nonterminals,
            productions: self.productions,
            prods_of,
            terminals: self.terminals,
            start,
            nullable,
            language_empty,
            compiled,
            ignored_terms,
        })
    }
}

// ---- public API ----

/// Parse grammar source text into a validated, compiled grammar.
pub fn parse_grammar_text(text: &str) -> Result<GrammarSpec, GrammarError> {
    let defs = chunk_definitions(text)?;
    let mut b = Builder::new();

    // Pass 1: define named terminals so rule bodies can reference them.
    for def in &defs {
        if let RawKind::Terminal {
            name,
            priority,
            body,
            body_line,
        } = &def.kind
        {
            let toks = lex_body(body, *body_line)?;
            let pattern = parse_terminal_body(&toks, def.line)?;
            b.define_named_term(name, pattern, *priority)?;
        }
    }

    // Pass 2: rules and ignores.
    let mut seen_rules: HashMap<String, usize> = HashMap::new();
    for def in &defs {
        match &def.kind {
            RawKind::Rule {
                name,
                body,
                body_line,
            } => {
                if seen_rules.insert(name.clone(), def.line).is_some() {
                    return Err(GrammarError::DuplicateRule(name.clone()));
                }
                let toks = lex_body(body, *body_line)?;
                let mut p = BodyParser {
                    toks,
                    pos: 0,
                    def_line: def.line,
                };
                let alts = p.alternatives(true)?;
                if p.pos != p.toks.len() {
                    let (l, c) = p.loc();
                    return syntax_err(l, c, "trailing tokens in rule body");
                }
                let lhs = b.nt(name);
                for (items, label) in alts {
                    if items.is_empty() {
                        return syntax_err(
                            def.line,
                            1,
                            "empty alternative; use `?` or `*` for epsilon",
                        );
                    }
                    let mut pending = Vec::new();
                    let rhs: Vec<Symbol> =
                        items.into_iter().map(|n| b.lower(n, &mut pending)).collect();
                    if !pending.is_empty() {
                        return Err(GrammarError::UnknownTerminal(pending[0].0.clone()));
                    }
                    b.push_prod(lhs, rhs, label, false);
                }
            }
            RawKind::Ignore { body, body_line } => {
                let toks = lex_body(body, *body_line)?;
                let id = match toks.as_slice() {
                    [Lexed {
                        tok: Tok::Regex(src),
                        ..
                    }] => b.anon_regex_term(src.clone()),
                    [Lexed {
                        tok: Tok::TermName(name),
                        ..
                    }] => b
                        .named_term(name)
                        .ok_or_else(|| GrammarError::UnknownTerminal(name.clone()))?,
                    [Lexed {
                        tok: Tok::Str(lit), ..
                    }] => b.literal_term(lit.clone()),
                    _ => {
                        return syntax_err(
                            def.line,
                            1,
                            "%ignore expects one terminal, literal, or regex",
                        )
                    }
                };
                b.terminals[id as usize].ignored = true;
            }
            RawKind::Terminal { .. } => {}
        }
    }

    b.finish("start")
}

/// Terminal bodies are alternations of literals and regexes only.
fn parse_terminal_body(toks: &[Lexed], def_line: usize) -> Result<Pattern, GrammarError> {
    let mut alternatives: Vec<String> = Vec::new();
    let mut single_literal: Option<Vec<u8>> = None;
    let mut expecting_atom = true;
    for lexed in toks {
        match (&lexed.tok, expecting_atom) {
            (Tok::Str(lit), true) => {
                if toks.len() == 1 {
                    single_literal = Some(lit.clone());
                }
                alternatives.push(format!("(?:{})", escape_bytes_regex(lit)));
                expecting_atom = false;
            }
            (Tok::Regex(src), true) => {
                alternatives.push(format!("(?:{})", src));
                expecting_atom = false;
            }
            (Tok::Pipe, false) => expecting_atom = true,
            _ => {
                return syntax_err(
                    lexed.line,
                    lexed.col,
                    "terminal bodies allow only literals, regexes, and `|`",
                )
            }
        }
    }
    if expecting_atom {
        return syntax_err(def_line, 1, "terminal body ends with `|` or is empty");
    }
    Ok(match single_literal {
        Some(lit) => Pattern::Literal(lit),
        None => Pattern::Regex(alternatives.join("|")),
    })
}

/// Rebuild a Builder from an existing grammar so transforms can extend it.
fn builder_from(g: &GrammarSpec) -> Builder {
    let mut b = Builder::new();
    b.nonterminals = g.nonterminals.clone();
    for (i, name) in g.nonterminals.iter().enumerate() {
        b.nt_ids.insert(name.clone(), i as NtId);
    }
    b.productions = g.productions.clone();
    b.terminals = g.terminals.clone();
    for (i, t) in g.terminals.iter().enumerate() {
        if let Pattern::Literal(bytes) = &t.pattern {
            // Only anonymous literals are deduplicated; named literal
            // terminals keep their own priority.
            if t.name.starts_with("__LIT_") {
                b.anon_terms.insert(bytes.clone(), i as TermId);
            }
        }
        if !t.name.starts_with("__") {
            b.named_terms.insert(t.name.clone(), i as TermId);
        }
    }
    b
}

/// Wrap a grammar between two literal delimiters: the result's language is
/// exactly { s1 · w · s2 : w in L(g) }.
pub fn augment_with_delimiters(
    g: &GrammarSpec,
    s1: &[u8],
    s2: &[u8],
) -> Result<GrammarSpec, GrammarError> {
    if s1.is_empty() || s2.is_empty() {
        return Err(GrammarError::EmptyDelimiter);
    }
    let start_name = g.nonterminals[g.start as usize].clone();
    let mut b = builder_from(g);
    let t1 = b.literal_term(s1.to_vec());
    let t2 = b.literal_term(s2.to_vec());
    let old_start = b.nt(&start_name);
    let new_start = b.fresh_nt("delim_start");
    b.push_prod(
        new_start,
        vec![Symbol::Term(t1), Symbol::NonTerm(old_start), Symbol::Term(t2)],
        None,
        false,
    );
    let new_start_name = b.nonterminals[new_start as usize].clone();
    b.finish(&new_start_name)
}

/// Prefix a grammar with an unconstrained run of step-encoding tokens:
/// the result accepts encodings* followed by any member of g. The empty
/// encoding run is deliberately allowed (a machine that halts immediately
/// still produces output).
pub fn build_reasoning_grammar(
    g: &GrammarSpec,
    encodings: &[Vec<u8>],
) -> Result<GrammarSpec, GrammarError> {
    if encodings.is_empty() {
        return Err(GrammarError::BadEncodings);
    }
    {
        let mut seen = std::collections::HashSet::new();
        for e in encodings {
            if e.is_empty() || !seen.insert(e.clone()) {
                return Err(GrammarError::BadEncodings);
            }
        }
    }
    let start_name = g.nonterminals[g.start as usize].clone();
    let mut b = builder_from(g);
    let old_start = b.nt(&start_name);
    let step = b.fresh_nt("step");
    for e in encodings {
        let t = b.literal_term(e.clone());
        b.push_prod(step, vec![Symbol::Term(t)], None, false);
    }
    let run = b.fresh_nt("run");
    b.push_prod(run, vec![Symbol::NonTerm(step), Symbol::NonTerm(run)], None, false);
    b.push_prod(run, vec![], None, true);
    let new_start = b.fresh_nt("reason_start");
    b.push_prod(
        new_start,
        vec![Symbol::NonTerm(run), Symbol::NonTerm(old_start)],
        None,
        false,
    );
    let new_start_name = b.nonterminals[new_start as usize].clone();
    b.finish(&new_start_name)
}

/// Replace a terminal's pattern with a finite set of allowed lexemes at a
/// priority above everything else in the grammar.
pub fn specialize_terminal(
    g: &GrammarSpec,
    terminal: &str,
    allowed: &[Vec<u8>],
) -> Result<GrammarSpec, GrammarError> {
    if allowed.is_empty() {
        return Err(GrammarError::EmptyAllowedSet);
    }
    let start_name = g.nonterminals[g.start as usize].clone();
    let mut b = builder_from(g);
    let id = b
        .named_term(terminal)
        .ok_or_else(|| GrammarError::UnknownTerminal(terminal.to_string()))?;
    let top = b.terminals.iter().map(|t| t.priority).max().unwrap_or(0);
    let mut lits: Vec<Vec<u8>> = allowed.to_vec();
    lits.sort();
    lits.dedup();
    b.terminals[id as usize].pattern = Pattern::OneOf(lits);
    b.terminals[id as usize].priority = top + 1;
    b.finish(&start_name)
}

/// Convenience handle used throughout: grammars are shared immutably.
pub type SharedGrammar = Arc<GrammarSpec>;
