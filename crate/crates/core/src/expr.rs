//! Arithmetic expressions over exact rationals: parsing, evaluation, and
//! randomized equivalence checking.
//!
//! The surface syntax matches the bundled arithmetic grammar: integer (or
//! decimal) literals, identifiers, `+ - * / // %`, parentheses, and
//! `int(...)`. `/` is exact rational division, `//` floors, `%` is the
//! floor-division remainder, and `int` truncates toward zero.
//!
//! Equivalence is decided structurally when the trees already match, and
//! otherwise by evaluating both sides on shared random assignments. Agreeing
//! on every trial is accepted as equivalent, so the check has one-sided
//! error: false positives are possible but vanish quickly with trials.

use std::collections::{BTreeSet, HashMap};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExprError {
    #[error("unexpected character {0:?}")]
    BadChar(char),
    #[error("unexpected end of expression")]
    UnexpectedEnd,
    #[error("unexpected token {0:?}")]
    UnexpectedToken(String),
    #[error("division by zero")]
    DivZero,
    #[error("variable {0:?} has no value")]
    UnboundVariable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    FloorDiv,
    Mod,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Num(BigRational),
    Var(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    /// Truncation toward zero.
    Int(Box<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(BigRational),
    Ident(String),
    Op(BinOp),
    LParen,
    RParen,
}

fn lex(text: &str) -> Result<Vec<Tok>, ExprError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '0'..='9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let mut denom = BigInt::one();
                let mut digits = text[start..i].to_string();
                if i + 1 < bytes.len()
                    && bytes[i] == b'.'
                    && bytes[i + 1].is_ascii_digit()
                {
                    i += 1;
                    let frac_start = i;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                    digits.push_str(&text[frac_start..i]);
                    denom = BigInt::from(10u32).pow((i - frac_start) as u32);
                }
                let numer: BigInt = digits.parse().expect("digits");
                out.push(Tok::Num(BigRational::new(numer, denom)));
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                out.push(Tok::Ident(text[start..i].to_string()));
            }
            '+' => {
                out.push(Tok::Op(BinOp::Add));
                i += 1;
            }
            '-' => {
                out.push(Tok::Op(BinOp::Sub));
                i += 1;
            }
            '*' => {
                out.push(Tok::Op(BinOp::Mul));
                i += 1;
            }
            '%' => {
                out.push(Tok::Op(BinOp::Mod));
                i += 1;
            }
            '/' => {
                if i + 1 < bytes.len() && bytes[i + 1] == b'/' {
                    out.push(Tok::Op(BinOp::FloorDiv));
                    i += 2;
                } else {
                    out.push(Tok::Op(BinOp::Div));
                    i += 1;
                }
            }
            '(' => {
                out.push(Tok::LParen);
                i += 1;
            }
            ')' => {
                out.push(Tok::RParen);
                i += 1;
            }
            other => return Err(ExprError::BadChar(other)),
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Tok>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at)
    }

    fn bump(&mut self) -> Result<Tok, ExprError> {
        let t = self.toks.get(self.at).cloned().ok_or(ExprError::UnexpectedEnd)?;
        self.at += 1;
        Ok(t)
    }

    fn expect_rparen(&mut self) -> Result<(), ExprError> {
        match self.bump()? {
            Tok::RParen => Ok(()),
            other => Err(ExprError::UnexpectedToken(format!("{:?}", other))),
        }
    }

    // expr := term (('+'|'-') term)*
    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(op @ (BinOp::Add | BinOp::Sub))) = self.peek() {
            let op = *op;
            self.at += 1;
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    // term := factor (('*'|'/'|'//'|'%') factor)*
    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.factor()?;
        while let Some(Tok::Op(op @ (BinOp::Mul | BinOp::Div | BinOp::FloorDiv | BinOp::Mod))) =
            self.peek()
        {
            let op = *op;
            self.at += 1;
            let rhs = self.factor()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    // factor := '-' factor | NUMBER | IDENT | 'int' '(' expr ')' | '(' expr ')'
    fn factor(&mut self) -> Result<Expr, ExprError> {
        match self.bump()? {
            Tok::Op(BinOp::Sub) => Ok(Expr::Neg(Box::new(self.factor()?))),
            Tok::Num(n) => Ok(Expr::Num(n)),
            Tok::Ident(name) => {
                if name == "int" && matches!(self.peek(), Some(Tok::LParen)) {
                    self.at += 1;
                    let inner = self.expr()?;
                    self.expect_rparen()?;
                    Ok(Expr::Int(Box::new(inner)))
                } else {
                    Ok(Expr::Var(name))
                }
            }
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            other => Err(ExprError::UnexpectedToken(format!("{:?}", other))),
        }
    }
}

pub fn parse_expr(text: &str) -> Result<Expr, ExprError> {
    let mut p = Parser {
        toks: lex(text)?,
        at: 0,
    };
    let e = p.expr()?;
    if p.at != p.toks.len() {
        return Err(ExprError::UnexpectedToken(format!("{:?}", p.toks[p.at])));
    }
    Ok(e)
}

fn floor_div(a: &BigRational, b: &BigRational) -> Result<BigRational, ExprError> {
    if b.is_zero() {
        return Err(ExprError::DivZero);
    }
    Ok((a / b).floor())
}

pub fn eval_expr(
    e: &Expr,
    env: &HashMap<String, BigRational>,
) -> Result<BigRational, ExprError> {
    match e {
        Expr::Num(n) => Ok(n.clone()),
        Expr::Var(name) => env
            .get(name)
            .cloned()
            .ok_or_else(|| ExprError::UnboundVariable(name.clone())),
        Expr::Neg(inner) => Ok(-eval_expr(inner, env)?),
        Expr::Int(inner) => Ok(eval_expr(inner, env)?.trunc()),
        Expr::Bin(op, l, r) => {
            let a = eval_expr(l, env)?;
            let b = eval_expr(r, env)?;
            match op {
                BinOp::Add => Ok(a + b),
                BinOp::Sub => Ok(a - b),
                BinOp::Mul => Ok(a * b),
                BinOp::Div => {
                    if b.is_zero() {
                        Err(ExprError::DivZero)
                    } else {
                        Ok(a / b)
                    }
                }
                BinOp::FloorDiv => floor_div(&a, &b),
                BinOp::Mod => {
                    let q = floor_div(&a, &b)?;
                    Ok(a - b * q)
                }
            }
        }
    }
}

pub fn variables(e: &Expr, out: &mut BTreeSet<String>) {
    match e {
        Expr::Num(_) => {}
        Expr::Var(name) => {
            out.insert(name.clone());
        }
        Expr::Neg(inner) | Expr::Int(inner) => variables(inner, out),
        Expr::Bin(_, l, r) => {
            variables(l, out);
            variables(r, out);
        }
    }
}

/// Per-trial resample budget when an assignment hits a zero divisor.
const RESAMPLE: usize = 32;

/// Randomized equivalence over shared assignments. Structurally identical
/// trees short-circuit to true. Assignments mix integers and small-denominator
/// rationals so flooring and truncation differences show up.
pub fn check_equivalence(
    a: &str,
    b: &str,
    trials: usize,
    seed: u64,
) -> Result<bool, ExprError> {
    let ea = parse_expr(a)?;
    let eb = parse_expr(b)?;
    if ea == eb {
        return Ok(true);
    }
    let mut vars = BTreeSet::new();
    variables(&ea, &mut vars);
    variables(&eb, &mut vars);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let mut outcome = None;
        for _ in 0..RESAMPLE {
            let mut env = HashMap::new();
            for v in &vars {
                let numer = BigInt::from(rng.gen_range(-50i64..=50));
                let denom = BigInt::from(if rng.gen_bool(0.25) {
                    rng.gen_range(2i64..=6)
                } else {
                    1
                });
                env.insert(v.clone(), BigRational::new(numer, denom));
            }
            match (eval_expr(&ea, &env), eval_expr(&eb, &env)) {
                (Ok(x), Ok(y)) => {
                    outcome = Some(x == y);
                    break;
                }
                (Err(ExprError::DivZero), _) | (_, Err(ExprError::DivZero)) => continue,
                (Err(e), _) | (_, Err(e)) => return Err(e),
            }
        }
        match outcome {
            Some(true) => {}
            Some(false) => return Ok(false),
            // Every assignment divided by zero: nothing verifiable.
            None => return Ok(false),
        }
    }
    Ok(true)
}

/// Format a rational for reports: integers plainly, otherwise `p/q`.
pub fn format_rational(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else if r.denom().is_negative() {
        format!("{}/{}", -r.numer(), -r.denom())
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}
