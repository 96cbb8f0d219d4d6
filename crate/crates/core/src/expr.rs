//! A small expression language for exact constants, affine constraints and
//! period formulas.
//!
//! Grammar: `+ - * / ^`, parentheses, integer literals, `sqrt(k)`, `gamma`,
//! and the variables `x`, `y` (affine forms) or `n` (period formulas).

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::qfield::QuadElem;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExprError {
    #[error("unexpected character {0:?} at offset {1}")]
    BadChar(char, usize),
    #[error("unexpected end of input")]
    Eof,
    #[error("unexpected token {0:?}")]
    Unexpected(String),
    #[error("unknown identifier {0:?}")]
    UnknownIdent(String),
    #[error("sqrt({0}) is not in the field Q(sqrt({1}))")]
    ForeignSqrt(u64, u32),
    #[error("expression is not {0}")]
    Shape(&'static str),
    #[error("division by zero")]
    DivZero,
    #[error("exponent must be an integer constant")]
    Exponent,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Int(BigInt),
    Sqrt(u64),
    Gamma,
    Var(char),
    Neg(Box<Expr>),
    Bin(Op, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(BigInt),
    Ident(String),
    Sym(char),
}

fn lex(s: &str) -> Result<Vec<Tok>, ExprError> {
    let mut out = Vec::new();
    let chars: Vec<char> = s.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            out.push(Tok::Int(text.parse().expect("digits")));
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^()".contains(c) {
            out.push(Tok::Sym(c));
            i += 1;
        } else {
            return Err(ExprError::BadChar(c, i));
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Result<Tok, ExprError> {
        let t = self.toks.get(self.pos).cloned().ok_or(ExprError::Eof)?;
        self.pos += 1;
        Ok(t)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ExprError> {
        match self.next()? {
            Tok::Sym(s) if s == c => Ok(()),
            t => Err(ExprError::Unexpected(format!("{t:?}"))),
        }
    }

    fn sum(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.product()?;
        loop {
            if self.eat('+') {
                lhs = Expr::Bin(Op::Add, lhs.into(), self.product()?.into());
            } else if self.eat('-') {
                lhs = Expr::Bin(Op::Sub, lhs.into(), self.product()?.into());
            } else {
                return Ok(lhs);
            }
        }
    }

    fn product(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Expr::Bin(Op::Mul, lhs.into(), self.unary()?.into());
            } else if self.eat('/') {
                lhs = Expr::Bin(Op::Div, lhs.into(), self.unary()?.into());
            } else if matches!(self.peek(), Some(Tok::Ident(_)) | Some(Tok::Sym('('))) {
                // implicit multiplication, e.g. `2sqrt(3)` or `3(x+y)`
                lhs = Expr::Bin(Op::Mul, lhs.into(), self.unary()?.into());
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.eat('-') {
            return Ok(Expr::Neg(self.unary()?.into()));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.eat('^') {
            let exp = self.unary()?;
            return Ok(Expr::Bin(Op::Pow, base.into(), exp.into()));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        match self.next()? {
            Tok::Int(n) => Ok(Expr::Int(n)),
            Tok::Sym('(') => {
                let e = self.sum()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => match name.as_str() {
                "sqrt" => {
                    self.expect('(')?;
                    let k = match self.next()? {
                        Tok::Int(k) => k.to_u64().ok_or(ExprError::Shape("a small radicand"))?,
                        t => return Err(ExprError::Unexpected(format!("{t:?}"))),
                    };
                    self.expect(')')?;
                    Ok(Expr::Sqrt(k))
                }
                "gamma" => Ok(Expr::Gamma),
                "x" | "y" | "n" => Ok(Expr::Var(name.chars().next().unwrap())),
                _ => Err(ExprError::UnknownIdent(name)),
            },
            t => Err(ExprError::Unexpected(format!("{t:?}"))),
        }
    }
}

pub fn parse(s: &str) -> Result<Expr, ExprError> {
    let mut p = Parser { toks: lex(s)?, pos: 0 };
    let e = p.sum()?;
    if let Some(t) = p.peek() {
        return Err(ExprError::Unexpected(format!("{t:?}")));
    }
    Ok(e)
}

fn sqrt_const(k: u64, d: u32) -> Result<QuadElem, ExprError> {
    let r = (k as f64).sqrt().round() as u64;
    if r * r == k {
        return Ok(QuadElem::from_int(r, d));
    }
    if k % d as u64 == 0 {
        let m = k / d as u64;
        let r = (m as f64).sqrt().round() as u64;
        if r * r == m {
            return Ok(&QuadElem::from_int(r, d) * &QuadElem::sqrt_d(d));
        }
    }
    Err(ExprError::ForeignSqrt(k, d))
}

fn int_exponent(e: &Expr) -> Result<i64, ExprError> {
    match e {
        Expr::Int(n) => n.to_i64().ok_or(ExprError::Exponent),
        Expr::Neg(inner) => Ok(-int_exponent(inner)?),
        _ => Err(ExprError::Exponent),
    }
}

pub fn eval_const(e: &Expr, d: u32) -> Result<QuadElem, ExprError> {
    Ok(match e {
        Expr::Int(n) => QuadElem::from_int(n.clone(), d),
        Expr::Sqrt(k) => sqrt_const(*k, d)?,
        Expr::Gamma => {
            if d != 5 {
                return Err(ExprError::ForeignSqrt(5, d));
            }
            QuadElem::gamma()
        }
        Expr::Var(_) => return Err(ExprError::Shape("a constant")),
        Expr::Neg(a) => -eval_const(a, d)?,
        Expr::Bin(op, a, b) => {
            let x = eval_const(a, d)?;
            if *op == Op::Pow {
                return x.pow(int_exponent(b)?).map_err(|_| ExprError::DivZero);
            }
            let y = eval_const(b, d)?;
            match op {
                Op::Add => x + y,
                Op::Sub => x - y,
                Op::Mul => x * y,
                Op::Div => x.try_div(&y).map_err(|_| ExprError::DivZero)?,
                Op::Pow => unreachable!(),
            }
        }
    })
}

pub fn parse_const(s: &str, d: u32) -> Result<QuadElem, ExprError> {
    eval_const(&parse(s)?, d)
}

/// `cx*x + cy*y + c0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Affine {
    pub cx: QuadElem,
    pub cy: QuadElem,
    pub c0: QuadElem,
}

impl Affine {
    fn constant(c: QuadElem) -> Self {
        let d = c.d();
        Affine { cx: QuadElem::zero(d), cy: QuadElem::zero(d), c0: c }
    }

    fn as_const(&self) -> Option<&QuadElem> {
        (self.cx.is_zero() && self.cy.is_zero()).then_some(&self.c0)
    }

    fn scale(&self, k: &QuadElem) -> Self {
        Affine { cx: &self.cx * k, cy: &self.cy * k, c0: &self.c0 * k }
    }

    fn combine(&self, o: &Self, sign: i32) -> Self {
        let f = |a: &QuadElem, b: &QuadElem| if sign > 0 { a + b } else { a - b };
        Affine { cx: f(&self.cx, &o.cx), cy: f(&self.cy, &o.cy), c0: f(&self.c0, &o.c0) }
    }
}

pub fn eval_affine(e: &Expr, d: u32) -> Result<Affine, ExprError> {
    Ok(match e {
        Expr::Var('x') => Affine { cx: QuadElem::one(d), cy: QuadElem::zero(d), c0: QuadElem::zero(d) },
        Expr::Var('y') => Affine { cx: QuadElem::zero(d), cy: QuadElem::one(d), c0: QuadElem::zero(d) },
        Expr::Var(_) => return Err(ExprError::Shape("affine in x and y")),
        Expr::Neg(a) => eval_affine(a, d)?.scale(&-QuadElem::one(d)),
        Expr::Bin(op @ (Op::Add | Op::Sub), a, b) => {
            let sign = if *op == Op::Add { 1 } else { -1 };
            eval_affine(a, d)?.combine(&eval_affine(b, d)?, sign)
        }
        Expr::Bin(Op::Mul, a, b) => {
            let (x, y) = (eval_affine(a, d)?, eval_affine(b, d)?);
            match (x.as_const(), y.as_const()) {
                (Some(k), _) => y.scale(k),
                (_, Some(k)) => x.scale(k),
                _ => return Err(ExprError::Shape("affine in x and y")),
            }
        }
        Expr::Bin(Op::Div, a, b) => {
            let k = eval_const(b, d)?;
            let inv = k.recip().map_err(|_| ExprError::DivZero)?;
            eval_affine(a, d)?.scale(&inv)
        }
        _ => Affine::constant(eval_const(e, d)?),
    })
}

/// Evaluates a period formula at a given `n`.
pub fn eval_rational(e: &Expr, n: i64) -> Result<BigRational, ExprError> {
    Ok(match e {
        Expr::Int(k) => BigRational::from_integer(k.clone()),
        Expr::Var('n') => BigRational::from_integer(n.into()),
        Expr::Var(_) | Expr::Sqrt(_) | Expr::Gamma => return Err(ExprError::Shape("rational in n")),
        Expr::Neg(a) => -eval_rational(a, n)?,
        Expr::Bin(op, a, b) => {
            let x = eval_rational(a, n)?;
            let y = eval_rational(b, n)?;
            match op {
                Op::Add => x + y,
                Op::Sub => x - y,
                Op::Mul => x * y,
                Op::Div => {
                    if y.is_zero() {
                        return Err(ExprError::DivZero);
                    }
                    x / y
                }
                Op::Pow => {
                    if !y.is_integer() {
                        return Err(ExprError::Exponent);
                    }
                    let k = y.to_integer().to_i32().ok_or(ExprError::Exponent)?;
                    if x.is_zero() && k < 0 {
                        return Err(ExprError::DivZero);
                    }
                    let base = if k < 0 { x.recip() } else { x };
                    num_traits::pow(base, k.unsigned_abs() as usize)
                }
            }
        }
    })
}

/// Evaluates a period formula that must yield a positive integer.
pub fn eval_integer(e: &Expr, n: i64) -> Result<BigInt, ExprError> {
    let r = eval_rational(e, n)?;
    if !r.is_integer() || !r.is_positive() {
        return Err(ExprError::Shape("a positive integer"));
    }
    Ok(r.to_integer())
}

impl Expr {
    pub fn is_one(&self) -> bool {
        matches!(self, Expr::Int(n) if n.is_one())
    }
}
