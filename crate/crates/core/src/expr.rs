#![allow(clippy::redundant_guards)]
// The smart constructors fold constants; they are not the ops traits.
#![allow(clippy::should_implement_trait)]

//! Small expression grammar for strip coefficients and field fixtures:
//! rational functions of x, y, and the ladder curves ψ_s(x), with integer
//! powers.  Supports exact symbolic partial derivatives, so evaluators built
//! from expressions supply analytic partials.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::puiseux::PuiseuxPoly;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    X,
    Y,
    /// ψ_s(x), indexed into the evaluation context's curve list.
    Psi(usize),
    /// d^k/dx^k ψ_s(x); produced by differentiation, also parseable.
    PsiDeriv(usize, u32),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Num(x), Expr::Num(y)) => Expr::Num(x + y),
            (Expr::Num(z), b) if z == 0.0 => b,
            (a, Expr::Num(z)) if z == 0.0 => a,
            (a, b) => Expr::Add(Box::new(a), Box::new(b)),
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Num(x), Expr::Num(y)) => Expr::Num(x - y),
            (a, Expr::Num(z)) if z == 0.0 => a,
            (Expr::Num(z), b) if z == 0.0 => Expr::neg(b),
            (a, b) => Expr::Sub(Box::new(a), Box::new(b)),
        }
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Num(x), Expr::Num(y)) => Expr::Num(x * y),
            (Expr::Num(z), _) | (_, Expr::Num(z)) if z == 0.0 => Expr::Num(0.0),
            (Expr::Num(o), b) if o == 1.0 => b,
            (a, Expr::Num(o)) if o == 1.0 => a,
            (a, b) => Expr::Mul(Box::new(a), Box::new(b)),
        }
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Num(z), b) if z == 0.0 && b != Expr::Num(0.0) => Expr::Num(0.0),
            (a, Expr::Num(o)) if o == 1.0 => a,
            (a, b) => Expr::Div(Box::new(a), Box::new(b)),
        }
    }

    pub fn neg(a: Expr) -> Expr {
        match a {
            Expr::Num(x) => Expr::Num(-x),
            Expr::Neg(inner) => *inner,
            a => Expr::Neg(Box::new(a)),
        }
    }

    pub fn pow(a: Expr, n: i32) -> Expr {
        match n {
            0 => Expr::Num(1.0),
            1 => a,
            _ => Expr::Pow(Box::new(a), n),
        }
    }

    /// Evaluate with ψ curves supplied by the context.
    pub fn eval(&self, x: f64, y: f64, curves: &[PuiseuxPoly<f64>]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::X => x,
            Expr::Y => y,
            Expr::Psi(s) => curves.get(*s).map(|c| c.eval(x)).unwrap_or(f64::NAN),
            Expr::PsiDeriv(s, k) => curves
                .get(*s)
                .map(|c| c.nth_derivative(*k as usize).eval(x))
                .unwrap_or(f64::NAN),
            Expr::Neg(a) => -a.eval(x, y, curves),
            Expr::Add(a, b) => a.eval(x, y, curves) + b.eval(x, y, curves),
            Expr::Sub(a, b) => a.eval(x, y, curves) - b.eval(x, y, curves),
            Expr::Mul(a, b) => a.eval(x, y, curves) * b.eval(x, y, curves),
            Expr::Div(a, b) => a.eval(x, y, curves) / b.eval(x, y, curves),
            Expr::Pow(a, n) => a.eval(x, y, curves).powi(*n),
        }
    }

    /// Exact symbolic ∂/∂x.
    pub fn dx(&self) -> Expr {
        match self {
            Expr::Num(_) | Expr::Y => Expr::Num(0.0),
            Expr::X => Expr::Num(1.0),
            Expr::Psi(s) => Expr::PsiDeriv(*s, 1),
            Expr::PsiDeriv(s, k) => Expr::PsiDeriv(*s, k + 1),
            Expr::Neg(a) => Expr::neg(a.dx()),
            Expr::Add(a, b) => Expr::add(a.dx(), b.dx()),
            Expr::Sub(a, b) => Expr::sub(a.dx(), b.dx()),
            Expr::Mul(a, b) => Expr::add(
                Expr::mul(a.dx(), (**b).clone()),
                Expr::mul((**a).clone(), b.dx()),
            ),
            Expr::Div(a, b) => Expr::sub(
                Expr::div(a.dx(), (**b).clone()),
                Expr::div(
                    Expr::mul((**a).clone(), b.dx()),
                    Expr::pow((**b).clone(), 2),
                ),
            ),
            Expr::Pow(a, n) => Expr::mul(
                Expr::mul(Expr::Num(*n as f64), Expr::pow((**a).clone(), n - 1)),
                a.dx(),
            ),
        }
    }

    /// Exact symbolic ∂/∂y.
    pub fn dy(&self) -> Expr {
        match self {
            Expr::Num(_) | Expr::X | Expr::Psi(_) | Expr::PsiDeriv(_, _) => Expr::Num(0.0),
            Expr::Y => Expr::Num(1.0),
            Expr::Neg(a) => Expr::neg(a.dy()),
            Expr::Add(a, b) => Expr::add(a.dy(), b.dy()),
            Expr::Sub(a, b) => Expr::sub(a.dy(), b.dy()),
            Expr::Mul(a, b) => Expr::add(
                Expr::mul(a.dy(), (**b).clone()),
                Expr::mul((**a).clone(), b.dy()),
            ),
            Expr::Div(a, b) => Expr::sub(
                Expr::div(a.dy(), (**b).clone()),
                Expr::div(
                    Expr::mul((**a).clone(), b.dy()),
                    Expr::pow((**b).clone(), 2),
                ),
            ),
            Expr::Pow(a, n) => Expr::mul(
                Expr::mul(Expr::Num(*n as f64), Expr::pow((**a).clone(), n - 1)),
                a.dy(),
            ),
        }
    }

    pub fn parse(src: &str) -> Result<Expr> {
        Parser::new(src).parse_all()
    }
}

impl fmt::Display for Expr {
    /// Canonical fully parenthesized form; `parse ∘ to_string` is identity
    /// up to simplification.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::X => write!(f, "x"),
            Expr::Y => write!(f, "y"),
            Expr::Psi(s) => write!(f, "psi{s}"),
            Expr::PsiDeriv(s, k) => write!(f, "psi{s}'{k}"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, n) => write!(f, "({a}^{n})"),
        }
    }
}

struct Parser<'a> {
    chars: Vec<char>,
    at: usize,
    src: &'a str,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser { chars: src.chars().collect(), at: 0, src }
    }

    fn err(&self, msg: &str) -> Error {
        Error::InvalidArgument(format!("parse error at byte {} in {:?}: {msg}", self.at, self.src))
    }

    fn skip_ws(&mut self) {
        while self.at < self.chars.len() && self.chars[self.at].is_whitespace() {
            self.at += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.at).copied()
    }

    fn bump(&mut self) -> Option<char> {
        self.skip_ws();
        let c = self.chars.get(self.at).copied();
        if c.is_some() {
            self.at += 1;
        }
        c
    }

    fn parse_all(&mut self) -> Result<Expr> {
        let e = self.expr()?;
        self.skip_ws();
        if self.at != self.chars.len() {
            return Err(self.err("trailing input"));
        }
        Ok(e)
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some('+') => {
                    self.bump();
                    acc = Expr::add(acc, self.term()?);
                }
                Some('-') => {
                    self.bump();
                    acc = Expr::sub(acc, self.term()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut acc = self.factor()?;
        loop {
            match self.peek() {
                Some('*') => {
                    self.bump();
                    acc = Expr::mul(acc, self.factor()?);
                }
                Some('/') => {
                    self.bump();
                    acc = Expr::div(acc, self.factor()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr> {
        if self.peek() == Some('-') {
            self.bump();
            let f = self.factor()?;
            return Ok(Expr::neg(f));
        }
        let mut base = self.atom()?;
        if self.peek() == Some('^') {
            self.bump();
            let neg = if self.peek() == Some('-') {
                self.bump();
                true
            } else {
                false
            };
            let n = self.integer()? as i32;
            base = Expr::pow(base, if neg { -n } else { n });
        }
        Ok(base)
    }

    fn integer(&mut self) -> Result<i64> {
        self.skip_ws();
        let start = self.at;
        while self.at < self.chars.len() && self.chars[self.at].is_ascii_digit() {
            self.at += 1;
        }
        if start == self.at {
            return Err(self.err("expected integer"));
        }
        let s: String = self.chars[start..self.at].iter().collect();
        s.parse().map_err(|_| self.err("bad integer"))
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            Some('(') => {
                self.bump();
                let e = self.expr()?;
                if self.bump() != Some(')') {
                    return Err(self.err("expected )"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => {
                self.skip_ws();
                let start = self.at;
                while self.at < self.chars.len()
                    && (self.chars[self.at].is_ascii_digit()
                        || self.chars[self.at] == '.'
                        || self.chars[self.at] == 'e'
                        || self.chars[self.at] == 'E'
                        || ((self.chars[self.at] == '+' || self.chars[self.at] == '-')
                            && self.at > start
                            && matches!(self.chars[self.at - 1], 'e' | 'E')))
                {
                    self.at += 1;
                }
                let s: String = self.chars[start..self.at].iter().collect();
                s.parse::<f64>()
                    .map(Expr::Num)
                    .map_err(|_| self.err("bad number"))
            }
            Some('x') => {
                self.bump();
                Ok(Expr::X)
            }
            Some('y') => {
                self.bump();
                Ok(Expr::Y)
            }
            Some('p') => {
                self.skip_ws();
                let rest: String = self.chars[self.at..].iter().collect();
                if !rest.starts_with("psi") {
                    return Err(self.err("unknown identifier"));
                }
                self.at += 3;
                let s = self.integer()? as usize;
                if self.chars.get(self.at) == Some(&'\'') {
                    self.at += 1;
                    let k = self.integer()? as u32;
                    Ok(Expr::PsiDeriv(s, k))
                } else {
                    Ok(Expr::Psi(s))
                }
            }
            _ => Err(self.err("expected atom")),
        }
    }
}

/// Expression-backed evaluator with cached symbolic partials, suitable as a
/// field-piece backend.
#[derive(Clone)]
pub struct ExprField {
    expr: Expr,
    curves: Arc<Vec<PuiseuxPoly<f64>>>,
    cache: Arc<Mutex<HashMap<(usize, usize), Arc<Expr>>>>,
}

impl ExprField {
    pub fn new(expr: Expr, curves: Vec<PuiseuxPoly<f64>>) -> Self {
        ExprField { expr, curves: Arc::new(curves), cache: Arc::new(Mutex::new(HashMap::new())) }
    }

    fn partial_expr(&self, a: usize, b: usize) -> Arc<Expr> {
        if a == 0 && b == 0 {
            return Arc::new(self.expr.clone());
        }
        let mut cache = self.cache.lock().unwrap();
        if let Some(e) = cache.get(&(a, b)) {
            return e.clone();
        }
        let parent = if a > 0 {
            drop(cache);
            let p = self.partial_expr(a - 1, b);
            cache = self.cache.lock().unwrap();
            p.dx()
        } else {
            drop(cache);
            let p = self.partial_expr(a, b - 1);
            cache = self.cache.lock().unwrap();
            p.dy()
        };
        let arc = Arc::new(parent);
        cache.insert((a, b), arc.clone());
        arc
    }

    pub fn partial(&self, x: f64, y: f64, a: usize, b: usize) -> f64 {
        self.partial_expr(a, b).eval(x, y, &self.curves)
    }
}
