//! Arithmetic expressions over the coordinates `x1..xd`.
//!
//! Expressions evaluate through any [`Scalar`], so the same definition yields
//! values, first derivatives and second derivatives. They can also be
//! differentiated symbolically and parsed from text.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::autodiff::{Primitive, Scalar};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Zero-based coordinate index.
    Var(usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Tanh(Box<Expr>),
    Exp(Box<Expr>),
    Sqrt(Box<Expr>),
    Square(Box<Expr>),
    Powi(Box<Expr>, i32),
    Recip(Box<Expr>),
}

pub fn c(v: f64) -> Expr {
    Expr::Const(v)
}

/// Coordinate `k` (zero-based).
pub fn x(k: usize) -> Expr {
    Expr::Var(k)
}

impl Expr {
    pub fn sin(self) -> Expr {
        match self {
            Expr::Const(v) => c(v.sin()),
            e => Expr::Sin(Box::new(e)),
        }
    }

    pub fn cos(self) -> Expr {
        match self {
            Expr::Const(v) => c(v.cos()),
            e => Expr::Cos(Box::new(e)),
        }
    }

    pub fn tanh(self) -> Expr {
        Expr::Tanh(Box::new(self))
    }

    pub fn exp(self) -> Expr {
        Expr::Exp(Box::new(self))
    }

    pub fn sqrt(self) -> Expr {
        Expr::Sqrt(Box::new(self))
    }

    pub fn square(self) -> Expr {
        match self {
            Expr::Const(v) => c(v * v),
            e => Expr::Square(Box::new(e)),
        }
    }

    pub fn powi(self, n: i32) -> Expr {
        match (self, n) {
            (_, 0) => c(1.0),
            (e, 1) => e,
            (Expr::Const(v), n) => c(v.powi(n)),
            (e, n) => Expr::Powi(Box::new(e), n),
        }
    }

    pub fn recip(self) -> Expr {
        Expr::Recip(Box::new(self))
    }

    fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(v) => Some(*v),
            _ => None,
        }
    }

    /// Highest coordinate index used, plus one.
    pub fn arity(&self) -> usize {
        match self {
            Expr::Const(_) => 0,
            Expr::Var(k) => k + 1,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.arity().max(b.arity())
            }
            Expr::Neg(a)
            | Expr::Sin(a)
            | Expr::Cos(a)
            | Expr::Tanh(a)
            | Expr::Exp(a)
            | Expr::Sqrt(a)
            | Expr::Square(a)
            | Expr::Powi(a, _)
            | Expr::Recip(a) => a.arity(),
        }
    }

    pub fn eval<S: Scalar>(&self, xs: &[S]) -> Result<S> {
        Ok(match self {
            Expr::Const(v) => S::constant(*v),
            Expr::Var(k) => *xs.get(*k).ok_or_else(|| {
                Error::Shape(format!("expression uses x{} but point has {} coordinates", k + 1, xs.len()))
            })?,
            Expr::Add(a, b) => a.eval(xs)? + b.eval(xs)?,
            Expr::Sub(a, b) => a.eval(xs)? - b.eval(xs)?,
            Expr::Mul(a, b) => a.eval(xs)? * b.eval(xs)?,
            Expr::Div(a, b) => {
                let num = a.eval(xs)?;
                let den = b.eval(xs)?;
                if den.value() == 0.0 {
                    return Err(Error::Numeric("division by zero in expression".into()));
                }
                num / den
            }
            Expr::Neg(a) => -a.eval(xs)?,
            Expr::Sin(a) => a.eval(xs)?.sin(),
            Expr::Cos(a) => a.eval(xs)?.cos(),
            Expr::Tanh(a) => a.eval(xs)?.tanh(),
            Expr::Exp(a) => a.eval(xs)?.exp(),
            Expr::Sqrt(a) => {
                let v = a.eval(xs)?;
                if v.value() < 0.0 {
                    return Err(Error::Numeric("square root of a negative value".into()));
                }
                v.sqrt()
            }
            Expr::Square(a) => a.eval(xs)?.square(),
            Expr::Powi(a, n) => {
                let v = a.eval(xs)?;
                if *n < 0 && v.value() == 0.0 {
                    return Err(Error::Numeric("negative power of zero".into()));
                }
                v.powi(*n)
            }
            Expr::Recip(a) => {
                let v = a.eval(xs)?;
                if v.value() == 0.0 {
                    return Err(Error::Numeric("reciprocal of zero".into()));
                }
                v.recip()
            }
        })
    }

    /// Plain value at a point.
    pub fn value(&self, xs: &[f64]) -> Result<f64> {
        self.eval(xs)
    }

    /// Partial derivative with respect to coordinate `k`, simplified.
    pub fn diff(&self, k: usize) -> Expr {
        match self {
            Expr::Const(_) => c(0.0),
            Expr::Var(j) => c(if *j == k { 1.0 } else { 0.0 }),
            Expr::Add(a, b) => a.diff(k) + b.diff(k),
            Expr::Sub(a, b) => a.diff(k) - b.diff(k),
            Expr::Mul(a, b) => a.diff(k) * (**b).clone() + (**a).clone() * b.diff(k),
            Expr::Div(a, b) => {
                (a.diff(k) * (**b).clone() - (**a).clone() * b.diff(k)) / (**b).clone().square()
            }
            Expr::Neg(a) => -a.diff(k),
            Expr::Sin(a) => (**a).clone().cos() * a.diff(k),
            Expr::Cos(a) => -((**a).clone().sin()) * a.diff(k),
            Expr::Tanh(a) => (c(1.0) - self.clone().square()) * a.diff(k),
            Expr::Exp(a) => self.clone() * a.diff(k),
            Expr::Sqrt(a) => a.diff(k) / (c(2.0) * self.clone()),
            Expr::Square(a) => c(2.0) * (**a).clone() * a.diff(k),
            Expr::Powi(a, n) => c(*n as f64) * (**a).clone().powi(n - 1) * a.diff(k),
            Expr::Recip(a) => -(self.clone().square()) * a.diff(k),
        }
    }

    /// Primitive operations the expression is built from.
    pub fn primitives(&self) -> BTreeSet<Primitive> {
        let mut out = BTreeSet::new();
        self.collect_primitives(&mut out);
        out
    }

    fn collect_primitives(&self, out: &mut BTreeSet<Primitive>) {
        let (p, kids): (Option<Primitive>, Vec<&Expr>) = match self {
            Expr::Const(_) | Expr::Var(_) => (None, vec![]),
            Expr::Add(a, b) => (Some(Primitive::Add), vec![a, b]),
            Expr::Sub(a, b) => (Some(Primitive::Sub), vec![a, b]),
            Expr::Mul(a, b) => (Some(Primitive::Mul), vec![a, b]),
            Expr::Div(a, b) => (Some(Primitive::Div), vec![a, b]),
            Expr::Neg(a) => (Some(Primitive::Neg), vec![a]),
            Expr::Sin(a) => (Some(Primitive::Sin), vec![a]),
            Expr::Cos(a) => (Some(Primitive::Cos), vec![a]),
            Expr::Tanh(a) => (Some(Primitive::Tanh), vec![a]),
            Expr::Exp(a) => (Some(Primitive::Exp), vec![a]),
            Expr::Sqrt(a) => (Some(Primitive::Sqrt), vec![a]),
            Expr::Square(a) => (Some(Primitive::Square), vec![a]),
            Expr::Powi(a, _) => (Some(Primitive::Powi), vec![a]),
            Expr::Recip(a) => (Some(Primitive::Recip), vec![a]),
        };
        out.extend(p);
        for k in kids {
            k.collect_primitives(out);
        }
    }

    /// Parses infix text such as `1 + 0.5*cos(2*pi*x1) / x2^2`.
    ///
    /// Coordinates are `x1..xd` (`x` alone means `x1`); constants `pi` and
    /// decimal literals; functions `sin cos tanh exp sqrt`; `^` takes an
    /// integer exponent.
    pub fn parse(text: &str) -> Result<Expr> {
        let tokens = tokenize(text)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Parse(format!(
                "unexpected `{}` in `{text}`",
                p.tokens[p.pos]
            )));
        }
        Ok(e)
    }
}

impl Add for Expr {
    type Output = Expr;
    fn add(self, o: Expr) -> Expr {
        match (self.as_const(), o.as_const()) {
            (Some(a), Some(b)) => c(a + b),
            (Some(a), _) if a == 0.0 => o,
            (_, Some(b)) if b == 0.0 => self,
            _ => Expr::Add(Box::new(self), Box::new(o)),
        }
    }
}

impl Sub for Expr {
    type Output = Expr;
    fn sub(self, o: Expr) -> Expr {
        match (self.as_const(), o.as_const()) {
            (Some(a), Some(b)) => c(a - b),
            (Some(a), _) if a == 0.0 => -o,
            (_, Some(b)) if b == 0.0 => self,
            _ => Expr::Sub(Box::new(self), Box::new(o)),
        }
    }
}

impl Mul for Expr {
    type Output = Expr;
    fn mul(self, o: Expr) -> Expr {
        match (self.as_const(), o.as_const()) {
            (Some(a), Some(b)) => c(a * b),
            (Some(a), _) | (_, Some(a)) if a == 0.0 => c(0.0),
            (Some(a), _) if a == 1.0 => o,
            (_, Some(b)) if b == 1.0 => self,
            _ => Expr::Mul(Box::new(self), Box::new(o)),
        }
    }
}

impl Div for Expr {
    type Output = Expr;
    fn div(self, o: Expr) -> Expr {
        match (self.as_const(), o.as_const()) {
            (Some(a), Some(b)) if b != 0.0 => c(a / b),
            (Some(a), _) if a == 0.0 => c(0.0),
            (_, Some(b)) if b == 1.0 => self,
            _ => Expr::Div(Box::new(self), Box::new(o)),
        }
    }
}

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        match self {
            Expr::Const(v) => c(-v),
            Expr::Neg(a) => *a,
            e => Expr::Neg(Box::new(e)),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(v) => write!(f, "{v:?}"),
            Expr::Var(k) => write!(f, "x{}", k + 1),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Sin(a) => write!(f, "sin({a})"),
            Expr::Cos(a) => write!(f, "cos({a})"),
            Expr::Tanh(a) => write!(f, "tanh({a})"),
            Expr::Exp(a) => write!(f, "exp({a})"),
            Expr::Sqrt(a) => write!(f, "sqrt({a})"),
            Expr::Square(a) => write!(f, "({a})^2"),
            Expr::Powi(a, n) => write!(f, "({a})^{n}"),
            Expr::Recip(a) => write!(f, "(1 / {a})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Num(v) => write!(f, "{v}"),
            Token::Ident(s) => f.write_str(s),
            Token::Op(ch) => write!(f, "{ch}"),
        }
    }
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let ch = chars[i];
        if ch.is_whitespace() {
            i += 1;
        } else if ch.is_ascii_digit() || ch == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v = s
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number `{s}`")))?;
            out.push(Token::Num(v));
        } else if ch.is_ascii_alphabetic() || ch == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^(),".contains(ch) {
            out.push(Token::Op(ch));
            i += 1;
        } else {
            return Err(Error::Parse(format!("unexpected character `{ch}`")));
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek_op(&self) -> Option<char> {
        match self.tokens.get(self.pos) {
            Some(Token::Op(c)) => Some(*c),
            _ => None,
        }
    }

    fn expect(&mut self, op: char) -> Result<()> {
        if self.peek_op() == Some(op) {
            self.pos += 1;
            Ok(())
        } else {
            Err(Error::Parse(format!("expected `{op}`")))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(op @ ('+' | '-')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' {
                Expr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op @ ('*' | '/')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' {
                Expr::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek_op() {
            Some('-') => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek_op() != Some('^') {
            return Ok(base);
        }
        self.pos += 1;
        let negative = if self.peek_op() == Some('-') {
            self.pos += 1;
            true
        } else {
            false
        };
        match self.tokens.get(self.pos) {
            Some(Token::Num(v)) if v.fract() == 0.0 && v.abs() <= i32::MAX as f64 => {
                let n = *v as i32;
                self.pos += 1;
                let n = if negative { -n } else { n };
                Ok(if n == 2 {
                    Expr::Square(Box::new(base))
                } else {
                    Expr::Powi(Box::new(base), n)
                })
            }
            _ => Err(Error::Parse("exponent must be an integer literal".into())),
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        let tok = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| Error::Parse("unexpected end of expression".into()))?;
        self.pos += 1;
        match tok {
            Token::Num(v) => Ok(c(v)),
            Token::Op('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Token::Op(o) => Err(Error::Parse(format!("unexpected `{o}`"))),
            Token::Ident(name) => {
                if name == "pi" {
                    return Ok(c(std::f64::consts::PI));
                }
                if name == "x" {
                    return Ok(x(0));
                }
                if let Some(rest) = name.strip_prefix('x') {
                    if let Ok(k) = rest.parse::<usize>() {
                        if k == 0 {
                            return Err(Error::Parse("coordinates start at x1".into()));
                        }
                        return Ok(x(k - 1));
                    }
                }
                let ctor: fn(Box<Expr>) -> Expr = match name.as_str() {
                    "sin" => Expr::Sin,
                    "cos" => Expr::Cos,
                    "tanh" => Expr::Tanh,
                    "exp" => Expr::Exp,
                    "sqrt" => Expr::Sqrt,
                    _ => return Err(Error::Parse(format!("unknown identifier `{name}`"))),
                };
                self.expect('(')?;
                let arg = self.expr()?;
                self.expect(')')?;
                Ok(ctor(Box::new(arg)))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Dual1;

    #[test]
    fn parses_and_evaluates() {
        let e = Expr::parse("1 + 0.5*cos(2*pi*x1) - x2^2 / 4").unwrap();
        let v = e.value(&[0.0, 2.0]).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
        let e = Expr::parse("-x^-2 + 2e-1").unwrap();
        assert!((e.value(&[2.0]).unwrap() - (-0.25 + 0.2)).abs() < 1e-15);
    }

    #[test]
    fn parse_errors() {
        assert!(Expr::parse("x1 +").is_err());
        assert!(Expr::parse("log(x1)").is_err());
        assert!(Expr::parse("x1^0.5").is_err());
        assert!(Expr::parse("x0").is_err());
        assert!(Expr::parse("(x1").is_err());
    }

    #[test]
    fn symbolic_derivative_matches_dual() {
        let e = Expr::parse("sin(3*x1)*exp(x1)/(2+cos(x1)) + sqrt(1+x1^2) + tanh(x1)^3").unwrap();
        let d = e.diff(0);
        for &p in &[-1.3, 0.0, 0.4, 2.2] {
            let sym = d.value(&[p]).unwrap();
            let dual = e.eval(&[Dual1::variable(p)]).unwrap().deriv;
            assert!((sym - dual).abs() <= 1e-13 * dual.abs().max(1.0), "{sym} vs {dual}");
        }
    }

    #[test]
    fn division_by_zero_is_an_error() {
        let e = Expr::parse("1/x1").unwrap();
        assert!(matches!(e.value(&[0.0]), Err(Error::Numeric(_))));
    }

    #[test]
    fn missing_coordinate_is_an_error() {
        assert!(x(2).value(&[1.0]).is_err());
    }
}
