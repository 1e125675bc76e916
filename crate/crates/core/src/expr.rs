//! Closed-form scalar expressions in `x` and `y`.
//!
//! Grammar, loosest first: `+ -`, `* /`, unary minus, `^` (right
//! associative). Functions: `abs sqrt sin cos exp log sign`; constant `pi`.
//! Display is fully parenthesised so printing and reparsing is stable.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::mesh::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Abs,
    Sqrt,
    Sin,
    Cos,
    Exp,
    Log,
    Sign,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Abs => "abs",
            Func::Sqrt => "sqrt",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sign => "sign",
        }
    }

    fn lookup(name: &str) -> Option<Self> {
        Some(match name {
            "abs" => Func::Abs,
            "sqrt" => Func::Sqrt,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sign" => Func::Sign,
            _ => return None,
        })
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Abs => v.abs(),
            Func::Sqrt => v.sqrt(),
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Exp => v.exp(),
            Func::Log => v.ln(),
            Func::Sign => {
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    Y,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

use Expr::*;

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let mut p = Parser {
            src,
            bytes: src.as_bytes(),
            pos: 0,
        };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos < p.bytes.len() {
            return Err(p.error("unexpected input"));
        }
        Ok(e)
    }

    pub fn constant(c: f64) -> Expr {
        Num(c)
    }

    pub fn eval(&self, p: Point) -> f64 {
        match self {
            Num(c) => *c,
            Var(Var::X) => p[0],
            Var(Var::Y) => p[1],
            Neg(a) => -a.eval(p),
            Add(a, b) => a.eval(p) + b.eval(p),
            Sub(a, b) => a.eval(p) - b.eval(p),
            Mul(a, b) => a.eval(p) * b.eval(p),
            Div(a, b) => a.eval(p) / b.eval(p),
            Pow(a, b) => pow(a.eval(p), b.eval(p)),
            Call(f, a) => f.apply(a.eval(p)),
        }
    }

    /// The constant value if the expression has no variables.
    pub fn as_constant(&self) -> Option<f64> {
        if self.has_variables() {
            None
        } else {
            Some(self.eval([0.0, 0.0]))
        }
    }

    /// Total polynomial degree, or `None` if the expression is not a
    /// polynomial in an obvious way.
    pub fn polynomial_degree(&self) -> Option<usize> {
        match self {
            Num(_) => Some(0),
            Var(_) => Some(1),
            Neg(a) => a.polynomial_degree(),
            Add(a, b) | Sub(a, b) => Some(a.polynomial_degree()?.max(b.polynomial_degree()?)),
            Mul(a, b) => Some(a.polynomial_degree()? + b.polynomial_degree()?),
            Div(a, b) => {
                b.as_constant()?;
                a.polynomial_degree()
            }
            Pow(a, b) => {
                let n = b.as_constant()?;
                if n < 0.0 || n.fract() != 0.0 || n > 64.0 {
                    return None;
                }
                Some(a.polynomial_degree()? * n as usize)
            }
            Call(..) => {
                if self.has_variables() {
                    None
                } else {
                    Some(0)
                }
            }
        }
    }

    fn has_variables(&self) -> bool {
        match self {
            Num(_) => false,
            Var(_) => true,
            Neg(a) | Call(_, a) => a.has_variables(),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Pow(a, b) => a.has_variables() || b.has_variables(),
        }
    }

    pub fn derivative(&self, v: Var) -> Expr {
        match self {
            Num(_) => Num(0.0),
            Var(w) => Num(if *w == v { 1.0 } else { 0.0 }),
            Neg(a) => neg(a.derivative(v)),
            Add(a, b) => add(a.derivative(v), b.derivative(v)),
            Sub(a, b) => sub(a.derivative(v), b.derivative(v)),
            Mul(a, b) => add(mul(a.derivative(v), (**b).clone()), mul((**a).clone(), b.derivative(v))),
            Div(a, b) => div(
                sub(mul(a.derivative(v), (**b).clone()), mul((**a).clone(), b.derivative(v))),
                pow_e((**b).clone(), Num(2.0)),
            ),
            Pow(a, b) => {
                let da = a.derivative(v);
                match b.as_constant() {
                    Some(c) => mul(mul(Num(c), pow_e((**a).clone(), Num(c - 1.0))), da),
                    None => {
                        // a^b (b' log a + b a' / a)
                        let db = b.derivative(v);
                        mul(
                            self.clone(),
                            add(
                                mul(db, Call(Func::Log, a.clone())),
                                div(mul((**b).clone(), da), (**a).clone()),
                            ),
                        )
                    }
                }
            }
            Call(f, a) => {
                let da = a.derivative(v);
                let outer = match f {
                    Func::Abs => Call(Func::Sign, a.clone()),
                    Func::Sqrt => div(Num(0.5), Call(Func::Sqrt, a.clone())),
                    Func::Sin => Call(Func::Cos, a.clone()),
                    Func::Cos => neg(Call(Func::Sin, a.clone())),
                    Func::Exp => Call(Func::Exp, a.clone()),
                    Func::Log => div(Num(1.0), (**a).clone()),
                    Func::Sign => Num(0.0),
                };
                mul(outer, da)
            }
        }
    }

    pub fn gradient(&self) -> [Expr; 2] {
        [self.derivative(Var::X), self.derivative(Var::Y)]
    }

    /// Second derivatives `[xx, xy, yy]`.
    pub fn hessian(&self) -> [Expr; 3] {
        let [dx, dy] = self.gradient();
        [dx.derivative(Var::X), dx.derivative(Var::Y), dy.derivative(Var::Y)]
    }
}

fn pow(a: f64, b: f64) -> f64 {
    if b == b.round() && b.abs() <= i32::MAX as f64 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Num(c) => Num(-c),
        Neg(inner) => *inner,
        a => Neg(Box::new(a)),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Num(x), Num(y)) => Num(x + y),
        (Num(z), e) | (e, Num(z)) if z == 0.0 => e,
        (a, b) => Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Num(x), Num(y)) => Num(x - y),
        (e, Num(0.0)) => e,
        (Num(0.0), e) => neg(e),
        (a, b) => Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Num(x), Num(y)) => Num(x * y),
        (Num(0.0), _) | (_, Num(0.0)) => Num(0.0),
        (Num(1.0), e) | (e, Num(1.0)) => e,
        (a, b) => Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Num(0.0), _) => Num(0.0),
        (e, Num(1.0)) => e,
        (a, b) => Div(Box::new(a), Box::new(b)),
    }
}

fn pow_e(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (_, Num(0.0)) => Num(1.0),
        (e, Num(1.0)) => e,
        (Num(x), Num(y)) => Num(pow(x, y)),
        (a, b) => Pow(Box::new(a), Box::new(b)),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Num(c) if *c < 0.0 => write!(f, "(-{})", -c),
            Num(c) => write!(f, "{c}"),
            Var(Var::X) => write!(f, "x"),
            Var(Var::Y) => write!(f, "y"),
            Neg(a) => write!(f, "(-{a})"),
            Add(a, b) => write!(f, "({a} + {b})"),
            Sub(a, b) => write!(f, "({a} - {b})"),
            Mul(a, b) => write!(f, "({a} * {b})"),
            Div(a, b) => write!(f, "({a} / {b})"),
            Pow(a, b) => write!(f, "({a} ^ {b})"),
            Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

impl FromStr for Expr {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Expr::parse(s)
    }
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> Error {
        Error::Parse {
            position: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                lhs = Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            Ok(Neg(Box::new(self.unary()?)))
        } else if self.eat(b'+') {
            self.unary()
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat(b'^') {
            Ok(Pow(Box::new(base), Box::new(self.unary()?)))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("expected ')'"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.bytes.len()
                    && (self.bytes[self.pos].is_ascii_alphanumeric() || self.bytes[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = &self.src[start..self.pos];
                match name {
                    "x" => Ok(Var(Var::X)),
                    "y" => Ok(Var(Var::Y)),
                    "pi" => Ok(Num(std::f64::consts::PI)),
                    _ => {
                        let Some(func) = Func::lookup(name) else {
                            self.pos = start;
                            return Err(self.error(&format!("unknown identifier '{name}'")));
                        };
                        if !self.eat(b'(') {
                            return Err(self.error("expected '(' after function name"));
                        }
                        let arg = self.expr()?;
                        if !self.eat(b')') {
                            return Err(self.error("expected ')'"));
                        }
                        Ok(Call(func, Box::new(arg)))
                    }
                }
            }
            Some(_) => Err(self.error("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        let b = self.bytes;
        let digits = |p: &mut usize| {
            while *p < b.len() && b[*p].is_ascii_digit() {
                *p += 1;
            }
        };
        digits(&mut self.pos);
        if self.pos < b.len() && b[self.pos] == b'.' {
            self.pos += 1;
            digits(&mut self.pos);
        }
        if self.pos < b.len() && (b[self.pos] == b'e' || b[self.pos] == b'E') {
            let mut q = self.pos + 1;
            if q < b.len() && (b[q] == b'+' || b[q] == b'-') {
                q += 1;
            }
            if q < b.len() && b[q].is_ascii_digit() {
                self.pos = q;
                digits(&mut self.pos);
            }
        }
        let text = &self.src[start..self.pos];
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Num(v)),
            _ => {
                self.pos = start;
                Err(self.error(&format!("invalid number '{text}'")))
            }
        }
    }
}
