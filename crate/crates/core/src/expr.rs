//! Small expression language in `x`, `y`, `t` with symbolic
//! differentiation, used to define manufactured solutions from text.
//!
//! Grammar: numbers, `x`, `y`, `t`, `pi`, `+ - * / ^`, unary minus,
//! parentheses and the functions `sin cos exp sqrt ln`.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("parse error at byte {pos}: {message}")]
    Parse { pos: usize, message: String },
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    X,
    Y,
    T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Ln,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Ln => "ln",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Exp => v.exp(),
            Func::Sqrt => v.sqrt(),
            Func::Ln => v.ln(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
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
    pub fn parse(src: &str) -> Result<Self, ExprError> {
        let mut p = Parser { src: src.as_bytes(), pos: 0 };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn constant(v: f64) -> Self {
        Const(v)
    }

    pub fn var(v: Var) -> Self {
        Var(v)
    }

    pub fn eval(&self, x: f64, y: f64, t: f64) -> f64 {
        match self {
            Const(c) => *c,
            Var(Var::X) => x,
            Var(Var::Y) => y,
            Var(Var::T) => t,
            Neg(a) => -a.eval(x, y, t),
            Add(a, b) => a.eval(x, y, t) + b.eval(x, y, t),
            Sub(a, b) => a.eval(x, y, t) - b.eval(x, y, t),
            Mul(a, b) => a.eval(x, y, t) * b.eval(x, y, t),
            Div(a, b) => a.eval(x, y, t) / b.eval(x, y, t),
            Pow(a, b) => {
                let base = a.eval(x, y, t);
                match **b {
                    Const(n) if n.fract() == 0.0 && n.abs() < 64.0 => base.powi(n as i32),
                    _ => base.powf(b.eval(x, y, t)),
                }
            }
            Call(f, a) => f.apply(a.eval(x, y, t)),
        }
    }

    pub fn depends_on(&self, v: Var) -> bool {
        match self {
            Const(_) => false,
            Var(w) => *w == v,
            Neg(a) | Call(_, a) => a.depends_on(v),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Pow(a, b) => a.depends_on(v) || b.depends_on(v),
        }
    }

    /// Symbolic partial derivative, lightly simplified.
    pub fn diff(&self, v: Var) -> Expr {
        if !self.depends_on(v) {
            return Const(0.0);
        }
        match self {
            Const(_) => Const(0.0),
            Var(w) => Const(if *w == v { 1.0 } else { 0.0 }),
            Neg(a) => neg(a.diff(v)),
            Add(a, b) => add(a.diff(v), b.diff(v)),
            Sub(a, b) => sub(a.diff(v), b.diff(v)),
            Mul(a, b) => add(mul(a.diff(v), (**b).clone()), mul((**a).clone(), b.diff(v))),
            Div(a, b) => div(
                sub(mul(a.diff(v), (**b).clone()), mul((**a).clone(), b.diff(v))),
                pow((**b).clone(), Const(2.0)),
            ),
            Pow(a, b) => {
                if !b.depends_on(v) {
                    // d(a^n) = n a^(n-1) a'
                    let n = (**b).clone();
                    mul(mul(n.clone(), pow((**a).clone(), sub(n, Const(1.0)))), a.diff(v))
                } else {
                    // d(a^b) = a^b (b' ln a + b a'/a)
                    mul(
                        self.clone(),
                        add(
                            mul(b.diff(v), call(Func::Ln, (**a).clone())),
                            div(mul((**b).clone(), a.diff(v)), (**a).clone()),
                        ),
                    )
                }
            }
            Call(f, a) => {
                let inner = a.diff(v);
                let outer = match f {
                    Func::Sin => call(Func::Cos, (**a).clone()),
                    Func::Cos => neg(call(Func::Sin, (**a).clone())),
                    Func::Exp => self.clone(),
                    Func::Sqrt => div(Const(0.5), self.clone()),
                    Func::Ln => div(Const(1.0), (**a).clone()),
                };
                mul(outer, inner)
            }
        }
    }

    /// `Σ ∂²/∂x_k²` over the spatial variables.
    pub fn laplacian(&self) -> Expr {
        add(self.diff(Var::X).diff(Var::X), self.diff(Var::Y).diff(Var::Y))
    }

    /// Replaces `t` by a constant.
    pub fn at_time(&self, t: f64) -> Expr {
        self.substitute(Var::T, t)
    }

    pub fn substitute(&self, v: Var, value: f64) -> Expr {
        match self {
            Var(w) if *w == v => Const(value),
            Const(_) | Var(_) => self.clone(),
            Neg(a) => neg(a.substitute(v, value)),
            Add(a, b) => add(a.substitute(v, value), b.substitute(v, value)),
            Sub(a, b) => sub(a.substitute(v, value), b.substitute(v, value)),
            Mul(a, b) => mul(a.substitute(v, value), b.substitute(v, value)),
            Div(a, b) => div(a.substitute(v, value), b.substitute(v, value)),
            Pow(a, b) => pow(a.substitute(v, value), b.substitute(v, value)),
            Call(f, a) => call(*f, a.substitute(v, value)),
        }
    }
}

impl FromStr for Expr {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Expr::parse(s)
    }
}

fn is_const(e: &Expr, v: f64) -> bool {
    matches!(e, Const(c) if *c == v)
}

pub fn neg(a: Expr) -> Expr {
    match a {
        Const(c) => Const(-c),
        Neg(inner) => *inner,
        a => Neg(Box::new(a)),
    }
}

pub fn add(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Const(x), Const(y)) => Const(x + y),
        (a, b) if is_const(&b, 0.0) => a,
        (a, b) if is_const(&a, 0.0) => b,
        (a, Neg(b)) => sub(a, *b),
        (a, b) => Add(Box::new(a), Box::new(b)),
    }
}

pub fn sub(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Const(x), Const(y)) => Const(x - y),
        (a, b) if is_const(&b, 0.0) => a,
        (a, b) if is_const(&a, 0.0) => neg(b),
        (a, Neg(b)) => add(a, *b),
        (a, b) => Sub(Box::new(a), Box::new(b)),
    }
}

pub fn mul(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Const(x), Const(y)) => Const(x * y),
        (a, b) if is_const(&a, 0.0) || is_const(&b, 0.0) => Const(0.0),
        (a, b) if is_const(&a, 1.0) => b,
        (a, b) if is_const(&b, 1.0) => a,
        (Neg(a), b) => neg(mul(*a, b)),
        (a, Neg(b)) => neg(mul(a, *b)),
        // keep constants in front so they fold together
        (a, Const(c)) => mul(Const(c), a),
        (Const(x), Mul(b, c)) if matches!(*b, Const(_)) => {
            let Const(y) = *b else { unreachable!() };
            mul(Const(x * y), *c)
        }
        (a, b) => Mul(Box::new(a), Box::new(b)),
    }
}

pub fn div(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Const(x), Const(y)) => Const(x / y),
        (a, _) if is_const(&a, 0.0) => Const(0.0),
        (a, b) if is_const(&b, 1.0) => a,
        (a, b) => Div(Box::new(a), Box::new(b)),
    }
}

pub fn pow(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Const(x), Const(y)) => Const(x.powf(y)),
        (_, b) if is_const(&b, 0.0) => Const(1.0),
        (a, b) if is_const(&b, 1.0) => a,
        (a, b) => Pow(Box::new(a), Box::new(b)),
    }
}

pub fn call(f: Func, a: Expr) -> Expr {
    match a {
        Const(c) => Const(f.apply(c)),
        a => Call(f, Box::new(a)),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Const(c) if *c == std::f64::consts::PI => f.write_str("pi"),
            Const(c) if *c < 0.0 => write!(f, "({c})"),
            Const(c) => write!(f, "{c}"),
            Var(Var::X) => f.write_str("x"),
            Var(Var::Y) => f.write_str("y"),
            Var(Var::T) => f.write_str("t"),
            Neg(a) => write!(f, "(-{a})"),
            Add(a, b) => write!(f, "({a} + {b})"),
            Sub(a, b) => write!(f, "({a} - {b})"),
            Mul(a, b) => write!(f, "{a}*{b}"),
            Div(a, b) => write!(f, "({a})/({b})"),
            Pow(a, b) => write!(f, "({a})^({b})"),
            Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

/// Several expressions flattened into one instruction list with shared
/// subexpressions evaluated once, e.g. `sin(pi*x)` across `u` and `∇u`.
#[derive(Debug, Clone)]
pub struct Program {
    ops: Vec<Op>,
    outputs: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Const(f64),
    Var(Var),
    Neg(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    PowI(usize, i32),
    Pow(usize, usize),
    Call(Func, usize),
}

#[derive(PartialEq, Eq, Hash)]
enum OpKey {
    Const(u64),
    Var(Var),
    Unary(u8, usize),
    Binary(u8, usize, usize),
    PowI(usize, i32),
    Call(Func, usize),
}

impl Op {
    fn key(self) -> OpKey {
        match self {
            Op::Const(c) => OpKey::Const(c.to_bits()),
            Op::Var(v) => OpKey::Var(v),
            Op::Neg(a) => OpKey::Unary(0, a),
            Op::Add(a, b) => OpKey::Binary(0, a.min(b), a.max(b)),
            Op::Sub(a, b) => OpKey::Binary(1, a, b),
            Op::Mul(a, b) => OpKey::Binary(2, a.min(b), a.max(b)),
            Op::Div(a, b) => OpKey::Binary(3, a, b),
            Op::Pow(a, b) => OpKey::Binary(4, a, b),
            Op::PowI(a, n) => OpKey::PowI(a, n),
            Op::Call(f, a) => OpKey::Call(f, a),
        }
    }
}

impl Program {
    pub fn compile(exprs: &[&Expr]) -> Self {
        let mut ops = Vec::new();
        let mut seen = std::collections::HashMap::new();
        let outputs = exprs.iter().map(|e| Self::emit(e, &mut ops, &mut seen)).collect();
        Self { ops, outputs }
    }

    fn emit(e: &Expr, ops: &mut Vec<Op>, seen: &mut std::collections::HashMap<OpKey, usize>) -> usize {
        let op = match e {
            Const(c) => Op::Const(*c),
            Var(v) => Op::Var(*v),
            Neg(a) => Op::Neg(Self::emit(a, ops, seen)),
            Add(a, b) => Op::Add(Self::emit(a, ops, seen), Self::emit(b, ops, seen)),
            Sub(a, b) => Op::Sub(Self::emit(a, ops, seen), Self::emit(b, ops, seen)),
            Mul(a, b) => Op::Mul(Self::emit(a, ops, seen), Self::emit(b, ops, seen)),
            Div(a, b) => Op::Div(Self::emit(a, ops, seen), Self::emit(b, ops, seen)),
            Pow(a, b) => match **b {
                Const(n) if n.fract() == 0.0 && n.abs() < 64.0 => Op::PowI(Self::emit(a, ops, seen), n as i32),
                _ => Op::Pow(Self::emit(a, ops, seen), Self::emit(b, ops, seen)),
            },
            Call(f, a) => Op::Call(*f, Self::emit(a, ops, seen)),
        };
        *seen.entry(op.key()).or_insert_with(|| {
            ops.push(op);
            ops.len() - 1
        })
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn outputs(&self) -> usize {
        self.outputs.len()
    }

    /// Evaluates every expression at `(x, y, t)` into `out`.
    pub fn eval(&self, x: f64, y: f64, t: f64, out: &mut [f64]) {
        let mut stack = [0.0; 128];
        let mut heap = Vec::new();
        let r: &mut [f64] = if self.ops.len() <= stack.len() {
            &mut stack[..self.ops.len()]
        } else {
            heap.resize(self.ops.len(), 0.0);
            &mut heap
        };
        for (i, op) in self.ops.iter().enumerate() {
            r[i] = match *op {
                Op::Const(c) => c,
                Op::Var(Var::X) => x,
                Op::Var(Var::Y) => y,
                Op::Var(Var::T) => t,
                Op::Neg(a) => -r[a],
                Op::Add(a, b) => r[a] + r[b],
                Op::Sub(a, b) => r[a] - r[b],
                Op::Mul(a, b) => r[a] * r[b],
                Op::Div(a, b) => r[a] / r[b],
                Op::PowI(a, n) => r[a].powi(n),
                Op::Pow(a, b) => r[a].powf(r[b]),
                Op::Call(f, a) => f.apply(r[a]),
            };
        }
        for (o, &k) in out.iter_mut().zip(&self.outputs) {
            *o = r[k];
        }
    }

    pub fn eval_one(&self, x: f64, y: f64, t: f64) -> f64 {
        let mut out = [0.0];
        self.eval(x, y, t, &mut out);
        out[0]
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> ExprError {
        ExprError::Parse { pos: self.pos, message: message.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    // expr := term (('+' | '-') term)*
    fn expr(&mut self) -> Result<Expr, ExprError> {
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

    // term := unary (('*' | '/') unary)*
    fn term(&mut self) -> Result<Expr, ExprError> {
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

    // unary := '-' unary | power
    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.eat(b'-') {
            return Ok(Neg(Box::new(self.unary()?)));
        }
        if self.eat(b'+') {
            return self.unary();
        }
        self.power()
    }

    // power := atom ('^' unary)?   (right associative)
    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.eat(b'^') {
            return Ok(Pow(Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.identifier(),
            Some(_) => Err(self.error("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < self.src.len() && matches!(self.src[self.pos], b'e' | b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.src.len() && matches!(self.src[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos == digits {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        text.parse::<f64>().map(Const).map_err(|_| ExprError::Parse { pos: start, message: format!("bad number `{text}`") })
    }

    fn identifier(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_') {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        let func = match name {
            "x" => return Ok(Var(Var::X)),
            "y" => return Ok(Var(Var::Y)),
            "t" => return Ok(Var(Var::T)),
            "pi" => return Ok(Const(std::f64::consts::PI)),
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "ln" => Func::Ln,
            _ => return Err(ExprError::UnknownIdentifier(name.to_string())),
        };
        if !self.eat(b'(') {
            return Err(self.error("expected `(` after function name"));
        }
        let arg = self.expr()?;
        if !self.eat(b')') {
            return Err(self.error("expected `)`"));
        }
        Ok(Call(func, Box::new(arg)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * (1.0 + b.abs())
    }

    #[test]
    fn precedence_and_associativity() {
        let cases = [
            ("1 + 2 * 3", 7.0),
            ("(1 + 2) * 3", 9.0),
            ("2 ^ 3 ^ 2", 512.0),
            ("-2 ^ 2", -4.0),
            ("8 / 4 / 2", 1.0),
            ("1 - 2 - 3", -4.0),
            ("2.5e-1 * 4", 1.0),
        ];
        for (src, want) in cases {
            assert!(close(Expr::parse(src).unwrap().eval(0.0, 0.0, 0.0), want), "{src}");
        }
    }

    #[test]
    fn variables_and_functions() {
        let e = Expr::parse("exp(-t) * sin(pi*x) * sin(pi*y)").unwrap();
        let want = (-0.3f64).exp() * (PI * 0.2).sin() * (PI * 0.7).sin();
        assert!(close(e.eval(0.2, 0.7, 0.3), want));
    }

    #[test]
    fn bad_input_is_reported() {
        assert!(matches!(Expr::parse("sin(x"), Err(ExprError::Parse { .. })));
        assert!(matches!(Expr::parse("foo(x)"), Err(ExprError::UnknownIdentifier(_))));
        assert!(matches!(Expr::parse("1 +"), Err(ExprError::Parse { .. })));
        assert!(matches!(Expr::parse("x y"), Err(ExprError::Parse { .. })));
    }

    #[test]
    fn derivatives_of_the_standing_wave() {
        let e = Expr::parse("cos(sqrt(2)*pi*t)*sin(pi*x)*sin(pi*y)").unwrap();
        let w = 2f64.sqrt() * PI;
        let (x, y, t) = (0.3, 0.45, 0.2);
        let s = (PI * x).sin() * (PI * y).sin();
        assert!(close(e.diff(Var::T).eval(x, y, t), -w * (w * t).sin() * s));
        assert!(close(e.diff(Var::T).diff(Var::T).eval(x, y, t), -w * w * e.eval(x, y, t)));
        assert!(close(e.laplacian().eval(x, y, t), -2.0 * PI * PI * e.eval(x, y, t)));
        let dx = PI * (PI * x).cos() * (PI * y).sin() * (w * t).cos();
        assert!(close(e.diff(Var::X).eval(x, y, t), dx));
    }

    #[test]
    fn quotient_power_and_log_rules() {
        let e = Expr::parse("x^3/(1+y^2) + x^y + ln(x) + sqrt(x)").unwrap();
        let (x, y): (f64, f64) = (1.3, 0.7);
        let dx = 3.0 * x * x / (1.0 + y * y) + y * x.powf(y - 1.0) + 1.0 / x + 0.5 / x.sqrt();
        let dy = -x.powi(3) * 2.0 * y / (1.0 + y * y).powi(2) + x.powf(y) * x.ln();
        assert!(close(e.diff(Var::X).eval(x, y, 0.0), dx));
        assert!(close(e.diff(Var::Y).eval(x, y, 0.0), dy));
    }

    #[test]
    fn display_round_trips() {
        let e = Expr::parse("-x^2 * sin(pi*y) / (1 + exp(t)) - 3").unwrap();
        let back = Expr::parse(&e.to_string()).unwrap();
        for p in [(0.1, 0.2, 0.3), (0.9, -0.4, 1.5)] {
            assert!(close(back.eval(p.0, p.1, p.2), e.eval(p.0, p.1, p.2)));
        }
    }

    #[test]
    fn program_matches_tree_evaluation() {
        let u = Expr::parse("exp(-t)*sin(pi*x)*sin(pi*y) + x^2/(1+y) + x^y").unwrap();
        let fields = [u.clone(), u.diff(Var::X), u.diff(Var::Y), u.laplacian(), u.diff(Var::T)];
        let prog = Program::compile(&fields.iter().collect::<Vec<_>>());
        let mut out = [0.0; 5];
        for p in [(0.1, 0.2, 0.3), (0.7, 0.4, 1.5)] {
            prog.eval(p.0, p.1, p.2, &mut out);
            for (f, o) in fields.iter().zip(&out) {
                assert_eq!(f.eval(p.0, p.1, p.2), *o);
            }
        }
        // sin(pi*x) and friends are shared, not repeated per field
        let calls = prog.ops.iter().filter(|op| matches!(op, Op::Call(..))).count();
        assert!(calls <= 6, "{calls} calls");
    }

    #[test]
    fn substitution_freezes_time() {
        let e = Expr::parse("t*x + t^2").unwrap().at_time(2.0);
        assert!(!e.depends_on(Var::T));
        assert!(close(e.eval(3.0, 0.0, 99.0), 10.0));
    }
}
