//! Arithmetic expression trees over named real variables.
//!
//! Expressions support parsing from a small grammar, evaluation at a point,
//! exact symbolic partial differentiation and light simplification (constant
//! folding plus 0/1 identities). Variables are positional: a tree stores
//! indices into an ordered [`VarSet`], so evaluation takes a plain slice of
//! values. Exponents of `^` are restricted to constant rational values, which
//! keeps differentiation closed-form.
//!
//! Grammar (whitespace insignificant):
//!
//! ```text
//! expr     := term (('+'|'-') term)*
//! term     := factor (('*'|'/') factor)*
//! factor   := base ('^' exponent)?
//! base     := number | ident | ident '(' expr ')' | '(' expr ')' | '-' base
//! number   := decimal literal with optional exponent part
//! exponent := integer | '(' signed rational ')'
//! ```

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub mod poly;

/// Ordered list of declared variable names. Shared by all expressions that
/// belong to one structure/metric/connection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarSet {
    names: Arc<Vec<String>>,
}

impl VarSet {
    pub fn new<S: Into<String>, I: IntoIterator<Item = S>>(names: I) -> Self {
        VarSet {
            names: Arc::new(names.into_iter().map(Into::into).collect()),
        }
    }

    /// Adapted coordinates (x1..xn, u, p1..pn) of a (2n+1)-dimensional LC manifold.
    pub fn adapted(n: usize) -> Self {
        let mut names = Vec::with_capacity(2 * n + 1);
        for i in 1..=n {
            names.push(format!("x{i}"));
        }
        names.push("u".to_string());
        for i in 1..=n {
            names.push(format!("p{i}"));
        }
        VarSet { names: Arc::new(names) }
    }

    /// Fefferman coordinates (x1..xn, u, p1..pn, s).
    pub fn fefferman(n: usize) -> Self {
        let mut names = Self::adapted(n).names.as_ref().clone();
        names.push("s".to_string());
        VarSet { names: Arc::new(names) }
    }

    /// Base coordinates (x1..xn, u) of the leaf space, with u = x^{n+1}.
    pub fn base(m: usize) -> Self {
        let mut names = Vec::with_capacity(m);
        for i in 1..m {
            names.push(format!("x{i}"));
        }
        names.push("u".to_string());
        VarSet { names: Arc::new(names) }
    }

    /// Patterson-Walker coordinates (x1..xm, y1..ym).
    pub fn patterson_walker(m: usize) -> Self {
        let mut names = Vec::with_capacity(2 * m);
        for i in 1..=m {
            names.push(format!("x{i}"));
        }
        for i in 1..=m {
            names.push(format!("y{i}"));
        }
        VarSet { names: Arc::new(names) }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// True when `self` is a prefix of `other`, so expressions over `self`
    /// can be evaluated in the larger coordinate context unchanged.
    pub fn is_prefix_of(&self, other: &VarSet) -> bool {
        self.names.len() <= other.names.len()
            && self.names.iter().zip(other.names.iter()).all(|(a, b)| a == b)
    }
}

/// Built-in unary function calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Ln,
    Sqrt,
    Sin,
    Cos,
    Sinh,
    Cosh,
    Tanh,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Tanh => "tanh",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sinh" => Func::Sinh,
            "cosh" => Func::Cosh,
            "tanh" => Func::Tanh,
            _ => return None,
        })
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Func::Exp => x.exp(),
            Func::Ln => x.ln(),
            Func::Sqrt => x.sqrt(),
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Sinh => x.sinh(),
            Func::Cosh => x.cosh(),
            Func::Tanh => x.tanh(),
        }
    }
}

/// Exponent of `^`: a small rational, denominator positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ratio {
    pub num: i64,
    pub den: i64,
}

impl Ratio {
    pub fn new(num: i64, den: i64) -> Ratio {
        assert!(den != 0, "zero denominator");
        let g = gcd(num.unsigned_abs(), den.unsigned_abs()) as i64;
        let sign = if den < 0 { -1 } else { 1 };
        Ratio {
            num: sign * num / g,
            den: den.abs() / g,
        }
    }

    pub fn integer(n: i64) -> Ratio {
        Ratio { num: n, den: 1 }
    }

    pub fn is_integer(self) -> bool {
        self.den == 1
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    fn minus_one(self) -> Ratio {
        Ratio::new(self.num - self.den, self.den)
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a.max(1)
    } else {
        gcd(b, a % b)
    }
}

/// Expression tree node. Constants are IEEE doubles; variables are indices
/// into the owning [`VarSet`].
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Ratio),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("undeclared identifier `{name}` at offset {offset}")]
    Undeclared { offset: usize, name: String },
    #[error("malformed exponent at offset {offset}")]
    MalformedExponent { offset: usize },
    #[error("domain error in `{node}`: {message}")]
    Domain { node: String, message: String },
    #[error("unbound variable `{name}`")]
    Unbound { name: String },
}

impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn var(idx: usize) -> Expr {
        Expr::Var(idx)
    }

    pub fn zero() -> Expr {
        Expr::Const(0.0)
    }

    pub fn one() -> Expr {
        Expr::Const(1.0)
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::Add(Box::new(a), Box::new(b))
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::Sub(Box::new(a), Box::new(b))
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        Expr::Mul(Box::new(a), Box::new(b))
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        Expr::Div(Box::new(a), Box::new(b))
    }

    pub fn neg(a: Expr) -> Expr {
        Expr::Neg(Box::new(a))
    }

    pub fn pow(a: Expr, r: Ratio) -> Expr {
        Expr::Pow(Box::new(a), r)
    }

    pub fn call(f: Func, a: Expr) -> Expr {
        Expr::Call(f, Box::new(a))
    }

    pub fn scale(self, c: f64) -> Expr {
        Expr::mul(Expr::Const(c), self)
    }

    pub fn is_zero_const(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }

    /// Parse `source` against the declared variable list.
    pub fn parse(source: &str, vars: &VarSet) -> Result<Expr, ExprError> {
        Parser::new(source, vars).parse()
    }

    /// Evaluate at a point given as a slice in variable order.
    pub fn eval(&self, vars: &VarSet, values: &[f64]) -> Result<f64, ExprError> {
        match self {
            Expr::Const(c) => Ok(*c),
            Expr::Var(i) => values.get(*i).copied().ok_or_else(|| ExprError::Unbound {
                name: vars.name(*i).to_string(),
            }),
            Expr::Neg(a) => Ok(-a.eval(vars, values)?),
            Expr::Add(a, b) => Ok(a.eval(vars, values)? + b.eval(vars, values)?),
            Expr::Sub(a, b) => Ok(a.eval(vars, values)? - b.eval(vars, values)?),
            Expr::Mul(a, b) => Ok(a.eval(vars, values)? * b.eval(vars, values)?),
            Expr::Div(a, b) => {
                let den = b.eval(vars, values)?;
                if den == 0.0 {
                    return Err(ExprError::Domain {
                        node: self.print(vars),
                        message: "division by zero".into(),
                    });
                }
                Ok(a.eval(vars, values)? / den)
            }
            Expr::Pow(a, r) => {
                let base = a.eval(vars, values)?;
                let v = pow_ratio(base, *r);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(ExprError::Domain {
                        node: self.print(vars),
                        message: format!("{base}^({}/{}) undefined", r.num, r.den),
                    })
                }
            }
            Expr::Call(f, a) => {
                let x = a.eval(vars, values)?;
                let bad = match f {
                    Func::Ln => x <= 0.0,
                    Func::Sqrt => x < 0.0,
                    _ => false,
                };
                if bad {
                    return Err(ExprError::Domain {
                        node: self.print(vars),
                        message: format!("{}({x}) undefined", f.name()),
                    });
                }
                Ok(f.apply(x))
            }
        }
    }

    /// Evaluate against a name -> value environment.
    pub fn eval_env(
        &self,
        vars: &VarSet,
        env: &std::collections::HashMap<String, f64>,
    ) -> Result<f64, ExprError> {
        let mut values = Vec::with_capacity(vars.len());
        for (i, name) in vars.names().iter().enumerate() {
            if self.uses_var(i) {
                match env.get(name) {
                    Some(v) => values.push(*v),
                    None => return Err(ExprError::Unbound { name: name.clone() }),
                }
            } else {
                values.push(env.get(name).copied().unwrap_or(0.0));
            }
        }
        self.eval(vars, &values)
    }

    pub fn uses_var(&self, idx: usize) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(i) => *i == idx,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.uses_var(idx),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.uses_var(idx) || b.uses_var(idx)
            }
        }
    }

    /// Exact symbolic partial derivative with respect to variable `idx`,
    /// constant-folded via [`Expr::simplify`].
    pub fn diff(&self, idx: usize) -> Expr {
        self.diff_raw(idx).simplify()
    }

    fn diff_raw(&self, idx: usize) -> Expr {
        match self {
            Expr::Const(_) => Expr::zero(),
            Expr::Var(i) => {
                if *i == idx {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Expr::Neg(a) => Expr::neg(a.diff_raw(idx)),
            Expr::Add(a, b) => Expr::add(a.diff_raw(idx), b.diff_raw(idx)),
            Expr::Sub(a, b) => Expr::sub(a.diff_raw(idx), b.diff_raw(idx)),
            Expr::Mul(a, b) => Expr::add(
                Expr::mul(a.diff_raw(idx), (**b).clone()),
                Expr::mul((**a).clone(), b.diff_raw(idx)),
            ),
            Expr::Div(a, b) => Expr::div(
                Expr::sub(
                    Expr::mul(a.diff_raw(idx), (**b).clone()),
                    Expr::mul((**a).clone(), b.diff_raw(idx)),
                ),
                Expr::pow((**b).clone(), Ratio::integer(2)),
            ),
            Expr::Pow(a, r) => {
                // d(a^r) = r a^(r-1) a'
                Expr::mul(
                    Expr::mul(
                        Expr::Const(r.as_f64()),
                        Expr::pow((**a).clone(), r.minus_one()),
                    ),
                    a.diff_raw(idx),
                )
            }
            Expr::Call(f, a) => {
                let inner = a.diff_raw(idx);
                let outer = match f {
                    Func::Exp => Expr::call(Func::Exp, (**a).clone()),
                    Func::Ln => Expr::div(Expr::one(), (**a).clone()),
                    Func::Sqrt => Expr::div(
                        Expr::one(),
                        Expr::mul(Expr::Const(2.0), Expr::call(Func::Sqrt, (**a).clone())),
                    ),
                    Func::Sin => Expr::call(Func::Cos, (**a).clone()),
                    Func::Cos => Expr::neg(Expr::call(Func::Sin, (**a).clone())),
                    Func::Sinh => Expr::call(Func::Cosh, (**a).clone()),
                    Func::Cosh => Expr::call(Func::Sinh, (**a).clone()),
                    Func::Tanh => Expr::sub(
                        Expr::one(),
                        Expr::pow(Expr::call(Func::Tanh, (**a).clone()), Ratio::integer(2)),
                    ),
                };
                Expr::mul(outer, inner)
            }
        }
    }

    /// Constant folding and 0/1 identities. Semantics-preserving up to
    /// floating-point evaluation of constant subtrees.
    pub fn simplify(&self) -> Expr {
        match self {
            Expr::Const(_) | Expr::Var(_) => self.clone(),
            Expr::Neg(a) => match a.simplify() {
                Expr::Const(c) => Expr::Const(-c),
                Expr::Neg(inner) => *inner,
                s => Expr::neg(s),
            },
            Expr::Add(a, b) => match (a.simplify(), b.simplify()) {
                (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
                (Expr::Const(c), s) if c == 0.0 => s,
                (s, Expr::Const(c)) if c == 0.0 => s,
                (s, Expr::Neg(t)) => Expr::sub(s, *t),
                (s, t) => Expr::add(s, t),
            },
            Expr::Sub(a, b) => match (a.simplify(), b.simplify()) {
                (Expr::Const(x), Expr::Const(y)) => Expr::Const(x - y),
                (s, Expr::Const(c)) if c == 0.0 => s,
                (Expr::Const(c), s) if c == 0.0 => Expr::neg(s).simplify(),
                (s, Expr::Neg(t)) => Expr::add(s, *t),
                (s, t) => Expr::sub(s, t),
            },
            Expr::Mul(a, b) => match (a.simplify(), b.simplify()) {
                (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
                (Expr::Const(c), _) | (_, Expr::Const(c)) if c == 0.0 => Expr::zero(),
                (Expr::Const(c), s) if c == 1.0 => s,
                (s, Expr::Const(c)) if c == 1.0 => s,
                (Expr::Const(c), s) if c == -1.0 => Expr::neg(s).simplify(),
                (s, Expr::Const(c)) if c == -1.0 => Expr::neg(s).simplify(),
                (s, t) => Expr::mul(s, t),
            },
            Expr::Div(a, b) => match (a.simplify(), b.simplify()) {
                (Expr::Const(x), Expr::Const(y)) if y != 0.0 => Expr::Const(x / y),
                (s, Expr::Const(c)) if c == 1.0 => s,
                (s, Expr::Const(c)) if c != 0.0 => Expr::mul(Expr::Const(1.0 / c), s).simplify(),
                (s, t) => Expr::div(s, t),
            },
            Expr::Pow(a, r) => {
                let s = a.simplify();
                if r.num == 0 {
                    return Expr::one();
                }
                if r.num == 1 && r.den == 1 {
                    return s;
                }
                if let Expr::Const(c) = s {
                    let v = pow_ratio(c, *r);
                    if v.is_finite() {
                        return Expr::Const(v);
                    }
                }
                Expr::pow(s, *r)
            }
            Expr::Call(f, a) => {
                let s = a.simplify();
                if let Expr::Const(c) = s {
                    let v = f.apply(c);
                    if v.is_finite() {
                        return Expr::Const(v);
                    }
                }
                Expr::call(*f, s)
            }
        }
    }

    /// Render in the input grammar; `parse(print(e))` reproduces the AST.
    pub fn print(&self, vars: &VarSet) -> String {
        let mut out = String::new();
        self.fmt_prec(vars, 0, &mut out);
        out
    }

    // precedence levels: 0 additive, 1 multiplicative, 2 unary, 3 power/atom
    fn fmt_prec(&self, vars: &VarSet, prec: u8, out: &mut String) {
        match self {
            Expr::Const(c) => {
                if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) {
                    if prec >= 2 {
                        out.push('(');
                        fmt_f64(*c, out);
                        out.push(')');
                    } else {
                        fmt_f64(*c, out);
                    }
                } else {
                    fmt_f64(*c, out);
                }
            }
            Expr::Var(i) => out.push_str(vars.name(*i)),
            Expr::Neg(a) => {
                let need = prec >= 2;
                if need {
                    out.push('(');
                }
                out.push('-');
                a.fmt_prec(vars, 2, out);
                if need {
                    out.push(')');
                }
            }
            Expr::Add(a, b) => {
                let need = prec >= 1;
                if need {
                    out.push('(');
                }
                a.fmt_prec(vars, 0, out);
                out.push_str(" + ");
                b.fmt_prec(vars, 1, out);
                if need {
                    out.push(')');
                }
            }
            Expr::Sub(a, b) => {
                let need = prec >= 1;
                if need {
                    out.push('(');
                }
                a.fmt_prec(vars, 0, out);
                out.push_str(" - ");
                b.fmt_prec(vars, 1, out);
                if need {
                    out.push(')');
                }
            }
            Expr::Mul(a, b) => {
                let need = prec >= 2;
                if need {
                    out.push('(');
                }
                a.fmt_prec(vars, 1, out);
                out.push('*');
                b.fmt_prec(vars, 2, out);
                if need {
                    out.push(')');
                }
            }
            Expr::Div(a, b) => {
                let need = prec >= 2;
                if need {
                    out.push('(');
                }
                a.fmt_prec(vars, 1, out);
                out.push('/');
                b.fmt_prec(vars, 2, out);
                if need {
                    out.push(')');
                }
            }
            Expr::Pow(a, r) => {
                // the grammar allows one exponent per factor, so a nested
                // power base must be parenthesized explicitly
                if matches!(**a, Expr::Pow(_, _)) {
                    out.push('(');
                    a.fmt_prec(vars, 0, out);
                    out.push(')');
                } else {
                    a.fmt_prec(vars, 3, out);
                }
                out.push('^');
                if r.is_integer() && r.num >= 0 {
                    out.push_str(&r.num.to_string());
                } else if r.is_integer() {
                    out.push('(');
                    out.push_str(&r.num.to_string());
                    out.push(')');
                } else {
                    out.push('(');
                    out.push_str(&r.num.to_string());
                    out.push('/');
                    out.push_str(&r.den.to_string());
                    out.push(')');
                }
            }
            Expr::Call(f, a) => {
                out.push_str(f.name());
                out.push('(');
                a.fmt_prec(vars, 0, out);
                out.push(')');
            }
        }
    }
}

fn fmt_f64(c: f64, out: &mut String) {
    use fmt::Write;
    if c == c.trunc() && c.abs() < 1e15 {
        write!(out, "{}", c as i64).unwrap();
    } else {
        write!(out, "{c}").unwrap();
    }
}

fn pow_ratio(base: f64, r: Ratio) -> f64 {
    if r.is_integer() {
        base.powi(r.num.clamp(i32::MIN as i64, i32::MAX as i64) as i32)
    } else {
        base.powf(r.as_f64())
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    vars: &'a VarSet,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str, vars: &'a VarSet) -> Self {
        Parser {
            src: src.as_bytes(),
            pos: 0,
            vars,
        }
    }

    fn parse(mut self) -> Result<Expr, ExprError> {
        let e = self.expr()?;
        self.skip_ws();
        if self.pos != self.src.len() {
            return Err(self.syntax("unexpected trailing input"));
        }
        Ok(e)
    }

    fn syntax(&self, msg: &str) -> ExprError {
        ExprError::Syntax {
            offset: self.pos,
            message: msg.to_string(),
        }
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

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    acc = Expr::add(acc, self.term()?);
                }
                Some(b'-') => {
                    self.pos += 1;
                    acc = Expr::sub(acc, self.term()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut acc = self.factor()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    acc = Expr::mul(acc, self.factor()?);
                }
                Some(b'/') => {
                    self.pos += 1;
                    acc = Expr::div(acc, self.factor()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ExprError> {
        let base = self.base()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let r = self.exponent()?;
            return Ok(Expr::pow(base, r));
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<Ratio, ExprError> {
        self.skip_ws();
        let start = self.pos;
        if self.peek() == Some(b'(') {
            self.pos += 1;
            let num = self
                .signed_integer()
                .ok_or(ExprError::MalformedExponent { offset: start })?;
            let den = if self.peek() == Some(b'/') {
                self.pos += 1;
                let d = self
                    .signed_integer()
                    .ok_or(ExprError::MalformedExponent { offset: start })?;
                if d == 0 {
                    return Err(ExprError::MalformedExponent { offset: start });
                }
                d
            } else {
                1
            };
            if self.peek() != Some(b')') {
                return Err(ExprError::MalformedExponent { offset: start });
            }
            self.pos += 1;
            Ok(Ratio::new(num, den))
        } else {
            let n = self
                .signed_integer()
                .ok_or(ExprError::MalformedExponent { offset: start })?;
            Ok(Ratio::integer(n))
        }
    }

    fn signed_integer(&mut self) -> Option<i64> {
        self.skip_ws();
        let mut sign = 1i64;
        if self.src.get(self.pos) == Some(&b'-') {
            sign = -1;
            self.pos += 1;
        } else if self.src.get(self.pos) == Some(&b'+') {
            self.pos += 1;
        }
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return None;
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .ok()?
            .parse::<i64>()
            .ok()
            .map(|n| sign * n)
    }

    fn base(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(Expr::neg(self.base_with_pow()?))
            }
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.syntax("expected ')'"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.ident(),
            _ => Err(self.syntax("expected expression")),
        }
    }

    // `-x^2` parses as -(x^2): negation binds a full factor.
    fn base_with_pow(&mut self) -> Result<Expr, ExprError> {
        self.factor()
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_digit()) {
            self.pos += 1;
        }
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
        }
        // optional exponent part: e or E, optional sign, digits
        if matches!(self.src.get(self.pos), Some(&b'e') | Some(&b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(&b'+') | Some(&b'-')) {
                self.pos += 1;
            }
            let digit_start = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos == digit_start {
                // not an exponent part after all ("2e" could start ident-like garbage)
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse::<f64>()
            .map(Expr::Const)
            .map_err(|_| ExprError::Syntax {
                offset: start,
                message: format!("invalid number `{text}`"),
            })
    }

    fn ident(&mut self) -> Result<Expr, ExprError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos])
            .unwrap()
            .to_string();
        if self.peek() == Some(b'(') {
            let f = Func::from_name(&name).ok_or(ExprError::Undeclared {
                offset: start,
                name: name.clone(),
            })?;
            self.pos += 1;
            let arg = self.expr()?;
            if self.peek() != Some(b')') {
                return Err(self.syntax("expected ')'"));
            }
            self.pos += 1;
            return Ok(Expr::call(f, arg));
        }
        match self.vars.index_of(&name) {
            Some(i) => Ok(Expr::Var(i)),
            None => Err(ExprError::Undeclared { offset: start, name }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn vars1() -> VarSet {
        VarSet::new(["x1", "u", "p1"])
    }

    #[test]
    fn parse_example_structure() {
        let v = vars1();
        let e = Expr::parse("0.5*(p1 + exp(-2*x1)*p1^3)", &v).unwrap();
        assert!(matches!(e, Expr::Mul(_, _)));
        let val = e.eval(&v, &[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(val, 1.0);
    }

    #[test]
    fn parse_incomplete_input() {
        let v = vars1();
        match Expr::parse("x1 +", &v) {
            Err(ExprError::Syntax { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn parse_undeclared_identifier() {
        let v = vars1();
        match Expr::parse("q7", &v) {
            Err(ExprError::Undeclared { name, .. }) => assert_eq!(name, "q7"),
            other => panic!("expected undeclared error, got {other:?}"),
        }
    }

    #[test]
    fn eval_constant_zero() {
        let v = vars1();
        let e = Expr::parse("0", &v).unwrap();
        assert_eq!(e.eval(&v, &[3.0, 4.0, 5.0]).unwrap(), 0.0);
    }

    #[test]
    fn eval_ln_domain_error() {
        let v = vars1();
        let e = Expr::parse("ln(x1)", &v).unwrap();
        match e.eval(&v, &[0.0, 0.0, 0.0]) {
            Err(ExprError::Domain { node, .. }) => assert!(node.contains("ln")),
            other => panic!("expected domain error, got {other:?}"),
        }
    }

    #[test]
    fn eval_env_unbound() {
        let v = vars1();
        let e = Expr::parse("x1 + p1", &v).unwrap();
        let mut env = HashMap::new();
        env.insert("x1".to_string(), 1.0);
        match e.eval_env(&v, &env) {
            Err(ExprError::Unbound { name }) => assert_eq!(name, "p1"),
            other => panic!("expected unbound error, got {other:?}"),
        }
    }

    #[test]
    fn diff_example_first_and_second() {
        let v = vars1();
        let e = Expr::parse("0.5*(p1 + exp(-2*x1)*p1^3)", &v).unwrap();
        let p = v.index_of("p1").unwrap();
        let d1 = e.diff(p);
        // f_p = 1/2 (1 + 3 e^{-2x} p^2) = 2 at (0, ., 1)
        assert!((d1.eval(&v, &[0.0, 0.0, 1.0]).unwrap() - 2.0).abs() < 1e-15);
        // f_pp = 3 e^{-2x} p = 3 at (0, ., 1); hand differentiation oracle
        let d2 = d1.diff(p);
        assert!((d2.eval(&v, &[0.0, 0.0, 1.0]).unwrap() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn diff_constant_is_zero() {
        let e = Expr::Const(42.0);
        assert_eq!(e.diff(0), Expr::Const(0.0));
    }

    #[test]
    fn simplify_identities() {
        let v = vars1();
        let e = Expr::parse("0*x1 + u", &v).unwrap().simplify();
        assert_eq!(e, Expr::Var(1));
        let e = Expr::parse("x1^1", &v).unwrap().simplify();
        assert_eq!(e, Expr::Var(0));
        let e = Expr::parse("(2+3)*p1", &v).unwrap().simplify();
        assert_eq!(e, Expr::mul(Expr::Const(5.0), Expr::Var(2)));
    }

    #[test]
    fn print_parse_round_trip() {
        let v = vars1();
        for src in [
            "0.5*(p1 + exp(-2*x1)*p1^3)",
            "x1 - (u - p1)",
            "-x1^2 + p1^(-3)",
            "x1^(1/2) / (1 + p1)",
            "sin(x1)*cos(u) - tanh(p1)/2",
            "1e-3 + 2.5e2*x1",
        ] {
            let e = Expr::parse(src, &v).unwrap();
            let printed = e.print(&v);
            let e2 = Expr::parse(&printed, &v).unwrap();
            assert_eq!(e, e2, "round trip failed for `{src}` -> `{printed}`");
        }
    }

    #[test]
    fn rational_exponent_diff() {
        let v = vars1();
        let e = Expr::parse("x1^(3/2)", &v).unwrap();
        let d = e.diff(0);
        let got = d.eval(&v, &[4.0, 0.0, 0.0]).unwrap();
        assert!((got - 1.5 * 2.0).abs() < 1e-14);
    }

    #[test]
    fn concurrent_evaluation_is_safe() {
        // expressions are immutable and evaluation is pure
        let v = vars1();
        let e = std::sync::Arc::new(
            Expr::parse("0.5*(p1 + exp(-2*x1)*p1^3)", &v).unwrap(),
        );
        let v = std::sync::Arc::new(v);
        let handles: Vec<_> = (0..8)
            .map(|k| {
                let e = e.clone();
                let v = v.clone();
                std::thread::spawn(move || {
                    let x = k as f64 * 0.1;
                    e.eval(&v, &[x, 0.0, 1.0]).unwrap()
                })
            })
            .collect();
        for (k, h) in handles.into_iter().enumerate() {
            let x = k as f64 * 0.1;
            let expect = 0.5 * (1.0 + (-2.0 * x).exp());
            assert!((h.join().unwrap() - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn malformed_exponent() {
        let v = vars1();
        assert!(matches!(
            Expr::parse("x1^(1/0)", &v),
            Err(ExprError::MalformedExponent { .. })
        ));
        assert!(matches!(
            Expr::parse("x1^u", &v),
            Err(ExprError::MalformedExponent { .. })
        ));
    }
}
