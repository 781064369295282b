//! Scalar expressions: parsing, printing, symbolic differentiation and
//! evaluation over any [`Scalar`].
//!
//! Grammar (standard precedence, `^` binds tighter than unary minus and is
//! right associative):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Identifiers match `[a-z][a-z0-9_]*`. The variables `t, z1, z2, z3, s` and
//! the constant `pi` are always known; anything else must be declared.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::fmt;

use thiserror::Error;

use crate::jet::Scalar;

/// Variables every expression may use without declaration.
pub const CORE_VARIABLES: [&str; 5] = ["t", "z1", "z2", "z3", "s"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier '{name}' at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("function '{name}' expects {expected} argument(s), got {got}")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("unbound variable '{0}' during evaluation")]
    Unbound(String),
    #[error("evaluation of '{expr}' left the real domain")]
    Domain { expr: String },
    #[error("expression is not holomorphic in {var}: {reason}")]
    NotHolomorphic { var: String, reason: String },
    #[error("expression is not a Laurent polynomial in {var}: {reason}")]
    NotLaurent { var: String, reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Sinh,
    Cosh,
    Tanh,
    Atan,
    Exp,
    Log,
    Sqrt,
    Cbrt,
    Abs,
    Atan2,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "sinh" => Func::Sinh,
            "cosh" => Func::Cosh,
            "tanh" => Func::Tanh,
            "atan" => Func::Atan,
            "exp" => Func::Exp,
            "log" | "ln" => Func::Log,
            "sqrt" => Func::Sqrt,
            "cbrt" => Func::Cbrt,
            "abs" => Func::Abs,
            "atan2" => Func::Atan2,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Tanh => "tanh",
            Func::Atan => "atan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Cbrt => "cbrt",
            Func::Abs => "abs",
            Func::Atan2 => "atan2",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Atan2 => 2,
            _ => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

// ---------------------------------------------------------------------------
// construction helpers (light constant folding, used by derived expressions)

#[allow(clippy::should_implement_trait)]
impl Expr {
    pub fn num(x: f64) -> Expr {
        Expr::Num(x)
    }

    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn zero() -> Expr {
        Expr::Num(0.0)
    }

    pub fn one() -> Expr {
        Expr::Num(1.0)
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            Expr::Num(x) => Some(*x),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_num() == Some(0.0)
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        match (a.as_num(), b.as_num()) {
            (Some(x), Some(y)) => Expr::Num(x + y),
            (Some(0.0), _) => b,
            (_, Some(0.0)) => a,
            _ => Expr::Add(Box::new(a), Box::new(b)),
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        match (a.as_num(), b.as_num()) {
            (Some(x), Some(y)) => Expr::Num(x - y),
            (Some(0.0), _) => Expr::neg(b),
            (_, Some(0.0)) => a,
            _ => Expr::Sub(Box::new(a), Box::new(b)),
        }
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        match (a.as_num(), b.as_num()) {
            (Some(x), Some(y)) => Expr::Num(x * y),
            (Some(0.0), _) => Expr::zero(),
            (_, Some(0.0)) => Expr::zero(),
            (Some(1.0), _) => b,
            (_, Some(1.0)) => a,
            (Some(-1.0), _) => Expr::neg(b),
            (_, Some(-1.0)) => Expr::neg(a),
            _ => Expr::Mul(Box::new(a), Box::new(b)),
        }
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        match (a.as_num(), b.as_num()) {
            (Some(x), Some(y)) if y != 0.0 => Expr::Num(x / y),
            (Some(0.0), _) => Expr::zero(),
            (_, Some(1.0)) => a,
            _ => Expr::Div(Box::new(a), Box::new(b)),
        }
    }

    pub fn neg(a: Expr) -> Expr {
        match a {
            Expr::Num(x) => Expr::Num(-x),
            Expr::Neg(inner) => *inner,
            other => Expr::Neg(Box::new(other)),
        }
    }

    pub fn pow(b: Expr, e: Expr) -> Expr {
        match (b.as_num(), e.as_num()) {
            (_, Some(0.0)) => Expr::one(),
            (_, Some(1.0)) => b,
            (Some(x), Some(y)) if y.fract() == 0.0 => Expr::Num(x.powi(y as i32)),
            _ => Expr::Pow(Box::new(b), Box::new(e)),
        }
    }

    pub fn powi(b: Expr, n: i32) -> Expr {
        Expr::pow(b, Expr::Num(n as f64))
    }

    pub fn call(f: Func, arg: Expr) -> Expr {
        Expr::Call(f, vec![arg])
    }

    /// Sum of `coef * expr` terms, dropping zero coefficients.
    pub fn linear_combination(terms: &[(f64, &Expr)]) -> Expr {
        terms
            .iter()
            .filter(|(c, _)| *c != 0.0)
            .fold(Expr::zero(), |acc, (c, e)| {
                Expr::add(acc, Expr::mul(Expr::Num(*c), (*e).clone()))
            })
    }
}

// ---------------------------------------------------------------------------
// parsing

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    End,
}

struct Lexer<'a> {
    src: &'a str,
    toks: Vec<(Tok, usize)>,
}

impl<'a> Lexer<'a> {
    fn run(src: &'a str) -> Result<Vec<(Tok, usize)>, ExprError> {
        let mut lx = Lexer {
            src,
            toks: Vec::new(),
        };
        let bytes = src.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i] as char;
            if c.is_ascii_whitespace() {
                i += 1;
            } else if c.is_ascii_digit() || c == '.' {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &lx.src[start..i];
                let v: f64 = text.parse().map_err(|_| ExprError::Syntax {
                    offset: start,
                    message: format!("malformed number '{text}'"),
                })?;
                lx.toks.push((Tok::Num(v), start));
            } else if c.is_ascii_lowercase() {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_lowercase()
                        || bytes[i].is_ascii_digit()
                        || bytes[i] == b'_')
                {
                    i += 1;
                }
                lx.toks
                    .push((Tok::Ident(lx.src[start..i].to_string()), start));
            } else if "+-*/^(),".contains(c) {
                lx.toks.push((Tok::Op(c), i));
                i += 1;
            } else {
                return Err(ExprError::Syntax {
                    offset: i,
                    message: format!("unexpected character '{c}'"),
                });
            }
        }
        lx.toks.push((Tok::End, src.len()));
        Ok(lx.toks)
    }
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    known: &'a BTreeSet<String>,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, c: char) -> Result<(), ExprError> {
        if *self.peek() == Tok::Op(c) {
            self.bump();
            Ok(())
        } else {
            Err(ExprError::Syntax {
                offset: self.offset(),
                message: format!("expected '{c}'"),
            })
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Op('+') => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Op('-') => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Tok::Op('*') => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Tok::Op('/') => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if *self.peek() == Tok::Op('-') {
            self.bump();
            // a bare literal directly after '-' is a negative number
            if let Tok::Num(x) = *self.peek() {
                if self.toks[self.pos + 1].0 != Tok::Op('^') {
                    self.bump();
                    return Ok(Expr::Num(-x));
                }
            }
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if *self.peek() == Tok::Op('^') {
            self.bump();
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let off = self.offset();
        match self.bump() {
            Tok::Num(x) => Ok(Expr::Num(x)),
            Tok::Op('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if *self.peek() == Tok::Op('(') {
                    let f = Func::from_name(&name).ok_or_else(|| ExprError::UnknownIdentifier {
                        name: name.clone(),
                        offset: off,
                    })?;
                    self.bump();
                    let mut args = vec![self.expr()?];
                    while *self.peek() == Tok::Op(',') {
                        self.bump();
                        args.push(self.expr()?);
                    }
                    self.expect(')')?;
                    if args.len() != f.arity() {
                        return Err(ExprError::Arity {
                            name,
                            expected: f.arity(),
                            got: args.len(),
                        });
                    }
                    Ok(Expr::Call(f, args))
                } else if name == "pi" {
                    Ok(Expr::Num(PI))
                } else if self.known.contains(&name) {
                    Ok(Expr::Var(name))
                } else {
                    Err(ExprError::UnknownIdentifier { name, offset: off })
                }
            }
            Tok::End => Err(ExprError::Syntax {
                offset: off,
                message: "unexpected end of input".into(),
            }),
            Tok::Op(c) => Err(ExprError::Syntax {
                offset: off,
                message: format!("unexpected '{c}'"),
            }),
        }
    }
}

/// Parse over the core variables only.
pub fn parse(text: &str) -> Result<Expr, ExprError> {
    parse_with(text, &[])
}

/// Parse allowing additional declared identifiers (named constants, `zeta`).
pub fn parse_with(text: &str, extra: &[&str]) -> Result<Expr, ExprError> {
    let known: BTreeSet<String> = CORE_VARIABLES
        .iter()
        .chain(extra.iter())
        .map(|s| s.to_string())
        .collect();
    let toks = Lexer::run(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        known: &known,
    };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(ExprError::Syntax {
            offset: p.offset(),
            message: "trailing input".into(),
        });
    }
    Ok(e)
}

// ---------------------------------------------------------------------------
// printing

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Add(..) | Expr::Sub(..) => 1,
        Expr::Mul(..) | Expr::Div(..) => 2,
        Expr::Neg(..) => 3,
        Expr::Pow(..) => 4,
        Expr::Num(x) if *x < 0.0 || (*x == 0.0 && x.is_sign_negative()) => 3,
        _ => 5,
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
    if prec(e) < min {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(x) => {
                if *x < 0.0 || (*x == 0.0 && x.is_sign_negative()) {
                    write!(f, "-{}", -x)
                } else {
                    write!(f, "{x}")
                }
            }
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(a) => {
                write!(f, "-")?;
                // keep '-2' (a literal) distinct from '-(2)' (negation node)
                if matches!(**a, Expr::Num(_)) || prec(a) < 3 {
                    write!(f, "({a})")
                } else {
                    write!(f, "{a}")
                }
            }
            Expr::Add(a, b) => {
                write_child(f, a, 1)?;
                write!(f, " + ")?;
                write_child(f, b, 2)
            }
            Expr::Sub(a, b) => {
                write_child(f, a, 1)?;
                write!(f, " - ")?;
                write_child(f, b, 2)
            }
            Expr::Mul(a, b) => {
                write_child(f, a, 2)?;
                write!(f, "*")?;
                write_child(f, b, 3)
            }
            Expr::Div(a, b) => {
                write_child(f, a, 2)?;
                write!(f, "/")?;
                write_child(f, b, 3)
            }
            Expr::Pow(a, b) => {
                write_child(f, a, 5)?;
                write!(f, "^")?;
                write_child(f, b, 3)
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

// ---------------------------------------------------------------------------
// structural operations

impl Expr {
    /// Names of all variables occurring in the expression.
    pub fn variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => {
                out.insert(v.clone());
            }
            Expr::Neg(a) => a.collect_vars(out),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
        }
    }

    pub fn depends_on(&self, var: &str) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(v) => v == var,
            Expr::Neg(a) => a.depends_on(var),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => a.depends_on(var) || b.depends_on(var),
            Expr::Call(_, args) => args.iter().any(|a| a.depends_on(var)),
        }
    }

    /// Replace every occurrence of `var` by `with`.
    pub fn subst(&self, var: &str, with: &Expr) -> Expr {
        self.map_vars(&|name| {
            if name == var {
                Some(with.clone())
            } else {
                None
            }
        })
    }

    /// Replace named constants by their numeric values.
    pub fn bind(&self, values: &BTreeMap<String, f64>) -> Expr {
        self.map_vars(&|name| values.get(name).map(|x| Expr::Num(*x)))
    }

    fn map_vars(&self, f: &dyn Fn(&str) -> Option<Expr>) -> Expr {
        match self {
            Expr::Num(x) => Expr::Num(*x),
            Expr::Var(v) => f(v).unwrap_or_else(|| Expr::Var(v.clone())),
            Expr::Neg(a) => Expr::Neg(Box::new(a.map_vars(f))),
            Expr::Add(a, b) => Expr::Add(Box::new(a.map_vars(f)), Box::new(b.map_vars(f))),
            Expr::Sub(a, b) => Expr::Sub(Box::new(a.map_vars(f)), Box::new(b.map_vars(f))),
            Expr::Mul(a, b) => Expr::Mul(Box::new(a.map_vars(f)), Box::new(b.map_vars(f))),
            Expr::Div(a, b) => Expr::Div(Box::new(a.map_vars(f)), Box::new(b.map_vars(f))),
            Expr::Pow(a, b) => Expr::Pow(Box::new(a.map_vars(f)), Box::new(b.map_vars(f))),
            Expr::Call(func, args) => {
                Expr::Call(*func, args.iter().map(|a| a.map_vars(f)).collect())
            }
        }
    }

    /// Symbolic derivative with respect to `var`.
    pub fn diff(&self, var: &str) -> Expr {
        match self {
            Expr::Num(_) => Expr::zero(),
            Expr::Var(v) => {
                if v == var {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Expr::Neg(a) => Expr::neg(a.diff(var)),
            Expr::Add(a, b) => Expr::add(a.diff(var), b.diff(var)),
            Expr::Sub(a, b) => Expr::sub(a.diff(var), b.diff(var)),
            Expr::Mul(a, b) => Expr::add(
                Expr::mul(a.diff(var), (**b).clone()),
                Expr::mul((**a).clone(), b.diff(var)),
            ),
            Expr::Div(a, b) => {
                let da = a.diff(var);
                let db = b.diff(var);
                if db.is_zero() {
                    Expr::div(da, (**b).clone())
                } else {
                    Expr::div(
                        Expr::sub(Expr::mul(da, (**b).clone()), Expr::mul((**a).clone(), db)),
                        Expr::powi((**b).clone(), 2),
                    )
                }
            }
            Expr::Pow(b, e) => {
                let db = b.diff(var);
                if !e.depends_on(var) {
                    let em1 = match e.as_num() {
                        Some(n) => Expr::Num(n - 1.0),
                        None => Expr::sub((**e).clone(), Expr::one()),
                    };
                    Expr::mul(Expr::mul((**e).clone(), Expr::pow((**b).clone(), em1)), db)
                } else {
                    // d(b^e) = b^e (e' ln b + e b'/b)
                    let inner = Expr::add(
                        Expr::mul(e.diff(var), Expr::call(Func::Log, (**b).clone())),
                        Expr::div(Expr::mul((**e).clone(), db), (**b).clone()),
                    );
                    Expr::mul(self.clone(), inner)
                }
            }
            Expr::Call(f, args) => {
                let u = &args[0];
                let du = u.diff(var);
                let outer = match f {
                    Func::Sin => Expr::call(Func::Cos, u.clone()),
                    Func::Cos => Expr::neg(Expr::call(Func::Sin, u.clone())),
                    Func::Tan => {
                        Expr::add(Expr::one(), Expr::powi(Expr::call(Func::Tan, u.clone()), 2))
                    }
                    Func::Sinh => Expr::call(Func::Cosh, u.clone()),
                    Func::Cosh => Expr::call(Func::Sinh, u.clone()),
                    Func::Tanh => Expr::sub(
                        Expr::one(),
                        Expr::powi(Expr::call(Func::Tanh, u.clone()), 2),
                    ),
                    Func::Atan => Expr::div(
                        Expr::one(),
                        Expr::add(Expr::one(), Expr::powi(u.clone(), 2)),
                    ),
                    Func::Exp => Expr::call(Func::Exp, u.clone()),
                    Func::Log => Expr::div(Expr::one(), u.clone()),
                    Func::Sqrt => Expr::div(Expr::Num(0.5), Expr::call(Func::Sqrt, u.clone())),
                    Func::Cbrt => Expr::div(
                        Expr::one(),
                        Expr::mul(
                            Expr::Num(3.0),
                            Expr::powi(Expr::call(Func::Cbrt, u.clone()), 2),
                        ),
                    ),
                    Func::Abs => Expr::div(u.clone(), Expr::call(Func::Abs, u.clone())),
                    Func::Atan2 => {
                        let (y, x) = (&args[0], &args[1]);
                        let num = Expr::sub(
                            Expr::mul(x.clone(), y.diff(var)),
                            Expr::mul(y.clone(), x.diff(var)),
                        );
                        let den = Expr::add(Expr::powi(x.clone(), 2), Expr::powi(y.clone(), 2));
                        return Expr::div(num, den);
                    }
                };
                Expr::mul(outer, du)
            }
        }
    }

    /// Evaluate with the given variable bindings.
    pub fn eval<S: Scalar>(&self, env: &[(&str, S)]) -> Result<S, ExprError> {
        let v = self.eval_raw(env)?;
        if v.value().is_finite() {
            Ok(v)
        } else {
            Err(ExprError::Domain {
                expr: self.to_string(),
            })
        }
    }

    fn eval_raw<S: Scalar>(&self, env: &[(&str, S)]) -> Result<S, ExprError> {
        Ok(match self {
            Expr::Num(x) => S::cst(*x),
            Expr::Var(v) => env
                .iter()
                .find(|(n, _)| n == v)
                .map(|(_, x)| *x)
                .ok_or_else(|| ExprError::Unbound(v.clone()))?,
            Expr::Neg(a) => -a.eval_raw(env)?,
            Expr::Add(a, b) => a.eval_raw(env)? + b.eval_raw(env)?,
            Expr::Sub(a, b) => a.eval_raw(env)? - b.eval_raw(env)?,
            Expr::Mul(a, b) => a.eval_raw(env)? * b.eval_raw(env)?,
            Expr::Div(a, b) => a.eval_raw(env)? / b.eval_raw(env)?,
            Expr::Pow(b, e) => {
                let base = b.eval_raw(env)?;
                match e.as_num() {
                    Some(n) if n.fract() == 0.0 && n.abs() < 1e9 => base.powi(n as i32),
                    _ => base.powf(e.eval_raw(env)?),
                }
            }
            Expr::Call(f, args) => {
                let u = args[0].eval_raw(env)?;
                match f {
                    Func::Sin => u.sin(),
                    Func::Cos => u.cos(),
                    Func::Tan => u.tan(),
                    Func::Sinh => u.sinh(),
                    Func::Cosh => u.cosh(),
                    Func::Tanh => u.tanh(),
                    Func::Atan => u.atan(),
                    Func::Exp => u.exp(),
                    Func::Log => u.ln(),
                    Func::Sqrt => u.sqrt(),
                    Func::Cbrt => u.cbrt(),
                    Func::Abs => u.abs(),
                    Func::Atan2 => u.atan2(args[1].eval_raw(env)?),
                }
            }
        })
    }

    /// Evaluate at a spatial point `z`.
    pub fn at_z(&self, z: &[f64; 3]) -> Result<f64, ExprError> {
        self.eval(&[("z1", z[0]), ("z2", z[1]), ("z3", z[2])])
    }
}

// ---------------------------------------------------------------------------
// holomorphic catalogs

/// Split `e(var)` with `var = z1 + i z2` into real and imaginary parts.
///
/// Every other variable is treated as real.
pub fn complex_parts(e: &Expr, var: &str) -> Result<(Expr, Expr), ExprError> {
    let not_holo = |reason: String| ExprError::NotHolomorphic {
        var: var.to_string(),
        reason,
    };
    Ok(match e {
        Expr::Num(x) => (Expr::Num(*x), Expr::zero()),
        Expr::Var(v) if v == var => (Expr::var("z1"), Expr::var("z2")),
        Expr::Var(v) => (Expr::var(v), Expr::zero()),
        Expr::Neg(a) => {
            let (re, im) = complex_parts(a, var)?;
            (Expr::neg(re), Expr::neg(im))
        }
        Expr::Add(a, b) | Expr::Sub(a, b) => {
            let (ar, ai) = complex_parts(a, var)?;
            let (br, bi) = complex_parts(b, var)?;
            if matches!(e, Expr::Add(..)) {
                (Expr::add(ar, br), Expr::add(ai, bi))
            } else {
                (Expr::sub(ar, br), Expr::sub(ai, bi))
            }
        }
        Expr::Mul(a, b) => {
            let x = complex_parts(a, var)?;
            let y = complex_parts(b, var)?;
            cmul(x, y)
        }
        Expr::Div(a, b) => {
            let (ar, ai) = complex_parts(a, var)?;
            let (br, bi) = complex_parts(b, var)?;
            if bi.is_zero() {
                (Expr::div(ar, br.clone()), Expr::div(ai, br))
            } else {
                let den = Expr::add(Expr::powi(br.clone(), 2), Expr::powi(bi.clone(), 2));
                let re = Expr::add(
                    Expr::mul(ar.clone(), br.clone()),
                    Expr::mul(ai.clone(), bi.clone()),
                );
                let im = Expr::sub(Expr::mul(ai, br), Expr::mul(ar, bi));
                (Expr::div(re, den.clone()), Expr::div(im, den))
            }
        }
        Expr::Pow(b, ex) => {
            let n = ex
                .as_num()
                .filter(|n| n.fract() == 0.0)
                .ok_or_else(|| not_holo("only integer powers are supported".into()))?;
            let base = complex_parts(b, var)?;
            if base.1.is_zero() {
                (Expr::pow(base.0, (**ex).clone()), Expr::zero())
            } else {
                let mut acc = (Expr::one(), Expr::zero());
                let mut sq = base;
                let mut k = n.abs() as u64;
                while k > 0 {
                    if k & 1 == 1 {
                        acc = cmul(acc, sq.clone());
                    }
                    k >>= 1;
                    if k > 0 {
                        sq = cmul(sq.clone(), sq);
                    }
                }
                if n < 0.0 {
                    let den = Expr::add(Expr::powi(acc.0.clone(), 2), Expr::powi(acc.1.clone(), 2));
                    (
                        Expr::div(acc.0, den.clone()),
                        Expr::div(Expr::neg(acc.1), den),
                    )
                } else {
                    acc
                }
            }
        }
        Expr::Call(f, args) => {
            if args.iter().all(|x| !x.depends_on(var)) {
                return Ok((e.clone(), Expr::zero()));
            }
            let (a, b) = complex_parts(&args[0], var)?;
            let c = |g: Func, x: &Expr| Expr::call(g, x.clone());
            match f {
                Func::Exp => {
                    let ea = c(Func::Exp, &a);
                    (
                        Expr::mul(ea.clone(), c(Func::Cos, &b)),
                        Expr::mul(ea, c(Func::Sin, &b)),
                    )
                }
                Func::Sin => (
                    Expr::mul(c(Func::Sin, &a), c(Func::Cosh, &b)),
                    Expr::mul(c(Func::Cos, &a), c(Func::Sinh, &b)),
                ),
                Func::Cos => (
                    Expr::mul(c(Func::Cos, &a), c(Func::Cosh, &b)),
                    Expr::neg(Expr::mul(c(Func::Sin, &a), c(Func::Sinh, &b))),
                ),
                Func::Sinh => (
                    Expr::mul(c(Func::Sinh, &a), c(Func::Cos, &b)),
                    Expr::mul(c(Func::Cosh, &a), c(Func::Sin, &b)),
                ),
                Func::Cosh => (
                    Expr::mul(c(Func::Cosh, &a), c(Func::Cos, &b)),
                    Expr::mul(c(Func::Sinh, &a), c(Func::Sin, &b)),
                ),
                other => return Err(not_holo(format!("{} of a complex argument", other.name()))),
            }
        }
    })
}

fn cmul(x: (Expr, Expr), y: (Expr, Expr)) -> (Expr, Expr) {
    let (a, b) = x;
    let (c, d) = y;
    (
        Expr::sub(
            Expr::mul(a.clone(), c.clone()),
            Expr::mul(b.clone(), d.clone()),
        ),
        Expr::add(Expr::mul(a, d), Expr::mul(b, c)),
    )
}

/// A pair satisfying the anti Cauchy–Riemann system
/// `u_1 + v_2 = 0`, `u_2 - v_1 = 0` (subscripts: derivatives in z1, z2).
#[derive(Clone, Debug)]
pub struct AntiCrPair {
    pub u: Expr,
    pub v: Expr,
    pub source: String,
}

/// Build an anti-CR pair from a holomorphic function of `zeta = z1 + i z2`.
///
/// The descriptor is an expression in `zeta` (powers, exp, sin, cos, sinh,
/// cosh, and their linear combinations); `z3` may appear as a real parameter.
pub fn anti_cr_pair(holomorphic: &str) -> Result<AntiCrPair, ExprError> {
    let e = parse_with(holomorphic, &["zeta"])?;
    if e.depends_on("z1") || e.depends_on("z2") {
        return Err(ExprError::NotHolomorphic {
            var: "zeta".into(),
            reason: "z1 and z2 may only enter through zeta".into(),
        });
    }
    let (re, im) = complex_parts(&e, "zeta")?;
    Ok(AntiCrPair {
        u: re,
        v: Expr::neg(im),
        source: holomorphic.to_string(),
    })
}

impl AntiCrPair {
    /// Residuals of both anti-CR identities at `z`.
    pub fn residuals(&self, z: &[f64; 3]) -> Result<(f64, f64), ExprError> {
        let u1 = self.u.diff("z1").at_z(z)?;
        let u2 = self.u.diff("z2").at_z(z)?;
        let v1 = self.v.diff("z1").at_z(z)?;
        let v2 = self.v.diff("z2").at_z(z)?;
        Ok((u1 + v2, u2 - v1))
    }
}

// ---------------------------------------------------------------------------
// Laurent polynomials in one variable

pub type Laurent = BTreeMap<i32, f64>;

fn laurent_mul(a: &Laurent, b: &Laurent) -> Laurent {
    let mut out = Laurent::new();
    for (i, x) in a {
        for (j, y) in b {
            *out.entry(i + j).or_insert(0.0) += x * y;
        }
    }
    out.retain(|_, c| *c != 0.0);
    out
}

/// Convert to a Laurent polynomial in `var`, if the expression is one.
pub fn to_laurent(e: &Expr, var: &str) -> Result<Laurent, ExprError> {
    let fail = |reason: &str| ExprError::NotLaurent {
        var: var.to_string(),
        reason: reason.to_string(),
    };
    let mut out = Laurent::new();
    match e {
        Expr::Num(x) => {
            if *x != 0.0 {
                out.insert(0, *x);
            }
        }
        Expr::Var(v) if v == var => {
            out.insert(1, 1.0);
        }
        Expr::Var(v) => return Err(fail(&format!("free variable '{v}'"))),
        Expr::Neg(a) => {
            out = to_laurent(a, var)?;
            out.values_mut().for_each(|c| *c = -*c);
        }
        Expr::Add(a, b) | Expr::Sub(a, b) => {
            out = to_laurent(a, var)?;
            let sign = if matches!(e, Expr::Add(..)) {
                1.0
            } else {
                -1.0
            };
            for (k, c) in to_laurent(b, var)? {
                *out.entry(k).or_insert(0.0) += sign * c;
            }
            out.retain(|_, c| *c != 0.0);
        }
        Expr::Mul(a, b) => out = laurent_mul(&to_laurent(a, var)?, &to_laurent(b, var)?),
        Expr::Div(a, b) => {
            let den = to_laurent(b, var)?;
            if den.len() != 1 {
                return Err(fail("division by a non-monomial"));
            }
            let (k, c) = den.into_iter().next().unwrap();
            for (i, x) in to_laurent(a, var)? {
                out.insert(i - k, x / c);
            }
        }
        Expr::Pow(b, ex) => {
            let n = ex
                .as_num()
                .filter(|n| n.fract() == 0.0)
                .ok_or_else(|| fail("non-integer exponent"))? as i32;
            let base = to_laurent(b, var)?;
            if n >= 0 {
                out.insert(0, 1.0);
                for _ in 0..n {
                    out = laurent_mul(&out, &base);
                }
            } else {
                if base.len() != 1 {
                    return Err(fail("negative power of a non-monomial"));
                }
                let (k, c) = base.into_iter().next().unwrap();
                out.insert(k * n, c.powi(n));
            }
        }
        Expr::Call(..) => return Err(fail("function call")),
    }
    Ok(out)
}

pub fn from_laurent(l: &Laurent, var: &str) -> Expr {
    l.iter().fold(Expr::zero(), |acc, (k, c)| {
        Expr::add(
            acc,
            Expr::mul(Expr::Num(*c), Expr::powi(Expr::var(var), *k)),
        )
    })
}

/// Antiderivative of a Laurent polynomial; the `1/var` term integrates to
/// `log(abs(var))`.
pub fn laurent_antiderivative(l: &Laurent, var: &str) -> Expr {
    let mut poly = Laurent::new();
    let mut log_coef = 0.0;
    for (k, c) in l {
        if *k == -1 {
            log_coef = *c;
        } else {
            poly.insert(k + 1, c / (*k as f64 + 1.0));
        }
    }
    let mut e = from_laurent(&poly, var);
    if log_coef != 0.0 {
        e = Expr::add(
            e,
            Expr::mul(
                Expr::Num(log_coef),
                Expr::call(Func::Log, Expr::call(Func::Abs, Expr::var(var))),
            ),
        );
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::Jet;
    use proptest::prelude::*;

    fn ev(e: &Expr, vars: &[(&str, f64)]) -> f64 {
        e.eval(vars).unwrap()
    }

    #[test]
    fn parses_with_precedence() {
        let e = parse("z1^2 + sin(z2)").unwrap();
        assert_eq!(
            e,
            Expr::Add(
                Box::new(Expr::Pow(
                    Box::new(Expr::var("z1")),
                    Box::new(Expr::Num(2.0))
                )),
                Box::new(Expr::Call(Func::Sin, vec![Expr::var("z2")]))
            )
        );
        assert_eq!(ev(&parse("-2^2").unwrap(), &[]), -4.0);
        assert_eq!(ev(&parse("2^3^2").unwrap(), &[]), 512.0);
        assert_eq!(ev(&parse("8/4/2").unwrap(), &[]), 1.0);
        assert_eq!(ev(&parse("2^-1").unwrap(), &[]), 0.5);
        assert_eq!(ev(&parse("1 - 2 - 3").unwrap(), &[]), -4.0);
    }

    #[test]
    fn undeclared_identifier_is_rejected() {
        match parse("1/(b*t)") {
            Err(ExprError::UnknownIdentifier { name, offset }) => {
                assert_eq!(name, "b");
                assert_eq!(offset, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_with("1/(b*t)", &["b"]).is_ok());
        assert!(matches!(
            parse("foo(t)"),
            Err(ExprError::UnknownIdentifier { .. })
        ));
        assert!(matches!(parse("sin(t, t)"), Err(ExprError::Arity { .. })));
        assert!(matches!(parse("t +"), Err(ExprError::Syntax { .. })));
        assert!(matches!(
            parse("t $ 2"),
            Err(ExprError::Syntax { offset: 2, .. })
        ));
    }

    #[test]
    fn exp_at_zero() {
        assert_eq!(ev(&parse("exp(-2*t)").unwrap(), &[("t", 0.0)]), 1.0);
    }

    #[test]
    fn simple_derivatives() {
        let d = parse("z1^2").unwrap().diff("z1");
        assert_eq!(d.to_string(), "2*z1");
        let e = parse_with("exp(c*t)", &["c"]).unwrap();
        let bound = e.bind(&BTreeMap::from([("c".to_string(), 2.0)]));
        let v = ev(&bound.diff("t"), &[("t", 1.0)]);
        assert!((v - 2.0 * 2f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let sources = [
            "sin(z3)^2 + cbrt(z3 - 3) * exp(-z3/2)",
            "tanh(2*z3) / (1 + z3^2) + atan(z3) - log(2 + cos(z3))",
            "z3^z3 + sqrt(1 + z3^4) + atan2(z3, 2) + abs(z3 - 0.1)",
            "sinh(z3)*cosh(z3) - tan(z3/3)",
        ];
        for src in sources {
            let e = parse(src).unwrap();
            let d = e.diff("z3");
            for &x in &[0.4, 0.8, 1.3] {
                let h = 1e-5;
                let fd = (ev(&e, &[("z3", x + h)]) - ev(&e, &[("z3", x - h)])) / (2.0 * h);
                let sym = ev(&d, &[("z3", x)]);
                assert!(
                    (fd - sym).abs() <= 1e-6 * (1.0 + sym.abs()),
                    "{src} at {x}: {fd} vs {sym}"
                );
            }
        }
    }

    #[test]
    fn jet_evaluation_matches_symbolic_derivatives() {
        let e = parse("exp(sin(t))*t^3 - cbrt(t)").unwrap();
        let j = e.eval(&[("t", Jet::variable(1.3))]).unwrap();
        let d1 = ev(&e.diff("t"), &[("t", 1.3)]);
        let d2 = ev(&e.diff("t").diff("t"), &[("t", 1.3)]);
        assert!((j.d1 - d1).abs() < 1e-12 * (1.0 + d1.abs()));
        assert!((j.d2 - d2).abs() < 1e-11 * (1.0 + d2.abs()));
    }

    #[test]
    fn domain_errors_are_reported() {
        assert!(matches!(
            parse("log(t)").unwrap().eval(&[("t", -1.0)]),
            Err(ExprError::Domain { .. })
        ));
        assert!(matches!(
            parse("1/t").unwrap().eval(&[("t", 0.0)]),
            Err(ExprError::Domain { .. })
        ));
        assert!(matches!(
            parse("z1").unwrap().eval::<f64>(&[]),
            Err(ExprError::Unbound(_))
        ));
        assert_eq!(ev(&parse("cbrt(-27)").unwrap(), &[]), -3.0);
    }

    #[test]
    fn subst_and_variables() {
        let e = parse("s^2 + z3").unwrap();
        let g = parse("z1/z2").unwrap();
        let f = e.subst("s", &g);
        assert_eq!(
            f.variables().into_iter().collect::<Vec<_>>(),
            vec!["z1".to_string(), "z2".into(), "z3".into()]
        );
        let v = ev(&f, &[("z1", 1.0), ("z2", 2.0), ("z3", 3.0)]);
        assert!((v - 3.25).abs() < 1e-15);
    }

    #[test]
    fn anti_cr_catalog_entries() {
        let p = anti_cr_pair("zeta^2").unwrap();
        let z = [0.3, -0.7, 0.2];
        assert!((p.u.at_z(&z).unwrap() - (0.09 - 0.49)).abs() < 1e-15);
        assert!((p.v.at_z(&z).unwrap() - (-2.0 * 0.3 * -0.7)).abs() < 1e-15);
        let id = anti_cr_pair("zeta").unwrap();
        assert_eq!(id.u.to_string(), "z1");
        assert!((id.v.at_z(&z).unwrap() + z[1]).abs() < 1e-15);
        let e = anti_cr_pair("exp(zeta)").unwrap();
        assert!((e.u.at_z(&z).unwrap() - z[0].exp() * z[1].cos()).abs() < 1e-14);
        assert!((e.v.at_z(&z).unwrap() + z[0].exp() * z[1].sin()).abs() < 1e-14);
        assert!(anti_cr_pair("abs(zeta)").is_err());
        assert!(anti_cr_pair("zeta*z1").is_err());
        assert!(anti_cr_pair("unknown(zeta)").is_err());
    }

    #[test]
    fn anti_cr_residuals_vanish_on_catalog() {
        let catalog = [
            "zeta^3 - 2*zeta",
            "exp(1.5*zeta)",
            "sin(0.7*zeta) + cos(zeta)",
            "0.3*zeta^2 + 0.1*z3*zeta + sin(z3)",
            "1/(zeta + 3)",
            "sinh(zeta)*cosh(0.5*zeta)",
            "zeta^-2",
        ];
        let mut rng_pts = Vec::new();
        for i in 0..100 {
            let a = (i as f64 * 0.37).sin();
            let b = (i as f64 * 0.73).cos();
            let c = (i as f64 * 1.11).sin();
            rng_pts.push([a, b, c]);
        }
        for src in catalog {
            let p = anti_cr_pair(src).unwrap();
            for z in &rng_pts {
                let z = if src.contains("zeta^-2") {
                    [z[0] + 1.5, z[1], z[2]]
                } else {
                    *z
                };
                let (r1, r2) = p.residuals(&z).unwrap();
                assert!(r1.abs() <= 1e-12 && r2.abs() <= 1e-12, "{src}: {r1} {r2}");
            }
        }
    }

    #[test]
    fn laurent_round_trip_and_antiderivative() {
        let e = parse("(s^3 + 2*s)/s^2 - 4/s + 3").unwrap();
        let l = to_laurent(&e, "s").unwrap();
        assert_eq!(l, Laurent::from([(-1, -2.0), (0, 3.0), (1, 1.0)]));
        let anti = laurent_antiderivative(&l, "s");
        let d = anti.diff("s");
        for &x in &[0.5, -1.2, 2.0] {
            assert!((ev(&d, &[("s", x)]) - ev(&e, &[("s", x)])).abs() < 1e-12);
        }
        assert!(to_laurent(&parse("sin(s)").unwrap(), "s").is_err());
        assert!(to_laurent(&parse("1/(s+1)").unwrap(), "s").is_err());
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (-5.0f64..5.0).prop_map(|x| Expr::Num((x * 100.0).round() / 100.0)),
            prop_oneof![Just("t"), Just("z1"), Just("z2"), Just("z3"), Just("s")]
                .prop_map(Expr::var),
        ];
        leaf.prop_recursive(4, 32, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| Expr::Div(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| Expr::Pow(Box::new(a), Box::new(b))),
                inner.clone().prop_map(|a| Expr::Call(Func::Sin, vec![a])),
                (inner.clone(), inner).prop_map(|(a, b)| Expr::Call(Func::Atan2, vec![a, b])),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(e in arb_expr()) {
            let text = e.to_string();
            let back = parse(&text).unwrap();
            prop_assert_eq!(&back, &e, "printed as {}", text);
            prop_assert_eq!(back.to_string(), text);
        }
    }
}
