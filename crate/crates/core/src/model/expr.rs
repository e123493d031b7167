//! Arithmetic expression language for model coefficients.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?            right associative
//! atom  := number | var | func '(' expr (',' expr)* ')' | '(' expr ')'
//! var   := 't' | 'y' | 'm' | 'x' k | 'u' k          k = 1, 2, ...
//! func  := abs | min | max | exp | log | sqrt | tanh | indicator_leq0 | normal_cdf
//! ```
//!
//! A minus sign directly in front of a numeric literal (not followed by `^`)
//! is folded into the constant, so `-2` parses as `Const(-2)` while `-(2)`
//! and `-2^2` keep an explicit negation node. [`Expr`]'s `Display` relies on
//! this to print trees that reparse to the identical tree.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::scalar::{normal_cdf, Real};

/// Variable of the coefficient language. Indices are zero-based internally
/// and printed one-based (`x1` is `Var::X(0)`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    T,
    X(usize),
    U(usize),
    Y,
    M,
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::T => f.write_str("t"),
            Var::X(i) => write!(f, "x{}", i + 1),
            Var::U(i) => write!(f, "u{}", i + 1),
            Var::Y => f.write_str("y"),
            Var::M => f.write_str("m"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Abs,
    Min,
    Max,
    Exp,
    Log,
    Sqrt,
    Tanh,
    IndicatorLeq0,
    NormalCdf,
}

impl Func {
    const ALL: [Func; 9] = [
        Func::Abs,
        Func::Min,
        Func::Max,
        Func::Exp,
        Func::Log,
        Func::Sqrt,
        Func::Tanh,
        Func::IndicatorLeq0,
        Func::NormalCdf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
            Func::IndicatorLeq0 => "indicator_leq0",
            Func::NormalCdf => "normal_cdf",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }

    /// `min`/`max` take two or more arguments, everything else exactly one.
    fn arity_ok(self, n: usize) -> bool {
        match self {
            Func::Min | Func::Max => n >= 2,
            _ => n == 1,
        }
    }
}

/// Parsed syntax tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown variable `{name}` at offset {offset}")]
    UnknownVariable { name: String, offset: usize },
    #[error("unknown function `{name}` at offset {offset}")]
    UnknownFunction { name: String, offset: usize },
    #[error("function `{name}` called with {got} argument(s) at offset {offset}")]
    Arity { name: String, got: usize, offset: usize },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. }
            | ParseError::UnknownVariable { offset, .. }
            | ParseError::UnknownFunction { offset, .. }
            | ParseError::Arity { offset, .. } => *offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("variable `{0}` is not bound")]
    Unbound(Var),
    #[error("domain error in `{op}` at argument {arg}")]
    Domain { op: &'static str, arg: f64 },
    #[error("non-finite result in `{op}`")]
    NonFinite { op: &'static str },
}

/// Variable bindings for evaluation. Unset scalars and out-of-range vector
/// indices count as unbound.
#[derive(Debug, Clone, Copy)]
pub struct Bindings<'a, S> {
    pub t: Option<S>,
    pub x: &'a [S],
    pub u: &'a [S],
    pub y: Option<S>,
    pub m: Option<S>,
}

impl<'a, S: Real> Bindings<'a, S> {
    pub fn new(x: &'a [S], u: &'a [S]) -> Self {
        Bindings {
            t: None,
            x,
            u,
            y: None,
            m: None,
        }
    }

    pub fn with_t(mut self, t: S) -> Self {
        self.t = Some(t);
        self
    }

    pub fn with_y(mut self, y: S) -> Self {
        self.y = Some(y);
        self
    }

    pub fn with_m(mut self, m: S) -> Self {
        self.m = Some(m);
        self
    }

    fn get(&self, v: Var) -> Result<S, EvalError> {
        let val = match v {
            Var::T => self.t,
            Var::Y => self.y,
            Var::M => self.m,
            Var::X(i) => self.x.get(i).copied(),
            Var::U(i) => self.u.get(i).copied(),
        };
        val.ok_or(EvalError::Unbound(v))
    }
}

impl Expr {
    pub fn parse(text: &str) -> Result<Expr, ParseError> {
        parse_expression(text)
    }

    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    /// Every variable referenced in the tree.
    pub fn vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => {
                out.insert(*v);
            }
            Expr::Neg(e) => e.collect_vars(out),
            Expr::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
        }
    }

    pub fn uses(&self, v: Var) -> bool {
        self.vars().contains(&v)
    }

    /// Largest referenced state index plus one (0 when no `x` appears).
    pub fn state_arity(&self) -> usize {
        self.vars()
            .into_iter()
            .filter_map(|v| match v {
                Var::X(i) => Some(i + 1),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }

    /// Largest referenced control index plus one.
    pub fn control_arity(&self) -> usize {
        self.vars()
            .into_iter()
            .filter_map(|v| match v {
                Var::U(i) => Some(i + 1),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }

    pub fn is_constant(&self) -> bool {
        self.vars().is_empty()
    }

    pub fn eval<S: Real>(&self, b: &Bindings<'_, S>) -> Result<S, EvalError> {
        let r = match self {
            Expr::Const(c) => S::lit(*c),
            Expr::Var(v) => b.get(*v)?,
            Expr::Neg(e) => -e.eval(b)?,
            Expr::Binary(op, lhs, rhs) => {
                let l = lhs.eval(b)?;
                let r = rhs.eval(b)?;
                match op {
                    BinOp::Add => l + r,
                    BinOp::Sub => l - r,
                    BinOp::Mul => l * r,
                    BinOp::Div => {
                        if r == S::zero() {
                            return Err(EvalError::Domain {
                                op: "/",
                                arg: 0.0,
                            });
                        }
                        l / r
                    }
                    BinOp::Pow => {
                        let p = if r == r.round() && r.abs() <= S::lit(64.0) {
                            l.powi(r.to_i32().unwrap_or(0))
                        } else {
                            l.powf(r)
                        };
                        if p.is_nan() {
                            return Err(EvalError::Domain {
                                op: "^",
                                arg: l.as_f64(),
                            });
                        }
                        p
                    }
                }
            }
            Expr::Call(func, args) => {
                let first = args[0].eval(b)?;
                match func {
                    Func::Abs => first.abs(),
                    Func::Min | Func::Max => {
                        let mut acc = first;
                        for a in &args[1..] {
                            let v = a.eval(b)?;
                            acc = if *func == Func::Min {
                                acc.min(v)
                            } else {
                                acc.max(v)
                            };
                        }
                        acc
                    }
                    Func::Exp => first.exp(),
                    Func::Log => {
                        if first <= S::zero() {
                            return Err(EvalError::Domain {
                                op: "log",
                                arg: first.as_f64(),
                            });
                        }
                        first.ln()
                    }
                    Func::Sqrt => {
                        if first < S::zero() {
                            return Err(EvalError::Domain {
                                op: "sqrt",
                                arg: first.as_f64(),
                            });
                        }
                        first.sqrt()
                    }
                    Func::Tanh => first.tanh(),
                    Func::IndicatorLeq0 => {
                        if first <= S::zero() {
                            S::one()
                        } else {
                            S::zero()
                        }
                    }
                    Func::NormalCdf => normal_cdf(first),
                }
            }
        };
        if r.is_finite() {
            Ok(r)
        } else {
            Err(EvalError::NonFinite { op: self.op_name() })
        }
    }

    fn op_name(&self) -> &'static str {
        match self {
            Expr::Const(_) => "constant",
            Expr::Var(_) => "variable",
            Expr::Neg(_) => "negation",
            Expr::Binary(op, _, _) => op.symbol(),
            Expr::Call(f, _) => f.name(),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => {
                if c.is_sign_negative() {
                    write!(f, "({c:?})")
                } else {
                    write!(f, "{c:?}")
                }
            }
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(e) => write!(f, "(-({e}))"),
            Expr::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
    End,
}

struct Lexer {
    toks: Vec<(Tok, usize)>,
}

impl Lexer {
    fn new(text: &str) -> Result<Lexer, ParseError> {
        let bytes = text.as_bytes();
        let mut toks = Vec::new();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i] as char;
            if c.is_ascii_whitespace() {
                i += 1;
            } else if c.is_ascii_digit() || (c == '.' && i + 1 < bytes.len() && bytes[i + 1].is_ascii_digit()) {
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
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let lit = &text[start..i];
                let v: f64 = lit.parse().map_err(|_| ParseError::Syntax {
                    offset: start,
                    message: format!("malformed number `{lit}`"),
                })?;
                toks.push((Tok::Num(v), start));
            } else if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                toks.push((Tok::Ident(text[start..i].to_string()), start));
            } else if "+-*/^(),".contains(c) {
                toks.push((Tok::Sym(c), i));
                i += 1;
            } else {
                return Err(ParseError::Syntax {
                    offset: i,
                    message: format!("unexpected character `{c}`"),
                });
            }
        }
        toks.push((Tok::End, text.len()));
        Ok(Lexer { toks })
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].0
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

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if *self.peek() == Tok::Sym(c) {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(&format!("expected `{c}`")))
        }
    }

    fn unexpected(&self, what: &str) -> ParseError {
        let found = match self.peek() {
            Tok::End => "end of input".to_string(),
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Sym(c) => format!("`{c}`"),
        };
        ParseError::Syntax {
            offset: self.offset(),
            message: format!("{what}, found {found}"),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('+') => BinOp::Add,
                Tok::Sym('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('*') => BinOp::Mul,
                Tok::Sym('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Sym('-') {
            if let Tok::Num(v) = *self.peek_at(1) {
                if *self.peek_at(2) != Tok::Sym('^') {
                    self.bump();
                    self.bump();
                    return Ok(Expr::Const(-v));
                }
            }
            self.bump();
            let inner = self.unary()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if *self.peek() == Tok::Sym('^') {
            self.bump();
            let exp = self.unary()?;
            return Ok(Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let offset = self.offset();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Const(v))
            }
            Tok::Sym('(') => {
                self.bump();
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                if *self.peek() == Tok::Sym('(') {
                    let func = Func::from_name(&name).ok_or_else(|| ParseError::UnknownFunction {
                        name: name.clone(),
                        offset,
                    })?;
                    self.bump();
                    let mut args = vec![self.expr()?];
                    while *self.peek() == Tok::Sym(',') {
                        self.bump();
                        args.push(self.expr()?);
                    }
                    self.expect(')')?;
                    if !func.arity_ok(args.len()) {
                        return Err(ParseError::Arity {
                            name,
                            got: args.len(),
                            offset,
                        });
                    }
                    Ok(Expr::Call(func, args))
                } else {
                    parse_var(&name)
                        .map(Expr::Var)
                        .ok_or(ParseError::UnknownVariable { name, offset })
                }
            }
            _ => Err(self.unexpected("expected a number, variable, function call or `(`")),
        }
    }
}

fn parse_var(name: &str) -> Option<Var> {
    match name {
        "t" => return Some(Var::T),
        "y" => return Some(Var::Y),
        "m" => return Some(Var::M),
        _ => {}
    }
    let (head, digits) = name.split_at(1);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || digits.starts_with('0') {
        return None;
    }
    let k: usize = digits.parse().ok()?;
    match head {
        "x" => Some(Var::X(k - 1)),
        "u" => Some(Var::U(k - 1)),
        _ => None,
    }
}

/// Parses `text` into a syntax tree.
pub fn parse_expression(text: &str) -> Result<Expr, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::Syntax {
            offset: 0,
            message: "empty expression".into(),
        });
    }
    let lexer = Lexer::new(text)?;
    let mut p = Parser {
        toks: lexer.toks,
        pos: 0,
    };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.unexpected("expected end of input"));
    }
    Ok(e)
}

/// Evaluates `expr` under `bindings`.
pub fn eval_expression<S: Real>(expr: &Expr, bindings: &Bindings<'_, S>) -> Result<S, EvalError> {
    expr.eval(bindings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn eval_xu(text: &str, x: &[f64], u: &[f64]) -> Result<f64, EvalError> {
        parse_expression(text).unwrap().eval(&Bindings::new(x, u))
    }

    #[test]
    fn single_control_variable() {
        let e = parse_expression("u1").unwrap();
        assert_eq!(e, Expr::Var(Var::U(0)));
        assert_eq!(e.eval(&Bindings::new(&[], &[0.7])).unwrap(), 0.7);
    }

    #[test]
    fn arithmetic() {
        assert_eq!(eval_xu("x1*u1 - 0.5*x1", &[2.0], &[1.0]).unwrap(), 1.0);
        assert_eq!(eval_xu("2^3^2", &[], &[]).unwrap(), 512.0);
        assert_eq!(eval_xu("-2^2", &[], &[]).unwrap(), -4.0);
        assert_eq!(eval_xu("x1 * -2", &[3.0], &[]).unwrap(), -6.0);
        assert_eq!(eval_xu("max(x1, 0, -1)", &[-3.0], &[]).unwrap(), 0.0);
        assert_eq!(eval_xu("1.5e1 + .5", &[], &[]).unwrap(), 15.5);
    }

    #[test]
    fn trailing_operator_reports_offset() {
        let err = parse_expression("x1*").unwrap_err();
        assert!(matches!(err, ParseError::Syntax { offset: 3, .. }), "{err:?}");
    }

    #[test]
    fn unknown_names_rejected() {
        assert!(matches!(
            parse_expression("x0 + 1"),
            Err(ParseError::UnknownVariable { offset: 0, .. })
        ));
        assert!(matches!(
            parse_expression("2*z"),
            Err(ParseError::UnknownVariable { offset: 2, .. })
        ));
        assert!(matches!(
            parse_expression("sin(x1)"),
            Err(ParseError::UnknownFunction { .. })
        ));
        assert!(matches!(parse_expression("exp(x1, 2)"), Err(ParseError::Arity { .. })));
        assert!(parse_expression("   ").is_err());
        assert!(parse_expression("(x1").is_err());
        assert!(parse_expression("x1 $ 2").is_err());
    }

    #[test]
    fn indicator_and_normal_cdf() {
        let ind = parse_expression("indicator_leq0(y)").unwrap();
        let b = |y: f64| ind.eval(&Bindings::<f64>::new(&[], &[]).with_y(y)).unwrap();
        assert_eq!(b(-0.1), 1.0);
        assert_eq!(b(0.0), 1.0);
        assert_eq!(b(0.5), 0.0);
        assert_eq!(eval_xu("normal_cdf(0)", &[], &[]).unwrap(), 0.5);
    }

    #[test]
    fn domain_and_binding_errors() {
        assert!(matches!(eval_xu("log(x1)", &[0.0], &[]), Err(EvalError::Domain { .. })));
        assert!(matches!(eval_xu("sqrt(x1)", &[-1.0], &[]), Err(EvalError::Domain { .. })));
        assert!(matches!(eval_xu("1/x1", &[0.0], &[]), Err(EvalError::Domain { .. })));
        assert!(matches!(eval_xu("x1^0.5", &[-1.0], &[]), Err(EvalError::Domain { .. })));
        assert!(matches!(eval_xu("exp(x1)", &[1e6], &[]), Err(EvalError::NonFinite { .. })));
        assert_eq!(eval_xu("x2", &[1.0], &[]), Err(EvalError::Unbound(Var::X(1))));
        assert_eq!(eval_xu("m", &[], &[]), Err(EvalError::Unbound(Var::M)));
    }

    #[test]
    fn f32_evaluation() {
        let e = parse_expression("x1*u1 - 0.5*x1").unwrap();
        assert_eq!(e.eval(&Bindings::new(&[2.0_f32], &[1.0])).unwrap(), 1.0_f32);
    }

    #[test]
    fn arity_helpers() {
        let e = parse_expression("x2*u3 + t").unwrap();
        assert_eq!(e.state_arity(), 2);
        assert_eq!(e.control_arity(), 3);
        assert!(e.uses(Var::T));
        assert!(parse_expression("2*(3+1)").unwrap().is_constant());
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (-1e3f64..1e3).prop_map(Expr::Const),
            (0usize..3).prop_map(|i| Expr::Var(Var::X(i))),
            (0usize..2).prop_map(|i| Expr::Var(Var::U(i))),
            Just(Expr::Var(Var::T)),
            Just(Expr::Var(Var::Y)),
            Just(Expr::Var(Var::M)),
        ];
        leaf.prop_recursive(5, 48, 3, |inner| {
            let ops = prop_oneof![
                Just(BinOp::Add),
                Just(BinOp::Sub),
                Just(BinOp::Mul),
                Just(BinOp::Div),
                Just(BinOp::Pow)
            ];
            let unary_funcs = prop_oneof![
                Just(Func::Abs),
                Just(Func::Exp),
                Just(Func::Log),
                Just(Func::Sqrt),
                Just(Func::Tanh),
                Just(Func::IndicatorLeq0),
                Just(Func::NormalCdf)
            ];
            prop_oneof![
                inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
                (ops, inner.clone(), inner.clone()).prop_map(|(o, a, b)| Expr::Binary(o, Box::new(a), Box::new(b))),
                (unary_funcs, inner.clone()).prop_map(|(f, a)| Expr::Call(f, vec![a])),
                (prop::bool::ANY, prop::collection::vec(inner, 2..4))
                    .prop_map(|(mn, args)| Expr::Call(if mn { Func::Min } else { Func::Max }, args)),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_then_parse_is_identity(e in arb_expr()) {
            let printed = e.to_string();
            let reparsed = parse_expression(&printed).unwrap();
            prop_assert_eq!(&reparsed, &e);
            prop_assert_eq!(reparsed.to_string(), printed);
        }

        #[test]
        fn evaluation_is_finite_or_domain_error(e in arb_expr(), x in prop::array::uniform3(-5.0f64..5.0), u in prop::array::uniform2(-2.0f64..2.0), t in 0.0f64..1.0) {
            let b = Bindings::new(&x, &u).with_t(t).with_y(0.3).with_m(-0.2);
            match e.eval(&b) {
                Ok(v) => prop_assert!(v.is_finite()),
                Err(EvalError::Unbound(_)) => prop_assert!(false, "all variables bound"),
                Err(_) => {}
            }
        }
    }
}
