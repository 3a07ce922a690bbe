//! Scalar expressions over the variables `t`, `s` and `u`.
//!
//! Problems are declared as text (`"exp(-(t+s))*atan(u)"`), parsed into an
//! [`Expr`] tree, evaluated generically over [`Scalar`](crate::Scalar) and
//! differentiated symbolically. The grammar is documented in `docs/grammar.md`.
//!
//! Powers only take constant exponents, so differentiation is always closed
//! form. `abs` may appear in expressions but cannot be differentiated with
//! respect to a variable it depends on.

mod diff;
mod eval;
mod parse;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use eval::{Bindings, EvalError};
pub use parse::{parse, SyntaxError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    T,
    S,
    U,
}

impl Var {
    pub fn name(self) -> &'static str {
        match self {
            Var::T => "t",
            Var::S => "s",
            Var::U => "u",
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Exp,
    Log,
    Sin,
    Cos,
    Atan,
    Sqrt,
    Abs,
}

impl UnaryOp {
    pub(crate) fn function_name(self) -> Option<&'static str> {
        match self {
            UnaryOp::Neg => None,
            UnaryOp::Exp => Some("exp"),
            UnaryOp::Log => Some("log"),
            UnaryOp::Sin => Some("sin"),
            UnaryOp::Cos => Some("cos"),
            UnaryOp::Atan => Some("atan"),
            UnaryOp::Sqrt => Some("sqrt"),
            UnaryOp::Abs => Some("abs"),
        }
    }

    pub(crate) fn from_function_name(name: &str) -> Option<Self> {
        Some(match name {
            "exp" => UnaryOp::Exp,
            "log" => UnaryOp::Log,
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            "atan" => UnaryOp::Atan,
            "sqrt" => UnaryOp::Sqrt,
            "abs" => UnaryOp::Abs,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "^",
        }
    }
}

/// Expression tree. The right operand of [`BinaryOp::Pow`] is always a
/// [`Expr::Const`]; the parser and [`Expr::pow`] enforce this.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("cannot differentiate `{node}` with respect to {var}")]
    NonDifferentiable { node: String, var: Var },
}

impl Expr {
    pub fn t() -> Self {
        Expr::Var(Var::T)
    }

    pub fn s() -> Self {
        Expr::Var(Var::S)
    }

    pub fn u() -> Self {
        Expr::Var(Var::U)
    }

    pub fn constant(c: f64) -> Self {
        Expr::Const(c)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    fn is_one(&self) -> bool {
        self.as_const() == Some(1.0)
    }

    /// Set of variables occurring in the tree.
    pub fn variables(&self) -> BTreeSet<Var> {
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
            Expr::Unary(_, a) => a.collect_vars(out),
            Expr::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn depends_on(&self, var: Var) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(v) => *v == var,
            Expr::Unary(_, a) => a.depends_on(var),
            Expr::Binary(_, a, b) => a.depends_on(var) || b.depends_on(var),
        }
    }

    // Smart constructors. They apply only the safe rewrites 0·x → 0, 1·x → x,
    // x ± 0 → x, x/1 → x, x^1 → x and fold constant operands when the result
    // is exactly representable.

    #[allow(clippy::should_implement_trait)]
    pub fn neg(a: Expr) -> Expr {
        match a {
            Expr::Const(c) => Expr::Const(-c),
            a => Expr::Unary(UnaryOp::Neg, Box::new(a)),
        }
    }

    pub fn unary(op: UnaryOp, a: Expr) -> Expr {
        match op {
            UnaryOp::Neg => Expr::neg(a),
            op => Expr::Unary(op, Box::new(a)),
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(a: Expr, b: Expr) -> Expr {
        if a.is_zero() {
            return b;
        }
        if b.is_zero() {
            return a;
        }
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            if let Some(r) = exact_add(x, y) {
                return Expr::Const(r);
            }
        }
        Expr::Binary(BinaryOp::Add, Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(a: Expr, b: Expr) -> Expr {
        if b.is_zero() {
            return a;
        }
        if a.is_zero() {
            return Expr::neg(b);
        }
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            if let Some(r) = exact_add(x, -y) {
                return Expr::Const(r);
            }
        }
        Expr::Binary(BinaryOp::Sub, Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(a: Expr, b: Expr) -> Expr {
        if a.is_zero() || b.is_zero() {
            return Expr::Const(0.0);
        }
        if a.is_one() {
            return b;
        }
        if b.is_one() {
            return a;
        }
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            if let Some(r) = exact_mul(x, y) {
                return Expr::Const(r);
            }
        }
        Expr::Binary(BinaryOp::Mul, Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn div(a: Expr, b: Expr) -> Expr {
        if b.is_one() {
            return a;
        }
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            if let Some(r) = exact_div(x, y) {
                return Expr::Const(r);
            }
        }
        Expr::Binary(BinaryOp::Div, Box::new(a), Box::new(b))
    }

    pub fn pow(base: Expr, exponent: f64) -> Expr {
        if exponent == 1.0 {
            return base;
        }
        Expr::Binary(BinaryOp::Pow, Box::new(base), Box::new(Expr::Const(exponent)))
    }
}

fn exact_add(x: f64, y: f64) -> Option<f64> {
    let r = x + y;
    if !r.is_finite() {
        return None;
    }
    // TwoSum error term
    let bb = r - x;
    let err = (x - (r - bb)) + (y - bb);
    (err == 0.0).then_some(r)
}

fn exact_mul(x: f64, y: f64) -> Option<f64> {
    let r = x * y;
    (r.is_finite() && x.mul_add(y, -r) == 0.0).then_some(r)
}

fn exact_div(x: f64, y: f64) -> Option<f64> {
    if y == 0.0 {
        return None;
    }
    let r = x / y;
    (r.is_finite() && r.mul_add(y, -x) == 0.0).then_some(r)
}

/// Canonical fully parenthesized form; re-parses to an equivalent tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) => {
                write!(f, "(-{})", -c)
            }
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Unary(UnaryOp::Neg, a) => write!(f, "(-{a})"),
            Expr::Unary(op, a) => write!(f, "{}({a})", op.function_name().unwrap_or("?")),
            Expr::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
        }
    }
}

impl std::str::FromStr for Expr {
    type Err = SyntaxError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse(&text).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smart_constructors_apply_safe_rules() {
        assert_eq!(Expr::mul(Expr::Const(0.0), Expr::u()), Expr::Const(0.0));
        assert_eq!(Expr::mul(Expr::Const(1.0), Expr::u()), Expr::u());
        assert_eq!(Expr::add(Expr::u(), Expr::Const(0.0)), Expr::u());
        assert_eq!(Expr::add(Expr::Const(2.0), Expr::Const(3.0)), Expr::Const(5.0));
        assert_eq!(Expr::mul(Expr::Const(-1.0), Expr::Const(2.0)), Expr::Const(-2.0));
        assert_eq!(Expr::div(Expr::Const(1.0), Expr::Const(4.0)), Expr::Const(0.25));
    }

    #[test]
    fn inexact_constants_are_not_folded() {
        let e = Expr::div(Expr::Const(1.0), Expr::Const(3.0));
        assert!(matches!(e, Expr::Binary(BinaryOp::Div, _, _)));
        let e = Expr::add(Expr::Const(0.1), Expr::Const(0.2));
        assert!(matches!(e, Expr::Binary(BinaryOp::Add, _, _)));
    }

    #[test]
    fn division_is_never_cancelled() {
        let e = Expr::div(Expr::u(), Expr::u());
        assert!(matches!(e, Expr::Binary(BinaryOp::Div, _, _)));
    }

    #[test]
    fn printer_is_fully_parenthesized() {
        let e = parse("-2*t + u^2").unwrap();
        assert_eq!(e.to_string(), "(((-2) * t) + (u ^ 2))");
        let e = parse("exp(-(t+s))").unwrap();
        assert_eq!(e.to_string(), "exp((-(t + s)))");
    }

    #[test]
    fn serde_uses_text_form() {
        let e = parse("atan(u)/(1+t)").unwrap();
        let json = serde_json::to_string(&e).unwrap();
        assert_eq!(json, "\"(atan(u) / (1 + t))\"");
        let back: Expr = serde_json::from_str(&json).unwrap();
        assert_eq!(back, e);
    }
}
