use thiserror::Error;

use super::{BinaryOp, Expr, UnaryOp, Var};
use crate::Scalar;

/// Values for the variables `t`, `s`, `u`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Bindings<T> {
    pub t: Option<T>,
    pub s: Option<T>,
    pub u: Option<T>,
}

impl<T: Copy> Bindings<T> {
    pub fn new() -> Self {
        Self {
            t: None,
            s: None,
            u: None,
        }
    }

    pub fn tsu(t: T, s: T, u: T) -> Self {
        Self {
            t: Some(t),
            s: Some(s),
            u: Some(u),
        }
    }

    pub fn with(mut self, var: Var, value: T) -> Self {
        *self.slot(var) = Some(value);
        self
    }

    pub fn t(self, value: T) -> Self {
        self.with(Var::T, value)
    }

    pub fn s(self, value: T) -> Self {
        self.with(Var::S, value)
    }

    pub fn u(self, value: T) -> Self {
        self.with(Var::U, value)
    }

    pub fn get(&self, var: Var) -> Option<T> {
        match var {
            Var::T => self.t,
            Var::S => self.s,
            Var::U => self.u,
        }
    }

    fn slot(&mut self, var: Var) -> &mut Option<T> {
        match var {
            Var::T => &mut self.t,
            Var::S => &mut self.s,
            Var::U => &mut self.u,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("variable {0} is not bound")]
    UnboundVariable(Var),
    /// Operation outside its real domain (log of non-positive, division by
    /// zero, 0^negative, ...).
    #[error("domain error in `{node}`: {reason}")]
    Domain { node: String, reason: &'static str },
    /// Overflow or NaN produced by an in-domain operation.
    #[error("non-finite value produced by `{node}`")]
    NonFinite { node: String },
}

impl EvalError {
    fn domain(node: &Expr, reason: &'static str) -> Self {
        EvalError::Domain {
            node: node.to_string(),
            reason,
        }
    }
}

impl Expr {
    /// Evaluates the tree under `bindings`. Every intermediate result is
    /// checked; NaN and infinities are reported as errors, never returned.
    pub fn eval<T: Scalar>(&self, bindings: &Bindings<T>) -> Result<T, EvalError> {
        let value = match self {
            Expr::Const(c) => return Ok(T::from_f64_lossy(*c)),
            Expr::Var(v) => return bindings.get(*v).ok_or(EvalError::UnboundVariable(*v)),
            Expr::Unary(op, a) => {
                let x = a.eval(bindings)?;
                match op {
                    UnaryOp::Neg => -x,
                    UnaryOp::Exp => x.exp(),
                    UnaryOp::Log => {
                        if x <= T::zero() {
                            return Err(EvalError::domain(self, "logarithm of a non-positive number"));
                        }
                        x.ln()
                    }
                    UnaryOp::Sin => x.sin(),
                    UnaryOp::Cos => x.cos(),
                    UnaryOp::Atan => x.atan(),
                    UnaryOp::Sqrt => {
                        if x < T::zero() {
                            return Err(EvalError::domain(self, "square root of a negative number"));
                        }
                        x.sqrt()
                    }
                    UnaryOp::Abs => x.abs(),
                }
            }
            Expr::Binary(op, a, b) => {
                let x = a.eval(bindings)?;
                match op {
                    BinaryOp::Pow => {
                        let c = b.as_const().ok_or_else(|| {
                            EvalError::domain(self, "non-constant exponent")
                        })?;
                        power(self, x, c)?
                    }
                    _ => {
                        let y = b.eval(bindings)?;
                        match op {
                            BinaryOp::Add => x + y,
                            BinaryOp::Sub => x - y,
                            BinaryOp::Mul => x * y,
                            BinaryOp::Div => {
                                if y == T::zero() {
                                    return Err(EvalError::domain(self, "division by zero"));
                                }
                                x / y
                            }
                            BinaryOp::Pow => unreachable!(),
                        }
                    }
                }
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(EvalError::NonFinite {
                node: self.to_string(),
            })
        }
    }
}

fn power<T: Scalar>(node: &Expr, base: T, exponent: f64) -> Result<T, EvalError> {
    if base == T::zero() && exponent < 0.0 {
        return Err(EvalError::domain(node, "zero raised to a negative power"));
    }
    if exponent.fract() == 0.0 && exponent.abs() <= f64::from(i32::MAX) {
        return Ok(base.powi(exponent as i32));
    }
    if base < T::zero() {
        return Err(EvalError::domain(node, "negative base with non-integer exponent"));
    }
    Ok(base.powf(T::from_f64_lossy(exponent)))
}
