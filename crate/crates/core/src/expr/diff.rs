use super::{BinaryOp, Expr, ExprError, UnaryOp, Var};

impl Expr {
    /// Exact partial derivative with respect to `var`.
    ///
    /// Subtrees that do not depend on `var` differentiate to `0` without being
    /// visited. `abs` of a `var`-dependent argument is rejected.
    pub fn differentiate(&self, var: Var) -> Result<Expr, ExprError> {
        if !self.depends_on(var) {
            return Ok(Expr::Const(0.0));
        }
        Ok(match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Var(v) => Expr::Const(if *v == var { 1.0 } else { 0.0 }),
            Expr::Unary(op, a) => {
                let da = a.differentiate(var)?;
                let a = (**a).clone();
                match op {
                    UnaryOp::Neg => Expr::neg(da),
                    UnaryOp::Exp => Expr::mul(da, Expr::unary(UnaryOp::Exp, a)),
                    UnaryOp::Log => Expr::div(da, a),
                    UnaryOp::Sin => Expr::mul(da, Expr::unary(UnaryOp::Cos, a)),
                    UnaryOp::Cos => Expr::neg(Expr::mul(da, Expr::unary(UnaryOp::Sin, a))),
                    UnaryOp::Atan => {
                        Expr::div(da, Expr::add(Expr::Const(1.0), Expr::pow(a, 2.0)))
                    }
                    UnaryOp::Sqrt => Expr::div(
                        da,
                        Expr::mul(Expr::Const(2.0), Expr::unary(UnaryOp::Sqrt, a)),
                    ),
                    UnaryOp::Abs => {
                        return Err(ExprError::NonDifferentiable {
                            node: self.to_string(),
                            var,
                        })
                    }
                }
            }
            Expr::Binary(BinaryOp::Pow, base, exponent) => {
                let c = exponent.as_const().unwrap_or(f64::NAN);
                let db = base.differentiate(var)?;
                Expr::mul(
                    Expr::mul(Expr::Const(c), Expr::pow((**base).clone(), c - 1.0)),
                    db,
                )
            }
            Expr::Binary(op, a, b) => {
                let da = a.differentiate(var)?;
                let db = b.differentiate(var)?;
                let (a, b) = ((**a).clone(), (**b).clone());
                match op {
                    BinaryOp::Add => Expr::add(da, db),
                    BinaryOp::Sub => Expr::sub(da, db),
                    BinaryOp::Mul => Expr::add(Expr::mul(da, b), Expr::mul(a, db)),
                    BinaryOp::Div => {
                        if db.is_zero() {
                            Expr::div(da, b)
                        } else {
                            Expr::div(
                                Expr::sub(Expr::mul(da, b.clone()), Expr::mul(a, db)),
                                Expr::pow(b, 2.0),
                            )
                        }
                    }
                    BinaryOp::Pow => unreachable!(),
                }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, Bindings};

    fn same_values(a: &Expr, b: &Expr, points: &[(f64, f64, f64)]) {
        for &(t, s, u) in points {
            let bind = Bindings::tsu(t, s, u);
            let x: f64 = a.eval(&bind).unwrap();
            let y: f64 = b.eval(&bind).unwrap();
            assert!((x - y).abs() <= 1e-14 * (1.0 + x.abs()), "{a} vs {b} at {t},{s},{u}: {x} {y}");
        }
    }

    const PTS: [(f64, f64, f64); 4] = [(0.0, 0.0, 0.0), (0.3, 0.1, -1.2), (1.7, 0.9, 2.5), (4.0, 2.0, 0.5)];

    #[test]
    fn exponential_decay() {
        let d = parse("exp(-2*t)").unwrap().differentiate(Var::T).unwrap();
        same_values(&d, &parse("-2*exp(-2*t)").unwrap(), &PTS);
    }

    #[test]
    fn arctangent() {
        let d = parse("atan(u)").unwrap().differentiate(Var::U).unwrap();
        same_values(&d, &parse("1/(1+u^2)").unwrap(), &PTS);
        assert_eq!(d.to_string(), "(1 / (1 + (u ^ 2)))");
    }

    #[test]
    fn product_kernel_in_s() {
        let d = parse("exp(-(t+s))*atan(u)").unwrap().differentiate(Var::S).unwrap();
        same_values(&d, &parse("-exp(-(t+s))*atan(u)").unwrap(), &PTS);
    }

    #[test]
    fn independent_subtree_is_zero() {
        let d = parse("exp(t)*sin(s)").unwrap().differentiate(Var::U).unwrap();
        assert_eq!(d, Expr::Const(0.0));
        let d = parse("abs(t)*u").unwrap().differentiate(Var::U).unwrap();
        same_values(&d, &parse("abs(t)").unwrap(), &PTS);
    }

    #[test]
    fn abs_is_rejected() {
        let err = parse("abs(u)").unwrap().differentiate(Var::U).unwrap_err();
        assert!(matches!(err, ExprError::NonDifferentiable { var: Var::U, .. }));
    }

    #[test]
    fn power_rule_simplifies_unit_exponent() {
        let d = parse("u^2").unwrap().differentiate(Var::U).unwrap();
        assert_eq!(d.to_string(), "(2 * u)");
        let d = parse("t").unwrap().differentiate(Var::T).unwrap();
        assert_eq!(d, Expr::Const(1.0));
    }

    #[test]
    fn quotient_and_roots() {
        let e = parse("sqrt(1+u^2)/(2+cos(t*u)) + log(3+t*s)").unwrap();
        for var in [Var::T, Var::S, Var::U] {
            let d = e.differentiate(var).unwrap();
            for &(t, s, u) in &PTS {
                let h = 1e-6;
                let shift = |dv: f64| {
                    let mut b = Bindings::tsu(t, s, u);
                    let v = b.get(var).unwrap();
                    b = b.with(var, v + dv);
                    e.eval::<f64>(&b).unwrap()
                };
                let fd = (shift(h) - shift(-h)) / (2.0 * h);
                let sym: f64 = d.eval(&Bindings::tsu(t, s, u)).unwrap();
                assert!((fd - sym).abs() < 1e-8, "{var}: {fd} vs {sym}");
            }
        }
    }
}
