//! The extremal solution of the comparison inequality and the scalar
//! `|u|' ≤ |u'|` check.
//!
//! [`propagate_majorant`] integrates `g' = -γ(t)g + α(t, g) + β(t)` with
//! classical RK4. By the comparison principle this curve dominates every
//! `g ≥ 0` obeying the inequality, in particular `|u|` for a problem whose
//! envelopes hold.

use serde::{Deserialize, Serialize};

use crate::certificate::{CertificateError, InequalityData};
use crate::expr::EvalError;
use crate::solver::{write_columns, Grid};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MajorantStatus<T> {
    Completed,
    /// The curve exceeded the cap (or overflowed) inside the step ending
    /// after `t_star`; `t_star` is that step's midpoint.
    BlowUp { t_star: T },
}

/// `g_values[k] ≈ g(tₖ)` for every node reached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MajorantCurve<T> {
    pub grid: Grid<T>,
    pub g_values: Vec<T>,
    pub status: MajorantStatus<T>,
}

impl<T: Scalar> MajorantCurve<T> {
    pub fn times(&self) -> impl Iterator<Item = T> + '_ {
        (0..self.g_values.len()).map(|k| self.grid.node(k))
    }

    /// CSV with header `t,g`, formatted like solver trajectories.
    pub fn to_csv(&self) -> String {
        let status = match &self.status {
            MajorantStatus::Completed => "completed".to_string(),
            MajorantStatus::BlowUp { t_star } => format!("blowup t_star={t_star:.16e}"),
        };
        write_columns("t,g", self.times().zip(&self.g_values).map(|(t, g)| [t, *g]), &status)
    }
}

/// Cap above which the curve is declared escaped; matches the solver default.
const MAJORANT_CAP: f64 = 1e8;

/// RK4 on `g' = -γ(t)g + α(t, max(g, 0)) + β(t)` from `g(0) = data.g0()`.
pub fn propagate_majorant<T: Scalar>(
    data: &InequalityData<T>,
    grid: &Grid<T>,
) -> Result<MajorantCurve<T>, CertificateError> {
    let cap = T::lit(MAJORANT_CAP);
    let h = grid.h;
    let half = T::lit(0.5);
    let f = |t: T, g: T| data.rhs(t, g.max(T::zero()));
    let mut g_values = Vec::with_capacity(grid.n);
    g_values.push(data.g0());
    let mut status = MajorantStatus::Completed;
    for k in 1..grid.n {
        let t = grid.node(k - 1);
        let g = g_values[k - 1];
        let step = || -> Result<T, EvalError> {
            let k1 = f(t, g)?;
            let k2 = f(t + half * h, g + half * h * k1)?;
            let k3 = f(t + half * h, g + half * h * k2)?;
            let k4 = f(t + h, g + h * k3)?;
            Ok(g + h / T::lit(6.0) * (k1 + T::lit(2.0) * (k2 + k3) + k4))
        };
        match step() {
            Ok(next) if next.is_finite() && next.abs() <= cap => g_values.push(next.max(T::zero())),
            Ok(_) | Err(EvalError::NonFinite { .. }) => {
                status = MajorantStatus::BlowUp { t_star: t + half * h };
                break;
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(MajorantCurve {
        grid: *grid,
        g_values,
        status,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormDerivativeReport<T> {
    /// `max over k of (|u(tₖ₊₁)| - |u(tₖ)|)/h - |u'(tₖ)|`; `-inf` for fewer than two samples.
    pub max_violation: T,
    pub worst_t: Option<T>,
}

/// One-sided quotients of `|u|` over consecutive samples `(t, u(t), u'(t))`
/// spaced `h` apart, compared against `|u'|` at the left sample.
pub fn norm_derivative_check<T: Scalar>(samples: &[(T, T, T)], h: T) -> NormDerivativeReport<T> {
    let mut report = NormDerivativeReport {
        max_violation: T::neg_infinity(),
        worst_t: None,
    };
    for w in samples.windows(2) {
        let (t, u, du) = w[0];
        let quotient = (w[1].1.abs() - u.abs()) / h;
        let violation = quotient - du.abs();
        if violation > report.max_violation {
            report.max_violation = violation;
            report.worst_t = Some(t);
        }
    }
    report
}

/// Samples `(t, u(t), u'(t))` at `t = t0 + k·h` for `t ≤ t1`.
pub fn sample_function<T: Scalar>(
    u: impl Fn(T) -> T,
    du: impl Fn(T) -> T,
    t0: T,
    t1: T,
    h: T,
) -> Vec<(T, T, T)> {
    let steps = ((t1 - t0) / h).floor().to_usize().unwrap_or(0);
    (0..=steps)
        .map(|k| {
            let t = t0 + T::from_usize_lossy(k) * h;
            (t, u(t), du(t))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certificate::derive_inequality;
    use crate::model::tests::atan_spec;
    use crate::solver::{solve, SolveOptions};

    #[test]
    fn zero_right_side_is_constant() {
        let d = InequalityData::parse("0", "0", "0", 3.0).unwrap();
        let curve = propagate_majorant(&d, &Grid::new(5.0, 0.1).unwrap()).unwrap();
        assert_eq!(curve.status, MajorantStatus::Completed);
        assert!(curve.g_values.iter().all(|&g| g == 3.0));
        assert_eq!(curve.g_values.len(), 51);
    }

    #[test]
    fn riccati_majorant() {
        let d = InequalityData::<f64>::parse("0", "u^2", "0", 1.0).unwrap();
        let curve = propagate_majorant(&d, &Grid::new(0.5, 1e-3).unwrap()).unwrap();
        assert!((curve.g_values.last().unwrap() - 2.0).abs() < 1e-6);
        let curve = propagate_majorant(&d, &Grid::new(2.0, 1e-3).unwrap()).unwrap();
        match curve.status {
            MajorantStatus::BlowUp { t_star } => assert!((t_star - 1.0).abs() < 0.01, "{t_star}"),
            s => panic!("{s:?}"),
        }
    }

    #[test]
    fn rk4_order() {
        let d = InequalityData::<f64>::parse("0", "u^2", "0", 1.0).unwrap();
        let err = |h: f64| {
            let c = propagate_majorant(&d, &Grid::new(0.5, h).unwrap()).unwrap();
            (c.g_values.last().unwrap() - 2.0).abs()
        };
        let (e1, e2) = (err(0.02), err(0.01));
        let order = (e1 / e2).log2();
        assert!((3.6..=4.4).contains(&order), "{order}");
    }

    #[test]
    fn atan_majorant_dominates_solution() {
        let spec = atan_spec();
        let grid = Grid::new(10.0, 0.01).unwrap();
        let traj = solve(&spec, &grid, &SolveOptions::default()).unwrap();
        let curve = propagate_majorant(&derive_inequality(&spec).unwrap(), &grid).unwrap();
        assert_eq!(curve.status, MajorantStatus::Completed);
        for (g, u) in curve.g_values.iter().zip(&traj.values) {
            assert!(g + 1e-9 >= u.abs(), "{g} < |{u}|");
        }
    }

    #[test]
    fn norm_derivative_examples() {
        let h = 1e-5;
        let sin = sample_function(f64::sin, f64::cos, 1e-3, std::f64::consts::PI - 1e-3, h);
        assert!(norm_derivative_check(&sin, h).max_violation <= 2.0 * h);
        let kink = sample_function(|t: f64| t * t - 1.0, |t| 2.0 * t, 0.9, 1.1, h);
        let r = norm_derivative_check(&kink, h);
        assert!(r.max_violation <= 2.0 * h, "{r:?}");
        let zero = sample_function(|_: f64| 0.0, |_| 0.0, 0.0, 1.0, h);
        assert_eq!(norm_derivative_check(&zero, h).max_violation, 0.0);
    }

    #[test]
    fn majorant_csv() {
        let d = InequalityData::parse("0", "0", "1", 0.0).unwrap();
        let curve = propagate_majorant(&d, &Grid::new(1.0, 0.5).unwrap()).unwrap();
        let csv = curve.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,g"));
        assert_eq!(lines.next(), Some("0.0000000000000000e0,0.0000000000000000e0"));
        assert_eq!(csv.lines().last(), Some("# status=completed"));
    }
}
