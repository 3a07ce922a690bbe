//! Problem definition: forcing `f(t)`, kernel `a(t, s, u)`, their symbolic
//! derivatives, and the decay envelopes
//!
//! ```text
//! |f(t)| + |f'(t)|              ≤ c0·w(b0, t)
//! |a(t, t, u)|                  ≤ c1·w(b1, t)·(1 + |u|^(2p))
//! ∫₀ᵗ |a_t(t, s, u(s))| ds      ≤ c2·w(b, t)·(1 + |u(t)|^(2p)),   a_u ≥ 0
//! ```
//!
//! where `w(b, t)` is `exp(-b·t)` ([`DecayProfile::Exponential`]) or
//! `(1 + t)^(-b)` ([`DecayProfile::Power`]). [`validate_decay`] checks these
//! hypotheses on a deterministic sample grid.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{self, Bindings, EvalError, Expr, ExprError, SyntaxError, Var};
use crate::quadrature;
use crate::Scalar;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("in {which}: {source}")]
    Syntax {
        which: &'static str,
        #[source]
        source: SyntaxError,
    },
    #[error("{which} may not depend on `{var}`")]
    VariableScope { which: &'static str, var: Var },
    #[error(transparent)]
    Derivative(#[from] ExprError),
    #[error("invalid envelope: {0}")]
    InvalidEnvelope(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("cannot read problem file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed problem file: {0}")]
    Format(#[from] serde_json::Error),
}

/// Shape of the decay weight `w(b, t)` used by every envelope of a problem.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecayProfile {
    /// `w(b, t) = exp(-b t)`
    #[default]
    Exponential,
    /// `w(b, t) = (1 + t)^(-b)`
    Power,
}

impl DecayProfile {
    pub fn weight<T: Scalar>(self, rate: T, t: T) -> T {
        match self {
            DecayProfile::Exponential => (-(rate * t)).exp(),
            DecayProfile::Power => (T::one() + t).powf(-rate),
        }
    }

    /// `c·w(b, t)` as an expression in `t`.
    pub fn term(self, c: f64, rate: f64) -> Expr {
        let w = match self {
            DecayProfile::Exponential => Expr::unary(
                expr::UnaryOp::Exp,
                Expr::mul(Expr::Const(-rate), Expr::t()),
            ),
            DecayProfile::Power => Expr::pow(Expr::add(Expr::Const(1.0), Expr::t()), -rate),
        };
        if rate == 0.0 {
            Expr::Const(c)
        } else {
            Expr::mul(Expr::Const(c), w)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForcingEnvelope<T> {
    pub c0: T,
    pub b0: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelEnvelope<T> {
    pub c1: T,
    pub b1: T,
    pub c2: T,
    pub b: T,
    pub p: T,
}

impl<T: Scalar> ForcingEnvelope<T> {
    pub fn new(c0: T, b0: T) -> Self {
        Self { c0, b0 }
    }

    fn check(&self) -> Result<(), ModelError> {
        nonnegative("c0", self.c0)?;
        nonnegative("b0", self.b0)
    }
}

impl<T: Scalar> KernelEnvelope<T> {
    pub fn new(c1: T, b1: T, c2: T, b: T, p: T) -> Self {
        Self { c1, b1, c2, b, p }
    }

    fn check(&self) -> Result<(), ModelError> {
        nonnegative("c1", self.c1)?;
        nonnegative("b1", self.b1)?;
        nonnegative("c2", self.c2)?;
        nonnegative("b", self.b)?;
        if !(self.p > T::zero() && self.p.is_finite()) {
            return Err(ModelError::InvalidEnvelope(format!("p must be positive, got {}", self.p)));
        }
        Ok(())
    }
}

fn nonnegative<T: Scalar>(name: &str, v: T) -> Result<(), ModelError> {
    if v >= T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(ModelError::InvalidEnvelope(format!("{name} must be finite and ≥ 0, got {v}")))
    }
}

/// A Volterra problem together with its envelope constants.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec<T> {
    pub f: Expr,
    pub f_prime: Expr,
    pub a: Expr,
    pub a_t: Expr,
    pub a_u: Expr,
    pub forcing: ForcingEnvelope<T>,
    pub kernel: KernelEnvelope<T>,
    pub decay: DecayProfile,
}

/// Parses `f(t)` and `a(t, s, u)` and precomputes `f'`, `a_t`, `a_u`.
/// Envelopes use the exponential profile; see [`ProblemSpec::with_decay`].
pub fn build_problem<T: Scalar>(
    f_text: &str,
    a_text: &str,
    forcing: ForcingEnvelope<T>,
    kernel: KernelEnvelope<T>,
) -> Result<ProblemSpec<T>, ModelError> {
    let f = expr::parse(f_text).map_err(|source| ModelError::Syntax { which: "f", source })?;
    let a = expr::parse(a_text).map_err(|source| ModelError::Syntax { which: "a", source })?;
    ProblemSpec::from_exprs(f, a, forcing, kernel)
}

impl<T: Scalar> ProblemSpec<T> {
    pub fn from_exprs(
        f: Expr,
        a: Expr,
        forcing: ForcingEnvelope<T>,
        kernel: KernelEnvelope<T>,
    ) -> Result<Self, ModelError> {
        if let Some(&var) = f.variables().iter().find(|v| **v != Var::T) {
            return Err(ModelError::VariableScope { which: "f", var });
        }
        forcing.check()?;
        kernel.check()?;
        Ok(Self {
            f_prime: f.differentiate(Var::T)?,
            a_t: a.differentiate(Var::T)?,
            a_u: a.differentiate(Var::U)?,
            f,
            a,
            forcing,
            kernel,
            decay: DecayProfile::Exponential,
        })
    }

    pub fn with_decay(mut self, decay: DecayProfile) -> Self {
        self.decay = decay;
        self
    }

    pub fn forcing_at(&self, t: T) -> Result<T, EvalError> {
        self.f.eval(&Bindings::new().t(t))
    }

    pub fn kernel_at(&self, t: T, s: T, u: T) -> Result<T, EvalError> {
        self.a.eval(&Bindings::tsu(t, s, u))
    }

    pub fn kernel_du(&self, t: T, s: T, u: T) -> Result<T, EvalError> {
        self.a_u.eval(&Bindings::tsu(t, s, u))
    }

    /// `g(0) = |f(0)|`.
    pub fn initial_magnitude(&self) -> Result<T, EvalError> {
        Ok(self.forcing_at(T::zero())?.abs())
    }

    fn growth(&self, u: T) -> T {
        T::one() + u.abs().powf(T::lit(2.0) * self.kernel.p)
    }
}

/// JSON problem file. See `docs/problem-format.md`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub f: String,
    pub a: String,
    pub c0: f64,
    pub b0: f64,
    pub c1: f64,
    pub b1: f64,
    pub c2: f64,
    pub b: f64,
    pub p: f64,
    #[serde(default)]
    pub decay: DecayProfile,
}

impl ProblemFile {
    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_spec(&self) -> Result<ProblemSpec<f64>, ModelError> {
        Ok(build_problem(
            &self.f,
            &self.a,
            ForcingEnvelope::new(self.c0, self.b0),
            KernelEnvelope::new(self.c1, self.b1, self.c2, self.b, self.p),
        )?
        .with_decay(self.decay))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hypothesis {
    /// `|f| + |f'| ≤ c0·w(b0, t)`
    ForcingDecay,
    /// `|a(t,t,u)| ≤ c1·w(b1, t)(1 + |u|^2p)`
    KernelDiagonal,
    /// `∫₀ᵗ |a_t| ds ≤ c2·w(b, t)(1 + |u|^2p)` with constant profiles `u ≡ ±u_max`
    KernelTimeDerivative,
    /// `a_u ≥ 0`
    KernelMonotone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckVerdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint<T> {
    pub t: T,
    pub s: Option<T>,
    pub u: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisCheck<T> {
    pub hypothesis: Hypothesis,
    /// Minimum slack over the samples; `-inf` when an evaluation failed. The
    /// verdict tolerates negative slack at the level of rounding.
    pub margin: T,
    pub worst: SamplePoint<T>,
    pub verdict: CheckVerdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport<T> {
    pub checks: Vec<HypothesisCheck<T>>,
}

impl<T: Scalar> ValidationReport<T> {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.verdict == CheckVerdict::Pass)
    }

    pub fn get(&self, hypothesis: Hypothesis) -> Option<&HypothesisCheck<T>> {
        self.checks.iter().find(|c| c.hypothesis == hypothesis)
    }
}

/// Tracks the worst slack seen while sampling one hypothesis.
struct Worst<T> {
    hypothesis: Hypothesis,
    margin: T,
    at: SamplePoint<T>,
    error: Option<String>,
    /// Some sample fell short by more than rounding.
    violated: bool,
}

/// Slack below zero by at most this many ulps of the compared magnitudes
/// counts as rounding, so exactly tight envelopes pass.
const ROUNDING_ULPS: f64 = 64.0;

impl<T: Scalar> Worst<T> {
    fn new(hypothesis: Hypothesis) -> Self {
        Self {
            hypothesis,
            margin: T::infinity(),
            at: SamplePoint {
                t: T::zero(),
                s: None,
                u: None,
            },
            error: None,
            violated: false,
        }
    }

    /// Records `bound - value` for a sample where `value ≤ bound` must hold.
    fn record(&mut self, pair: Result<(T, T), EvalError>, at: SamplePoint<T>) {
        let slack = pair.map(|(bound, value)| {
            let m = bound - value;
            let tol = T::lit(ROUNDING_ULPS) * T::epsilon() * (bound.abs() + value.abs());
            self.violated |= m < -tol;
            m
        });
        match slack {
            Ok(m) if m.is_nan() => {
                if self.error.is_none() {
                    self.error = Some("slack is NaN".into());
                    self.margin = T::neg_infinity();
                    self.at = at;
                }
            }
            Ok(m) => {
                if m < self.margin {
                    self.margin = m;
                    self.at = at;
                }
            }
            Err(e) => {
                if self.error.is_none() {
                    self.error = Some(e.to_string());
                    self.margin = T::neg_infinity();
                    self.at = at;
                }
            }
        }
    }

    fn finish(self) -> HypothesisCheck<T> {
        let verdict = if self.error.is_none() && !self.violated {
            CheckVerdict::Pass
        } else {
            CheckVerdict::Fail
        };
        HypothesisCheck {
            hypothesis: self.hypothesis,
            margin: self.margin,
            worst: self.at,
            verdict,
            error: self.error,
        }
    }
}

/// Sample counts for [`validate_decay_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecaySampling<T> {
    pub t_max: T,
    pub u_max: T,
    pub n_t: usize,
    pub n_u: usize,
    /// Simpson panels for the time-derivative integral.
    pub panels: usize,
}

impl<T: Scalar> DecaySampling<T> {
    pub fn new(t_max: T, u_max: T) -> Self {
        Self {
            t_max,
            u_max,
            n_t: 201,
            n_u: 41,
            panels: 200,
        }
    }
}

/// Checks the decay hypotheses on a uniform `n_samples`-point grid over
/// `[0, t_max]` and 41 values of `u` in `[-u_max, u_max]`.
pub fn validate_decay<T: Scalar>(
    spec: &ProblemSpec<T>,
    t_max: T,
    u_max: T,
    n_samples: usize,
) -> Result<ValidationReport<T>, ModelError> {
    let sampling = DecaySampling {
        n_t: n_samples,
        ..DecaySampling::new(t_max, u_max)
    };
    validate_decay_with(spec, &sampling)
}

pub fn validate_decay_with<T: Scalar>(
    spec: &ProblemSpec<T>,
    sampling: &DecaySampling<T>,
) -> Result<ValidationReport<T>, ModelError> {
    let DecaySampling {
        t_max,
        u_max,
        n_t,
        n_u,
        panels,
    } = *sampling;
    if !(t_max > T::zero() && u_max > T::zero()) {
        return Err(ModelError::InvalidArgument("t_max and u_max must be positive".into()));
    }
    if n_t < 2 || n_u < 2 {
        return Err(ModelError::InvalidArgument("need at least two samples per axis".into()));
    }
    let ts = quadrature::uniform(T::zero(), t_max, n_t);
    let us = quadrature::uniform(-u_max, u_max, n_u);
    let ForcingEnvelope { c0, b0 } = spec.forcing;
    let KernelEnvelope { c1, b1, c2, b, .. } = spec.kernel;
    let w = |rate: T, t: T| spec.decay.weight(rate, t);

    let mut forcing = Worst::new(Hypothesis::ForcingDecay);
    for &t in &ts {
        let bind = Bindings::new().t(t);
        let slack = spec
            .f
            .eval(&bind)
            .and_then(|f| Ok(f.abs() + spec.f_prime.eval(&bind)?.abs()))
            .map(|lhs| (c0 * w(b0, t), lhs));
        forcing.record(slack, SamplePoint { t, s: None, u: None });
    }

    let mut diagonal = Worst::new(Hypothesis::KernelDiagonal);
    for &t in &ts {
        for &u in &us {
            let slack = spec
                .kernel_at(t, t, u)
                .map(|a| (c1 * w(b1, t) * spec.growth(u), a.abs()));
            diagonal.record(slack, SamplePoint { t, s: Some(t), u: Some(u) });
        }
    }

    let mut derivative = Worst::new(Hypothesis::KernelTimeDerivative);
    for &t in &ts {
        for u in [u_max, -u_max] {
            let integral = if t == T::zero() {
                Ok(T::zero())
            } else {
                quadrature::simpson(T::zero(), t, panels, |s| {
                    Ok(spec.a_t.eval(&Bindings::tsu(t, s, u))?.abs())
                })
            };
            let slack = integral.map(|i| (c2 * w(b, t) * spec.growth(u), i));
            derivative.record(slack, SamplePoint { t, s: None, u: Some(u) });
        }
    }

    let mut monotone = Worst::new(Hypothesis::KernelMonotone);
    for (i, &t) in ts.iter().enumerate() {
        for &s in &ts[..=i] {
            for &u in &us {
                monotone.record(spec.kernel_du(t, s, u).map(|d| (d, T::zero())), SamplePoint { t, s: Some(s), u: Some(u) });
            }
        }
    }

    Ok(ValidationReport {
        checks: vec![
            forcing.finish(),
            diagonal.finish(),
            derivative.finish(),
            monotone.finish(),
        ],
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use std::f64::consts::FRAC_PI_2;

    use super::*;

    pub(crate) fn atan_spec() -> ProblemSpec<f64> {
        build_problem(
            "exp(-t)",
            "exp(-(t+s))*atan(u)",
            ForcingEnvelope::new(2.0, 1.0),
            KernelEnvelope::new(FRAC_PI_2, 2.0, FRAC_PI_2, 1.0, 0.5),
        )
        .unwrap()
    }

    fn riccati() -> ProblemSpec<f64> {
        build_problem(
            "1",
            "u^2",
            ForcingEnvelope::new(1.0, 0.0),
            KernelEnvelope::new(1.0, 0.0, 0.0, 0.0, 1.0),
        )
        .unwrap()
    }

    #[test]
    fn builds_with_derivatives() {
        let spec = atan_spec();
        let b = Bindings::tsu(0.4, 0.1, 2.0);
        let a_u: f64 = spec.a_u.eval(&b).unwrap();
        assert!((a_u - (-0.5f64).exp() / 5.0).abs() < 1e-15);
        let a_t: f64 = spec.a_t.eval(&b).unwrap();
        assert!((a_t + (-0.5f64).exp() * 2.0f64.atan()).abs() < 1e-15);
        let fp: f64 = spec.f_prime.eval(&b).unwrap();
        assert!((fp + (-0.4f64).exp()).abs() < 1e-15);
        assert!(riccati().f_prime == Expr::Const(0.0));
    }

    #[test]
    fn scope_and_syntax_errors() {
        let env = (ForcingEnvelope::new(1.0, 1.0), KernelEnvelope::new(1.0, 1.0, 1.0, 1.0, 1.0));
        assert!(matches!(
            build_problem("exp(-s)", "u", env.0, env.1),
            Err(ModelError::VariableScope { which: "f", var: Var::S })
        ));
        assert!(matches!(
            build_problem("u", "u", env.0, env.1),
            Err(ModelError::VariableScope { var: Var::U, .. })
        ));
        assert!(matches!(
            build_problem("exp(-t", "u", env.0, env.1),
            Err(ModelError::Syntax { which: "f", .. })
        ));
        assert!(matches!(
            build_problem("1", "abs(u)", env.0, env.1),
            Err(ModelError::Derivative(_))
        ));
    }

    #[test]
    fn envelope_invariants() {
        let f = ForcingEnvelope::new(1.0, 0.0);
        let bad_p = KernelEnvelope::new(1.0, 0.0, 0.0, 0.0, 0.0);
        assert!(matches!(build_problem("1", "u", f, bad_p), Err(ModelError::InvalidEnvelope(_))));
        let neg_c = KernelEnvelope::new(-1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(matches!(build_problem("1", "u", f, neg_c), Err(ModelError::InvalidEnvelope(_))));
    }

    #[test]
    fn forcing_equality_case_has_zero_margin() {
        let report = validate_decay(&atan_spec(), 5.0, 3.0, 201).unwrap();
        let eq = report.get(Hypothesis::ForcingDecay).unwrap();
        assert_eq!(eq.margin, 0.0);
        assert_eq!(eq.verdict, CheckVerdict::Pass);
    }

    #[test]
    fn atan_kernel_passes_everything() {
        let report = validate_decay(&atan_spec(), 5.0, 3.0, 201).unwrap();
        assert!(report.passed(), "{report:?}");
        // closed form: (π/2)e^{-t}(1+u) - e^{-t}(1-e^{-t})atan(u) at u = u_max
        let d = report.get(Hypothesis::KernelTimeDerivative).unwrap();
        let oracle = (0..201)
            .map(|k| 5.0 * k as f64 / 200.0)
            .map(|t: f64| {
                let integral = (-t).exp() * (1.0 - (-t).exp()) * 3.0f64.atan();
                FRAC_PI_2 * (-t).exp() * 4.0 - integral
            })
            .fold(f64::INFINITY, f64::min);
        assert!((d.margin - oracle).abs() < 1e-9, "{} vs {oracle}", d.margin);
    }

    #[test]
    fn square_kernel_diagonal_margin_is_one() {
        let report = validate_decay(&riccati(), 2.0, 5.0, 21).unwrap();
        let d = report.get(Hypothesis::KernelDiagonal).unwrap();
        assert_eq!(d.margin, 1.0);
        assert_eq!(d.verdict, CheckVerdict::Pass);
        // a_u = 2u is negative on the lower half of the u range
        let m = report.get(Hypothesis::KernelMonotone).unwrap();
        assert_eq!(m.margin, -10.0);
        assert_eq!(m.verdict, CheckVerdict::Fail);
        assert_eq!(m.worst.u, Some(-5.0));
    }

    #[test]
    fn evaluation_errors_fail_the_report() {
        let spec = build_problem(
            "1",
            "log(u)",
            ForcingEnvelope::new(1.0, 0.0),
            KernelEnvelope::new(1.0, 0.0, 1.0, 0.0, 1.0),
        )
        .unwrap();
        let report = validate_decay(&spec, 1.0, 1.0, 11).unwrap();
        let d = report.get(Hypothesis::KernelDiagonal).unwrap();
        assert_eq!(d.verdict, CheckVerdict::Fail);
        assert!(d.error.as_deref().unwrap().contains("log"));
        assert_eq!(d.margin, f64::NEG_INFINITY);
    }

    #[test]
    fn bad_arguments() {
        assert!(validate_decay(&riccati(), 0.0, 1.0, 11).is_err());
        assert!(validate_decay(&riccati(), 1.0, 1.0, 1).is_err());
    }

    #[test]
    fn deterministic() {
        let a = validate_decay(&atan_spec(), 3.0, 2.0, 51).unwrap();
        let b = validate_decay(&atan_spec(), 3.0, 2.0, 51).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn problem_file_round_trip() {
        let json = r#"{"f":"exp(-t)","a":"exp(-(t+s))*atan(u)","c0":2,"b0":1,
            "c1":1.5707963267948966,"b1":2,"c2":1.5707963267948966,"b":1,"p":0.5}"#;
        let file: ProblemFile = serde_json::from_str(json).unwrap();
        assert_eq!(file.decay, DecayProfile::Exponential);
        assert_eq!(file.to_spec().unwrap(), atan_spec());
    }

    #[test]
    fn power_profile_weights() {
        assert_eq!(DecayProfile::Power.weight(2.0, 1.0), 0.25);
        let e = DecayProfile::Power.term(3.0, 2.0);
        assert_eq!(e.eval::<f64>(&Bindings::new().t(1.0)).unwrap(), 0.75);
        assert_eq!(DecayProfile::Exponential.term(3.0, 0.0), Expr::Const(3.0));
    }
}
