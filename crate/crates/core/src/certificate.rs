//! A-priori growth certificates from the differential inequality
//!
//! ```text
//! g'(t) ≤ -γ(t)·g + α(t, g) + β(t),    g ≥ 0,  α ≥ 0 non-decreasing in g.
//! ```
//!
//! If some `μ > 0` satisfies
//!
//! ```text
//! α(t, 1/μ) + β(t) ≤ (1/μ)·(γ(t) - μ'(t)/μ(t))   for all t ≥ 0      (growth condition)
//! μ(0)·g(0) < 1                                                     (start condition)
//! ```
//!
//! then every solution satisfies `g(t) < 1/μ(t)` (`≤` when `μ(0)g(0) = 1`).
//! Applied to `g = |u|` of a Volterra problem with decay envelopes, `γ = 0`,
//! `β = c0·w(b0) + c1·w(b1) + c2·w(b)` and `α = (c1·w(b1) + c2·w(b))·g^(2p)`.
//!
//! For `μ = c3·e^(-qt)` with exponential envelopes the growth condition divided
//! by its right side becomes `Σᵢ Cᵢ·e^(λᵢ t) ≤ 1` with positive `Cᵢ`. When every
//! `λᵢ ≤ 0` the supremum sits at `t = 0`, where the condition reads
//! `h(c3) = (c0+c1+c2)·c3 + (c1+c2)·c3^(1-2p) ≤ q`. The power family
//! `μ = c4·(1+t)^(-r)` with power-law envelopes reduces the same way in the
//! variable `1 + t`. Tabulated `μ` can only be checked on a grid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Bindings, EvalError, Expr, ExprError, UnaryOp, Var};
use crate::model::{DecayProfile, ForcingEnvelope, HypothesisCheck, Hypothesis, KernelEnvelope, ProblemSpec, CheckVerdict, SamplePoint};
use crate::quadrature;
use crate::solver::Trajectory;
use crate::Scalar;

#[derive(Debug, Error)]
pub enum CertificateError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("μ is not positive at t = {t}")]
    InvalidMu { t: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("inequality data has no {0} envelope structure")]
    MissingStructure(&'static str),
}

/// Envelope constants behind an inequality built by [`derive_inequality`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeSum<T> {
    pub decay: DecayProfile,
    pub c0: T,
    pub b0: T,
    pub c1: T,
    pub b1: T,
    pub c2: T,
    pub b: T,
    pub p: T,
}

impl<T: Scalar> EnvelopeSum<T> {
    /// `h(c) = (c0+c1+c2)·c + (c1+c2)·c^(1-2p)`, the growth condition at `t = 0`
    /// divided by `1/c`.
    pub fn reduced(&self, c: T) -> T {
        let kernel = self.c1 + self.c2;
        let mut h = (self.c0 + kernel) * c;
        if kernel > T::zero() {
            h = h + kernel * c.powf(T::one() - T::lit(2.0) * self.p);
        }
        h
    }

    /// Exponents `λᵢ` of the normalized terms `Cᵢ·e^(λᵢ t)` (exponential decay,
    /// `rate = q`) or `Cᵢ·(1+t)^(λᵢ)` (power decay, `rate = r`). Terms whose
    /// coefficient vanishes are omitted.
    pub fn tail_exponents(&self, rate: T) -> Vec<T> {
        let two_p = T::lit(2.0) * self.p;
        // exponential: e^{-bt}·e^{qt}/q... relative to q·e^{qt}/c3 the shift is -q;
        // power: relative to r(1+t)^{r-1}/c4 the shift is 1 - r
        let shift = match self.decay {
            DecayProfile::Exponential => -rate,
            DecayProfile::Power => T::one() - rate,
        };
        let mut out = Vec::with_capacity(5);
        if self.c0 > T::zero() {
            out.push(shift - self.b0);
        }
        for (c, b) in [(self.c1, self.b1), (self.c2, self.b)] {
            if c > T::zero() {
                out.push(shift - b);
                out.push(shift - b + two_p * rate);
            }
        }
        out
    }
}

/// Coefficients of `g' ≤ -γ(t)g + α(t, g) + β(t)`; `α` uses the variable `u` for `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct InequalityData<T> {
    gamma: Expr,
    alpha: Expr,
    beta: Expr,
    g0: T,
    structure: Option<EnvelopeSum<T>>,
}

impl<T: Scalar> InequalityData<T> {
    /// General data; `gamma` and `beta` may depend on `t` only, `alpha` on `t`
    /// and on `u` standing for `g`.
    pub fn new(gamma: Expr, alpha: Expr, beta: Expr, g0: T) -> Result<Self, CertificateError> {
        for (name, e) in [("gamma", &gamma), ("beta", &beta)] {
            if e.variables().iter().any(|v| *v != Var::T) {
                return Err(CertificateError::InvalidArgument(format!("{name} may depend on t only")));
            }
        }
        if alpha.depends_on(Var::S) {
            return Err(CertificateError::InvalidArgument("alpha may depend on t and g (u) only".into()));
        }
        if !(g0 >= T::zero() && g0.is_finite()) {
            return Err(CertificateError::InvalidArgument(format!("g0 must be finite and ≥ 0, got {g0}")));
        }
        Ok(Self {
            gamma,
            alpha,
            beta,
            g0,
            structure: None,
        })
    }

    pub fn parse(gamma: &str, alpha: &str, beta: &str, g0: T) -> Result<Self, CertificateError> {
        let p = |s: &str| crate::expr::parse(s).map_err(|e| CertificateError::Expr(e.into()));
        Self::new(p(gamma)?, p(alpha)?, p(beta)?, g0)
    }

    /// `γ = 0`, `β = c0·w(b0) + c1·w(b1) + c2·w(b)`, `α = (c1·w(b1) + c2·w(b))·g^(2p)`.
    pub fn from_envelopes(
        decay: DecayProfile,
        forcing: ForcingEnvelope<T>,
        kernel: KernelEnvelope<T>,
        g0: T,
    ) -> Result<Self, CertificateError> {
        let f = |x: T| x.to_f64_lossy();
        let term = |c: T, b: T| decay.term(f(c), f(b));
        let beta = Expr::add(
            Expr::add(term(forcing.c0, forcing.b0), term(kernel.c1, kernel.b1)),
            term(kernel.c2, kernel.b),
        );
        let alpha = Expr::mul(
            Expr::add(term(kernel.c1, kernel.b1), term(kernel.c2, kernel.b)),
            Expr::pow(Expr::u(), 2.0 * f(kernel.p)),
        );
        let mut data = Self::new(Expr::Const(0.0), alpha, beta, g0)?;
        data.structure = Some(EnvelopeSum {
            decay,
            c0: forcing.c0,
            b0: forcing.b0,
            c1: kernel.c1,
            b1: kernel.b1,
            c2: kernel.c2,
            b: kernel.b,
            p: kernel.p,
        });
        Ok(data)
    }

    pub fn gamma(&self) -> &Expr {
        &self.gamma
    }

    pub fn alpha(&self) -> &Expr {
        &self.alpha
    }

    pub fn beta(&self) -> &Expr {
        &self.beta
    }

    pub fn g0(&self) -> T {
        self.g0
    }

    pub fn structure(&self) -> Option<&EnvelopeSum<T>> {
        self.structure.as_ref()
    }

    pub fn with_g0(mut self, g0: T) -> Self {
        self.g0 = g0;
        self
    }

    pub fn gamma_at(&self, t: T) -> Result<T, EvalError> {
        self.gamma.eval(&Bindings::new().t(t))
    }

    pub fn beta_at(&self, t: T) -> Result<T, EvalError> {
        self.beta.eval(&Bindings::new().t(t))
    }

    pub fn alpha_at(&self, t: T, g: T) -> Result<T, EvalError> {
        self.alpha.eval(&Bindings::new().t(t).u(g))
    }

    /// Right side `-γ(t)g + α(t, g) + β(t)` of the inequality.
    pub fn rhs(&self, t: T, g: T) -> Result<T, EvalError> {
        Ok(-self.gamma_at(t)? * g + self.alpha_at(t, g)? + self.beta_at(t)?)
    }
}

/// Builds the comparison inequality for `g = |u|` from the problem envelopes,
/// with `g(0) = |f(0)|`.
pub fn derive_inequality<T: Scalar>(spec: &ProblemSpec<T>) -> Result<InequalityData<T>, CertificateError> {
    InequalityData::from_envelopes(spec.decay, spec.forcing, spec.kernel, spec.initial_magnitude()?)
}

/// Candidate `μ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MuFamily<T> {
    /// `μ = c3·e^(-qt)`
    Exponential { c3: T, q: T },
    /// `μ = c4·(1+t)^(-r)`
    Power { c4: T, r: T },
    /// Any positive expression in `t`.
    Tabulated { mu: Expr },
}

impl<T: Scalar> MuFamily<T> {
    fn check_parameters(&self) -> Result<(), CertificateError> {
        let (c, rate) = match self {
            MuFamily::Exponential { c3, q } => (*c3, *q),
            MuFamily::Power { c4, r } => (*c4, *r),
            MuFamily::Tabulated { mu } => {
                if mu.variables().iter().any(|v| *v != Var::T) {
                    return Err(CertificateError::InvalidArgument("μ may depend on t only".into()));
                }
                return Ok(());
            }
        };
        if !(c > T::zero() && c.is_finite() && rate > T::zero() && rate.is_finite()) {
            return Err(CertificateError::InvalidArgument(format!(
                "μ parameters must be positive, got ({c}, {rate})"
            )));
        }
        Ok(())
    }

    pub fn value(&self, t: T) -> Result<T, EvalError> {
        match self {
            MuFamily::Exponential { c3, q } => Ok(*c3 * (-*q * t).exp()),
            MuFamily::Power { c4, r } => Ok(*c4 * (T::one() + t).powf(-*r)),
            MuFamily::Tabulated { mu } => mu.eval(&Bindings::new().t(t)),
        }
    }

    /// `1/μ(t)`, evaluated directly so large bounds stay accurate.
    pub fn inverse(&self, t: T) -> Result<T, EvalError> {
        match self {
            MuFamily::Exponential { c3, q } => Ok((*q * t).exp() / *c3),
            MuFamily::Power { c4, r } => Ok((T::one() + t).powf(*r) / *c4),
            MuFamily::Tabulated { mu } => Ok(T::one() / mu.eval(&Bindings::new().t(t))?),
        }
    }

    /// `1/μ` as an expression in `t`.
    pub fn inverse_expr(&self) -> Expr {
        match self {
            MuFamily::Exponential { c3, q } => Expr::div(
                Expr::unary(UnaryOp::Exp, Expr::mul(Expr::Const(q.to_f64_lossy()), Expr::t())),
                Expr::Const(c3.to_f64_lossy()),
            ),
            MuFamily::Power { c4, r } => Expr::div(
                Expr::pow(Expr::add(Expr::Const(1.0), Expr::t()), r.to_f64_lossy()),
                Expr::Const(c4.to_f64_lossy()),
            ),
            MuFamily::Tabulated { mu } => Expr::div(Expr::Const(1.0), mu.clone()),
        }
    }

    fn family_name(&self) -> &'static str {
        match self {
            MuFamily::Exponential { .. } => "exponential",
            MuFamily::Power { .. } => "power",
            MuFamily::Tabulated { .. } => "tabulated",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    /// `strict`: the bound is `g < 1/μ`; otherwise `g ≤ 1/μ`.
    Certified { strict: bool },
    Refused { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TailCheck<T> {
    /// Closed-form check that every normalized term decays; exact on `[0, ∞)`.
    ExponentComparison { exponents: Vec<T>, passed: bool },
    /// Only the sampled grid up to `t_max` was checked.
    GridOnly { t_max: T },
}

impl<T: Scalar> TailCheck<T> {
    pub fn passed(&self) -> bool {
        match self {
            TailCheck::ExponentComparison { passed, .. } => *passed,
            TailCheck::GridOnly { .. } => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate<T> {
    pub mu: MuFamily<T>,
    #[serde(flatten)]
    pub verdict: Verdict,
    /// Minimum over the grid of `(1/μ)(γ - μ'/μ) - α(t, 1/μ) - β`.
    pub margin_min: T,
    pub margin_argmin: T,
    /// `μ(0)·g(0)`.
    pub start_product: T,
    pub tail_check: TailCheck<T>,
    /// `1/μ(t)`.
    pub bound: Expr,
}

impl<T: Scalar> Certificate<T> {
    pub fn is_certified(&self) -> bool {
        matches!(self.verdict, Verdict::Certified { .. })
    }

    pub fn is_strict(&self) -> bool {
        !matches!(self.verdict, Verdict::Certified { strict: false })
    }
}

/// Checks the growth and start conditions for `mu` on a uniform
/// `n_samples`-point grid over `[0, t_max]`, plus the closed-form tail check
/// when `mu` and `data` share exponential or power structure.
pub fn check_mu<T: Scalar>(
    data: &InequalityData<T>,
    mu: &MuFamily<T>,
    t_max: T,
    n_samples: usize,
) -> Result<Certificate<T>, CertificateError> {
    if !(t_max > T::zero() && t_max.is_finite()) || n_samples < 2 {
        return Err(CertificateError::InvalidArgument(
            "need t_max > 0 and at least two samples".into(),
        ));
    }
    check_mu_on(data, mu, &quadrature::uniform(T::zero(), t_max, n_samples))
}

/// [`check_mu`] on explicit sample times; `times[0]` must be `0`.
pub fn check_mu_on<T: Scalar>(
    data: &InequalityData<T>,
    mu: &MuFamily<T>,
    times: &[T],
) -> Result<Certificate<T>, CertificateError> {
    mu.check_parameters()?;
    if times.first() != Some(&T::zero()) {
        return Err(CertificateError::InvalidArgument("sample grid must start at t = 0".into()));
    }
    let t_max = *times.last().unwrap_or(&T::zero());
    let derivative = match mu {
        MuFamily::Tabulated { mu } => Some(mu.differentiate(Var::T)?),
        _ => None,
    };
    let mu_prime = |t: T, value: T| -> Result<T, EvalError> {
        match (mu, &derivative) {
            (MuFamily::Exponential { q, .. }, _) => Ok(-*q * value),
            (MuFamily::Power { r, .. }, _) => Ok(-*r * value / (T::one() + t)),
            (_, Some(d)) => d.eval(&Bindings::new().t(t)),
            _ => unreachable!(),
        }
    };

    let mut reasons = Vec::new();

    let tail_check = match (mu, data.structure()) {
        (MuFamily::Exponential { q: rate, .. }, Some(s)) if s.decay == DecayProfile::Exponential => {
            exponent_check(s, *rate)
        }
        (MuFamily::Power { r: rate, .. }, Some(s)) if s.decay == DecayProfile::Power => {
            exponent_check(s, *rate)
        }
        _ => TailCheck::GridOnly { t_max },
    };
    if let TailCheck::ExponentComparison { exponents, passed: false } = &tail_check {
        let worst = exponents.iter().copied().fold(T::neg_infinity(), T::max);
        reasons.push(format!("positive tail exponent {worst}"));
    }

    let mut margin_min = T::infinity();
    let mut margin_argmin = T::zero();
    let mut alpha_ok = true;
    for &t in times {
        let value = mu.value(t)?;
        if !(value > T::zero() && value.is_finite()) {
            return Err(CertificateError::InvalidMu { t: t.to_f64_lossy() });
        }
        let inv = mu.inverse(t)?;
        let rhs = inv * (data.gamma_at(t)? - mu_prime(t, value)? * inv);
        let margin = rhs - data.alpha_at(t, inv)? - data.beta_at(t)?;
        if margin.is_nan() {
            reasons.push(format!("margin is not a number at t = {t}"));
            margin_min = T::neg_infinity();
            margin_argmin = t;
            break;
        }
        if margin < margin_min {
            margin_min = margin;
            margin_argmin = t;
        }
        alpha_ok &= alpha_admissible(data, t, inv)?;
    }
    if margin_min < T::zero() && reasons.iter().all(|r| !r.starts_with("margin")) {
        reasons.push(format!("growth condition violated: margin {margin_min} at t = {margin_argmin}"));
    }
    if !alpha_ok {
        reasons.push("alpha is not non-negative and non-decreasing in g".into());
    }

    let start_product = mu.value(T::zero())? * data.g0();
    if start_product > T::one() {
        reasons.push(format!("start condition violated: μ(0)·g(0) = {start_product} > 1"));
    }

    let verdict = if reasons.is_empty() {
        Verdict::Certified {
            strict: start_product < T::one(),
        }
    } else {
        Verdict::Refused {
            reason: reasons.join("; "),
        }
    };
    Ok(Certificate {
        bound: mu.inverse_expr(),
        mu: mu.clone(),
        verdict,
        margin_min,
        margin_argmin,
        start_product,
        tail_check,
    })
}

fn exponent_check<T: Scalar>(s: &EnvelopeSum<T>, rate: T) -> TailCheck<T> {
    let exponents = s.tail_exponents(rate);
    let passed = exponents.iter().all(|l| *l <= T::zero());
    TailCheck::ExponentComparison { exponents, passed }
}

/// `α(t, ·) ≥ 0` and non-decreasing on eleven points of `[0, g_max]`.
fn alpha_admissible<T: Scalar>(data: &InequalityData<T>, t: T, g_max: T) -> Result<bool, EvalError> {
    let mut prev = T::zero();
    for k in 0..=10 {
        let g = g_max * T::from_usize_lossy(k) / T::lit(10.0);
        let a = data.alpha_at(t, g)?;
        if a < T::zero() || a < prev {
            return Ok(false);
        }
        prev = a;
    }
    Ok(true)
}

/// Parameters of [`search_exponential_with`] and [`search_power_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig<T> {
    /// Log-spaced sweep of the growth rate `q` (or `r`).
    pub rate_min: T,
    pub rate_max: T,
    pub n_rates: usize,
    /// Absolute tolerance of the golden-section search over `c3` (or `c4`).
    pub golden_tol: T,
    /// Horizon and resolution of the confirming grid check.
    pub t_max: T,
    pub n_samples: usize,
}

impl<T: Scalar> Default for SearchConfig<T> {
    fn default() -> Self {
        Self {
            rate_min: T::lit(1e-3),
            rate_max: T::lit(1e3),
            n_rates: 601,
            golden_tol: T::lit(1e-10),
            t_max: T::lit(50.0),
            n_samples: 2001,
        }
    }
}

impl<T: Scalar> SearchConfig<T> {
    pub fn rates(&self) -> Vec<T> {
        let (lo, hi) = (self.rate_min.ln(), self.rate_max.ln());
        quadrature::uniform(lo, hi, self.n_rates.max(2))
            .into_iter()
            .map(T::exp)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum SearchResult<T> {
    Certified { certificate: Certificate<T> },
    NoCertificate {
        /// Largest grid margin among the candidates tried.
        best_margin: T,
        reason: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        best: Option<Certificate<T>>,
    },
}

impl<T: Scalar> SearchResult<T> {
    pub fn certificate(&self) -> Option<&Certificate<T>> {
        match self {
            SearchResult::Certified { certificate } => Some(certificate),
            SearchResult::NoCertificate { .. } => None,
        }
    }
}

/// Searches `μ = c3·e^(-qt)`. See [`search_exponential_with`].
pub fn search_exponential<T: Scalar>(data: &InequalityData<T>) -> Result<SearchResult<T>, CertificateError> {
    search_exponential_with(data, &SearchConfig::default())
}

/// For `p > 1/2` the tail condition caps `q` at `min(b1, b)/(2p-1)` and `q` is
/// set to that cap; `c3` minimizes `h` on `(0, 1/g0)` by golden section.
/// Otherwise `h` is increasing in `c3`, the tail condition holds for every `q`,
/// and the smallest `q` of the sweep admitting a feasible `c3` wins, with the
/// largest such `c3`.
pub fn search_exponential_with<T: Scalar>(
    data: &InequalityData<T>,
    config: &SearchConfig<T>,
) -> Result<SearchResult<T>, CertificateError> {
    let s = *data
        .structure()
        .filter(|s| s.decay == DecayProfile::Exponential)
        .ok_or(CertificateError::MissingStructure("exponential"))?;
    let mu = |c: T, q: T| MuFamily::Exponential { c3: c, q };
    let half = T::lit(0.5);
    if s.c1 + s.c2 > T::zero() && s.p > half {
        let mut cap = T::infinity();
        for (c, b) in [(s.c1, s.b1), (s.c2, s.b)] {
            if c > T::zero() {
                cap = cap.min(b);
            }
        }
        let q = cap / (T::lit(2.0) * s.p - T::one());
        let c3 = minimize_reduced(&s, data.g0(), config.golden_tol);
        if !(q > T::zero()) {
            return sweep_refusal(data, &s, config, &mu, c3);
        }
        let cert = verify(data, &mu(c3, q), config, q * T::lit(2.0) * s.p + q)?;
        if cert.is_certified() {
            return Ok(SearchResult::Certified { certificate: cert });
        }
        return Ok(SearchResult::NoCertificate {
            best_margin: cert.margin_min,
            reason: format!(
                "largest admissible rate q = {q} is below min h(c3) = {}",
                s.reduced(c3)
            ),
            best: Some(cert),
        });
    }
    sweep_increasing(data, &s, config, &mu)
}

/// Searches `μ = c4·(1+t)^(-r)` for power-law envelopes, sweeping `r` and
/// confirming on a grid log-spaced in `1 + t`.
pub fn search_power<T: Scalar>(data: &InequalityData<T>) -> Result<SearchResult<T>, CertificateError> {
    search_power_with(data, &SearchConfig::default())
}

pub fn search_power_with<T: Scalar>(
    data: &InequalityData<T>,
    config: &SearchConfig<T>,
) -> Result<SearchResult<T>, CertificateError> {
    let s = *data
        .structure()
        .filter(|s| s.decay == DecayProfile::Power)
        .ok_or(CertificateError::MissingStructure("power-law"))?;
    let mu = |c: T, r: T| MuFamily::Power { c4: c, r };
    if s.c1 + s.c2 > T::zero() && s.p > T::lit(0.5) {
        let c4 = minimize_reduced(&s, data.g0(), config.golden_tol);
        let h_min = s.reduced(c4);
        let mut best: Option<Certificate<T>> = None;
        for r in config.rates() {
            if r < h_min || !s.tail_exponents(r).iter().all(|l| *l <= T::zero()) {
                continue;
            }
            let cert = verify(data, &mu(c4, r), config, power_growth(&s, r))?;
            if cert.is_certified() {
                return Ok(SearchResult::Certified { certificate: cert });
            }
            if best.as_ref().is_none_or(|b| cert.margin_min > b.margin_min) {
                best = Some(cert);
            }
        }
        return match best {
            Some(cert) => Ok(SearchResult::NoCertificate {
                best_margin: cert.margin_min,
                reason: "grid check failed for every admissible r".into(),
                best: Some(cert),
            }),
            None => sweep_refusal(data, &s, config, &mu, c4),
        };
    }
    sweep_increasing(data, &s, config, &mu)
}

fn power_growth<T: Scalar>(s: &EnvelopeSum<T>, r: T) -> T {
    r * (T::one() + T::lit(2.0) * s.p)
}

/// Confirms a candidate on a grid whose horizon keeps every term finite; the
/// exponent comparison covers the remaining tail.
fn verify<T: Scalar>(
    data: &InequalityData<T>,
    mu: &MuFamily<T>,
    config: &SearchConfig<T>,
    growth: T,
) -> Result<Certificate<T>, CertificateError> {
    // products of a few exponentials must stay below the overflow threshold
    let log_range = T::lit(200.0).min(T::max_value().ln() / T::lit(4.0));
    match mu {
        MuFamily::Power { .. } => {
            let limit = (log_range / growth).exp() - T::one();
            let t_max = config.t_max.min(limit);
            check_mu_on(data, mu, &quadrature::log_spaced(t_max, config.n_samples))
        }
        _ => {
            let t_max = config.t_max.min(log_range / growth);
            check_mu(data, mu, t_max, config.n_samples)
        }
    }
}

/// Smallest rate of the sweep with a feasible constant; `h` increasing in `c`.
fn sweep_increasing<T: Scalar>(
    data: &InequalityData<T>,
    s: &EnvelopeSum<T>,
    config: &SearchConfig<T>,
    mu: &dyn Fn(T, T) -> MuFamily<T>,
) -> Result<SearchResult<T>, CertificateError> {
    let mut best: Option<Certificate<T>> = None;
    for rate in config.rates() {
        if !s.tail_exponents(rate).iter().all(|l| *l <= T::zero()) {
            continue;
        }
        let Some(c) = largest_feasible(s, data.g0(), rate) else {
            continue;
        };
        let growth = match s.decay {
            DecayProfile::Exponential => rate * (T::one() + T::lit(2.0) * s.p),
            DecayProfile::Power => power_growth(s, rate),
        };
        let cert = verify(data, &mu(c, rate), config, growth)?;
        if cert.is_certified() {
            return Ok(SearchResult::Certified { certificate: cert });
        }
        if best.as_ref().is_none_or(|b| cert.margin_min > b.margin_min) {
            best = Some(cert);
        }
    }
    Ok(SearchResult::NoCertificate {
        best_margin: best.as_ref().map_or(T::neg_infinity(), |b| b.margin_min),
        reason: "no rate in the sweep admits a constant with h(c) ≤ rate and c·g0 < 1".into(),
        best,
    })
}

/// Every rate of the sweep violates the tail condition; reports the best grid margin.
fn sweep_refusal<T: Scalar>(
    data: &InequalityData<T>,
    s: &EnvelopeSum<T>,
    config: &SearchConfig<T>,
    mu: &dyn Fn(T, T) -> MuFamily<T>,
    c: T,
) -> Result<SearchResult<T>, CertificateError> {
    let mut best: Option<Certificate<T>> = None;
    for rate in config.rates() {
        let growth = match s.decay {
            DecayProfile::Exponential => rate * (T::one() + T::lit(2.0) * s.p),
            DecayProfile::Power => power_growth(s, rate),
        };
        let cert = verify(data, &mu(c, rate), config, growth)?;
        if best.as_ref().is_none_or(|b| cert.margin_min > b.margin_min) {
            best = Some(cert);
        }
    }
    let worst = config
        .rates()
        .into_iter()
        .map(|r| s.tail_exponents(r).into_iter().fold(T::neg_infinity(), T::max))
        .fold(T::infinity(), T::min);
    Ok(SearchResult::NoCertificate {
        best_margin: best.as_ref().map_or(T::neg_infinity(), |b| b.margin_min),
        reason: format!(
            "positive tail exponent for every rate in [{}, {}] (smallest worst exponent {worst})",
            config.rate_min, config.rate_max
        ),
        best,
    })
}

/// Upper end of the admissible constants: `c·g0 < 1`.
fn constant_ceiling<T: Scalar>(g0: T) -> T {
    if g0 > T::zero() {
        (T::one() / g0) * (T::one() - T::lit(1e-9))
    } else {
        T::infinity()
    }
}

/// Golden-section minimizer of the unimodal `h` over `(0, 1/g0)`.
fn minimize_reduced<T: Scalar>(s: &EnvelopeSum<T>, g0: T, tol: T) -> T {
    let mut hi = constant_ceiling(g0);
    if !hi.is_finite() {
        hi = T::one();
        while s.reduced(hi * T::lit(2.0)) <= s.reduced(hi) && hi < T::lit(1e150) {
            hi = hi * T::lit(2.0);
        }
        hi = hi * T::lit(2.0);
    }
    let tol = tol.min(hi * T::lit(1e-6));
    quadrature::golden_section(T::zero(), hi, tol, |c| {
        if c > T::zero() {
            s.reduced(c)
        } else {
            T::infinity()
        }
    })
}

/// Largest `c` in `(0, 1/g0)` with `h(c) ≤ rate·(1 - 1e-9)`, for increasing `h`.
fn largest_feasible<T: Scalar>(s: &EnvelopeSum<T>, g0: T, rate: T) -> Option<T> {
    let target = rate * (T::one() - T::lit(1e-9));
    let ceiling = constant_ceiling(g0);
    let hi = if ceiling.is_finite() {
        ceiling
    } else if s.reduced(T::one()) == T::zero() {
        return Some(T::one());
    } else {
        let mut hi = T::one();
        while s.reduced(hi) <= target {
            hi = hi * T::lit(2.0);
        }
        hi
    };
    if s.reduced(hi) <= target {
        return Some(hi);
    }
    let (mut lo, mut hi) = (T::zero(), hi);
    for _ in 0..200 {
        let mid = (lo + hi) * T::lit(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        if s.reduced(mid) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo > T::zero()).then_some(lo)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeSlack<T> {
    pub index: usize,
    pub t: T,
    pub u: T,
    pub bound: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport<T> {
    pub holds: bool,
    /// `min over nodes of 1/μ(tₙ) - |uₙ|`.
    pub min_slack: T,
    pub worst_node: Option<NodeSlack<T>>,
}

/// Checks `|uₙ| < 1/μ(tₙ)` (`≤` for a non-strict certificate) at every node.
pub fn verify_solution_bound<T: Scalar>(traj: &Trajectory<T>, cert: &Certificate<T>) -> BoundReport<T> {
    let strict = cert.is_strict();
    let mut min_slack = T::infinity();
    let mut worst_node = None;
    let mut holds = true;
    for (index, (t, u)) in traj.times().zip(&traj.values).enumerate() {
        let bound = cert.mu.inverse(t).unwrap_or_else(|_| T::nan());
        let slack = bound - u.abs();
        let ok = if strict { slack > T::zero() } else { slack >= T::zero() };
        holds &= ok;
        if !(slack >= min_slack) {
            min_slack = slack;
            worst_node = Some(NodeSlack { index, t, u: *u, bound });
        }
    }
    BoundReport {
        holds,
        min_slack,
        worst_node,
    }
}

/// The kernel time-derivative envelope re-checked along a computed trajectory:
/// `c2·w(b, tₙ)(1 + |uₙ|^2p) - trapezoid ∫₀^tₙ |a_t(tₙ, s, u(s))| ds`.
pub fn verify_kernel_envelope<T: Scalar>(
    spec: &ProblemSpec<T>,
    traj: &Trajectory<T>,
) -> HypothesisCheck<T> {
    let mut margin = T::infinity();
    let mut worst = SamplePoint { t: T::zero(), s: None, u: None };
    let mut error = None;
    let two_p = T::lit(2.0) * spec.kernel.p;
    let nodes: Vec<T> = traj.times().collect();
    'outer: for (n, (&tn, &un)) in nodes.iter().zip(&traj.values).enumerate() {
        let mut integral = T::zero();
        for (j, (&sj, &uj)) in nodes.iter().zip(&traj.values).take(n + 1).enumerate() {
            let v = match spec.a_t.eval(&Bindings::tsu(tn, sj, uj)) {
                Ok(v) => v.abs(),
                Err(e) => {
                    error = Some(e.to_string());
                    margin = T::neg_infinity();
                    worst = SamplePoint { t: tn, s: Some(sj), u: Some(uj) };
                    break 'outer;
                }
            };
            let w = if j == 0 || j == n { T::lit(0.5) } else { T::one() };
            integral = integral + w * v;
        }
        if n == 0 {
            integral = T::zero();
        }
        let envelope = spec.kernel.c2 * spec.decay.weight(spec.kernel.b, tn) * (T::one() + un.abs().powf(two_p));
        let slack = envelope - traj.grid.h * integral;
        if slack < margin {
            margin = slack;
            worst = SamplePoint { t: tn, s: None, u: Some(un) };
        }
    }
    let verdict = if error.is_none() && margin >= T::zero() {
        CheckVerdict::Pass
    } else {
        CheckVerdict::Fail
    };
    HypothesisCheck {
        hypothesis: Hypothesis::KernelTimeDerivative,
        margin,
        worst,
        verdict,
        error,
    }
}

impl<T: Scalar> std::fmt::Display for Certificate<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.verdict {
            Verdict::Certified { strict } => write!(
                f,
                "certified ({} μ): |u(t)| {} {}",
                self.mu.family_name(),
                if *strict { "<" } else { "≤" },
                self.bound
            ),
            Verdict::Refused { reason } => write!(f, "refused ({} μ): {reason}", self.mu.family_name()),
        }
    }
}
