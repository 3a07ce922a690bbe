//! Numerical toolkit for nonlinear Volterra integral equations of the second kind,
//!
//! ```text
//! u(t) = f(t) + ∫₀ᵗ a(t, s, u(s)) ds,   t ≥ 0,
//! ```
//!
//! with certified global growth bounds. Problems are declared as plain-text
//! expressions ([`expr`]), packaged together with exponential or power-law decay
//! envelopes ([`model`]), solved by implicit product-trapezoid stepping with
//! blow-up detection ([`solver`]), and bounded a priori by a differential
//! inequality certificate `|u(t)| < 1/μ(t)` ([`certificate`]). The extremal
//! solution of that inequality is integrated by [`comparison`].
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below fix the common binary64 instantiation.
//!
//! ```
//! use volterra::{build_problem, derive_inequality, search_exponential, solve, verify_solution_bound};
//! use volterra::{ForcingEnvelope, Grid, KernelEnvelope, SolveOptions};
//! use std::f64::consts::FRAC_PI_2;
//!
//! # fn main() -> Result<(), Box<dyn std::error::Error>> {
//! let spec = build_problem::<f64>(
//!     "exp(-t)",
//!     "exp(-(t+s))*atan(u)",
//!     ForcingEnvelope::new(2.0, 1.0),
//!     KernelEnvelope::new(FRAC_PI_2, 2.0, FRAC_PI_2, 1.0, 0.5),
//! )?;
//! let traj = solve(&spec, &Grid::new(20.0, 0.01)?, &SolveOptions::default())?;
//! let search = search_exponential(&derive_inequality(&spec)?)?;
//! let cert = search.certificate().expect("atan kernels are certified");
//! assert!(verify_solution_bound(&traj, cert).holds);
//! # Ok(())
//! # }
//! ```

// `!(x > 0)` also rejects NaN, which `x <= 0` would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certificate;
pub mod cli;
pub mod comparison;
pub mod expr;
pub mod model;
pub mod quadrature;
mod scalar;
pub mod solver;

pub use certificate::{
    check_mu, derive_inequality, search_exponential, search_power, verify_solution_bound,
    BoundReport, Certificate, CertificateError, InequalityData, MuFamily, SearchResult, TailCheck,
    Verdict,
};
pub use comparison::{norm_derivative_check, propagate_majorant, MajorantCurve, MajorantStatus};
pub use expr::{Bindings, EvalError, Expr, ExprError, SyntaxError, Var};
pub use model::{
    build_problem, validate_decay, DecayProfile, ForcingEnvelope, KernelEnvelope, ModelError,
    ProblemSpec, ValidationReport,
};
pub use scalar::Scalar;
pub use solver::{picard_reference, solve, Grid, SolveError, SolveOptions, Status, Trajectory};

pub type ProblemSpec64 = ProblemSpec<f64>;
pub type Grid64 = Grid<f64>;
pub type Trajectory64 = Trajectory<f64>;
pub type InequalityData64 = InequalityData<f64>;
pub type MuFamily64 = MuFamily<f64>;
pub type Certificate64 = Certificate<f64>;
pub type MajorantCurve64 = MajorantCurve<f64>;

pub type ProblemSpec32 = ProblemSpec<f32>;
pub type Trajectory32 = Trajectory<f32>;
