//! Implicit product-trapezoid stepping for `u(t) = f(t) + ∫₀ᵗ a(t, s, u(s)) ds`.
//!
//! On the uniform grid `tₙ = n·h` each node solves
//!
//! ```text
//! uₙ = f(tₙ) + h·[½a(tₙ,t₀,u₀) + Σ_{j=1}^{n-1} a(tₙ,tⱼ,uⱼ) + ½a(tₙ,tₙ,uₙ)]
//! ```
//!
//! for `uₙ` with damped Newton (slope `1 - (h/2)·a_u`) and a bisection
//! fallback. When a node cannot be reached, either because the step equation
//! has no root or because `|uₙ|` exceeds the blow-up cap, the interval
//! `[tₙ₋₁, tₙ]` is bisected with shortened final sub-steps to bracket the
//! escape time.
//!
//! The solver assumes the root of the step equation nearest the previous value
//! is the relevant one; it never enumerates roots globally.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Bindings, EvalError};
use crate::model::ProblemSpec;
use crate::Scalar;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("fixed-point iteration did not converge (last sup-norm update {last_update:e})")]
    NonConvergence { last_update: f64 },
}

/// Uniform grid starting at `t0 = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid<T> {
    pub t0: T,
    pub t_end: T,
    pub h: T,
    /// Node count, `round(t_end / h) + 1`.
    pub n: usize,
}

impl<T: Scalar> Grid<T> {
    pub fn new(t_end: T, h: T) -> Result<Self, SolveError> {
        if !(h > T::zero() && h.is_finite()) {
            return Err(SolveError::InvalidGrid(format!("step must be positive, got {h}")));
        }
        if !(t_end > T::zero() && t_end.is_finite()) {
            return Err(SolveError::InvalidGrid(format!("horizon must be positive, got {t_end}")));
        }
        let steps = (t_end / h).round().to_usize().filter(|&s| s >= 1).ok_or_else(|| {
            SolveError::InvalidGrid("horizon shorter than one step".into())
        })?;
        Ok(Self {
            t0: T::zero(),
            t_end,
            h,
            n: steps + 1,
        })
    }

    pub fn node(&self, k: usize) -> T {
        self.t0 + T::from_usize_lossy(k) * self.h
    }

    pub fn nodes(&self) -> impl Iterator<Item = T> + '_ {
        (0..self.n).map(|k| self.node(k))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Status<T> {
    Completed,
    BlowUp { t_star: T },
    StepFailure { t: T, reason: String },
}

impl<T: Scalar> Status<T> {
    pub fn is_completed(&self) -> bool {
        matches!(self, Status::Completed)
    }

    pub fn blow_up_time(&self) -> Option<T> {
        match self {
            Status::BlowUp { t_star } => Some(*t_star),
            _ => None,
        }
    }

    /// Text used in the trailing `# status=...` CSV comment.
    pub fn describe(&self) -> String {
        match self {
            Status::Completed => "completed".into(),
            Status::BlowUp { t_star } => format!("blowup t_star={t_star:.16e}"),
            Status::StepFailure { t, reason } => format!("step_failure t={t:.16e} reason={reason}"),
        }
    }
}

/// Discrete solution `uₖ ≈ u(tₖ)` for `k < values.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<T> {
    pub grid: Grid<T>,
    pub values: Vec<T>,
    pub status: Status<T>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn times(&self) -> impl Iterator<Item = T> + '_ {
        (0..self.values.len()).map(|k| self.grid.node(k))
    }

    pub fn last_time(&self) -> T {
        self.grid.node(self.values.len().saturating_sub(1))
    }

    /// Value at the node nearest `t`, if that node was reached.
    pub fn value_near(&self, t: T) -> Option<T> {
        let k = ((t - self.grid.t0) / self.grid.h).round().to_usize()?;
        self.values.get(k).copied()
    }

    /// CSV with header `t,u`, 17 significant digits and a trailing
    /// `# status=...` line.
    pub fn to_csv(&self) -> String {
        write_columns("t,u", self.times().zip(&self.values).map(|(t, u)| [t, *u]), &self.status.describe())
    }
}

pub(crate) fn write_columns<T: Scalar, const N: usize>(
    header: &str,
    rows: impl Iterator<Item = [T; N]>,
    status: &str,
) -> String {
    let mut out = String::new();
    out.push_str(header);
    out.push('\n');
    for row in rows {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v:.16e}");
        }
        out.push('\n');
    }
    let _ = writeln!(out, "# status={status}");
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions<T> {
    /// Step residual tolerance, relative to `1 + |uₙ|`.
    pub newton_tol: T,
    pub blowup_cap: T,
    /// Bisection depth used to bracket an escape time inside one step.
    pub max_halvings: usize,
}

impl<T: Scalar> Default for SolveOptions<T> {
    fn default() -> Self {
        Self {
            newton_tol: T::NEWTON_TOL,
            blowup_cap: T::lit(1e8),
            max_halvings: 40,
        }
    }
}

const NEWTON_MAX_ITER: usize = 100;
const LINE_SEARCH_MAX: usize = 30;
const BISECTION_MAX: usize = 300;

enum StepFail {
    NoRoot,
    Eval(EvalError),
}

impl From<EvalError> for StepFail {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::NonFinite { .. } => StepFail::NoRoot,
            e => StepFail::Eval(e),
        }
    }
}

struct Stepper<'a, T> {
    spec: &'a ProblemSpec<T>,
    opts: SolveOptions<T>,
}

impl<T: Scalar> Stepper<'_, T> {
    /// Residual `F(u) = u - known - half_w·a(τ, τ, u)`.
    fn residual(&self, tau: T, known: T, half_w: T, u: T) -> Result<T, EvalError> {
        let r = u - known - half_w * self.spec.kernel_at(tau, tau, u)?;
        if r.is_finite() {
            Ok(r)
        } else {
            Err(EvalError::NonFinite {
                node: "step residual".into(),
            })
        }
    }

    fn converged(&self, r: T, u: T) -> bool {
        r.abs() <= self.opts.newton_tol * (T::one() + u.abs())
    }

    fn solve_step(&self, tau: T, known: T, half_w: T, anchor: T) -> Result<T, StepFail> {
        let predictor = self
            .spec
            .kernel_at(tau, tau, anchor)
            .map(|a| known + half_w * a)
            .ok()
            .filter(|p| p.is_finite());
        let mut u = predictor.unwrap_or(anchor);
        let mut r = match self.residual(tau, known, half_w, u) {
            Ok(r) => r,
            Err(EvalError::Domain { .. }) if predictor.is_some() => {
                u = anchor;
                self.residual(tau, known, half_w, u)?
            }
            Err(e) => return Err(e.into()),
        };
        for _ in 0..NEWTON_MAX_ITER {
            if self.converged(r, u) {
                return Ok(u);
            }
            let slope = match self.spec.kernel_du(tau, tau, u) {
                Ok(a_u) => T::one() - half_w * a_u,
                Err(_) => break,
            };
            if !(slope.abs() >= T::lit(1e-12)) {
                break;
            }
            let step = r / slope;
            let mut lambda = T::one();
            let mut accepted = None;
            for _ in 0..LINE_SEARCH_MAX {
                let cand = u - lambda * step;
                if let Ok(rc) = self.residual(tau, known, half_w, cand) {
                    if rc.abs() < r.abs() {
                        accepted = Some((cand, rc));
                        break;
                    }
                }
                lambda = lambda / T::lit(2.0);
            }
            match accepted {
                Some((cand, rc)) => {
                    u = cand;
                    r = rc;
                }
                None => break,
            }
        }
        if self.converged(r, u) {
            return Ok(u);
        }
        self.bisect(tau, known, half_w, anchor)
    }

    /// Bisection on a bracket grown geometrically from `anchor`, one side at a time.
    fn bisect(&self, tau: T, known: T, half_w: T, anchor: T) -> Result<T, StepFail> {
        let f = |u: T| self.residual(tau, known, half_w, u).ok();
        let two = T::lit(2.0);
        let limit = self.opts.blowup_cap * T::lit(4.0) + anchor.abs();
        let f_anchor = f(anchor).ok_or(StepFail::NoRoot)?;
        if f_anchor == T::zero() {
            return Ok(anchor);
        }
        let mut sides = [(anchor, f_anchor), (anchor, f_anchor)];
        let mut width = T::lit(1e-3) * (T::one() + anchor.abs());
        let (mut lo, mut hi, mut f_lo) = 'grow: loop {
            if width > limit {
                return Err(StepFail::NoRoot);
            }
            for (side, dir) in sides.iter_mut().zip([-T::one(), T::one()]) {
                let x = anchor + dir * width;
                let Some(fx) = f(x) else { continue };
                if fx == T::zero() {
                    return Ok(x);
                }
                if fx.signum() != side.1.signum() {
                    break 'grow (side.0, x, side.1);
                }
                *side = (x, fx);
            }
            width = width * two;
        };
        for _ in 0..BISECTION_MAX {
            let mid = (lo + hi) / two;
            let fm = f(mid).ok_or(StepFail::NoRoot)?;
            if self.converged(fm, mid)
                || (hi - lo).abs() <= T::lit(4.0) * T::epsilon() * (T::one() + mid.abs())
            {
                return Ok(mid);
            }
            if fm.signum() == f_lo.signum() {
                lo = mid;
                f_lo = fm;
            } else {
                hi = mid;
            }
        }
        Err(StepFail::NoRoot)
    }
}

/// Solves the integral equation on `grid`.
pub fn solve<T: Scalar>(
    spec: &ProblemSpec<T>,
    grid: &Grid<T>,
    opts: &SolveOptions<T>,
) -> Result<Trajectory<T>, SolveError> {
    if !(opts.newton_tol > T::zero()) || !(opts.blowup_cap > T::zero()) {
        return Err(SolveError::InvalidOptions(
            "newton_tol and blowup_cap must be positive".into(),
        ));
    }
    let stepper = Stepper { spec, opts: *opts };
    let h = grid.h;
    let half = T::lit(0.5);
    let mut values = Vec::with_capacity(grid.n);
    values.push(spec.forcing_at(grid.t0)?);

    for n in 1..grid.n {
        let tn = grid.node(n);
        // f(tₙ) + h[½a(tₙ,t₀,u₀) + Σ_{j=1}^{n-1} a(tₙ,tⱼ,uⱼ)]
        let mut sum = half * spec.kernel_at(tn, grid.t0, values[0])?;
        for (j, &uj) in values.iter().enumerate().skip(1) {
            sum = sum + spec.kernel_at(tn, grid.node(j), uj)?;
        }
        let known = spec.forcing_at(tn)? + h * sum;
        let prev = values[n - 1];
        let outcome = stepper.solve_step(tn, known, half * h, prev);
        let overflow = match outcome {
            Ok(u) if u.abs() <= opts.blowup_cap => {
                values.push(u);
                continue;
            }
            Ok(_) => true,
            Err(StepFail::NoRoot) => false,
            Err(StepFail::Eval(e)) => return Err(e.into()),
        };
        let status = bracket_escape(&stepper, grid, &values, overflow)?;
        return Ok(Trajectory {
            grid: *grid,
            values,
            status,
        });
    }

    Ok(Trajectory {
        grid: *grid,
        values,
        status: Status::Completed,
    })
}

/// Locates where the solution leaves the reachable set inside
/// `[t_{m-1}, t_{m-1} + h]` by bisecting the length of a final sub-step.
fn bracket_escape<T: Scalar>(
    stepper: &Stepper<'_, T>,
    grid: &Grid<T>,
    history: &[T],
    overflow: bool,
) -> Result<Status<T>, SolveError> {
    let spec = stepper.spec;
    let half = T::lit(0.5);
    let h = grid.h;
    let m = history.len();
    let t_last = grid.node(m - 1);
    let u_last = history[m - 1];

    // ∫₀^τ ≈ trapezoid on the accepted uniform nodes plus a final panel of width δ
    let sub_step = |delta: T| -> Result<Option<T>, SolveError> {
        let tau = t_last + delta;
        let mut uniform = T::zero();
        if m > 1 {
            uniform = half * spec.kernel_at(tau, grid.t0, history[0])?;
            for (j, &uj) in history.iter().enumerate().take(m - 1).skip(1) {
                uniform = uniform + spec.kernel_at(tau, grid.node(j), uj)?;
            }
            uniform = uniform + half * spec.kernel_at(tau, t_last, u_last)?;
        }
        let known = spec.forcing_at(tau)?
            + h * uniform
            + half * delta * spec.kernel_at(tau, t_last, u_last)?;
        match stepper.solve_step(tau, known, half * delta, u_last) {
            Ok(u) if u.abs() <= stepper.opts.blowup_cap => Ok(Some(u)),
            Ok(_) | Err(StepFail::NoRoot) => Ok(None),
            Err(StepFail::Eval(e)) => Err(e.into()),
        }
    };

    let (mut lo, mut hi) = (T::zero(), h);
    let mut u_lo = u_last;
    for _ in 0..stepper.opts.max_halvings {
        let mid = (lo + hi) * half;
        match sub_step(mid)? {
            Some(u) => {
                lo = mid;
                u_lo = u;
            }
            None => hi = mid,
        }
    }
    let t_star = t_last + (lo + hi) * half;
    let growing = overflow || (lo > T::zero() && u_lo.abs() >= u_last.abs());
    if growing {
        log::debug!("blow-up bracketed in [{}, {}]", t_last + lo, t_last + hi);
        Ok(Status::BlowUp { t_star })
    } else {
        Ok(Status::StepFailure {
            t: grid.node(m),
            reason: "step equation has no root near the previous value and |u| is not growing"
                .into(),
        })
    }
}

/// Result of [`picard_reference`].
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint<T> {
    pub trajectory: Trajectory<T>,
    pub iterations: usize,
    /// Sup-norm difference of the last two iterates.
    pub last_update: T,
}

/// Successive substitution `uₖ₊₁(tₙ) = f(tₙ) + trapezoid ∫₀^tₙ a(tₙ, s, uₖ(s)) ds`,
/// starting from `u₀ = f`. An independent reference for [`solve`] on horizons
/// short enough for the iteration to contract.
pub fn picard_reference<T: Scalar>(
    spec: &ProblemSpec<T>,
    grid: &Grid<T>,
    iterations: usize,
) -> Result<FixedPoint<T>, SolveError> {
    let nodes: Vec<T> = grid.nodes().collect();
    let forcing = nodes
        .iter()
        .map(|&t| spec.forcing_at(t))
        .collect::<Result<Vec<_>, _>>()?;
    let non_convergence = |last_update: T| SolveError::NonConvergence {
        last_update: last_update.to_f64_lossy(),
    };
    let half = T::lit(0.5);
    let mut current = forcing.clone();
    let mut last_update = T::infinity();
    for it in 1..=iterations {
        let mut next = Vec::with_capacity(nodes.len());
        next.push(forcing[0]);
        for n in 1..nodes.len() {
            let tn = nodes[n];
            let kernel = |j: usize| match spec.a.eval(&Bindings::tsu(tn, nodes[j], current[j])) {
                Err(EvalError::NonFinite { .. }) => Err(non_convergence(T::infinity())),
                other => other.map_err(SolveError::from),
            };
            let mut sum = half * (kernel(0)? + kernel(n)?);
            for j in 1..n {
                sum = sum + kernel(j)?;
            }
            let v = forcing[n] + grid.h * sum;
            if !v.is_finite() {
                return Err(non_convergence(T::infinity()));
            }
            next.push(v);
        }
        last_update = next
            .iter()
            .zip(&current)
            .map(|(a, b)| (*a - *b).abs())
            .fold(T::zero(), T::max);
        let scale = next.iter().fold(T::one(), |m, v| m.max(v.abs()));
        current = next;
        if last_update <= T::lit(64.0) * T::epsilon() * scale {
            return Ok(FixedPoint {
                trajectory: Trajectory {
                    grid: *grid,
                    values: current,
                    status: Status::Completed,
                },
                iterations: it,
                last_update,
            });
        }
    }
    if !(last_update <= T::lit(1e-8)) {
        return Err(non_convergence(last_update));
    }
    Ok(FixedPoint {
        trajectory: Trajectory {
            grid: *grid,
            values: current,
            status: Status::Completed,
        },
        iterations,
        last_update,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_problem, ForcingEnvelope, KernelEnvelope};

    fn spec(f: &str, a: &str) -> ProblemSpec<f64> {
        build_problem(
            f,
            a,
            ForcingEnvelope::new(1.0, 0.0),
            KernelEnvelope::new(1.0, 0.0, 0.0, 0.0, 1.0),
        )
        .unwrap()
    }

    #[test]
    fn grid_construction() {
        let g = Grid::new(1.0, 0.1).unwrap();
        assert_eq!(g.n, 11);
        assert_eq!(g.node(0), 0.0);
        assert!(Grid::new(1.0, 0.0).is_err());
        assert!(Grid::new(-1.0, 0.1).is_err());
        assert!(Grid::new(0.01, 0.1).is_err());
    }

    #[test]
    fn zero_kernel_reproduces_forcing() {
        let s = spec("cos(t)", "0");
        let g = Grid::new(3.0, 0.01).unwrap();
        let traj = solve(&s, &g, &SolveOptions::default()).unwrap();
        assert!(traj.status.is_completed());
        for (t, u) in traj.times().zip(&traj.values) {
            assert_eq!(*u, t.cos());
        }
    }

    #[test]
    fn first_value_is_forcing_at_zero() {
        let s = spec("2 + sin(t)", "u/(1+t)");
        let traj = solve(&s, &Grid::new(1.0, 0.1).unwrap(), &SolveOptions::default()).unwrap();
        assert_eq!(traj.values[0], 2.0);
    }

    #[test]
    fn linear_kernel_matches_exponential() {
        let s = spec("1", "2*u");
        let traj = solve(&s, &Grid::new(1.0, 1e-3).unwrap(), &SolveOptions::default()).unwrap();
        let u1 = *traj.values.last().unwrap();
        assert!(((u1 - 2f64.exp()) / 2f64.exp()).abs() < 1e-4);
    }

    #[test]
    fn square_kernel_blows_up_near_one() {
        let s = spec("1", "u^2");
        let traj = solve(&s, &Grid::new(2.0, 1e-3).unwrap(), &SolveOptions::default()).unwrap();
        let t_star = traj.status.blow_up_time().expect("blow-up");
        assert!(t_star > 0.95 && t_star < 1.05, "{t_star}");
        assert!(traj.last_time() < t_star);
    }

    #[test]
    fn blowup_cap_triggers() {
        let s = spec("1", "u");
        let opts = SolveOptions {
            blowup_cap: 100.0,
            ..SolveOptions::default()
        };
        let traj = solve(&s, &Grid::new(10.0, 1e-2).unwrap(), &opts).unwrap();
        // u = e^t crosses 100 at ln 100
        let t_star = traj.status.blow_up_time().unwrap();
        assert!((t_star - 100f64.ln()).abs() < 1e-2, "{t_star}");
    }

    #[test]
    fn domain_errors_propagate() {
        let s = spec("-1", "log(u)");
        let err = solve(&s, &Grid::new(1.0, 0.1).unwrap(), &SolveOptions::default()).unwrap_err();
        assert!(matches!(err, SolveError::Eval(EvalError::Domain { .. })));
    }

    #[test]
    fn options_are_validated() {
        let s = spec("1", "u");
        let opts = SolveOptions {
            newton_tol: 0.0,
            ..SolveOptions::default()
        };
        assert!(solve(&s, &Grid::new(1.0, 0.1).unwrap(), &opts).is_err());
    }

    #[test]
    fn bisection_fallback_finds_nearest_root() {
        // F(u) = u - 0.4 - 0.5u² has slope 1 - u, which vanishes at the anchor
        let s = spec("1", "u^2");
        let stepper = Stepper {
            spec: &s,
            opts: SolveOptions::default(),
        };
        let root = match stepper.bisect(0.0, 0.4, 0.5, 1.0) {
            Ok(r) => r,
            Err(_) => panic!("no root"),
        };
        let exact = 0.2f64.sqrt();
        assert!(((root - 1.0).abs() - exact).abs() < 1e-10, "{root}");
        let solved = match stepper.solve_step(0.0, 0.4, 0.5, 1.0) {
            Ok(r) => r,
            Err(_) => panic!("no root"),
        };
        assert!(((solved - 1.0).abs() - exact).abs() < 1e-10, "{solved}");
        // no real root at all
        assert!(matches!(stepper.bisect(0.0, 0.6, 0.5, 1.0), Err(StepFail::NoRoot)));
    }

    #[test]
    fn csv_format() {
        let s = spec("1", "0");
        let traj = solve(&s, &Grid::new(0.2, 0.1).unwrap(), &SolveOptions::default()).unwrap();
        let csv = traj.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,u");
        assert_eq!(lines[1], "0.0000000000000000e0,1.0000000000000000e0");
        assert_eq!(lines.last().unwrap(), &"# status=completed");
        let t2: f64 = lines[3].split(',').next().unwrap().parse().unwrap();
        assert_eq!(t2, 0.2);
    }

    #[test]
    fn picard_zero_kernel_one_iteration() {
        let s = spec("exp(-t)", "0");
        let fp = picard_reference(&s, &Grid::new(1.0, 0.01).unwrap(), 50).unwrap();
        assert_eq!(fp.iterations, 1);
        assert_eq!(fp.last_update, 0.0);
    }

    #[test]
    fn picard_diverges_past_blow_up() {
        let s = spec("1", "u^2");
        let err = picard_reference(&s, &Grid::new(1.5, 1e-2).unwrap(), 50).unwrap_err();
        assert!(matches!(err, SolveError::NonConvergence { .. }));
    }

    #[test]
    fn solver_is_generic_over_f32() {
        let s: ProblemSpec<f32> = build_problem(
            "1",
            "2*u",
            ForcingEnvelope::new(1.0, 0.0),
            KernelEnvelope::new(2.0, 0.0, 0.0, 0.0, 0.5),
        )
        .unwrap();
        let traj = solve(&s, &Grid::new(1.0f32, 1e-2).unwrap(), &SolveOptions::default()).unwrap();
        let u1 = *traj.values.last().unwrap();
        assert!((u1 - 2f32.exp()).abs() / 2f32.exp() < 1e-3);
    }
}
