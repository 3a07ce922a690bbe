//! Small numerical building blocks: sample grids, composite Simpson, golden-section.

use crate::Scalar;

/// `n` uniformly spaced points on `[a, b]`, endpoints included.
pub fn uniform<T: Scalar>(a: T, b: T, n: usize) -> Vec<T> {
    assert!(n >= 2, "uniform grid needs at least two points");
    let last = T::from_usize_lossy(n - 1);
    (0..n)
        .map(|k| {
            if k == n - 1 {
                b
            } else {
                a + (b - a) * T::from_usize_lossy(k) / last
            }
        })
        .collect()
}

/// `n` points on `[0, t_max]` spaced geometrically in `1 + t`.
pub fn log_spaced<T: Scalar>(t_max: T, n: usize) -> Vec<T> {
    assert!(n >= 2, "log grid needs at least two points");
    let top = (T::one() + t_max).ln();
    let last = T::from_usize_lossy(n - 1);
    (0..n)
        .map(|k| match k {
            0 => T::zero(),
            k if k == n - 1 => t_max,
            k => (top * T::from_usize_lossy(k) / last).exp() - T::one(),
        })
        .collect()
}

/// Composite Simpson rule on `panels` (even) subintervals.
pub fn simpson<T, E, F>(a: T, b: T, panels: usize, mut f: F) -> Result<T, E>
where
    T: Scalar,
    F: FnMut(T) -> Result<T, E>,
{
    assert!(panels >= 2 && panels.is_multiple_of(2), "Simpson needs an even panel count");
    let h = (b - a) / T::from_usize_lossy(panels);
    let mut sum = f(a)? + f(b)?;
    for k in 1..panels {
        let x = a + h * T::from_usize_lossy(k);
        let w = if k % 2 == 1 { T::lit(4.0) } else { T::lit(2.0) };
        sum = sum + w * f(x)?;
    }
    Ok(sum * h / T::lit(3.0))
}

/// Minimizes a unimodal function on `[lo, hi]`; returns the abscissa.
pub fn golden_section<T: Scalar, F: FnMut(T) -> T>(mut lo: T, mut hi: T, tol: T, mut f: F) -> T {
    let inv_phi = (T::lit(5.0).sqrt() - T::one()) / T::lit(2.0);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    // the iteration cap guards against tolerances below the scalar's resolution
    for _ in 0..400 {
        if hi - lo <= tol {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    (lo + hi) / T::lit(2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_is_exact_on_cubics() {
        let v: Result<f64, ()> = simpson(0.0, 2.0, 2, |x| Ok(x * x * x - x + 1.0));
        assert!((v.unwrap() - 4.0).abs() < 1e-14);
    }

    #[test]
    fn simpson_exponential() {
        let v: Result<f64, ()> = simpson(0.0, 3.0, 200, |s| Ok((-s).exp()));
        assert!((v.unwrap() - (1.0 - (-3.0f64).exp())).abs() < 1e-9);
    }

    #[test]
    fn golden_section_finds_minimum() {
        let x = golden_section(1e-9, 10.0, 1e-10, |c: f64| 0.3 * c + 0.2 / c);
        assert!((x - (2.0f64 / 3.0).sqrt()).abs() < 1e-6);
    }

    #[test]
    fn grids_include_endpoints() {
        let g = uniform(0.0, 1.0, 11);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[10], 1.0);
        let g = log_spaced(50.0, 40);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[39], 50.0);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }
}
