//! Adaptive Simpson quadrature for the order-statistic integrals.

use crate::{Error, Result};

/// Maximum recursion depth before giving up on the tolerance.
const MAX_DEPTH: u32 = 48;

/// Integrate `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if !(b > a) {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    let mut worst: f64 = 0.0;
    let v = adaptive(f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH, &mut worst);
    if worst > tol {
        return Err(Error::Numerical {
            what: "adaptive quadrature did not converge".into(),
            achieved: worst,
        });
    }
    Ok(v)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    worst: &mut f64,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let err = (left + right - whole) / 15.0;
    if err.abs() <= tol || depth == 0 {
        if depth == 0 {
            *worst = worst.max(err.abs());
        }
        return left + right + err;
    }
    adaptive(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, worst)
        + adaptive(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn integrates_smooth_functions() {
        let v = integrate(&|x: f64| x * x, 0.0, 3.0, 1e-10).unwrap();
        assert_relative_eq!(v, 9.0, max_relative = 1e-9);
        let v = integrate(&|x: f64| (-x).exp(), 0.0, 60.0, 1e-10).unwrap();
        assert_relative_eq!(v, 1.0, max_relative = 1e-8);
    }

    #[test]
    fn handles_degenerate_interval() {
        assert_eq!(integrate(&|x: f64| x, 1.0, 1.0, 1e-8).unwrap(), 0.0);
    }
}
