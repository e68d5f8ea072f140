//! Bracketed scalar root finding.

use crate::error::{Error, Result};

/// Finds x in [lo, hi] with f(x) = 0 for a continuous f that changes sign over
/// the bracket. Brent's method; stops when |f| <= tol or the bracket width
/// shrinks below tol. Errors if the bracket has no sign change.
pub fn find_root<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    if !(lo < hi) || !tol.is_finite() || tol <= 0.0 {
        return Err(Error::Parameter(format!(
            "find_root needs lo < hi and tol > 0, got [{lo}, {hi}], tol {tol}"
        )));
    }
    let mut a = lo;
    let mut b = hi;
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Bracket { lo, hi });
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb.abs() <= tol {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let q0 = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * q0 * (q0 - r) - (b - a) * (r - 1.0));
                q = (q0 - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            if 2.0 * p < (3.0 * xm * q - (tol1 * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        if d.abs() > tol1 {
            b += d;
        } else {
            b += tol1.copysign(xm);
        }
        fb = f(b);
        if fb == 0.0 {
            return Ok(b);
        }
    }
    Err(Error::Convergence(format!(
        "find_root exhausted iterations on [{lo}, {hi}]"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear() {
        let x = find_root(|x| x - 2.0, 0.0, 5.0, 1e-12).unwrap();
        assert!((x - 2.0).abs() <= 1e-12);
    }

    #[test]
    fn homogeneous_twist_equation() {
        // d identical obligors: mean matching at gamma has the closed form
        // e^theta = gamma (1-p) / (p (d-gamma)).
        let (p, d, gamma) = (0.01, 100.0, 10.0);
        let f = |theta: f64| {
            let e = theta.exp();
            d * p * e / (1.0 + p * (e - 1.0)) - gamma
        };
        let x = find_root(f, 0.0, 20.0, 1e-12).unwrap();
        assert!((x - 2.39789527279837067e0).abs() < 1e-10);
    }

    #[test]
    fn no_sign_change_errors() {
        assert!(matches!(
            find_root(|x| x * x + 1.0, -1.0, 1.0, 1e-9),
            Err(Error::Bracket { .. })
        ));
    }

    #[test]
    fn endpoint_root() {
        assert_eq!(find_root(|x| x, 0.0, 1.0, 1e-12).unwrap(), 0.0);
    }

    #[test]
    fn steep_and_flat_mix() {
        let x = find_root(|x: f64| x.tanh() - 0.999, -10.0, 10.0, 1e-13).unwrap();
        assert!(((x.tanh() - 0.999) as f64).abs() <= 1e-13);
    }
}
