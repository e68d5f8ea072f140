//! Clayton-family Archimedean copula primitives.
//!
//! Generator normalization used throughout: psi(u) = (u^-eta - 1)/eta with
//! inverse psi_inv(s) = (1 + eta s)^(-1/eta). The frailty whose Laplace
//! transform equals psi_inv is Gamma(shape 1/eta, scale eta); the shared-shock
//! sampler, the conditional default probability and the subordinator
//! embedding all use that same pairing so the copula identity
//! P(U <= u) = psi_inv(sum psi(u_i)) holds exactly.

use crate::dist::Dist;
use crate::error::{Error, Result};

pub fn clayton_generator(u: f64, eta: f64) -> f64 {
    (u.powf(-eta) - 1.0) / eta
}

pub fn clayton_generator_inv(s: f64, eta: f64) -> f64 {
    (1.0 + eta * s).powf(-1.0 / eta)
}

/// Frailty distribution paired with the generator above.
pub fn clayton_frailty(eta: f64) -> Dist {
    Dist::Gamma {
        shape: 1.0 / eta,
        scale: eta,
    }
}

/// Copula CDF: psi_inv(sum_i psi(u_i)). Requires eta > 0 and u_i in (0, 1].
pub fn copula_cdf(us: &[f64], eta: f64) -> Result<f64> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::Parameter(format!("eta must be positive, got {eta}")));
    }
    if us.is_empty() {
        return Err(Error::Parameter("copula_cdf needs at least one margin".into()));
    }
    let mut s = 0.0;
    for &u in us {
        if !(u > 0.0 && u <= 1.0) {
            return Err(Error::Domain(format!("margin {u} outside (0, 1]")));
        }
        s += clayton_generator(u, eta);
    }
    Ok(clayton_generator_inv(s, eta))
}

/// Conditional default probability given the frailty: 1 - exp(-lambda *
/// psi(F(x))). `threshold_cdf` is F(x) and must be strictly inside (0, 1).
pub fn clayton_conditional_pd(threshold_cdf: f64, lambda: f64, eta: f64) -> Result<f64> {
    if !(threshold_cdf > 0.0 && threshold_cdf < 1.0) {
        return Err(Error::Domain(format!(
            "degenerate threshold: F(x) = {threshold_cdf} must lie in (0, 1)"
        )));
    }
    if !(lambda >= 0.0) || !(eta > 0.0) {
        return Err(Error::Parameter(format!(
            "need lambda >= 0 and eta > 0, got lambda {lambda}, eta {eta}"
        )));
    }
    Ok(-(-lambda * clayton_generator(threshold_cdf, eta)).exp_m1())
}

pub fn kendall_tau(eta: f64) -> f64 {
    eta / (eta + 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_round_trip() {
        for eta in [0.5, 1.0, 5.5] {
            for u in [0.05, 0.3, 0.7, 0.99] {
                let s = clayton_generator(u, eta);
                assert!((clayton_generator_inv(s, eta) - u).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn cdf_closed_form_point() {
        // eta = 1, u = (1/2, 1/2): psi = 1 each, psi_inv(2) = 1/3.
        let c = copula_cdf(&[0.5, 0.5], 1.0).unwrap();
        assert!((c - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn cdf_against_numerical_density_integral() {
        // Independent check: integrate the bivariate Clayton density
        // c(u, v) = (1+eta) (uv)^(-eta-1) (u^-eta + v^-eta - 1)^(-1/eta - 2)
        // over the box [a, b]^2 (away from the singular corner) by Simpson's
        // rule, and compare with the inclusion-exclusion of CDF corners.
        let eta = 1.0;
        let f = |u: f64, v: f64| {
            (1.0 + eta)
                * (u * v).powf(-eta - 1.0)
                * (u.powf(-eta) + v.powf(-eta) - 1.0).powf(-1.0 / eta - 2.0)
        };
        let (a, b) = (0.05, 0.5);
        let n = 400;
        let h = (b - a) / n as f64;
        let simpson_w = |i: usize| -> f64 {
            if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            }
        };
        let mut total = 0.0;
        for i in 0..=n {
            let u = a + i as f64 * h;
            let mut row = 0.0;
            for j in 0..=n {
                let v = a + j as f64 * h;
                row += simpson_w(j) * f(u, v);
            }
            total += simpson_w(i) * row * h / 3.0;
        }
        total *= h / 3.0;
        let cdf = |u: f64, v: f64| copula_cdf(&[u, v], eta).unwrap();
        let boxed = cdf(b, b) - cdf(a, b) - cdf(b, a) + cdf(a, a);
        assert!((total - boxed).abs() < 1e-8, "integral {total} cdf box {boxed}");
    }

    #[test]
    fn cdf_upper_margin_is_identity() {
        // C(u, 1) = u.
        for u in [0.1, 0.4, 0.9] {
            let c = copula_cdf(&[u, 1.0], 5.5).unwrap();
            assert!((c - u).abs() < 1e-12);
        }
    }

    #[test]
    fn conditional_pd_point() {
        // eta = 1, F(x) = 0.5 => psi = 1, lambda = 1 => 1 - e^-1.
        let p = clayton_conditional_pd(0.5, 1.0, 1.0).unwrap();
        assert!((p - 0.632120558828557666).abs() < 1e-15);
    }

    #[test]
    fn conditional_pd_monotone_in_lambda() {
        let mut prev = -1.0;
        for i in 0..50 {
            let p = clayton_conditional_pd(0.7, i as f64 * 0.2, 5.5).unwrap();
            assert!(p > prev);
            prev = p;
        }
        assert!((clayton_conditional_pd(0.7, 0.0, 5.5).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn conditional_pd_degenerate_threshold() {
        assert!(clayton_conditional_pd(0.0, 1.0, 1.0).is_err());
        assert!(clayton_conditional_pd(1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn frailty_laplace_transform_matches_generator_inverse() {
        // E exp(-s Lambda) for Gamma(1/eta, scale eta) is (1 + eta s)^(-1/eta),
        // checked here by quadrature over the density.
        let eta = 5.5;
        let d = clayton_frailty(eta);
        let (shape, scale) = match d {
            Dist::Gamma { shape, scale } => (shape, scale),
            _ => unreachable!(),
        };
        let norm = crate::special::ln_gamma(shape).exp() * scale.powf(shape);
        for s in [0.059, 0.5, 2.0] {
            // The density has an x^(shape-1) singularity at 0 (shape < 1);
            // substituting x = t^(1/shape) removes it: the integrand becomes
            // (1/shape) exp(-t^(1/shape) (1/scale + s)) dt, which is smooth.
            let p = 1.0 / shape;
            let n = 200_000;
            let hi = 80.0f64.powf(shape);
            let h = hi / n as f64;
            let mut lt = 0.0;
            for i in 0..n {
                let t = (i as f64 + 0.5) * h;
                let x = t.powf(p);
                lt += p * (-x / scale - s * x).exp() * h;
            }
            lt /= norm;
            assert!(
                (lt - clayton_generator_inv(s, eta)).abs() < 1e-6,
                "s={s}: lt {lt} vs {}",
                clayton_generator_inv(s, eta)
            );
        }
    }

    #[test]
    fn tau_formula() {
        assert!((kendall_tau(5.5) - 0.7333333333333333).abs() < 1e-15);
    }
}
