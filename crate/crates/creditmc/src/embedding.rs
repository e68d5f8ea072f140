//! Monotone embedding of the static portfolio models into a time-indexed
//! process driven by a multivariate gamma subordinator.
//!
//! Each scalar latent source is represented as a transform of one gamma
//! subordinator component so that the portfolio loss S(X(t)) starts at the
//! all-default value at t = 0, decreases monotonically along every path, and
//! recovers the static model exactly at t = 1.

use rand::Rng;
use rand_distr::{Beta as BetaDistr, Gamma as GammaDistr};

use crate::copula::clayton_generator;
use crate::dist::Dist;
use crate::error::{Error, Result};
use crate::portfolio::{Model, Portfolio, PreparedModel};
use crate::rng::RngStream;
use crate::special::normal_quantile;

/// State of the component-wise gamma subordinator at one time point.
#[derive(Debug, Clone, PartialEq)]
pub struct SubordinatorState {
    pub t: f64,
    pub lambda: Vec<f64>,
}

impl SubordinatorState {
    /// The almost-sure origin: every component starts at 0 at time 0.
    pub fn origin(dims: usize) -> Self {
        Self { t: 0.0, lambda: vec![0.0; dims] }
    }
}

/// Advance every component by an independent Gamma(dt, 1) increment.
pub fn subordinator_step(state: &SubordinatorState, dt: f64, rng: &mut RngStream) -> SubordinatorState {
    assert!(dt > 0.0, "time step must be positive");
    let inc = GammaDistr::new(dt, 1.0).expect("positive shape");
    SubordinatorState {
        t: state.t + dt,
        lambda: state.lambda.iter().map(|&l| l + rng.sample::<f64, _>(inc)).collect(),
    }
}

/// Decreasing embedding X = F^{-1}(exp(-lambda)): nonincreasing in lambda,
/// with support endpoints as sentinels at the boundaries.
pub fn embed_decreasing(lambda: f64, f: &Dist) -> f64 {
    assert!(lambda >= 0.0, "subordinator values are nonnegative");
    if lambda == 0.0 {
        return f.support_upper();
    }
    let u = (-lambda).exp();
    if u >= 1.0 {
        f.support_upper()
    } else if u <= 0.0 {
        f.support_lower()
    } else {
        f.inv_cdf(u).expect("u strictly inside (0, 1)")
    }
}

/// Increasing embedding X = F^{-1}(1 - exp(-lambda)): nondecreasing in
/// lambda, lower support endpoint at lambda = 0.
pub fn embed_increasing(lambda: f64, f: &Dist) -> f64 {
    assert!(lambda >= 0.0, "subordinator values are nonnegative");
    let u = -(-lambda).exp_m1();
    if u <= 0.0 {
        f.support_lower()
    } else if u >= 1.0 {
        f.support_upper()
    } else {
        f.inv_cdf(u).expect("u strictly inside (0, 1)")
    }
}

/// Standard-normal source value Phi^{-1}(exp(-lambda)), evaluated through
/// whichever tail keeps full precision.
fn normal_source(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return f64::INFINITY;
    }
    if lambda <= std::f64::consts::LN_2 {
        // exp(-lambda) >= 1/2: use the complement 1 - exp(-lambda) and the
        // quantile symmetry to avoid rounding u into 1.
        let delta = -(-lambda).exp_m1();
        -normal_quantile(delta)
    } else {
        let u = (-lambda).exp();
        if u <= 0.0 {
            f64::NEG_INFINITY
        } else {
            normal_quantile(u)
        }
    }
}

/// Embedded time-indexed representation of one portfolio model. Evaluating
/// `loss` along any subordinator path gives a nonincreasing function of time
/// whose t = 1 value is distributed as the static portfolio loss.
#[derive(Debug, Clone)]
pub struct EmbeddingPlan<'a> {
    portfolio: &'a Portfolio,
    model: Model,
    dims: usize,
    /// Clayton only: generator values psi(F(x_k)) per obligor.
    psis: Vec<f64>,
    /// Clayton only: Gamma(1/eta, 1) frailty distribution whose quantile
    /// embeds the shared denominator source.
    frailty: Option<Dist>,
}

/// Compose the model-specific embedding over the portfolio's latent sources.
pub fn build_embedding<'a>(model: &Model, portfolio: &'a Portfolio) -> Result<EmbeddingPlan<'a>> {
    // Base model/portfolio compatibility checks.
    PreparedModel::new(model, portfolio)?;
    let (m, d) = (portfolio.m, portfolio.d());
    match model {
        Model::Gaussian | Model::StudentT { .. } => {
            for k in 0..d {
                for &a in portfolio.loading_row(k) {
                    if a < 0.0 {
                        return Err(Error::Domain(format!(
                            "loading {a} is negative; the monotone embedding needs nonnegative loadings"
                        )));
                    }
                }
            }
        }
        Model::Clayton { .. } => {}
    }
    let (dims, psis, frailty) = match model {
        Model::Gaussian => (m + d, Vec::new(), None),
        Model::StudentT { .. } => {
            for &x in &portfolio.thresholds {
                if !(x > 0.0) {
                    return Err(Error::Domain(format!(
                        "threshold {x} must be positive: the embedded score is monotone only on positive thresholds"
                    )));
                }
            }
            (m + d + 1, Vec::new(), None)
        }
        Model::Clayton { eta, marginal } => {
            let psis = portfolio
                .thresholds
                .iter()
                .map(|&x| clayton_generator(marginal.cdf(x), *eta))
                .collect();
            (d + 1, psis, Some(Dist::Gamma { shape: 1.0 / eta, scale: 1.0 }))
        }
    };
    Ok(EmbeddingPlan { portfolio, model: model.clone(), dims, psis, frailty })
}

impl<'a> EmbeddingPlan<'a> {
    /// Number of subordinator components the plan consumes.
    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn portfolio(&self) -> &'a Portfolio {
        self.portfolio
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    /// Survival threshold adjusted for tie handling: integer-cost losses sit
    /// on a lattice, so gamma is offset to gamma - 1/2, making the strict
    /// comparison {L > gamma - 1/2} identical to {L >= ceil(gamma)}.
    pub fn effective_gamma(&self, gamma: f64) -> f64 {
        if gamma.is_finite() && self.portfolio.integer_costs() {
            gamma - 0.5
        } else {
            gamma
        }
    }

    /// Portfolio loss S(X(t)) at the given subordinator state.
    pub fn loss(&self, state: &SubordinatorState) -> f64 {
        assert_eq!(state.lambda.len(), self.dims, "state dimension mismatch");
        let p = self.portfolio;
        let (m, d) = (p.m, p.d());
        match &self.model {
            Model::Gaussian => {
                let vals: Vec<f64> = state.lambda.iter().map(|&l| normal_source(l)).collect();
                let mut loss = 0.0;
                for k in 0..d {
                    let score = dot_skip_zero(p.loading_row(k), &vals[..m]) + p.b[k] * vals[m + k];
                    if score > p.thresholds[k] {
                        loss += p.costs[k];
                    }
                }
                loss
            }
            Model::StudentT { dof } => {
                let vals: Vec<f64> =
                    state.lambda[..m + d].iter().map(|&l| normal_source(l)).collect();
                // Mixing source embedded increasing so that the scale V/r
                // grows with t and the score shrinks.
                let delta = -(-state.lambda[m + d]).exp_m1();
                let mixing = Dist::Gamma { shape: dof / 2.0, scale: 2.0 / dof };
                let w = if delta <= 0.0 {
                    0.0
                } else if delta >= 1.0 {
                    f64::INFINITY
                } else {
                    mixing.inv_cdf(delta).expect("delta strictly inside (0, 1)")
                };
                let sqrt_w = w.sqrt();
                let mut loss = 0.0;
                for k in 0..d {
                    let num = dot_skip_zero(p.loading_row(k), &vals[..m]) + p.b[k] * vals[m + k];
                    // num / sqrt(w) > x  <=>  num > x * sqrt(w) for x > 0;
                    // stays valid at w = 0 where the score is +-infinity.
                    if num > p.thresholds[k] * sqrt_w {
                        loss += p.costs[k];
                    }
                }
                loss
            }
            Model::Clayton { .. } => {
                let frailty = self.frailty.as_ref().expect("clayton plan");
                let u = (-state.lambda[d]).exp();
                let lam = if u >= 1.0 {
                    f64::INFINITY
                } else if u <= 0.0 {
                    0.0
                } else {
                    frailty.inv_cdf(u).expect("u strictly inside (0, 1)")
                };
                // Default iff the copula coordinate exceeds F(x_k), which for
                // the embedded numerator Lambda_k reduces to
                // Lambda_k < frailty * psi(F(x_k)).
                let mut loss = 0.0;
                for k in 0..d {
                    if state.lambda[k] < lam * self.psis[k] {
                        loss += p.costs[k];
                    }
                }
                loss
            }
        }
    }
}

/// Dot product that skips zero coefficients so infinite source sentinels
/// never produce 0 * inf = NaN.
fn dot_skip_zero(coefs: &[f64], vals: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&a, &v) in coefs.iter().zip(vals) {
        if a != 0.0 {
            acc += a * v;
        }
    }
    acc
}

/// Conditional interpolation of the subordinator between two pinned states:
/// Lambda(t) = Lambda_l + (Lambda_u - Lambda_l) B with B ~ Beta(t - t_l,
/// t_u - t) independently per component.
pub fn gamma_bridge(
    lo: &SubordinatorState,
    hi: &SubordinatorState,
    t: f64,
    rng: &mut RngStream,
) -> Result<SubordinatorState> {
    if lo.lambda.len() != hi.lambda.len() {
        return Err(Error::Domain(format!(
            "state dimensions {} and {} differ",
            lo.lambda.len(),
            hi.lambda.len()
        )));
    }
    if !(lo.t < t && t < hi.t) {
        return Err(Error::Domain(format!(
            "bridge time {t} must lie strictly between {} and {}",
            lo.t, hi.t
        )));
    }
    for (&a, &b) in lo.lambda.iter().zip(&hi.lambda) {
        if a > b {
            return Err(Error::Domain(format!(
                "endpoint ordering violated: {a} > {b}"
            )));
        }
    }
    let beta = BetaDistr::new(t - lo.t, hi.t - t).expect("positive shape parameters");
    let lambda = lo
        .lambda
        .iter()
        .zip(&hi.lambda)
        .map(|(&a, &b)| {
            let frac: f64 = rng.sample(beta);
            a + (b - a) * frac
        })
        .collect();
    Ok(SubordinatorState { t, lambda })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::special::{gamma_p, normal_cdf};
    use crate::stats::{ks_p_value, ks_statistic, ks_two_sample, mean};

    fn gaussian_toy(d: usize, m: usize) -> Portfolio {
        let mut costs = Vec::new();
        let mut thresh = Vec::new();
        let mut loadings = Vec::new();
        for k in 0..d {
            costs.push(1.0 + (k % 2) as f64);
            thresh.push(1.4 + 0.07 * (k % 5) as f64);
            for j in 0..m {
                loadings.push(if (k + j) % 3 == 0 { 0.5 } else { 0.25 });
            }
        }
        Portfolio::new(costs, thresh, loadings, m).unwrap()
    }

    fn clayton_toy(d: usize) -> (Portfolio, Model) {
        let p = Portfolio::new(vec![1.0; d], vec![3.0; d], Vec::new(), 0).unwrap();
        let model = Model::Clayton { eta: 1.5, marginal: Dist::Exponential { rate: 1.0 } };
        (p, model)
    }

    #[test]
    fn step_mean_and_additivity() {
        let mut rng = RngStream::new(60, 0);
        let origin = SubordinatorState::origin(1);
        let dt = 0.37;
        let n = 100_000;
        let incs: Vec<f64> = (0..n).map(|_| subordinator_step(&origin, dt, &mut rng).lambda[0]).collect();
        let se = (dt / n as f64).sqrt();
        assert!((mean(&incs) - dt).abs() < 3.0 * se, "mean {}", mean(&incs));
        // Additivity: two half steps match one full step in distribution.
        let n = 10_000;
        let full: Vec<f64> = (0..n).map(|_| subordinator_step(&origin, 0.8, &mut rng).lambda[0]).collect();
        let halved: Vec<f64> = (0..n)
            .map(|_| {
                let mid = subordinator_step(&origin, 0.4, &mut rng);
                subordinator_step(&mid, 0.4, &mut rng).lambda[0]
            })
            .collect();
        let d = ks_two_sample(&full, &halved);
        let p = ks_p_value(d, (n * n) as f64 / (2 * n) as f64);
        assert!(p > 0.01, "KS p {p}");
        // Unit shape: the increment is Exp(1).
        let unit: Vec<f64> = (0..n).map(|_| subordinator_step(&origin, 1.0, &mut rng).lambda[0]).collect();
        let d = ks_statistic(&unit, |x| -(-x).exp_m1());
        assert!(ks_p_value(d, n as f64) > 0.01);
    }

    #[test]
    fn embed_examples() {
        let normal = Dist::Normal;
        assert!(embed_decreasing(std::f64::consts::LN_2, &normal).abs() < 1e-12);
        assert_eq!(embed_decreasing(0.0, &normal), f64::INFINITY);
        let beta = Dist::Beta { alpha: 2.0, beta: 3.0 };
        assert_eq!(embed_decreasing(0.0, &beta), 1.0);
        let exp = Dist::Exponential { rate: 1.0 };
        assert!((embed_increasing(1.3, &exp) - 1.3).abs() < 1e-12);
        assert_eq!(embed_increasing(0.0, &exp), 0.0);
        assert_eq!(embed_increasing(0.0, &normal), f64::NEG_INFINITY);
        // Monotone directions.
        assert!(embed_decreasing(0.5, &normal) > embed_decreasing(1.5, &normal));
        assert!(embed_increasing(0.5, &exp) < embed_increasing(1.5, &exp));
    }

    #[test]
    fn embedded_marginals_at_t1() {
        let mut rng = RngStream::new(61, 0);
        let origin = SubordinatorState::origin(1);
        let n = 10_000;
        let normal = Dist::Normal;
        let exp = Dist::Exponential { rate: 1.0 };
        let dec: Vec<f64> = (0..n)
            .map(|_| embed_decreasing(subordinator_step(&origin, 1.0, &mut rng).lambda[0], &normal))
            .collect();
        let d = ks_statistic(&dec, normal_cdf);
        assert!(ks_p_value(d, n as f64) > 0.01, "decreasing embed KS");
        let inc: Vec<f64> = (0..n)
            .map(|_| embed_increasing(subordinator_step(&origin, 1.0, &mut rng).lambda[0], &exp))
            .collect();
        let d = ks_statistic(&inc, |x| exp.cdf(x));
        assert!(ks_p_value(d, n as f64) > 0.01, "increasing embed KS");
    }

    #[test]
    fn normal_source_matches_embed_and_keeps_tail_precision() {
        let normal = Dist::Normal;
        for l in [1e-12, 1e-6, 0.3, 0.6931, 1.0, 5.0, 40.0] {
            let a = normal_source(l);
            let b = embed_decreasing(l, &normal);
            assert!(
                (a - b).abs() <= 1e-6 * (1.0 + a.abs()),
                "lambda {l}: {a} vs {b}"
            );
        }
        // Tiny lambda: the complement branch keeps the upper tail accurate
        // where exp(-lambda) would round to 1.
        let x = normal_source(1e-18);
        assert!(x.is_finite() && x > 8.0, "upper-tail value {x}");
        assert_eq!(normal_source(0.0), f64::INFINITY);
        assert_eq!(normal_source(1000.0), f64::NEG_INFINITY);
    }

    #[test]
    fn plans_reproduce_static_models_at_t1() {
        let gauss = gaussian_toy(20, 2);
        let mut tp = gaussian_toy(20, 2);
        for x in tp.thresholds.iter_mut() {
            *x += 0.4; // keep them positive and vary the case
        }
        let (cp, cmodel) = clayton_toy(20);
        let cases: Vec<(&Portfolio, Model)> = vec![
            (&gauss, Model::Gaussian),
            (&tp, Model::StudentT { dof: 3.0 }),
            (&cp, cmodel),
        ];
        for (i, (p, model)) in cases.iter().enumerate() {
            let plan = build_embedding(model, p).unwrap();
            let n = 10_000;
            let mut rng = RngStream::new(70 + i as u64, 0);
            let embedded: Vec<f64> = (0..n)
                .map(|_| {
                    let state = subordinator_step(&SubordinatorState::origin(plan.dims()), 1.0, &mut rng);
                    plan.loss(&state)
                })
                .collect();
            let prep = PreparedModel::new(model, p).unwrap();
            let mut rng = RngStream::new(170 + i as u64, 0);
            let direct: Vec<f64> = (0..n).map(|_| prep.sample_loss(&mut rng).loss).collect();
            let d = ks_two_sample(&embedded, &direct);
            let p_val = ks_p_value(d, (n * n) as f64 / (2 * n) as f64);
            assert!(p_val > 0.01, "model case {i}: KS p {p_val}");
        }
    }

    #[test]
    fn losses_decrease_along_paths() {
        let gauss = gaussian_toy(10, 2);
        let mut tp = gaussian_toy(10, 2);
        for x in tp.thresholds.iter_mut() {
            *x += 0.2;
        }
        let (cp, cmodel) = clayton_toy(10);
        let cases: Vec<(&Portfolio, Model)> = vec![
            (&gauss, Model::Gaussian),
            (&tp, Model::StudentT { dof: 3.0 }),
            (&cp, cmodel),
        ];
        for (i, (p, model)) in cases.iter().enumerate() {
            let plan = build_embedding(model, p).unwrap();
            let mut rng = RngStream::new(80 + i as u64, 0);
            for _ in 0..1000 {
                let mut state = SubordinatorState::origin(plan.dims());
                let mut prev = f64::INFINITY;
                for _ in 0..10 {
                    state = subordinator_step(&state, 0.1, &mut rng);
                    let s = plan.loss(&state);
                    assert!(s <= prev, "loss increased from {prev} to {s} at t = {}", state.t);
                    prev = s;
                }
            }
        }
    }

    #[test]
    fn t0_limit_is_all_default() {
        let p = gaussian_toy(6, 1);
        let plan = build_embedding(&Model::Gaussian, &p).unwrap();
        assert_eq!(plan.loss(&SubordinatorState::origin(plan.dims())), p.total_cost());
        let (cp, cm) = clayton_toy(6);
        let plan = build_embedding(&cm, &cp).unwrap();
        assert_eq!(plan.loss(&SubordinatorState::origin(plan.dims())), cp.total_cost());
    }

    #[test]
    fn build_validation() {
        let p = gaussian_toy(4, 1);
        assert_eq!(build_embedding(&Model::Gaussian, &p).unwrap().dims(), 5);
        assert_eq!(build_embedding(&Model::StudentT { dof: 3.0 }, &p).unwrap().dims(), 6);
        let (cp, cm) = clayton_toy(4);
        assert_eq!(build_embedding(&cm, &cp).unwrap().dims(), 5);
        // Negative loadings break quasi-monotonicity.
        let neg = Portfolio::new(vec![1.0; 2], vec![1.0; 2], vec![0.5, -0.5], 1).unwrap();
        assert!(matches!(build_embedding(&Model::Gaussian, &neg), Err(Error::Domain(_))));
        // The t plan requires positive thresholds.
        let mut zp = gaussian_toy(4, 1);
        zp.thresholds[1] = -0.3;
        assert!(matches!(
            build_embedding(&Model::StudentT { dof: 3.0 }, &zp),
            Err(Error::Domain(_))
        ));
        // But the Gaussian plan does not.
        assert!(build_embedding(&Model::Gaussian, &zp).is_ok());
    }

    #[test]
    fn effective_gamma_rule() {
        let p = gaussian_toy(4, 1); // integer costs 1 and 2
        let plan = build_embedding(&Model::Gaussian, &p).unwrap();
        assert_eq!(plan.effective_gamma(548.0), 547.5);
        assert_eq!(plan.effective_gamma(f64::INFINITY), f64::INFINITY);
        let frac = Portfolio::new(vec![1.5, 2.0], vec![1.0, 1.0], vec![0.4, 0.4], 1).unwrap();
        let plan = build_embedding(&Model::Gaussian, &frac).unwrap();
        assert_eq!(plan.effective_gamma(2.25), 2.25);
    }

    #[test]
    fn bridge_examples_and_validation() {
        let mut rng = RngStream::new(90, 0);
        let lo = SubordinatorState { t: 0.2, lambda: vec![1.0, 2.0] };
        let hi = SubordinatorState { t: 0.8, lambda: vec![1.0, 5.0] };
        let mid = gamma_bridge(&lo, &hi, 0.5, &mut rng).unwrap();
        assert_eq!(mid.t, 0.5);
        assert_eq!(mid.lambda[0], 1.0, "zero-span component is pinned");
        assert!(mid.lambda[1] >= 2.0 && mid.lambda[1] <= 5.0);
        // Midpoint of a symmetric span has mean (lo + hi) / 2.
        let n = 40_000;
        let mids: Vec<f64> =
            (0..n).map(|_| gamma_bridge(&lo, &hi, 0.5, &mut rng).unwrap().lambda[1]).collect();
        // Var of Beta(0.3, 0.3) = 0.15625; span 3.
        let se = (9.0 * 0.15625 / n as f64).sqrt();
        assert!((mean(&mids) - 3.5).abs() < 3.0 * se, "bridge mean {}", mean(&mids));
        // Violations.
        let bad = SubordinatorState { t: 0.8, lambda: vec![0.5, 5.0] };
        assert!(matches!(gamma_bridge(&lo, &bad, 0.5, &mut rng), Err(Error::Domain(_))));
        assert!(gamma_bridge(&lo, &hi, 0.1, &mut rng).is_err());
        assert!(gamma_bridge(&lo, &hi, 0.8, &mut rng).is_err());
        let short = SubordinatorState { t: 0.8, lambda: vec![2.0] };
        assert!(gamma_bridge(&lo, &short, 0.5, &mut rng).is_err());
    }

    #[test]
    fn bridge_marginal_matches_forward_law() {
        // Bridging 0 -> Lambda(1) down to t = 0.3 must reproduce G(0.3, 1).
        let mut rng = RngStream::new(91, 0);
        let n = 10_000;
        let origin = SubordinatorState::origin(1);
        let samples: Vec<f64> = (0..n)
            .map(|_| {
                let end = subordinator_step(&origin, 1.0, &mut rng);
                gamma_bridge(&origin, &end, 0.3, &mut rng).unwrap().lambda[0]
            })
            .collect();
        let d = ks_statistic(&samples, |x| gamma_p(0.3, x));
        let p = ks_p_value(d, n as f64);
        assert!(p > 0.01, "bridge marginal KS p {p}");
    }

    #[test]
    fn telescoping_conditional_probabilities() {
        // One component, survival event {Lambda(t) <= y}: the events are
        // nested, so the product of per-level conditional probabilities must
        // telescope to the terminal gamma CDF.
        let y = 1.2;
        let times = [0.2, 0.5, 1.0];
        let mut product = 1.0;
        let mut prev = 1.0; // P(Lambda(0) <= y) = 1
        for &t in &times {
            let p_t = gamma_p(t, y);
            product *= p_t / prev;
            prev = p_t;
        }
        assert!((product - gamma_p(1.0, y)).abs() < 1e-10);
        // And the terminal value is the Exp(1) CDF.
        let exp_cdf = -(-y as f64).exp_m1();
        assert!((gamma_p(1.0, y) - exp_cdf).abs() < 1e-12);
    }
}
