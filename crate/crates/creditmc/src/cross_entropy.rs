//! Cross-entropy importance sampling for the t factor model.
//!
//! A product-normal proposal over the latent (Z, eps) space is fitted by
//! maximum likelihood to an elite subsample of a pilot run, then used in a
//! conditional estimator that integrates the chi-square mixing variable out
//! analytically through the gamma CDF.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Gamma as GammaDistr, StandardNormal};

use crate::cmc::EstimateReport;
use crate::error::{Error, Result};
use crate::parallel::map_indexed;
use crate::portfolio::Portfolio;
use crate::rng::{RngStream, StreamFamily, StreamNamespace};
use crate::special::gamma_p;
use crate::stats::guarded_ceil;

/// Product-normal proposal parameters over factors (length m) and
/// idiosyncratic terms (length d).
#[derive(Debug, Clone, PartialEq)]
pub struct CeParams {
    pub mu_z: Vec<f64>,
    pub sigma2_z: Vec<f64>,
    pub mu_eps: Vec<f64>,
    pub sigma2_eps: Vec<f64>,
}

impl CeParams {
    /// Standard-normal proposal: zero means, unit variances.
    pub fn standard(m: usize, d: usize) -> Self {
        Self {
            mu_z: vec![0.0; m],
            sigma2_z: vec![1.0; m],
            mu_eps: vec![0.0; d],
            sigma2_eps: vec![1.0; d],
        }
    }

    pub fn m(&self) -> usize {
        self.mu_z.len()
    }

    pub fn d(&self) -> usize {
        self.mu_eps.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu_z.len() != self.sigma2_z.len() || self.mu_eps.len() != self.sigma2_eps.len() {
            return Err(Error::Parameter(
                "mean and variance vectors must have matching lengths".into(),
            ));
        }
        for &v in self.sigma2_z.iter().chain(&self.sigma2_eps) {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Parameter(format!("variance {v} must be a positive real")));
            }
        }
        for &v in self.mu_z.iter().chain(&self.mu_eps) {
            if !v.is_finite() {
                return Err(Error::Parameter(format!("mean {v} must be finite")));
            }
        }
        Ok(())
    }

    /// Serialize as a flat key-value text file: one key per line followed by
    /// the space-separated vector entries.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (key, vals) in [
            ("mu_z", &self.mu_z),
            ("sigma2_z", &self.sigma2_z),
            ("mu_eps", &self.mu_eps),
            ("sigma2_eps", &self.sigma2_eps),
        ] {
            out.push_str(key);
            for v in vals {
                write!(out, " {v}").expect("string write");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut mu_z = None;
        let mut sigma2_z = None;
        let mut mu_eps = None;
        let mut sigma2_eps = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let key = parts.next().expect("nonempty line");
            let vals: Result<Vec<f64>> = parts
                .map(|t| {
                    t.parse::<f64>().map_err(|_| {
                        Error::Parse(format!("line {}: bad number {t:?}", lineno + 1))
                    })
                })
                .collect();
            let vals = vals?;
            let slot = match key {
                "mu_z" => &mut mu_z,
                "sigma2_z" => &mut sigma2_z,
                "mu_eps" => &mut mu_eps,
                "sigma2_eps" => &mut sigma2_eps,
                other => {
                    return Err(Error::Parse(format!("line {}: unknown key {other:?}", lineno + 1)))
                }
            };
            if slot.replace(vals).is_some() {
                return Err(Error::Parse(format!("line {}: duplicate key {key:?}", lineno + 1)));
            }
        }
        let take = |slot: Option<Vec<f64>>, key: &str| {
            slot.ok_or_else(|| Error::Parse(format!("missing key {key:?}")))
        };
        let params = Self {
            mu_z: take(mu_z, "mu_z")?,
            sigma2_z: take(sigma2_z, "sigma2_z")?,
            mu_eps: take(mu_eps, "mu_eps")?,
            sigma2_eps: take(sigma2_eps, "sigma2_eps")?,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Number of elite records kept from n draws at level alpha: the order
/// statistics at ranks ceil(alpha n) through n inclusive.
pub fn elite_count(n: usize, alpha: f64) -> usize {
    let rank = guarded_ceil(alpha * n as f64).clamp(1, n);
    n - rank + 1
}

/// Select the elite records: the top-ranked losses (ranks ceil(alpha n)..n),
/// ties broken by sample index.
pub fn elite_sample<T: Clone>(samples: &[(f64, T)], alpha: f64) -> Result<Vec<(f64, T)>> {
    let idx = elite_indices(samples.len(), alpha, |i| samples[i].0)?;
    Ok(idx.into_iter().map(|i| samples[i].clone()).collect())
}

/// Index form of [`elite_sample`]: positions of the elite records in the
/// original sample, in ascending loss order.
pub fn elite_indices(n: usize, alpha: f64, loss: impl Fn(usize) -> f64) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::Domain("cannot take elites of an empty sample".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha = {alpha} must lie strictly inside (0, 1)")));
    }
    let count = elite_count(n, alpha);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| loss(a).partial_cmp(&loss(b)).unwrap().then(a.cmp(&b)));
    Ok(order.split_off(n - count))
}

/// Maximum-likelihood fit of the product-normal proposal to elite latents:
/// componentwise means and biased (1/n) variances.
pub fn ce_fit(elites: &[(Vec<f64>, Vec<f64>)]) -> Result<CeParams> {
    if elites.len() < 2 {
        return Err(Error::DegenerateFit(format!(
            "need at least 2 elite records, got {}",
            elites.len()
        )));
    }
    let m = elites[0].0.len();
    let d = elites[0].1.len();
    for (z, eps) in elites {
        if z.len() != m || eps.len() != d {
            return Err(Error::Parameter("inconsistent latent dimensions across elites".into()));
        }
    }
    let n = elites.len() as f64;
    let fit_axis = |get: &dyn Fn(&(Vec<f64>, Vec<f64>)) -> &[f64], len: usize| -> Result<(Vec<f64>, Vec<f64>)> {
        let mut mu = vec![0.0; len];
        let mut var = vec![0.0; len];
        let mut lo = vec![f64::INFINITY; len];
        let mut hi = vec![f64::NEG_INFINITY; len];
        for e in elites {
            for (j, &v) in get(e).iter().enumerate() {
                mu[j] += v;
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        for v in mu.iter_mut() {
            *v /= n;
        }
        for j in 0..len {
            if lo[j] == hi[j] {
                return Err(Error::DegenerateFit(format!(
                    "coordinate {j} is constant across all elites"
                )));
            }
        }
        for e in elites {
            for (j, &v) in get(e).iter().enumerate() {
                var[j] += (v - mu[j]) * (v - mu[j]);
            }
        }
        for v in var.iter_mut() {
            *v /= n;
        }
        Ok((mu, var))
    };
    let (mu_z, sigma2_z) = fit_axis(&|e| &e.0, m)?;
    let (mu_eps, sigma2_eps) = fit_axis(&|e| &e.1, d)?;
    let params = CeParams { mu_z, sigma2_z, mu_eps, sigma2_eps };
    params.validate()?;
    Ok(params)
}

/// Draw the (z, eps) latent prefix of a pilot scenario from one stream.
fn draw_pilot_latents(rng: &mut RngStream, m: usize, d: usize) -> (Vec<f64>, Vec<f64>) {
    let z: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let eps: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    (z, eps)
}

/// Pilot CE fit for the t model: a plain Monte Carlo pass records losses,
/// the elite fraction above level alpha is selected, and the proposal is
/// fitted to the elite latents. The pilot replays elite streams instead of
/// storing every latent vector.
pub fn ce_pilot_fit(
    p: &Portfolio,
    dof: f64,
    alpha: f64,
    pilot_n: usize,
    seed: u64,
) -> Result<CeParams> {
    if !(dof > 0.0) || !dof.is_finite() {
        return Err(Error::Parameter(format!("degrees of freedom {dof} must be positive")));
    }
    if pilot_n < 2 {
        return Err(Error::Parameter("pilot_n must be at least 2".into()));
    }
    let m = p.m;
    let d = p.d();
    let family = StreamFamily::new(seed, StreamNamespace::Pilot, 0)?;
    let losses = map_indexed(pilot_n, |i| {
        let mut rng = family.stream(i as u64);
        let (z, eps) = draw_pilot_latents(&mut rng, m, d);
        // The mixing draw comes last so the (z, eps) prefix replays exactly.
        let chi2 = GammaDistr::new(dof / 2.0, 2.0).expect("validated dof");
        let v: f64 = chi2.sample(&mut rng);
        let scale = (v / dof).sqrt();
        let mut loss = 0.0;
        for k in 0..d {
            let x = p.factor_dot(k, &z) + p.b[k] * eps[k];
            if x > scale * p.thresholds[k] {
                loss += p.costs[k];
            }
        }
        loss
    });
    let idx = elite_indices(pilot_n, alpha, |i| losses[i])?;
    let elites: Vec<(Vec<f64>, Vec<f64>)> = idx
        .iter()
        .map(|&i| {
            let mut rng = family.stream(i as u64);
            draw_pilot_latents(&mut rng, m, d)
        })
        .collect();
    ce_fit(&elites)
}

fn ce_validate(p: &Portfolio, dof: f64, gamma: f64, params: &CeParams) -> Result<()> {
    params.validate()?;
    if params.m() != p.m || params.d() != p.d() {
        return Err(Error::Parameter(format!(
            "proposal dimensions ({}, {}) do not match portfolio ({}, {})",
            params.m(),
            params.d(),
            p.m,
            p.d()
        )));
    }
    if !(dof > 0.0) || !dof.is_finite() {
        return Err(Error::Parameter(format!("degrees of freedom {dof} must be positive")));
    }
    for &x in &p.thresholds {
        if !(x > 0.0) {
            return Err(Error::Domain(format!(
                "threshold {x} must be positive for the ratio representation"
            )));
        }
    }
    let total = p.total_cost();
    if gamma >= total {
        return Err(Error::InfeasibleThreshold(format!(
            "gamma = {gamma} is not below the maximum loss {total}"
        )));
    }
    Ok(())
}

/// One conditional-estimator draw: returns the contribution
/// F_G(rho*^2) * f/g, where rho* is the critical threshold ratio.
fn ce_draw(
    p: &Portfolio,
    dof: f64,
    gamma: f64,
    params: &CeParams,
    rng: &mut RngStream,
    ratios: &mut Vec<(f64, f64)>,
) -> f64 {
    let m = p.m;
    let d = p.d();
    let mut log_ratio = 0.0;
    let mut z = vec![0.0; m];
    for j in 0..m {
        let std: f64 = rng.sample(StandardNormal);
        let sigma = params.sigma2_z[j].sqrt();
        let v = params.mu_z[j] + sigma * std;
        log_ratio += -0.5 * v * v + sigma.ln() + 0.5 * std * std;
        z[j] = v;
    }
    ratios.clear();
    for k in 0..d {
        let std: f64 = rng.sample(StandardNormal);
        let sigma = params.sigma2_eps[k].sqrt();
        let eps = params.mu_eps[k] + sigma * std;
        log_ratio += -0.5 * eps * eps + sigma.ln() + 0.5 * std * std;
        let x_tilde = p.factor_dot(k, &z) + p.b[k] * eps;
        ratios.push((x_tilde / p.thresholds[k], p.costs[k]));
    }
    let weight = log_ratio.exp();
    if gamma < 0.0 {
        // Loss is nonnegative, so the conditional tail probability is 1.
        return weight;
    }
    // Descending threshold ratios: the obligors with the largest ratios
    // default first as the mixing scale falls. rho* is the ratio at which
    // the accumulated cost first exceeds gamma.
    ratios.sort_unstable_by(|a, b| b.0.total_cmp(&a.0));
    let mut acc = 0.0;
    let mut rho_star = f64::NEG_INFINITY;
    for &(rho, c) in ratios.iter() {
        acc += c;
        if acc > gamma {
            rho_star = rho;
            break;
        }
    }
    if rho_star <= 0.0 {
        return 0.0;
    }
    // P(sqrt(V/r) < rho*) for V ~ chi-square(r): gamma CDF with shape r/2
    // and rate r/2 evaluated at rho*^2.
    gamma_p(dof / 2.0, 0.5 * dof * rho_star * rho_star) * weight
}

/// Per-draw contributions of the conditional CE estimator (for diagnostics
/// and cross-checks).
pub fn ce_t_contributions(
    p: &Portfolio,
    dof: f64,
    gamma: f64,
    params: &CeParams,
    n: usize,
    family: &StreamFamily,
) -> Result<Vec<f64>> {
    ce_validate(p, dof, gamma, params)?;
    Ok(map_indexed(n, |i| {
        let mut rng = family.stream(i as u64);
        let mut ratios = Vec::with_capacity(p.d());
        ce_draw(p, dof, gamma, params, &mut rng, &mut ratios)
    }))
}

/// CE estimate of P(L > gamma) for the t model: R runs of N conditional
/// draws from the fitted proposal.
pub fn ce_t_estimate(
    p: &Portfolio,
    dof: f64,
    gamma: f64,
    params: &CeParams,
    n: usize,
    runs: usize,
    seed: u64,
) -> Result<EstimateReport> {
    if n == 0 || runs == 0 {
        return Err(Error::Parameter("n and runs must be at least 1".into()));
    }
    ce_validate(p, dof, gamma, params)?;
    let start = Instant::now();
    let mut per_run = Vec::with_capacity(runs);
    for r in 0..runs {
        let family = StreamFamily::new(seed, StreamNamespace::Estimate, r as u64)?;
        let contributions = map_indexed(n, |i| {
            let mut rng = family.stream(i as u64);
            let mut ratios = Vec::with_capacity(p.d());
            ce_draw(p, dof, gamma, params, &mut rng, &mut ratios)
        });
        per_run.push(contributions.iter().sum::<f64>() / n as f64);
    }
    Ok(EstimateReport::from_runs(per_run, n, seed, start.elapsed().as_secs_f64() * 1e3))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::portfolio::Model;
    use crate::special::ln_gamma;

    fn t_portfolio(d: usize, m: usize) -> Portfolio {
        let mut costs = Vec::new();
        let mut thresh = Vec::new();
        let mut loadings = Vec::new();
        for k in 0..d {
            costs.push(1.0 + (k % 3) as f64 * 0.5);
            thresh.push(1.6 + 0.05 * (k % 7) as f64);
            for j in 0..m {
                loadings.push(if (k + j) % 2 == 0 { 0.45 } else { 0.35 });
            }
        }
        Portfolio::new(costs, thresh, loadings, m).unwrap()
    }

    #[test]
    fn elite_selection_examples() {
        let samples: Vec<(f64, usize)> = (1..=10).map(|i| (i as f64, i)).collect();
        let elites = elite_sample(&samples, 0.9).unwrap();
        let losses: Vec<f64> = elites.iter().map(|e| e.0).collect();
        assert_eq!(losses, vec![9.0, 10.0]);
        assert_eq!(elite_count(10, 0.9), 2);
        // Ties: the returned set still has the rule's size and is
        // deterministic.
        let tied: Vec<(f64, usize)> = (0..10).map(|i| (5.0, i)).collect();
        let e1 = elite_sample(&tied, 0.9).unwrap();
        let e2 = elite_sample(&tied, 0.9).unwrap();
        assert_eq!(e1.len(), 2);
        assert_eq!(e1, e2);
        // Small alpha keeps the whole sample.
        assert_eq!(elite_sample(&samples, 0.01).unwrap().len(), 10);
        assert!(elite_sample::<usize>(&[], 0.9).is_err());
        assert!(elite_sample(&samples, 1.0).is_err());
    }

    #[test]
    fn fit_two_point_and_degenerate() {
        let elites = vec![(vec![0.0], vec![]), (vec![2.0], vec![])];
        // Zero-length eps axis cannot be fit; use a 1-factor, 1-obligor shape.
        assert!(matches!(ce_fit(&elites), Ok(p) if p.mu_z == vec![1.0] && p.sigma2_z == vec![1.0]));
        let elites = vec![(vec![0.0], vec![3.0]), (vec![2.0], vec![5.0])];
        let p = ce_fit(&elites).unwrap();
        assert_eq!(p.mu_z, vec![1.0]);
        assert_eq!(p.sigma2_z, vec![1.0]);
        assert_eq!(p.mu_eps, vec![4.0]);
        assert_eq!(p.sigma2_eps, vec![1.0]);
        // All identical latents: degenerate.
        let same = vec![(vec![1.0], vec![2.0]); 5];
        assert!(matches!(ce_fit(&same), Err(Error::DegenerateFit(_))));
        // One constant coordinate among varying ones: still degenerate.
        let mixed = vec![(vec![1.0, 7.0], vec![2.0]), (vec![3.0, 7.0], vec![4.0])];
        assert!(matches!(ce_fit(&mixed), Err(Error::DegenerateFit(_))));
        assert!(ce_fit(&[(vec![1.0], vec![2.0])]).is_err());
    }

    #[test]
    fn fit_is_consistent_mle() {
        // 10^4 draws from N(3, 2^2): mean within 3 +- 0.07, variance within
        // 4 +- 0.2 (3-sigma bands).
        let mut rng = RngStream::new(21, 0);
        let elites: Vec<(Vec<f64>, Vec<f64>)> = (0..10_000)
            .map(|_| {
                let v: f64 = rng.sample(StandardNormal);
                (vec![3.0 + 2.0 * v], vec![rng.sample::<f64, _>(StandardNormal)])
            })
            .collect();
        let p = ce_fit(&elites).unwrap();
        assert!((p.mu_z[0] - 3.0).abs() < 0.07, "mu {}", p.mu_z[0]);
        assert!((p.sigma2_z[0] - 4.0).abs() < 0.2, "var {}", p.sigma2_z[0]);
        // Order invariance up to floating-point summation noise.
        let mut rev = elites.clone();
        rev.reverse();
        let q = ce_fit(&rev).unwrap();
        assert!((p.mu_z[0] - q.mu_z[0]).abs() < 1e-12);
        assert!((p.sigma2_z[0] - q.sigma2_z[0]).abs() < 1e-12);
    }

    #[test]
    fn params_text_round_trip() {
        let params = CeParams {
            mu_z: vec![0.1, -2.75e-3],
            sigma2_z: vec![1.5, 0.25],
            mu_eps: vec![0.0, 1.0 / 3.0, 4.0],
            sigma2_eps: vec![1.0, 2.0, 1e-6],
        };
        let text = params.to_text();
        let back = CeParams::from_text(&text).unwrap();
        assert_eq!(params, back);
        assert!(CeParams::from_text("mu_z 1\nsigma2_z 1\nmu_eps 0\n").is_err());
        assert!(CeParams::from_text("mu_z 1\nmu_z 2\nsigma2_z 1\nmu_eps 0\nsigma2_eps 1\n").is_err());
        assert!(CeParams::from_text("bogus 1\n").is_err());
        assert!(
            CeParams::from_text("mu_z 1\nsigma2_z -1\nmu_eps 0\nsigma2_eps 1\n").is_err(),
            "negative variance must be rejected"
        );
    }

    #[test]
    fn standard_params_have_unit_weight() {
        let p = t_portfolio(6, 2);
        let params = CeParams::standard(2, 6);
        let family = StreamFamily::new(7, StreamNamespace::Estimate, 0).unwrap();
        // gamma < 0 makes every contribution equal the weight f/g, which is
        // identically 1 for the standard proposal.
        let contribs = ce_t_contributions(&p, 3.0, -1.0, &params, 200, &family).unwrap();
        for c in contribs {
            assert_eq!(c, 1.0);
        }
    }

    #[test]
    fn conditional_cdf_identity_by_quadrature() {
        // d = 2 toy: the F_G factor equals direct numerical integration of
        // the Gamma(r/2, rate r/2) density over {lambda^2 < rho*^2}.
        let r: f64 = 3.0;
        let ratios = [1.21, 0.64];
        let costs = [1.0, 1.0];
        let gamma = 1.5;
        // Descending ratios; accumulate cost until it exceeds gamma.
        let mut acc = 0.0;
        let mut rho_star = 0.0;
        for (rho, c) in ratios.iter().zip(&costs) {
            acc += c;
            if acc > gamma {
                rho_star = *rho;
                break;
            }
        }
        assert_eq!(rho_star, 0.64);
        let upper = rho_star * rho_star;
        // Simpson integration of the gamma density on [0, upper].
        let a = r / 2.0;
        let rate = r / 2.0;
        let log_norm = a * rate.ln() - ln_gamma(a);
        let density = |v: f64| {
            if v <= 0.0 {
                0.0
            } else {
                (log_norm + (a - 1.0) * v.ln() - rate * v).exp()
            }
        };
        let steps = 40_000;
        let h = upper / steps as f64;
        let mut integral = density(0.0) + density(upper);
        for i in 1..steps {
            integral += density(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        integral *= h / 3.0;
        let closed = gamma_p(a, rate * upper);
        assert!(
            (integral - closed).abs() < 1e-8,
            "quadrature {integral} vs gamma CDF {closed}"
        );
    }

    #[test]
    fn descending_prefix_rule_matches_ascending_suffix_rule() {
        // The production rule (descending ratios, first prefix cost > gamma)
        // must agree with the suffix formulation (ascending ratios,
        // i = min j with sum_{k=j+1..d} c_(k) <= gamma).
        let mut rng = RngStream::new(40, 0);
        for _ in 0..200 {
            let d = 2 + (rng.random::<u32>() % 7) as usize;
            let ratios: Vec<f64> = (0..d).map(|_| 4.0 * rng.random::<f64>() - 1.0).collect();
            let costs: Vec<f64> = (0..d).map(|_| 0.5 + 2.0 * rng.random::<f64>()).collect();
            let total: f64 = costs.iter().sum();
            let gamma = total * rng.random::<f64>() * 0.95;
            let mut desc: Vec<(f64, f64)> =
                ratios.iter().zip(&costs).map(|(&r, &c)| (r, c)).collect();
            desc.sort_unstable_by(|a, b| b.0.total_cmp(&a.0));
            let mut acc = 0.0;
            let mut rho_prefix = f64::NAN;
            for &(r, c) in &desc {
                acc += c;
                if acc > gamma {
                    rho_prefix = r;
                    break;
                }
            }
            let mut asc = desc.clone();
            asc.reverse();
            let mut rho_suffix = f64::NAN;
            for j in 0..d {
                let suffix: f64 = asc[j + 1..].iter().map(|&(_, c)| c).sum();
                if suffix <= gamma {
                    rho_suffix = asc[j].0;
                    break;
                }
            }
            assert_eq!(rho_prefix, rho_suffix);
        }
    }

    #[test]
    fn standard_proposal_matches_plain_cmc() {
        // With the standard proposal the conditional estimator averages the
        // same quantity CMC estimates by indicator draws.
        let p = t_portfolio(8, 2);
        let dof = 3.0;
        let params = CeParams::standard(2, 8);
        let n = 40_000;
        let gamma = 6.0;
        let family = StreamFamily::new(101, StreamNamespace::Estimate, 0).unwrap();
        let contribs = ce_t_contributions(&p, dof, gamma, &params, n, &family).unwrap();
        let ce_mean = crate::stats::mean(&contribs);
        let ce_se = crate::stats::sample_std(&contribs) / (n as f64).sqrt();
        let model = Model::StudentT { dof };
        let rep = crate::cmc::cmc_tail_estimate(&model, &p, gamma, n, 1, 555).unwrap();
        let cmc_se = (rep.point * (1.0 - rep.point) / n as f64).sqrt();
        let tol = 3.0 * (ce_se * ce_se + cmc_se * cmc_se).sqrt();
        assert!(
            (ce_mean - rep.point).abs() < tol,
            "CE {ce_mean} vs CMC {} (tol {tol})",
            rep.point
        );
        // The conditional estimator should not be noisier than the indicator.
        assert!(ce_se <= 1.5 * cmc_se);
    }

    #[test]
    fn estimate_validations() {
        let p = t_portfolio(4, 1);
        let params = CeParams::standard(1, 4);
        assert!(matches!(
            ce_t_estimate(&p, 3.0, p.total_cost(), &params, 10, 1, 1),
            Err(Error::InfeasibleThreshold(_))
        ));
        assert!(ce_t_estimate(&p, 0.0, 2.0, &params, 10, 1, 1).is_err());
        let bad_dims = CeParams::standard(2, 4);
        assert!(ce_t_estimate(&p, 3.0, 2.0, &bad_dims, 10, 1, 1).is_err());
        // Negative thresholds break the ratio representation.
        let mut neg = t_portfolio(4, 1);
        neg.thresholds[2] = -0.5;
        assert!(matches!(
            ce_t_estimate(&neg, 3.0, 2.0, &params, 10, 1, 1),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn pilot_fit_is_deterministic_and_tilts_upward() {
        let p = t_portfolio(6, 2);
        let a = ce_pilot_fit(&p, 3.0, 0.9, 4000, 77).unwrap();
        let b = ce_pilot_fit(&p, 3.0, 0.9, 4000, 77).unwrap();
        assert_eq!(a, b);
        // Elite scenarios have more defaults: with positive loadings the
        // fitted factor means move up relative to the standard proposal.
        let shift: f64 = a.mu_z.iter().sum();
        assert!(shift > 0.1, "expected an upward tilt, got {:?}", a.mu_z);
        let c = ce_pilot_fit(&p, 3.0, 0.9, 4000, 78).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn pilot_then_estimate_pipeline() {
        let p = t_portfolio(10, 2);
        let dof = 3.0;
        let params = ce_pilot_fit(&p, dof, 0.95, 20_000, 99).unwrap();
        let gamma = 8.0;
        let rep = ce_t_estimate(&p, dof, gamma, &params, 5_000, 5, 13).unwrap();
        assert!(rep.point > 0.0 && rep.point < 1.0);
        // Cross-check against plain CMC at matched precision.
        let model = Model::StudentT { dof };
        let cmc = crate::cmc::cmc_tail_estimate(&model, &p, gamma, 40_000, 5, 14).unwrap();
        let se = (rep.std_error().powi(2) + cmc.std_error().powi(2)).sqrt();
        assert!(
            (rep.point - cmc.point).abs() < 3.0 * se,
            "CE {} vs CMC {} (3se {})",
            rep.point,
            cmc.point,
            3.0 * se
        );
    }
}
