//! Importance sampling by exponential twisting of conditional default
//! probabilities.
//!
//! One-step IS conditions on the shared latent state, twists each Bernoulli
//! default so the conditional expected loss equals the threshold, and
//! reweights by W = exp(-theta L + log MGF). Two-step IS (Gaussian model)
//! additionally shifts the factor mean and multiplies the normal-density
//! ratio into the weight. Weighted VaR/CVaR extraction from (loss, weight)
//! pairs lives here as well.

use std::time::Instant;

use rand::Rng;

use crate::cmc::EstimateReport;
use crate::error::{Error, Result};
use crate::parallel::map_indexed;
use crate::portfolio::{Latent, Model, Portfolio, PreparedModel};
use crate::rng::{RngStream, StreamFamily, StreamNamespace};
use crate::special::{normal_cdf, normal_pdf};

/// Exponentially twisted Bernoulli parameters at a fixed theta.
#[derive(Debug, Clone)]
pub struct TwistState {
    pub theta: f64,
    pub twisted_probs: Vec<f64>,
    /// Sum of log(1 + P_k (e^{theta c_k} - 1)).
    pub log_mgf: f64,
}

/// Twisted probability and log-MGF term for a single obligor, stable for
/// arbitrarily large theta * c.
fn twist_component(p: f64, t: f64) -> (f64, f64) {
    if p <= 0.0 {
        return (0.0, 0.0);
    }
    if t == 0.0 {
        return (p, 0.0);
    }
    if t <= 700.0 {
        let em1 = t.exp_m1();
        let q = p * (em1 + 1.0) / (1.0 + p * em1);
        (q, (p * em1).ln_1p())
    } else {
        // e^{theta c} overflows; work with e^{-theta c} instead.
        let e = (-t).exp();
        let q = p / (p + (1.0 - p) * e);
        (q, t + p.ln() + ((1.0 - p) * e / p).ln_1p())
    }
}

/// Apply the exponential twist P_{k,theta} = P_k e^{theta c_k} /
/// (1 + P_k (e^{theta c_k} - 1)) and accumulate the log-MGF.
pub fn exp_twist(probs: &[f64], costs: &[f64], theta: f64) -> Result<TwistState> {
    if probs.len() != costs.len() {
        return Err(Error::Parameter(format!(
            "probs length {} does not match costs length {}",
            probs.len(),
            costs.len()
        )));
    }
    if !(theta >= 0.0) || !theta.is_finite() {
        return Err(Error::Parameter(format!("theta = {theta} must be a nonnegative real")));
    }
    for &p in probs {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!("probability {p} outside [0, 1]")));
        }
    }
    let mut twisted = Vec::with_capacity(probs.len());
    let mut log_mgf = 0.0;
    for (&p, &c) in probs.iter().zip(costs) {
        let (q, lt) = twist_component(p, theta * c);
        twisted.push(q);
        log_mgf += lt;
    }
    Ok(TwistState { theta, twisted_probs: twisted, log_mgf })
}

/// Likelihood ratio W = exp(-theta * loss + log_mgf).
pub fn one_step_lr(loss: f64, twist: &TwistState) -> f64 {
    (-twist.theta * loss + twist.log_mgf).exp()
}

/// Distinct-cost grouping so the twisted mean can be evaluated with one exp
/// per distinct cost instead of one per obligor.
#[derive(Debug, Clone)]
struct CostGroups {
    costs: Vec<f64>,
    distinct: Vec<f64>,
    index: Vec<u32>,
}

impl CostGroups {
    fn new(costs: &[f64]) -> Self {
        let mut distinct: Vec<f64> = costs.to_vec();
        distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
        distinct.dedup();
        let index = costs
            .iter()
            .map(|c| distinct.partition_point(|x| x < c) as u32)
            .collect();
        Self { costs: costs.to_vec(), distinct, index }
    }

    /// Twisted mean sum_k c_k q_k(theta) and its theta-derivative
    /// sum_k c_k^2 q_k (1 - q_k).
    fn twisted_mean_and_slope(&self, probs: &[f64], theta: f64) -> (f64, f64) {
        // q = p / (p + (1 - p) e^{-theta c}) is stable for all theta >= 0.
        let neg_exp: Vec<f64> = self.distinct.iter().map(|c| (-theta * c).exp()).collect();
        let mut mean = 0.0;
        let mut slope = 0.0;
        for k in 0..probs.len() {
            let p = probs[k];
            if p <= 0.0 {
                continue;
            }
            let c = self.costs[k];
            let e = neg_exp[self.index[k] as usize];
            let denom = p + (1.0 - p) * e;
            let q = p / denom;
            mean += c * q;
            slope += c * c * q * (1.0 - q);
        }
        (mean, slope)
    }

    fn mean_at_zero(&self, probs: &[f64]) -> f64 {
        self.costs.iter().zip(probs).map(|(c, p)| c * p).sum()
    }

    /// Largest achievable twisted mean: total cost of obligors with positive
    /// conditional probability.
    fn reachable(&self, probs: &[f64]) -> f64 {
        self.costs
            .iter()
            .zip(probs)
            .filter(|(_, &p)| p > 0.0)
            .map(|(c, _)| c)
            .sum()
    }
}

const THETA_RESIDUAL_TOL: f64 = 1e-10;

/// Solve sum_k P_k c_k e^{theta c_k} / (1 + P_k (e^{theta c_k} - 1)) = gamma
/// for theta >= 0. Returns 0 when the untwisted mean already reaches gamma.
pub fn solve_theta(probs: &[f64], costs: &[f64], gamma: f64) -> Result<f64> {
    if probs.len() != costs.len() || probs.is_empty() {
        return Err(Error::Parameter("probs and costs must be nonempty and equal length".into()));
    }
    for (&p, &c) in probs.iter().zip(costs) {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!("probability {p} outside [0, 1]")));
        }
        if !(c > 0.0) {
            return Err(Error::Parameter(format!("cost {c} must be positive")));
        }
    }
    let groups = CostGroups::new(costs);
    match solve_theta_grouped(probs, &groups, gamma) {
        ThetaOutcome::Solved(t) => Ok(t),
        ThetaOutcome::Unreachable => Err(Error::InfeasibleThreshold(format!(
            "gamma = {gamma} is not below the maximum achievable conditional loss {}",
            groups.reachable(probs)
        ))),
        ThetaOutcome::NoConvergence(msg) => Err(Error::Convergence(msg)),
    }
}

enum ThetaOutcome {
    Solved(f64),
    /// gamma at or above the largest conditional loss with positive
    /// probability; no finite twist reaches it.
    Unreachable,
    NoConvergence(String),
}

fn solve_theta_grouped(probs: &[f64], groups: &CostGroups, gamma: f64) -> ThetaOutcome {
    if groups.mean_at_zero(probs) >= gamma {
        return ThetaOutcome::Solved(0.0);
    }
    if groups.reachable(probs) <= gamma {
        return ThetaOutcome::Unreachable;
    }
    // Grow the upper bracket geometrically, then run safeguarded Newton.
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut f_hi;
    loop {
        f_hi = groups.twisted_mean_and_slope(probs, hi).0 - gamma;
        if f_hi >= 0.0 {
            break;
        }
        lo = hi;
        hi *= 2.0;
        if hi > 1e7 {
            return ThetaOutcome::NoConvergence(format!(
                "no twist bracket below theta = {hi} for gamma = {gamma}"
            ));
        }
    }
    if f_hi == 0.0 {
        return ThetaOutcome::Solved(hi);
    }
    let mut theta = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (mean, slope) = groups.twisted_mean_and_slope(probs, theta);
        let f = mean - gamma;
        if f.abs() <= THETA_RESIDUAL_TOL {
            return ThetaOutcome::Solved(theta);
        }
        if f > 0.0 {
            hi = theta;
        } else {
            lo = theta;
        }
        let newton = theta - f / slope;
        theta = if slope > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo < 1e-15 * (1.0 + hi) {
            let f = groups.twisted_mean_and_slope(probs, theta).0 - gamma;
            if f.abs() <= THETA_RESIDUAL_TOL {
                return ThetaOutcome::Solved(theta);
            }
            return ThetaOutcome::NoConvergence(format!(
                "twist bracket collapsed at theta = {theta} with residual {f}"
            ));
        }
    }
    ThetaOutcome::NoConvergence("twist root search exceeded the iteration cap".into())
}

/// One importance-sampled scenario: realized loss and likelihood ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedLoss {
    pub loss: f64,
    pub weight: f64,
}

struct DrawScratch {
    pds: Vec<f64>,
}

/// Shared core of the one-step and two-step draws. `shift` holds the factor
/// mean shift (Gaussian model only); its density ratio joins the weight.
fn is_draw_core(
    prep: &PreparedModel,
    groups: &CostGroups,
    gamma: f64,
    shift: Option<&[f64]>,
    rng: &mut RngStream,
    scratch: &mut DrawScratch,
) -> Result<WeightedLoss> {
    let p = prep.portfolio;
    let mut latent = prep.sample_latent(rng);
    let mut shift_log_weight = 0.0;
    if let Some(mu) = shift {
        match &mut latent {
            Latent::Gaussian { z } => {
                // Z ~ N(mu, I); the density ratio f/g contributes
                // exp(0.5 |mu|^2 - mu' Z).
                for (zj, &mj) in z.iter_mut().zip(mu) {
                    *zj += mj;
                }
                let mu_dot_z: f64 = mu.iter().zip(z.iter()).map(|(a, b)| a * b).sum();
                let mu_sq: f64 = mu.iter().map(|a| a * a).sum();
                shift_log_weight = 0.5 * mu_sq - mu_dot_z;
            }
            _ => return Err(Error::Unsupported("factor mean shift requires the Gaussian model".into())),
        }
    }
    prep.conditional_pds_into(&latent, &mut scratch.pds);
    let theta = match solve_theta_grouped(&scratch.pds, groups, gamma) {
        ThetaOutcome::Solved(t) => t,
        // gamma unreachable in this scenario: the conditional tail event is
        // null, so an untwisted draw (weight from the shift alone) is exact.
        ThetaOutcome::Unreachable => 0.0,
        ThetaOutcome::NoConvergence(msg) => return Err(Error::Convergence(msg)),
    };
    let mut loss = 0.0;
    let log_weight = if theta == 0.0 {
        for (k, &q) in scratch.pds.iter().enumerate() {
            if rng.random::<f64>() < q {
                loss += p.costs[k];
            }
        }
        shift_log_weight
    } else {
        let mut log_mgf = 0.0;
        for (k, &pk) in scratch.pds.iter().enumerate() {
            let (q, lt) = twist_component(pk, theta * p.costs[k]);
            log_mgf += lt;
            if rng.random::<f64>() < q {
                loss += p.costs[k];
            }
        }
        shift_log_weight - theta * loss + log_mgf
    };
    Ok(WeightedLoss { loss, weight: log_weight.exp() })
}

/// Draw n one-step IS scenarios (losses and weights), one stream per index.
pub fn one_step_sample(
    model: &Model,
    portfolio: &Portfolio,
    gamma: f64,
    n: usize,
    family: &StreamFamily,
) -> Result<Vec<WeightedLoss>> {
    let prep = PreparedModel::new(model, portfolio)?;
    let groups = CostGroups::new(&portfolio.costs);
    let draws = map_indexed(n, |i| {
        let mut rng = family.stream(i as u64);
        let mut scratch = DrawScratch { pds: vec![0.0; portfolio.d()] };
        is_draw_core(&prep, &groups, gamma, None, &mut rng, &mut scratch)
    });
    draws.into_iter().collect()
}

/// One-step IS estimate of P(L > gamma): R runs of N draws.
pub fn one_step_estimate(
    model: &Model,
    portfolio: &Portfolio,
    gamma: f64,
    n: usize,
    runs: usize,
    seed: u64,
) -> Result<EstimateReport> {
    two_step_core(model, portfolio, gamma, None, n, runs, seed)
}

/// Factor mean shift for the two-step Gaussian algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanShift {
    pub mu: Vec<f64>,
    /// Tail-bound objective log MGF(z, theta(z)) - theta(z) gamma - |z|^2/2
    /// evaluated at mu.
    pub objective: f64,
    pub iterations: usize,
}

/// E[L | Z = z] for the Gaussian model.
pub fn expected_loss_given_z(p: &Portfolio, z: &[f64]) -> f64 {
    (0..p.d())
        .map(|k| p.costs[k] * normal_cdf((p.factor_dot(k, z) - p.thresholds[k]) / p.b[k]))
        .sum()
}

fn expected_loss_grad(p: &Portfolio, z: &[f64], grad: &mut [f64]) {
    grad.fill(0.0);
    for k in 0..p.d() {
        let u = (p.factor_dot(k, z) - p.thresholds[k]) / p.b[k];
        let w = p.costs[k] * normal_pdf(u) / p.b[k];
        for (g, &a) in grad.iter_mut().zip(p.loading_row(k)) {
            *g += w * a;
        }
    }
}

fn gaussian_pds_into(p: &Portfolio, z: &[f64], out: &mut [f64]) {
    for k in 0..p.d() {
        out[k] = normal_cdf((p.factor_dot(k, z) - p.thresholds[k]) / p.b[k]);
    }
}

/// Tail-bound objective at z; -inf when gamma is unreachable from z.
fn tail_bound_objective(p: &Portfolio, groups: &CostGroups, gamma: f64, z: &[f64], pds: &mut [f64]) -> f64 {
    gaussian_pds_into(p, z, pds);
    let half_norm: f64 = 0.5 * z.iter().map(|v| v * v).sum::<f64>();
    let theta = match solve_theta_grouped(pds, groups, gamma) {
        ThetaOutcome::Solved(t) => t,
        ThetaOutcome::Unreachable => return f64::NEG_INFINITY,
        ThetaOutcome::NoConvergence(_) => return f64::NEG_INFINITY,
    };
    if theta == 0.0 {
        return -half_norm;
    }
    let mut log_mgf = 0.0;
    for (k, &pk) in pds.iter().enumerate() {
        log_mgf += twist_component(pk, theta * p.costs[k]).1;
    }
    log_mgf - theta * gamma - half_norm
}

/// Minimum-norm factor shift satisfying E[L | Z = mu] >= gamma, found by
/// alternating gradient-direction updates with radius bisection.
pub fn mean_shift_constant_approx(p: &Portfolio, gamma: f64) -> Result<MeanShift> {
    let m = p.m;
    let groups = CostGroups::new(&p.costs);
    let mut pds = vec![0.0; p.d()];
    let objective_at = |z: &[f64], pds: &mut Vec<f64>| tail_bound_objective(p, &groups, gamma, z, pds);
    if gamma >= p.total_cost() {
        return Err(Error::InfeasibleThreshold(format!(
            "gamma = {gamma} is not below the maximum loss {}",
            p.total_cost()
        )));
    }
    if m == 0 || expected_loss_given_z(p, &vec![0.0; m]) >= gamma {
        if m > 0 || expected_loss_given_z(p, &[]) >= gamma {
            let mu = vec![0.0; m];
            let objective = objective_at(&mu, &mut pds);
            return Ok(MeanShift { mu, objective, iterations: 0 });
        }
        return Err(Error::InfeasibleThreshold(
            "no factors to shift and the unconditional mean loss is below gamma".into(),
        ));
    }
    let mut grad = vec![0.0; m];
    let mut z = vec![0.0; m];
    let mut iterations = 0;
    for _ in 0..100 {
        iterations += 1;
        expected_loss_grad(p, &z, &mut grad);
        let norm: f64 = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm <= 0.0 {
            return Err(Error::Convergence(
                "vanishing gradient of the conditional mean loss; no ascent direction".into(),
            ));
        }
        let u: Vec<f64> = grad.iter().map(|g| g / norm).collect();
        // Bracket the radius where E[L | r u] crosses gamma.
        let e_of = |r: f64| {
            let zr: Vec<f64> = u.iter().map(|uj| r * uj).collect();
            expected_loss_given_z(p, &zr)
        };
        let mut hi = 1.0;
        let mut grow = 0;
        while e_of(hi) < gamma {
            hi *= 2.0;
            grow += 1;
            if grow > 60 {
                return Err(Error::Convergence(format!(
                    "conditional mean loss stays below gamma = {gamma} along the ascent direction"
                )));
            }
        }
        let r = crate::roots::find_root(|r| e_of(r) - gamma, 0.0, hi, 1e-12)?;
        let znew: Vec<f64> = u.iter().map(|uj| r * uj).collect();
        let delta = z
            .iter()
            .zip(&znew)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        z = znew;
        let scale = 1.0 + z.iter().map(|v| v * v).sum::<f64>().sqrt();
        if delta <= 1e-10 * scale {
            break;
        }
    }
    let objective = objective_at(&z, &mut pds);
    Ok(MeanShift { mu: z, objective, iterations })
}

/// Maximizer of the tail-bound objective over factor shifts, by multi-start
/// BFGS with central-difference gradients.
pub fn mean_shift_tail_bound(p: &Portfolio, gamma: f64) -> Result<MeanShift> {
    let m = p.m;
    let groups = CostGroups::new(&p.costs);
    if gamma >= p.total_cost() {
        return Err(Error::InfeasibleThreshold(format!(
            "gamma = {gamma} is not below the maximum loss {}",
            p.total_cost()
        )));
    }
    let mut pds = vec![0.0; p.d()];
    if m == 0 {
        let objective = tail_bound_objective(p, &groups, gamma, &[], &mut pds);
        return Ok(MeanShift { mu: Vec::new(), objective, iterations: 0 });
    }
    let mut starts: Vec<Vec<f64>> = vec![vec![0.0; m]];
    if let Ok(ca) = mean_shift_constant_approx(p, gamma) {
        if ca.mu.iter().any(|&v| v != 0.0) {
            starts.push(ca.mu);
        }
    }
    let mut best: Option<MeanShift> = None;
    let mut stalled: Option<(String, Vec<f64>)> = None;
    for start in starts {
        match bfgs_maximize(
            |z, pds| tail_bound_objective(p, &groups, gamma, z, pds),
            start,
            &mut pds,
        ) {
            Ok(ms) => {
                if best.as_ref().map_or(true, |b| ms.objective > b.objective) {
                    best = Some(ms);
                }
            }
            Err(Error::OptimizerStalled { context, best: iterate }) => {
                stalled = Some((context, iterate));
            }
            Err(e) => return Err(e),
        }
    }
    match best {
        Some(b) => Ok(b),
        None => {
            let (context, iterate) = stalled.expect("at least one start ran");
            Err(Error::OptimizerStalled { context, best: iterate })
        }
    }
}

const BFGS_GRAD_TOL: f64 = 1e-6;
const BFGS_MAX_ITER: usize = 300;

fn bfgs_maximize<F>(mut f: F, start: Vec<f64>, pds: &mut Vec<f64>) -> Result<MeanShift>
where
    F: FnMut(&[f64], &mut Vec<f64>) -> f64,
{
    let m = start.len();
    let grad_of = |f: &mut F, z: &[f64], pds: &mut Vec<f64>, g: &mut [f64]| {
        let mut zt = z.to_vec();
        for j in 0..m {
            let h = 1e-4 * (1.0 + z[j].abs());
            zt[j] = z[j] + h;
            let fp = f(&zt, pds);
            zt[j] = z[j] - h;
            let fm = f(&zt, pds);
            zt[j] = z[j];
            g[j] = (fp - fm) / (2.0 * h);
        }
    };
    let mut z = start;
    let mut fz = f(&z, pds);
    if fz == f64::NEG_INFINITY {
        return Err(Error::OptimizerStalled {
            context: "objective is -inf at the start point".into(),
            best: z,
        });
    }
    let mut g = vec![0.0; m];
    grad_of(&mut f, &z, pds, &mut g);
    // Inverse-Hessian approximation, identity start, row-major m x m.
    let mut h_inv: Vec<f64> = (0..m * m).map(|i| if i % (m + 1) == 0 { 1.0 } else { 0.0 }).collect();
    for iter in 0..BFGS_MAX_ITER {
        let gnorm = g.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        if gnorm <= BFGS_GRAD_TOL {
            return Ok(MeanShift { mu: z, objective: fz, iterations: iter });
        }
        // Ascent direction d = H g (H approximates the inverse of -Hessian).
        let mut dir = vec![0.0; m];
        for i in 0..m {
            dir[i] = (0..m).map(|j| h_inv[i * m + j] * g[j]).sum();
        }
        let slope: f64 = dir.iter().zip(&g).map(|(d, gg)| d * gg).sum();
        let dir = if slope <= 0.0 {
            for i in 0..m * m {
                h_inv[i] = if i % (m + 1) == 0 { 1.0 } else { 0.0 };
            }
            g.clone()
        } else {
            dir
        };
        let slope: f64 = dir.iter().zip(&g).map(|(d, gg)| d * gg).sum();
        // Backtracking line search on the ascent condition.
        let mut step = 1.0;
        let mut znew = vec![0.0; m];
        let mut fnew = f64::NEG_INFINITY;
        let mut ok = false;
        for _ in 0..50 {
            for i in 0..m {
                znew[i] = z[i] + step * dir[i];
            }
            fnew = f(&znew, pds);
            if fnew > fz + 1e-4 * step * slope {
                ok = true;
                break;
            }
            step *= 0.5;
        }
        if !ok {
            // No ascent found along the direction: either converged within
            // line-search resolution or genuinely stalled.
            if g.iter().fold(0.0f64, |a, &v| a.max(v.abs())) <= 1e2 * BFGS_GRAD_TOL {
                return Ok(MeanShift { mu: z, objective: fz, iterations: iter });
            }
            return Err(Error::OptimizerStalled {
                context: format!("line search failed at iteration {iter} with |grad| = {gnorm:.3e}"),
                best: z,
            });
        }
        let mut gnew = vec![0.0; m];
        grad_of(&mut f, &znew, pds, &mut gnew);
        // BFGS update on s = znew - z, y = g - gnew (sign flipped for
        // maximization so that s' y > 0 under the curvature condition).
        let s: Vec<f64> = znew.iter().zip(&z).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g.iter().zip(&gnew).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let s_norm: f64 = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        let y_norm: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if sy > 1e-12 * s_norm * y_norm {
            // H <- (I - rho s y')(H)(I - rho y s') + rho s s'.
            let rho = 1.0 / sy;
            let mut hy = vec![0.0; m];
            for i in 0..m {
                hy[i] = (0..m).map(|j| h_inv[i * m + j] * y[j]).sum();
            }
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..m {
                for j in 0..m {
                    h_inv[i * m + j] += -rho * (s[i] * hy[j] + hy[i] * s[j])
                        + rho * rho * yhy * s[i] * s[j]
                        + rho * s[i] * s[j];
                }
            }
        }
        z = znew;
        fz = fnew;
        g = gnew;
    }
    Err(Error::OptimizerStalled {
        context: format!("no convergence in {BFGS_MAX_ITER} iterations"),
        best: z,
    })
}

fn two_step_core(
    model: &Model,
    portfolio: &Portfolio,
    gamma: f64,
    shift: Option<&[f64]>,
    n: usize,
    runs: usize,
    seed: u64,
) -> Result<EstimateReport> {
    if n == 0 || runs == 0 {
        return Err(Error::Parameter("n and runs must be at least 1".into()));
    }
    if shift.is_some() && !matches!(model, Model::Gaussian) {
        return Err(Error::Unsupported(
            "the two-step factor-shift algorithm supports only the Gaussian model".into(),
        ));
    }
    let prep = PreparedModel::new(model, portfolio)?;
    let groups = CostGroups::new(&portfolio.costs);
    let start = Instant::now();
    let mut per_run = Vec::with_capacity(runs);
    for r in 0..runs {
        let family = StreamFamily::new(seed, StreamNamespace::Estimate, r as u64)?;
        let contributions = map_indexed(n, |i| {
            let mut rng = family.stream(i as u64);
            let mut scratch = DrawScratch { pds: vec![0.0; portfolio.d()] };
            is_draw_core(&prep, &groups, gamma, shift, &mut rng, &mut scratch)
                .map(|wl| if wl.loss > gamma { wl.weight } else { 0.0 })
        });
        let mut total = 0.0;
        for c in contributions {
            total += c?;
        }
        per_run.push(total / n as f64);
    }
    Ok(EstimateReport::from_runs(per_run, n, seed, start.elapsed().as_secs_f64() * 1e3))
}

/// Two-step IS estimate: factor mean shift plus conditional exponential
/// twisting (Gaussian model only).
pub fn two_step_estimate(
    model: &Model,
    portfolio: &Portfolio,
    gamma: f64,
    shift: &MeanShift,
    n: usize,
    runs: usize,
    seed: u64,
) -> Result<EstimateReport> {
    if shift.mu.len() != portfolio.m {
        return Err(Error::Parameter(format!(
            "shift length {} does not match m = {}",
            shift.mu.len(),
            portfolio.m
        )));
    }
    two_step_core(model, portfolio, gamma, Some(&shift.mu), n, runs, seed)
}

/// Two-step IS draws (losses and weights) for quantile estimation.
pub fn two_step_sample(
    model: &Model,
    portfolio: &Portfolio,
    gamma: f64,
    shift: &MeanShift,
    n: usize,
    family: &StreamFamily,
) -> Result<Vec<WeightedLoss>> {
    if !matches!(model, Model::Gaussian) {
        return Err(Error::Unsupported(
            "the two-step factor-shift algorithm supports only the Gaussian model".into(),
        ));
    }
    let prep = PreparedModel::new(model, portfolio)?;
    let groups = CostGroups::new(&portfolio.costs);
    let draws = map_indexed(n, |i| {
        let mut rng = family.stream(i as u64);
        let mut scratch = DrawScratch { pds: vec![0.0; portfolio.d()] };
        is_draw_core(&prep, &groups, gamma, Some(&shift.mu), &mut rng, &mut scratch)
    });
    draws.into_iter().collect()
}

/// Weighted VaR and CVaR from importance-sampled (loss, weight) pairs.
///
/// VaR is the smallest order statistic L_(j) whose inclusive tail weight
/// average (1/N) sum_{k=j}^N W_(k) is at most 1 - alpha; CVaR is
/// (1/(N(1-alpha))) sum W_k L_k over {L_k >= VaR}.
pub fn is_var_cvar(losses: &[f64], weights: &[f64], alpha: f64) -> Result<(f64, f64)> {
    if losses.len() != weights.len() || losses.is_empty() {
        return Err(Error::Parameter("losses and weights must be nonempty and equal length".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha = {alpha} must lie strictly inside (0, 1)")));
    }
    for &w in weights {
        if !(w > 0.0) || !w.is_finite() {
            return Err(Error::Domain(format!("weight {w} must be a positive real")));
        }
    }
    let n = losses.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| losses[a].partial_cmp(&losses[b]).unwrap().then(a.cmp(&b)));
    // Inclusive suffix weight sums over the sorted order.
    let mut suffix = vec![0.0; n + 1];
    for j in (0..n).rev() {
        suffix[j] = suffix[j + 1] + weights[order[j]];
    }
    let target = (1.0 - alpha) * n as f64;
    let mut var = None;
    for j in 0..n {
        if suffix[j] <= target {
            var = Some(losses[order[j]]);
            break;
        }
    }
    let var = var.ok_or_else(|| {
        Error::AlphaInfeasible(format!(
            "tail weight {} / N never falls to 1 - alpha = {}",
            suffix[n - 1] / n as f64,
            1.0 - alpha
        ))
    })?;
    let tail: f64 = losses
        .iter()
        .zip(weights)
        .filter(|(&l, _)| l >= var)
        .map(|(&l, &w)| l * w)
        .sum();
    Ok((var, tail / (n as f64 * (1.0 - alpha))))
}
