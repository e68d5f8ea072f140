//! Crude Monte Carlo estimators of tail probability, VaR and CVaR, plus the
//! replication drivers shared by every estimator in the crate.
//!
//! A driver runs R independent replications of N draws each; the report
//! carries the per-run estimates, their mean, and the relative error
//! sample_std(per_run) / (mean · sqrt(R)).

use std::time::Instant;

use crate::error::{Error, Result};
use crate::parallel::map_indexed;
use crate::portfolio::{Model, Portfolio, PreparedModel};
use crate::rng::{StreamFamily, StreamNamespace};
use crate::stats::{guarded_ceil, mean, sample_std};

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    /// Mean of the per-run estimates.
    pub point: f64,
    pub per_run: Vec<f64>,
    pub runs: usize,
    pub n_per_run: usize,
    /// sample_std(per_run) / (point * sqrt(runs)); 0 when the spread is zero.
    pub relative_error: f64,
    pub seed: u64,
    pub elapsed_ms: f64,
}

impl EstimateReport {
    pub fn from_runs(per_run: Vec<f64>, n_per_run: usize, seed: u64, elapsed_ms: f64) -> Self {
        let runs = per_run.len();
        let point = mean(&per_run);
        let relative_error = relative_error_of(&per_run);
        Self { point, per_run, runs, n_per_run, relative_error, seed, elapsed_ms }
    }

    /// Relative error in percent, as reported in result tables.
    pub fn re_pct(&self) -> f64 {
        self.relative_error * 100.0
    }

    /// Standard error of the point estimate: sample_std / sqrt(runs).
    pub fn std_error(&self) -> f64 {
        sample_std(&self.per_run) / (self.per_run.len() as f64).sqrt()
    }
}

fn relative_error_of(per_run: &[f64]) -> f64 {
    let sd = sample_std(per_run);
    if sd == 0.0 {
        0.0
    } else {
        sd / (mean(per_run) * (per_run.len() as f64).sqrt())
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("alpha = {alpha} must lie strictly inside (0, 1)")))
    }
}

fn check_nonempty(losses: &[f64]) -> Result<()> {
    if losses.is_empty() {
        Err(Error::Domain("loss sample is empty".into()))
    } else {
        Ok(())
    }
}

/// Fraction of losses strictly exceeding gamma.
pub fn cmc_tail_prob(losses: &[f64], gamma: f64) -> Result<f64> {
    check_nonempty(losses)?;
    let count = losses.iter().filter(|&&l| l > gamma).count();
    Ok(count as f64 / losses.len() as f64)
}

/// The ceil(alpha * N)-th smallest order statistic of the losses.
pub fn cmc_var(losses: &[f64], alpha: f64) -> Result<f64> {
    check_nonempty(losses)?;
    check_alpha(alpha)?;
    let mut sorted = losses.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(var_of_sorted(&sorted, alpha))
}

fn var_of_sorted(sorted: &[f64], alpha: f64) -> f64 {
    let n = sorted.len();
    let idx = guarded_ceil(alpha * n as f64).clamp(1, n);
    sorted[idx - 1]
}

/// CVaR estimator (1/(N(1-alpha))) * sum of L_k over {L_k >= v}; ties at v
/// are all kept.
pub fn cmc_cvar(losses: &[f64], alpha: f64, v: f64) -> Result<f64> {
    check_nonempty(losses)?;
    check_alpha(alpha)?;
    let tail: f64 = losses.iter().filter(|&&l| l >= v).sum();
    Ok(tail / (losses.len() as f64 * (1.0 - alpha)))
}

/// Draw n independent losses, one per stream index, in parallel.
pub fn sample_losses(prep: &PreparedModel, n: usize, family: &StreamFamily) -> Vec<f64> {
    map_indexed(n, |i| {
        let mut rng = family.stream(i as u64);
        prep.sample_loss(&mut rng).loss
    })
}

fn check_run_shape(n: usize, runs: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Parameter("n must be at least 1".into()));
    }
    if runs == 0 {
        return Err(Error::Parameter("runs must be at least 1".into()));
    }
    Ok(())
}

/// CMC tail-probability experiment: R runs of N draws.
pub fn cmc_tail_estimate(
    model: &Model,
    portfolio: &Portfolio,
    gamma: f64,
    n: usize,
    runs: usize,
    seed: u64,
) -> Result<EstimateReport> {
    check_run_shape(n, runs)?;
    let prep = PreparedModel::new(model, portfolio)?;
    let start = Instant::now();
    let mut per_run = Vec::with_capacity(runs);
    for r in 0..runs {
        let family = StreamFamily::new(seed, StreamNamespace::Estimate, r as u64)?;
        let losses = sample_losses(&prep, n, &family);
        per_run.push(cmc_tail_prob(&losses, gamma)?);
    }
    Ok(EstimateReport::from_runs(per_run, n, seed, start.elapsed().as_secs_f64() * 1e3))
}

/// CMC VaR and CVaR experiment sharing one set of draws per run; streams come
/// from the quantile namespace so a tail-probability experiment with the same
/// seed keeps its own independent draws.
pub fn cmc_var_cvar_estimate(
    model: &Model,
    portfolio: &Portfolio,
    alpha: f64,
    n: usize,
    runs: usize,
    seed: u64,
) -> Result<(EstimateReport, EstimateReport)> {
    check_run_shape(n, runs)?;
    check_alpha(alpha)?;
    let prep = PreparedModel::new(model, portfolio)?;
    let start = Instant::now();
    let mut var_runs = Vec::with_capacity(runs);
    let mut cvar_runs = Vec::with_capacity(runs);
    for r in 0..runs {
        let family = StreamFamily::new(seed, StreamNamespace::Quantile, r as u64)?;
        let mut losses = sample_losses(&prep, n, &family);
        losses.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let v = var_of_sorted(&losses, alpha);
        var_runs.push(v);
        cvar_runs.push(cmc_cvar(&losses, alpha, v)?);
    }
    let elapsed = start.elapsed().as_secs_f64() * 1e3;
    Ok((
        EstimateReport::from_runs(var_runs, n, seed, elapsed),
        EstimateReport::from_runs(cvar_runs, n, seed, elapsed),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::portfolio::benchmark_clayton;
    use crate::rng::RngStream;
    use proptest::prelude::*;
    use rand::Rng;

    fn one_to_hundred() -> Vec<f64> {
        (1..=100).map(|i| i as f64).collect()
    }

    #[test]
    fn tail_prob_examples() {
        let losses = one_to_hundred();
        assert_eq!(cmc_tail_prob(&losses, 90.0).unwrap(), 0.10);
        assert_eq!(cmc_tail_prob(&losses, 0.5).unwrap(), 1.0);
        assert_eq!(cmc_tail_prob(&losses, 100.0).unwrap(), 0.0);
        assert_eq!(cmc_tail_prob(&losses, 1000.0).unwrap(), 0.0);
        assert!(cmc_tail_prob(&[], 1.0).is_err());
    }

    #[test]
    fn var_examples() {
        let losses = one_to_hundred();
        assert_eq!(cmc_var(&losses, 0.9).unwrap(), 90.0);
        let ten: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        assert_eq!(cmc_var(&ten, 0.95).unwrap(), 10.0);
        assert_eq!(cmc_var(&[5.0, 5.0, 5.0], 0.3).unwrap(), 5.0);
        assert_eq!(cmc_var(&[5.0, 5.0, 5.0], 0.99).unwrap(), 5.0);
        assert!(cmc_var(&losses, 0.0).is_err());
        assert!(cmc_var(&losses, 1.0).is_err());
        // Unsorted input is handled by the estimator itself.
        assert_eq!(cmc_var(&[4.0, 1.0, 3.0, 2.0], 0.75).unwrap(), 3.0);
    }

    #[test]
    fn cvar_examples() {
        let losses = one_to_hundred();
        let c = cmc_cvar(&losses, 0.9, 90.0).unwrap();
        assert!((c - 104.5).abs() < 1e-12);
        let c = cmc_cvar(&losses, 0.99, 99.0).unwrap();
        assert!((c - 199.0).abs() < 1e-12);
        // N(1-alpha) = 1 with v at the maximum returns that loss.
        let c = cmc_cvar(&[1.0, 2.0, 3.0, 4.0], 0.75, 4.0).unwrap();
        assert!((c - 4.0).abs() < 1e-12);
    }

    #[test]
    fn tail_prob_monotone_in_gamma() {
        let losses = one_to_hundred();
        let mut prev = 2.0;
        for g in 0..110 {
            let p = cmc_tail_prob(&losses, g as f64).unwrap();
            assert!(p <= prev);
            prev = p;
        }
    }

    #[test]
    fn var_monotone_in_alpha() {
        let losses = one_to_hundred();
        let mut prev = f64::NEG_INFINITY;
        for i in 1..20 {
            let v = cmc_var(&losses, i as f64 / 20.0).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn tail_prob_of_var_consistency() {
        let losses = one_to_hundred();
        for alpha in [0.5, 0.75, 0.9, 0.95, 0.99] {
            let v = cmc_var(&losses, alpha).unwrap();
            let p = cmc_tail_prob(&losses, v).unwrap();
            assert!(p <= 1.0 - alpha + 1.0 / losses.len() as f64);
        }
    }

    #[test]
    fn clt_variance_of_var_estimator() {
        // R runs of N exponential losses; the sampling variance of the 0.9
        // quantile should match alpha(1-alpha)/(N f(q)^2) = 9e-4 with
        // f = density at the true quantile ln 10.
        let n = 10_000;
        let runs = 100;
        let mut vars = Vec::with_capacity(runs);
        for r in 0..runs {
            let mut rng = RngStream::new(77, r as u64);
            let mut losses: Vec<f64> = (0..n)
                .map(|_| {
                    let u: f64 = rng.random();
                    -(-u).ln_1p()
                })
                .collect();
            losses.sort_by(|a, b| a.partial_cmp(b).unwrap());
            vars.push(var_of_sorted(&losses, 0.9));
        }
        let m = mean(&vars);
        let emp_var = crate::stats::sample_variance(&vars);
        let theory = 0.9 * 0.1 / (n as f64 * 0.1 * 0.1);
        assert!((m - 10.0f64.ln()).abs() < 0.02, "mean {m}");
        assert!(
            emp_var > theory / 1.5 && emp_var < theory * 1.5,
            "empirical {emp_var} vs theory {theory}"
        );
    }

    #[test]
    fn report_statistics() {
        let rep = EstimateReport::from_runs(vec![0.1, 0.2, 0.3], 1000, 9, 1.5);
        assert!((rep.point - 0.2).abs() < 1e-15);
        assert_eq!(rep.runs, 3);
        assert_eq!(rep.n_per_run, 1000);
        let expect = 0.1 / (0.2 * 3.0f64.sqrt());
        assert!((rep.relative_error - expect).abs() < 1e-12);
        assert!((rep.re_pct() - 100.0 * expect).abs() < 1e-10);
        let flat = EstimateReport::from_runs(vec![0.0, 0.0], 10, 9, 0.0);
        assert_eq!(flat.relative_error, 0.0);
    }

    #[test]
    fn driver_is_deterministic_and_seed_sensitive() {
        let (p, model) = benchmark_clayton(20, 1.5).unwrap();
        let a = cmc_tail_estimate(&model, &p, 4.0, 500, 3, 101).unwrap();
        let b = cmc_tail_estimate(&model, &p, 4.0, 500, 3, 101).unwrap();
        assert_eq!(a.per_run, b.per_run);
        assert_eq!(a.point, b.point);
        let c = cmc_tail_estimate(&model, &p, 4.0, 500, 3, 102).unwrap();
        assert_ne!(a.per_run, c.per_run);
        // Tail-probability and quantile experiments use disjoint namespaces,
        // and the var/cvar pair is internally consistent.
        let (v, cv) = cmc_var_cvar_estimate(&model, &p, 0.9, 500, 3, 101).unwrap();
        assert_eq!(v.runs, 3);
        assert!(cv.point >= v.point);
        assert!(cmc_tail_estimate(&model, &p, 4.0, 0, 1, 1).is_err());
        assert!(cmc_var_cvar_estimate(&model, &p, 1.2, 10, 1, 1).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn var_is_an_order_statistic_and_cvar_dominates(
            losses in proptest::collection::vec(0.0f64..1000.0, 1..80),
            alpha in 0.01f64..0.99,
        ) {
            let v = cmc_var(&losses, alpha).unwrap();
            prop_assert!(losses.contains(&v));
            let c = cmc_cvar(&losses, alpha, v).unwrap();
            prop_assert!(c >= v - 1e-9);
            let p = cmc_tail_prob(&losses, v).unwrap();
            prop_assert!(p <= 1.0 - alpha + 1.0 / losses.len() as f64 + 1e-12);
        }
    }
}
