//! Dynamic splitting estimators over the embedded time-indexed loss process.
//!
//! The loss S(X(t)) decreases from the all-default value toward the static
//! loss at t = 1, so {L > gamma} equals survival of the whole time horizon.
//! Splitting multiplies paths that stay above gamma at intermediate times,
//! estimating the rare-event probability as a product (fixed effort) or a
//! normalized terminal count (fixed factor).

use std::fmt;
use std::path::Path;
use std::time::Instant;

use rand::Rng;

use crate::cmc::EstimateReport;
use crate::embedding::{build_embedding, gamma_bridge, subordinator_step, EmbeddingPlan, SubordinatorState};
use crate::error::{Error, Result};
use crate::parallel::map_indexed;
use crate::portfolio::{Model, Portfolio};
use crate::rng::{RngStream, StreamFamily, StreamNamespace};

/// How survivors are multiplied at each level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitPolicy {
    /// One root; every survivor spawns `s` children at the next level.
    FixedFactor,
    /// `s` slots per level, each filled by resampling a survivor uniformly
    /// with replacement.
    FixedEffort,
}

impl fmt::Display for SplitPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitPolicy::FixedFactor => write!(f, "fixed_factor"),
            SplitPolicy::FixedEffort => write!(f, "fixed_effort"),
        }
    }
}

impl std::str::FromStr for SplitPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed_factor" => Ok(SplitPolicy::FixedFactor),
            "fixed_effort" => Ok(SplitPolicy::FixedEffort),
            other => Err(Error::Parse(format!("unknown split policy {other:?}"))),
        }
    }
}

/// Intermediate time levels plus the splitting policy and factor.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSchedule {
    pub times: Vec<f64>,
    pub policy: SplitPolicy,
    pub split: usize,
}

impl LevelSchedule {
    pub fn new(times: Vec<f64>, policy: SplitPolicy, split: usize) -> Result<Self> {
        if split < 2 {
            return Err(Error::Schedule(format!("split factor {split} must be at least 2")));
        }
        if times.is_empty() {
            return Err(Error::Schedule("schedule needs at least one time level".into()));
        }
        if !(times[0] > 0.0) {
            return Err(Error::Schedule(format!(
                "first level time {} must be strictly positive",
                times[0]
            )));
        }
        for w in times.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::Schedule(format!(
                    "level times must increase strictly: {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if *times.last().unwrap() != 1.0 {
            return Err(Error::Schedule(format!(
                "last level time {} must equal 1",
                times.last().unwrap()
            )));
        }
        Ok(Self { times, policy, split })
    }

    /// Uniform grid t_i = i / levels.
    pub fn uniform(levels: usize, policy: SplitPolicy, split: usize) -> Result<Self> {
        if levels == 0 {
            return Err(Error::Schedule("need at least one level".into()));
        }
        let times = (1..=levels).map(|i| i as f64 / levels as f64).collect();
        Self::new(times, policy, split)
    }

    pub fn levels(&self) -> usize {
        self.times.len()
    }

    /// Text form: `<policy> <split>` header followed by one time per line.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.policy, self.split);
        for t in &self.times {
            out.push_str(&format!("{t}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| {
            let l = l.trim();
            !l.is_empty() && !l.starts_with('#')
        });
        let header = lines.next().ok_or_else(|| Error::Parse("empty schedule file".into()))?;
        let mut parts = header.split_whitespace();
        let policy: SplitPolicy = parts
            .next()
            .ok_or_else(|| Error::Parse("missing policy in schedule header".into()))?
            .parse()?;
        let split: usize = parts
            .next()
            .ok_or_else(|| Error::Parse("missing split factor in schedule header".into()))?
            .parse()
            .map_err(|_| Error::Parse("split factor must be an integer".into()))?;
        if parts.next().is_some() {
            return Err(Error::Parse("schedule header has trailing tokens".into()));
        }
        let times: Result<Vec<f64>> = lines
            .map(|l| {
                l.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad time value {:?}", l.trim())))
            })
            .collect();
        Self::new(times?, policy, split)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Single-root fixed-factor splitting pass. Every survivor of level i spawns
/// `s` extensions at level i+1; the unbiased estimate is the terminal
/// survivor count over s^(L-1).
pub fn fixed_factor_estimate(
    plan: &EmbeddingPlan,
    gamma: f64,
    sched: &LevelSchedule,
    rng: &mut RngStream,
) -> Result<f64> {
    if sched.policy != SplitPolicy::FixedFactor {
        return Err(Error::Parameter("schedule policy is not fixed_factor".into()));
    }
    let gamma_eff = plan.effective_gamma(gamma);
    let levels = sched.levels();
    let mut current = vec![SubordinatorState::origin(plan.dims())];
    let mut prev_t = 0.0;
    for (i, &t) in sched.times.iter().enumerate() {
        let dt = t - prev_t;
        let fanout = if i == 0 { 1 } else { sched.split };
        let mut next = Vec::new();
        for state in &current {
            for _ in 0..fanout {
                let ext = subordinator_step(state, dt, rng);
                if plan.loss(&ext) > gamma_eff {
                    next.push(ext);
                }
            }
        }
        if next.is_empty() {
            return Ok(0.0);
        }
        current = next;
        prev_t = t;
    }
    Ok(current.len() as f64 / (sched.split as f64).powi(levels as i32 - 1))
}

/// Fixed-effort splitting pass: returns the estimate (product of per-level
/// survival fractions) and the fractions themselves.
pub fn fixed_effort_fractions(
    plan: &EmbeddingPlan,
    gamma: f64,
    sched: &LevelSchedule,
    family: &StreamFamily,
) -> Result<(f64, Vec<f64>)> {
    if sched.policy != SplitPolicy::FixedEffort {
        return Err(Error::Parameter("schedule policy is not fixed_effort".into()));
    }
    let gamma_eff = plan.effective_gamma(gamma);
    let s = sched.split;
    let mut fractions = Vec::with_capacity(sched.levels());
    let mut estimate = 1.0;
    let mut survivors: Vec<SubordinatorState> = Vec::new();
    let mut prev_t = 0.0;
    for (i, &t) in sched.times.iter().enumerate() {
        let dt = t - prev_t;
        // Each slot owns one stream so levels can run in parallel yet merge
        // deterministically in slot order.
        let extended = map_indexed(s, |j| {
            let mut rng = family.stream((i * s + j) as u64);
            let parent = if i == 0 {
                SubordinatorState::origin(plan.dims())
            } else {
                survivors[rng.random_range(0..survivors.len())].clone()
            };
            let ext = subordinator_step(&parent, dt, &mut rng);
            if plan.loss(&ext) > gamma_eff {
                Some(ext)
            } else {
                None
            }
        });
        let next: Vec<SubordinatorState> = extended.into_iter().flatten().collect();
        let frac = next.len() as f64 / s as f64;
        fractions.push(frac);
        estimate *= frac;
        if next.is_empty() {
            return Ok((0.0, fractions));
        }
        survivors = next;
        prev_t = t;
    }
    Ok((estimate, fractions))
}

/// Fixed-effort splitting estimate of P(L > gamma) from one pass.
pub fn fixed_effort_estimate(
    plan: &EmbeddingPlan,
    gamma: f64,
    sched: &LevelSchedule,
    family: &StreamFamily,
) -> Result<f64> {
    fixed_effort_fractions(plan, gamma, sched, family).map(|(w, _)| w)
}

/// Replicated splitting driver. For a fixed-effort schedule each run is one
/// pass of effort s * L (`n` is ignored); for a fixed-factor schedule each
/// run averages `n` independent single-root passes.
pub fn splitting_estimate(
    model: &Model,
    portfolio: &Portfolio,
    gamma: f64,
    sched: &LevelSchedule,
    n: usize,
    runs: usize,
    seed: u64,
) -> Result<EstimateReport> {
    if runs == 0 {
        return Err(Error::Parameter("runs must be at least 1".into()));
    }
    let plan = build_embedding(model, portfolio)?;
    let start = Instant::now();
    let mut per_run = Vec::with_capacity(runs);
    let n_per_run = match sched.policy {
        SplitPolicy::FixedEffort => sched.split * sched.levels(),
        SplitPolicy::FixedFactor => {
            if n == 0 {
                return Err(Error::Parameter("n (roots per run) must be at least 1".into()));
            }
            n
        }
    };
    for r in 0..runs {
        let family = StreamFamily::new(seed, StreamNamespace::Estimate, r as u64)?;
        let w = match sched.policy {
            SplitPolicy::FixedEffort => fixed_effort_estimate(&plan, gamma, sched, &family)?,
            SplitPolicy::FixedFactor => {
                let ws = map_indexed(n, |i| {
                    let mut rng = family.stream(i as u64);
                    fixed_factor_estimate(&plan, gamma, sched, &mut rng)
                });
                let mut total = 0.0;
                for w in ws {
                    total += w?;
                }
                total / n as f64
            }
        };
        per_run.push(w);
    }
    Ok(EstimateReport::from_runs(per_run, n_per_run, seed, start.elapsed().as_secs_f64() * 1e3))
}

/// Closed-form mean, variance, and work-normalized variance proxy of the
/// idealized fixed-factor branching process in which the root always enters
/// level 1 and every child survives independently with probability 1/s.
pub fn ideal_case_stats(s: usize, levels: usize) -> Result<(f64, f64, f64)> {
    if s < 2 {
        return Err(Error::Parameter(format!("split factor {s} must be at least 2")));
    }
    if levels == 0 {
        return Err(Error::Parameter("need at least one level".into()));
    }
    let l = levels as f64;
    let sf = s as f64;
    let mean = sf.powf(-(l - 1.0));
    let c = 1.0 / sf;
    let variance = (l - 1.0) * (1.0 - c) / sf.powf(2.0 * l - 2.0);
    let wtvp = (l - 1.0) * (l - 1.0) * (sf - 1.0);
    Ok((mean, variance, wtvp))
}

/// Minimizer of the work-normalized variance factor (s - 1) / (ln s)^2:
/// the root of ln s = 2 - 2/s.
pub fn optimal_split_factor() -> f64 {
    crate::roots::find_root(|s| s.ln() - 2.0 + 2.0 / s, 2.0, 10.0, 1e-14)
        .expect("bracket holds the root")
}

/// Pilot-based level construction: repeatedly bisect the next time so the
/// estimated conditional survival probability is within eps_p of rho, using
/// gamma-bridge resampling between the current time and the horizon.
/// Stops once the remaining leg to t = 1 is no longer rare (survival >= rho)
/// or the next level would land within eps_t of 1.
pub fn adaptive_levels(
    plan: &EmbeddingPlan,
    gamma: f64,
    s: usize,
    rho: f64,
    eps_t: f64,
    eps_p: f64,
    seed: u64,
) -> Result<LevelSchedule> {
    if s < 2 {
        return Err(Error::Parameter(format!("pilot size {s} must be at least 2")));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Parameter(format!("rho = {rho} must lie strictly inside (0, 1)")));
    }
    if !(eps_t > 0.0) || !(eps_p > 0.0) {
        return Err(Error::Parameter("tolerances must be positive".into()));
    }
    let gamma_eff = plan.effective_gamma(gamma);
    let family = StreamFamily::new(seed, StreamNamespace::Levels, 0)?;
    let mut rng = family.stream(0);
    let mut times: Vec<f64> = Vec::new();
    let mut current: Vec<SubordinatorState> =
        (0..s).map(|_| SubordinatorState::origin(plan.dims())).collect();
    let mut t_cur = 0.0;
    for _ in 0..10_000 {
        // Extend every pilot path to the horizon.
        let ends: Vec<SubordinatorState> =
            current.iter().map(|st| subordinator_step(st, 1.0 - t_cur, &mut rng)).collect();
        let frac_end = ends.iter().filter(|e| plan.loss(e) > gamma_eff).count() as f64 / s as f64;
        if frac_end >= rho {
            break;
        }
        // Bisect the next level time; survival decreases in t.
        let mut lo = t_cur;
        let mut hi = 1.0;
        let mut accepted: Option<(f64, Vec<SubordinatorState>)> = None;
        for _ in 0..100 {
            let t_m = 0.5 * (lo + hi);
            let bridged: Result<Vec<SubordinatorState>> = current
                .iter()
                .zip(&ends)
                .map(|(a, b)| gamma_bridge(a, b, t_m, &mut rng))
                .collect();
            let bridged = bridged?;
            let frac =
                bridged.iter().filter(|b| plan.loss(b) > gamma_eff).count() as f64 / s as f64;
            if (frac - rho).abs() <= eps_p {
                accepted = Some((t_m, bridged));
                break;
            }
            if frac > rho {
                lo = t_m;
            } else {
                hi = t_m;
            }
            if hi - lo < 1e-12 {
                break;
            }
        }
        let (t_m, bridged) = accepted.ok_or_else(|| {
            Error::Schedule(format!(
                "bisection could not place a level with survival within {eps_p} of {rho}"
            ))
        })?;
        let survivors: Vec<SubordinatorState> =
            bridged.into_iter().filter(|b| plan.loss(b) > gamma_eff).collect();
        if survivors.is_empty() {
            return Err(Error::Schedule("no pilot path survived the accepted level".into()));
        }
        times.push(t_m);
        // Resample the survivor set back up to s paths.
        current = (0..s)
            .map(|_| survivors[rng.random_range(0..survivors.len())].clone())
            .collect();
        t_cur = t_m;
        if 1.0 - t_m <= eps_t {
            break;
        }
    }
    times.push(1.0);
    LevelSchedule::new(times, SplitPolicy::FixedEffort, s.max(2))
}
