//! Experiment orchestration: configuration, method dispatch, threshold
//! resolution, and record assembly for the command-line driver.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cmc::{cmc_tail_estimate, cmc_var_cvar_estimate, EstimateReport};
use crate::cross_entropy::{ce_pilot_fit, ce_t_estimate};
use crate::dist::Dist;
use crate::embedding::build_embedding;
use crate::error::{Error, Result};
use crate::importance::{
    is_var_cvar, mean_shift_tail_bound, one_step_estimate, one_step_sample, two_step_estimate,
    two_step_sample,
};
use crate::portfolio::{
    benchmark_clayton, benchmark_gaussian, benchmark_student_t, portfolio_from_csv, Model,
    Portfolio,
};
use crate::report::{QuantileRecord, ReportRecord};
use crate::rng::{StreamFamily, StreamNamespace};
use crate::splitting::{adaptive_levels, splitting_estimate, LevelSchedule, SplitPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gaussian,
    T,
    Clayton,
}

impl ModelKind {
    pub fn tag(self) -> &'static str {
        match self {
            ModelKind::Gaussian => "gaussian",
            ModelKind::T => "t",
            ModelKind::Clayton => "clayton",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(ModelKind::Gaussian),
            "t" => Ok(ModelKind::T),
            "clayton" => Ok(ModelKind::Clayton),
            other => Err(Error::Config(format!("unknown model {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Cmc,
    Is1,
    Is2,
    Ce,
    DsFf,
    DsFe,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::Cmc => "cmc",
            Method::Is1 => "is1",
            Method::Is2 => "is2",
            Method::Ce => "ce",
            Method::DsFf => "ds_ff",
            Method::DsFe => "ds_fe",
        }
    }

    pub fn is_splitting(self) -> bool {
        matches!(self, Method::DsFf | Method::DsFe)
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cmc" => Ok(Method::Cmc),
            "is1" => Ok(Method::Is1),
            "is2" => Ok(Method::Is2),
            "ce" => Ok(Method::Ce),
            "ds-ff" | "ds_ff" => Ok(Method::DsFf),
            "ds-fe" | "ds_fe" => Ok(Method::DsFe),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

/// Flat experiment configuration; every field has a default so partial JSON
/// documents and flag-only invocations both work.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub method: Method,
    /// Benchmark portfolio size when no portfolio file is given.
    pub d: usize,
    /// Degrees of freedom for the t model.
    pub dof: f64,
    /// Clayton dependence parameter.
    pub eta: f64,
    pub alpha: f64,
    /// Loss threshold; when absent it is estimated from a CMC VaR pass.
    pub gamma: Option<f64>,
    pub n: usize,
    pub runs: usize,
    pub seed: u64,
    /// Splitting factor (and adaptive pilot size).
    pub split: usize,
    /// Number of uniform time levels when no schedule file is given.
    pub levels: usize,
    /// Pilot sample size for the cross-entropy fit.
    pub pilot_n: usize,
    /// Adaptive level-construction parameters.
    pub rho: f64,
    pub eps_p: f64,
    pub eps_t: f64,
    /// Optional portfolio CSV path; absent means the built-in benchmark.
    pub portfolio: Option<String>,
    /// Optional schedule file path for the splitting methods.
    pub schedule: Option<String>,
    pub out: Option<String>,
    pub format: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelKind::Gaussian,
            method: Method::Cmc,
            d: 1000,
            dof: 3.0,
            eta: 5.5,
            alpha: 0.95,
            gamma: None,
            n: 10_000,
            runs: 10,
            seed: 1,
            split: 1000,
            levels: 10,
            pilot_n: 100_000,
            rho: 0.5,
            eps_p: 0.05,
            eps_t: 1e-3,
            portfolio: None,
            schedule: None,
            out: None,
            format: "csv".to_string(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("bad config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Materialize the model and portfolio (benchmark or file-loaded).
    pub fn build_model(&self) -> Result<(Portfolio, Model)> {
        let model = match self.model {
            ModelKind::Gaussian => Model::Gaussian,
            ModelKind::T => Model::StudentT { dof: self.dof },
            ModelKind::Clayton => {
                Model::Clayton { eta: self.eta, marginal: Dist::Exponential { rate: 1.0 } }
            }
        };
        match &self.portfolio {
            None => match self.model {
                ModelKind::Gaussian => benchmark_gaussian(self.d),
                ModelKind::T => benchmark_student_t(self.d, self.dof),
                ModelKind::Clayton => benchmark_clayton(self.d, self.eta),
            },
            Some(path) => {
                model.validate()?;
                let p = portfolio_from_csv(Path::new(path), Some(&model.marginal()))?;
                Ok((p, model))
            }
        }
    }

    fn check_support(&self) -> Result<()> {
        match (self.method, self.model) {
            (Method::Is2, ModelKind::Gaussian) => Ok(()),
            (Method::Is2, _) => Err(Error::Config(
                "the two-step factor-shift method supports only the gaussian model".into(),
            )),
            (Method::Ce, ModelKind::T) => Ok(()),
            (Method::Ce, _) => Err(Error::Config(
                "the cross-entropy method supports only the t model".into(),
            )),
            _ => Ok(()),
        }
    }

    fn schedule_for(&self, policy: SplitPolicy) -> Result<LevelSchedule> {
        match &self.schedule {
            Some(path) => {
                let sched = LevelSchedule::load(Path::new(path))?;
                if sched.policy != policy {
                    return Err(Error::Config(format!(
                        "schedule file {} has policy {}, but the method needs {}",
                        path, sched.policy, policy
                    )));
                }
                Ok(sched)
            }
            None => LevelSchedule::uniform(self.levels, policy, self.split),
        }
    }
}

/// Resolve the loss threshold: use the configured value or estimate the
/// alpha-VaR with a CMC pass on its own stream namespace.
pub fn resolve_gamma(cfg: &ExperimentConfig, model: &Model, portfolio: &Portfolio) -> Result<f64> {
    if let Some(g) = cfg.gamma {
        return Ok(g);
    }
    let (var_rep, _) =
        cmc_var_cvar_estimate(model, portfolio, cfg.alpha, cfg.n, cfg.runs, cfg.seed)?;
    Ok(var_rep.point)
}

/// Run one tail-probability experiment and assemble its report row.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(ReportRecord, EstimateReport)> {
    cfg.check_support()?;
    let (portfolio, model) = cfg.build_model()?;
    let gamma = resolve_gamma(cfg, &model, &portfolio)?;
    let report = match cfg.method {
        Method::Cmc => cmc_tail_estimate(&model, &portfolio, gamma, cfg.n, cfg.runs, cfg.seed)?,
        Method::Is1 => one_step_estimate(&model, &portfolio, gamma, cfg.n, cfg.runs, cfg.seed)?,
        Method::Is2 => {
            let shift = mean_shift_tail_bound(&portfolio, gamma)?;
            two_step_estimate(&model, &portfolio, gamma, &shift, cfg.n, cfg.runs, cfg.seed)?
        }
        Method::Ce => {
            let params = ce_pilot_fit(&portfolio, cfg.dof, cfg.alpha, cfg.pilot_n, cfg.seed)?;
            ce_t_estimate(&portfolio, cfg.dof, gamma, &params, cfg.n, cfg.runs, cfg.seed)?
        }
        Method::DsFf => {
            let sched = cfg.schedule_for(SplitPolicy::FixedFactor)?;
            splitting_estimate(&model, &portfolio, gamma, &sched, cfg.n, cfg.runs, cfg.seed)?
        }
        Method::DsFe => {
            let sched = cfg.schedule_for(SplitPolicy::FixedEffort)?;
            splitting_estimate(&model, &portfolio, gamma, &sched, cfg.n, cfg.runs, cfg.seed)?
        }
    };
    let record =
        ReportRecord::new(cfg.model.tag(), cfg.method.tag(), cfg.alpha, gamma, &report);
    Ok((record, report))
}

/// Run a VaR/CVaR experiment. CMC works for every model; the IS methods
/// extract the quantities from one weighted sample per run, twisted toward
/// the (given or CMC-estimated) threshold.
pub fn run_quantile(cfg: &ExperimentConfig) -> Result<QuantileRecord> {
    cfg.check_support()?;
    if cfg.method.is_splitting() || cfg.method == Method::Ce {
        return Err(Error::Config(format!(
            "method {} does not provide VaR/CVaR estimation",
            cfg.method.tag()
        )));
    }
    let (portfolio, model) = cfg.build_model()?;
    let start = Instant::now();
    let (var, cvar, runs, n) = match cfg.method {
        Method::Cmc => {
            let (v, c) =
                cmc_var_cvar_estimate(&model, &portfolio, cfg.alpha, cfg.n, cfg.runs, cfg.seed)?;
            (v.point, c.point, cfg.runs, cfg.n)
        }
        Method::Is1 | Method::Is2 => {
            let gamma = resolve_gamma(cfg, &model, &portfolio)?;
            let shift = if cfg.method == Method::Is2 {
                Some(mean_shift_tail_bound(&portfolio, gamma)?)
            } else {
                None
            };
            let mut vars = Vec::with_capacity(cfg.runs);
            let mut cvars = Vec::with_capacity(cfg.runs);
            for r in 0..cfg.runs {
                // The threshold-resolution pass owns the quantile namespace;
                // the weighted sample draws from the estimate namespace so
                // the two passes never share streams.
                let family = StreamFamily::new(cfg.seed, StreamNamespace::Estimate, r as u64)?;
                let draws = match &shift {
                    Some(s) => two_step_sample(&model, &portfolio, gamma, s, cfg.n, &family)?,
                    None => one_step_sample(&model, &portfolio, gamma, cfg.n, &family)?,
                };
                let losses: Vec<f64> = draws.iter().map(|w| w.loss).collect();
                // A draw from a conditionally non-rare regime can carry a
                // likelihood ratio so small it underflows to zero; the true
                // weight is positive, so floor it at the smallest normal
                // float (invisible next to the N(1-alpha) mass threshold).
                let weights: Vec<f64> =
                    draws.iter().map(|w| w.weight.max(f64::MIN_POSITIVE)).collect();
                let (v, c) = is_var_cvar(&losses, &weights, cfg.alpha)?;
                vars.push(v);
                cvars.push(c);
            }
            (
                crate::stats::mean(&vars),
                crate::stats::mean(&cvars),
                cfg.runs,
                cfg.n,
            )
        }
        _ => unreachable!("filtered above"),
    };
    Ok(QuantileRecord {
        model: cfg.model.tag().to_string(),
        method: cfg.method.tag().to_string(),
        alpha: cfg.alpha,
        var,
        cvar,
        runs,
        n_per_run: n,
        seed: cfg.seed,
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Construct an adaptive level schedule for the configured model and
/// threshold (resolving the threshold first if necessary).
pub fn build_levels(cfg: &ExperimentConfig) -> Result<LevelSchedule> {
    let (portfolio, model) = cfg.build_model()?;
    let gamma = resolve_gamma(cfg, &model, &portfolio)?;
    let plan = build_embedding(&model, &portfolio)?;
    adaptive_levels(&plan, gamma, cfg.split, cfg.rho, cfg.eps_t, cfg.eps_p, cfg.seed)
}
