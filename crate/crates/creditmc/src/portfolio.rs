//! Portfolio data model, dependence models, and loss sampling.
//!
//! A portfolio holds `d` obligors with exposure costs `c_k > 0`, default
//! thresholds `x_k`, and an optional `d x m` factor-loading matrix `A`
//! (row-major). Obligor `k` defaults when its latent variable exceeds `x_k`
//! (strict inequality) and the portfolio loss is the sum of the costs of the
//! defaulted obligors.
//!
//! Three dependence models are supported:
//! * Gaussian factor: X = A Z + diag(b) eps with Z ~ N(0, I_m),
//!   eps ~ N(0, I_d), b_k = sqrt(1 - |a_k|^2), so each X_k is standard normal.
//! * Student-t factor: X = sqrt(r / V) (A Z + diag(b) eps) with V ~ chi2(r);
//!   each X_k is t(r).
//! * Clayton copula: a shared Gamma(1/eta, 1) frailty Lambda drives all
//!   obligors; U_k = psi_inv(E_k / Lambda) with E_k ~ Exp(1),
//!   psi_inv(s) = (1 + eta s)^(-1/eta), and X_k = F^{-1}(U_k) for a
//!   continuous marginal F. Given Lambda the obligors default independently
//!   with probability 1 - exp(-Lambda psi(F(x_k))), so the unconditional
//!   default probability is the mixture value
//!   p_k = 1 - (1 + psi(F(x_k)))^(-1/eta), not 1 - F(x_k); the F-scale
//!   thresholds only parameterize the generator argument. The dependence
//!   structure of (U_1, ..., U_d) is exactly the Clayton copula.

use rand::Rng;
use rand_distr::{Exp1, Gamma as GammaDistr, StandardNormal};

use crate::copula::clayton_generator;
use crate::dist::Dist;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::special::{normal_cdf, normal_quantile};

#[derive(Debug, Clone, PartialEq)]
pub struct Portfolio {
    /// Number of systematic factors (columns of the loading matrix).
    pub m: usize,
    /// Exposure cost per obligor, all strictly positive.
    pub costs: Vec<f64>,
    /// Default threshold per obligor.
    pub thresholds: Vec<f64>,
    /// Row-major `d x m` factor loadings.
    pub loadings: Vec<f64>,
    /// Idiosyncratic weights b_k = sqrt(1 - sum_j a_kj^2), all positive.
    pub b: Vec<f64>,
}

impl Portfolio {
    pub fn new(costs: Vec<f64>, thresholds: Vec<f64>, loadings: Vec<f64>, m: usize) -> Result<Self> {
        let d = costs.len();
        if d == 0 {
            return Err(Error::Parameter("portfolio must have at least one obligor".into()));
        }
        if thresholds.len() != d {
            return Err(Error::Parameter(format!(
                "thresholds length {} does not match {} obligors",
                thresholds.len(),
                d
            )));
        }
        if loadings.len() != d * m {
            return Err(Error::Parameter(format!(
                "loadings length {} does not match {} x {}",
                loadings.len(),
                d,
                m
            )));
        }
        let mut b = Vec::with_capacity(d);
        for k in 0..d {
            let c = costs[k];
            if !(c > 0.0) || !c.is_finite() {
                return Err(Error::Parameter(format!("cost c_{} = {c} must be positive", k + 1)));
            }
            if !thresholds[k].is_finite() {
                return Err(Error::Parameter(format!("threshold x_{} must be finite", k + 1)));
            }
            let row = &loadings[k * m..(k + 1) * m];
            let norm2: f64 = row.iter().map(|a| a * a).sum();
            if !norm2.is_finite() {
                return Err(Error::Parameter(format!("loadings of obligor {} not finite", k + 1)));
            }
            if norm2 >= 1.0 {
                return Err(Error::Parameter(format!(
                    "loadings of obligor {} have squared norm {norm2} >= 1",
                    k + 1
                )));
            }
            b.push((1.0 - norm2).sqrt());
        }
        Ok(Self { m, costs, thresholds, loadings, b })
    }

    pub fn d(&self) -> usize {
        self.costs.len()
    }

    pub fn loading_row(&self, k: usize) -> &[f64] {
        &self.loadings[k * self.m..(k + 1) * self.m]
    }

    /// Dot product of obligor k's loading row with a factor vector.
    pub fn factor_dot(&self, k: usize, z: &[f64]) -> f64 {
        self.loading_row(k).iter().zip(z).map(|(a, zj)| a * zj).sum()
    }

    /// Maximum possible loss (all obligors default).
    pub fn total_cost(&self) -> f64 {
        self.costs.iter().sum()
    }

    /// True when every cost is a (positive) integer, which makes the loss
    /// lattice-valued.
    pub fn integer_costs(&self) -> bool {
        self.costs.iter().all(|c| c.fract() == 0.0)
    }
}

/// Dependence model tying the obligors' latent variables together.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Gaussian,
    StudentT { dof: f64 },
    Clayton { eta: f64, marginal: Dist },
}

impl Model {
    pub fn validate(&self) -> Result<()> {
        match self {
            Model::Gaussian => Ok(()),
            Model::StudentT { dof } => {
                if *dof > 0.0 && dof.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Parameter(format!("degrees of freedom {dof} must be positive")))
                }
            }
            Model::Clayton { eta, marginal } => {
                if !(*eta > 0.0) || !eta.is_finite() {
                    return Err(Error::Parameter(format!("eta {eta} must be positive")));
                }
                marginal.validate()
            }
        }
    }

    /// Marginal distribution of each latent variable under this model.
    pub fn marginal(&self) -> Dist {
        match self {
            Model::Gaussian => Dist::Normal,
            Model::StudentT { dof } => Dist::StudentT { dof: *dof },
            Model::Clayton { marginal, .. } => marginal.clone(),
        }
    }
}

/// Latent state drawn once per portfolio scenario.
#[derive(Debug, Clone, PartialEq)]
pub enum Latent {
    Gaussian { z: Vec<f64> },
    StudentT { z: Vec<f64>, v: f64 },
    Clayton { lambda: f64 },
}

/// One sampled scenario: the realized loss, per-obligor latent variable
/// values, default indicators and the shared latent state.
#[derive(Debug, Clone)]
pub struct LossSample {
    pub loss: f64,
    pub defaults: Vec<bool>,
    /// Latent variable X_k per obligor (the values compared to thresholds).
    pub xs: Vec<f64>,
    pub latent: Latent,
}

/// Loss c' B for a default indicator vector.
pub fn portfolio_loss(costs: &[f64], defaults: &[bool]) -> Result<f64> {
    if costs.len() != defaults.len() {
        return Err(Error::Domain(format!(
            "default vector length {} does not match {} obligors",
            defaults.len(),
            costs.len()
        )));
    }
    Ok(loss_of(costs, defaults))
}

fn loss_of(costs: &[f64], defaults: &[bool]) -> f64 {
    costs
        .iter()
        .zip(defaults)
        .filter(|(_, &d)| d)
        .map(|(c, _)| c)
        .sum()
}

/// A validated (model, portfolio) pair with model-specific precomputation,
/// ready for repeated sampling.
#[derive(Debug, Clone)]
pub struct PreparedModel<'a> {
    pub portfolio: &'a Portfolio,
    pub model: &'a Model,
    /// Clayton only: generator values psi_eta(F(x_k)) per obligor.
    psis: Option<Vec<f64>>,
}

impl<'a> PreparedModel<'a> {
    pub fn new(model: &'a Model, portfolio: &'a Portfolio) -> Result<Self> {
        model.validate()?;
        let psis = match model {
            Model::Clayton { eta, marginal } => {
                if portfolio.m != 0 {
                    return Err(Error::Parameter(
                        "the Clayton model carries no factor structure; build the portfolio with m = 0"
                            .into(),
                    ));
                }
                let mut psis = Vec::with_capacity(portfolio.d());
                for (k, &x) in portfolio.thresholds.iter().enumerate() {
                    let u = marginal.cdf(x);
                    if !(u > 0.0 && u < 1.0) {
                        return Err(Error::Domain(format!(
                            "threshold x_{} = {x} is degenerate under the marginal (F(x) = {u})",
                            k + 1
                        )));
                    }
                    psis.push(clayton_generator(u, *eta));
                }
                Some(psis)
            }
            _ => None,
        };
        Ok(Self { portfolio, model, psis })
    }

    pub fn d(&self) -> usize {
        self.portfolio.d()
    }

    /// psi_eta(F(x_k)) cache; only present for the Clayton model.
    pub fn clayton_psis(&self) -> Option<&[f64]> {
        self.psis.as_deref()
    }

    /// Unconditional default probability of each obligor.
    pub fn marginal_pds(&self) -> Vec<f64> {
        let p = self.portfolio;
        match self.model {
            Model::Gaussian => p.thresholds.iter().map(|&x| normal_cdf(-x)).collect(),
            Model::StudentT { dof } => p
                .thresholds
                .iter()
                .map(|&x| crate::dist::student_t_cdf(*dof, -x))
                .collect(),
            // Mixture over the Gamma(1/eta, 1) frailty:
            // E[1 - exp(-Lambda psi_k)] = 1 - (1 + psi_k)^(-1/eta).
            Model::Clayton { eta, .. } => {
                let psis = self.psis.as_ref().expect("prepared Clayton cache");
                psis.iter().map(|&psi| -(-psi.ln_1p() / eta).exp_m1()).collect()
            }
        }
    }

    /// Draw the shared latent state.
    pub fn sample_latent(&self, rng: &mut RngStream) -> Latent {
        match self.model {
            Model::Gaussian => Latent::Gaussian { z: standard_normal_vec(self.portfolio.m, rng) },
            Model::StudentT { dof } => {
                let z = standard_normal_vec(self.portfolio.m, rng);
                let chi2 = GammaDistr::new(dof / 2.0, 2.0).expect("validated dof");
                let v = rng.sample(chi2);
                Latent::StudentT { z, v }
            }
            Model::Clayton { eta, .. } => {
                let frailty = GammaDistr::new(1.0 / eta, 1.0).expect("validated eta");
                Latent::Clayton { lambda: rng.sample(frailty) }
            }
        }
    }

    /// Checked variant of [`Self::conditional_pds_into`]: validates the
    /// latent state against the model before evaluating.
    pub fn conditional_pds(&self, latent: &Latent) -> Result<Vec<f64>> {
        match (self.model, latent) {
            (Model::Gaussian, Latent::Gaussian { z })
            | (Model::StudentT { .. }, Latent::StudentT { z, .. }) => {
                if z.len() != self.portfolio.m {
                    return Err(Error::Domain(format!(
                        "factor vector length {} does not match m = {}",
                        z.len(),
                        self.portfolio.m
                    )));
                }
                if let Latent::StudentT { v, .. } = latent {
                    if !(*v > 0.0) {
                        return Err(Error::Domain(format!("mixing variable V = {v} must be positive")));
                    }
                }
            }
            (Model::Clayton { .. }, Latent::Clayton { lambda }) => {
                if !(*lambda > 0.0) {
                    return Err(Error::Domain(format!("frailty {lambda} must be positive")));
                }
            }
            _ => {
                return Err(Error::Domain("latent state does not match the model".into()));
            }
        }
        let mut out = vec![0.0; self.d()];
        self.conditional_pds_into(latent, &mut out);
        Ok(out)
    }

    /// Conditional default probabilities given the latent state, written into
    /// `out` (length d). The latent state must match the model.
    pub fn conditional_pds_into(&self, latent: &Latent, out: &mut [f64]) {
        let p = self.portfolio;
        assert_eq!(out.len(), p.d());
        match (self.model, latent) {
            (Model::Gaussian, Latent::Gaussian { z }) => {
                for k in 0..p.d() {
                    out[k] = normal_cdf((p.factor_dot(k, z) - p.thresholds[k]) / p.b[k]);
                }
            }
            (Model::StudentT { dof }, Latent::StudentT { z, v }) => {
                let scale = (v / dof).sqrt();
                for k in 0..p.d() {
                    out[k] = normal_cdf((p.factor_dot(k, z) - scale * p.thresholds[k]) / p.b[k]);
                }
            }
            (Model::Clayton { .. }, Latent::Clayton { lambda }) => {
                let psis = self.psis.as_ref().expect("prepared Clayton cache");
                for k in 0..p.d() {
                    out[k] = -(-lambda * psis[k]).exp_m1();
                }
            }
            _ => panic!("latent state does not match the model"),
        }
    }

    /// Draw one full scenario by sampling every latent variable explicitly
    /// and comparing against the thresholds.
    pub fn sample_loss(&self, rng: &mut RngStream) -> LossSample {
        let p = self.portfolio;
        let d = p.d();
        let latent = self.sample_latent(rng);
        let mut defaults = vec![false; d];
        let mut xs = vec![0.0; d];
        match (&latent, self.model) {
            (Latent::Gaussian { z }, Model::Gaussian) => {
                for k in 0..d {
                    let eps: f64 = rng.sample(StandardNormal);
                    xs[k] = p.factor_dot(k, z) + p.b[k] * eps;
                }
            }
            (Latent::StudentT { z, v }, Model::StudentT { dof }) => {
                let scale = (dof / v).sqrt();
                for k in 0..d {
                    let eps: f64 = rng.sample(StandardNormal);
                    xs[k] = scale * (p.factor_dot(k, z) + p.b[k] * eps);
                }
            }
            (Latent::Clayton { lambda }, Model::Clayton { eta, marginal }) => {
                for k in 0..d {
                    let e: f64 = rng.sample(Exp1);
                    let u = (1.0 + eta * e / lambda).powf(-1.0 / eta);
                    xs[k] = if u >= 1.0 {
                        f64::INFINITY
                    } else if u <= 0.0 {
                        f64::NEG_INFINITY
                    } else {
                        marginal.inv_cdf(u).expect("u strictly inside (0,1)")
                    };
                }
            }
            _ => unreachable!(),
        }
        for k in 0..d {
            defaults[k] = xs[k] > p.thresholds[k];
        }
        let loss = loss_of(&p.costs, &defaults);
        LossSample { loss, defaults, xs, latent }
    }

    /// Draw defaults from given conditional probabilities (one uniform per
    /// obligor) and return the loss.
    pub fn loss_from_pds(&self, pds: &[f64], rng: &mut RngStream) -> f64 {
        let mut loss = 0.0;
        for (k, &q) in pds.iter().enumerate() {
            if rng.random::<f64>() < q {
                loss += self.portfolio.costs[k];
            }
        }
        loss
    }
}

fn standard_normal_vec(n: usize, rng: &mut RngStream) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Convert a marginal default probability into the matching threshold,
/// using quantile symmetry for the symmetric families.
pub fn threshold_from_pd(marginal: &Dist, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("default probability {p} outside (0, 1)")));
    }
    match marginal {
        Dist::Normal => Ok(-normal_quantile(p)),
        Dist::StudentT { .. } => Ok(-marginal.inv_cdf(p)?),
        _ => marginal.inv_cdf(1.0 - p),
    }
}

// ---------------------------------------------------------------------------
// Benchmark portfolio family
// ---------------------------------------------------------------------------

/// Exposure costs c_k = ceil(5k/d)^2 and default probabilities
/// P_k = 0.01 (1 + sin(16 pi k / d)) for k = 1..d.
fn benchmark_costs_pds(d: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if d == 0 || d % 100 != 0 || d > 1000 {
        return Err(Error::Parameter(format!(
            "benchmark size d = {d} must be a multiple of 100 in 100..=1000"
        )));
    }
    let mut costs = Vec::with_capacity(d);
    let mut pds = Vec::with_capacity(d);
    for k in 1..=d {
        let c = (5.0 * k as f64 / d as f64).ceil().powi(2);
        let p = 0.01 * (1.0 + (16.0 * std::f64::consts::PI * k as f64 / d as f64).sin());
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Parameter(format!(
                "benchmark size d = {d} yields degenerate default probability {p} at k = {k}"
            )));
        }
        costs.push(c);
        pds.push(p);
    }
    Ok((costs, pds))
}

/// Block factor loadings: one global factor (weight 0.8), one group factor
/// per block of 100 obligors and one sub-group factor per block of 10 within
/// the group (weight 0.4 each); m = 21 columns, b_k = 0.2.
fn benchmark_loadings(d: usize) -> (Vec<f64>, usize) {
    let m = 21;
    let mut loadings = vec![0.0; d * m];
    for k in 0..d {
        loadings[k * m] = 0.8;
        loadings[k * m + 1 + k / 100] = 0.4;
        loadings[k * m + 11 + (k % 100) / 10] = 0.4;
    }
    (loadings, m)
}

/// Benchmark Gaussian-factor portfolio of size d (multiple of 100, at most
/// 1000).
pub fn benchmark_gaussian(d: usize) -> Result<(Portfolio, Model)> {
    let (costs, pds) = benchmark_costs_pds(d)?;
    let thresholds = pds.iter().map(|&p| -normal_quantile(p)).collect();
    let (loadings, m) = benchmark_loadings(d);
    Ok((Portfolio::new(costs, thresholds, loadings, m)?, Model::Gaussian))
}

/// Benchmark Student-t portfolio: same costs, probabilities and loadings as
/// the Gaussian variant, thresholds taken from the t quantile.
pub fn benchmark_student_t(d: usize, dof: f64) -> Result<(Portfolio, Model)> {
    let model = Model::StudentT { dof };
    model.validate()?;
    let (costs, pds) = benchmark_costs_pds(d)?;
    let marginal = model.marginal();
    let thresholds = pds
        .iter()
        .map(|&p| threshold_from_pd(&marginal, p))
        .collect::<Result<Vec<f64>>>()?;
    let (loadings, m) = benchmark_loadings(d);
    Ok((Portfolio::new(costs, thresholds, loadings, m)?, model))
}

/// Benchmark Clayton portfolio: d homogeneous obligors with unit cost,
/// threshold 3 under a unit-rate exponential marginal, and no factors.
/// The frailty mixture puts each obligor's unconditional default
/// probability near 1.04% (see [`PreparedModel::marginal_pds`]).
pub fn benchmark_clayton(d: usize, eta: f64) -> Result<(Portfolio, Model)> {
    if d == 0 {
        return Err(Error::Parameter("benchmark size d must be positive".into()));
    }
    let model = Model::Clayton { eta, marginal: Dist::Exponential { rate: 1.0 } };
    model.validate()?;
    let portfolio = Portfolio::new(vec![1.0; d], vec![3.0; d], Vec::new(), 0)?;
    Ok((portfolio, model))
}

// ---------------------------------------------------------------------------
// CSV input and output
// ---------------------------------------------------------------------------

/// Read a portfolio from CSV with header `k,c,x,a1,...,am` (thresholds given
/// directly) or `k,c,p,a1,...,am` (marginal default probabilities, converted
/// through the model's marginal distribution, which must then be supplied).
pub fn portfolio_from_csv_reader<R: std::io::Read>(
    reader: R,
    marginal: Option<&Dist>,
) -> Result<Portfolio> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Parse(format!("csv header: {e}")))?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < 3 || cols[0] != "k" || cols[1] != "c" {
        return Err(Error::Parse(
            "portfolio csv must start with columns k,c and then x or p".into(),
        ));
    }
    let pd_form = match cols[2] {
        "x" => false,
        "p" => true,
        other => {
            return Err(Error::Parse(format!(
                "third portfolio column must be x or p, found {other}"
            )))
        }
    };
    let m = cols.len() - 3;
    for (j, col) in cols[3..].iter().enumerate() {
        let expect = format!("a{}", j + 1);
        if *col != expect {
            return Err(Error::Parse(format!(
                "loading column {} should be named {expect}, found {col}",
                j + 4
            )));
        }
    }
    if pd_form && marginal.is_none() {
        return Err(Error::Config(
            "portfolio csv provides default probabilities; a model marginal is required to convert them"
                .into(),
        ));
    }

    let mut costs = Vec::new();
    let mut thresholds = Vec::new();
    let mut loadings = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(format!("csv row {}: {e}", row + 2)))?;
        if rec.len() != cols.len() {
            return Err(Error::Parse(format!(
                "csv row {} has {} fields, expected {}",
                row + 2,
                rec.len(),
                cols.len()
            )));
        }
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Parse(format!("csv row {}: bad {what} value {s:?}", row + 2)))
        };
        let k: usize = rec[0]
            .parse()
            .map_err(|_| Error::Parse(format!("csv row {}: bad index {:?}", row + 2, &rec[0])))?;
        if k != row + 1 {
            return Err(Error::Parse(format!(
                "csv row {}: obligor index {k} out of order (expected {})",
                row + 2,
                row + 1
            )));
        }
        costs.push(parse(&rec[1], "cost")?);
        let third = parse(&rec[2], if pd_form { "probability" } else { "threshold" })?;
        thresholds.push(if pd_form {
            threshold_from_pd(marginal.unwrap(), third)?
        } else {
            third
        });
        for j in 0..m {
            loadings.push(parse(&rec[3 + j], "loading")?);
        }
    }
    Portfolio::new(costs, thresholds, loadings, m)
}

pub fn portfolio_from_csv(path: &std::path::Path, marginal: Option<&Dist>) -> Result<Portfolio> {
    let file = std::fs::File::open(path)?;
    portfolio_from_csv_reader(file, marginal)
}

/// Serialize a portfolio in the threshold (`x`) form; floats use the shortest
/// representation that round-trips.
pub fn portfolio_to_csv(p: &Portfolio) -> String {
    let mut out = String::from("k,c,x");
    for j in 1..=p.m {
        out.push_str(&format!(",a{j}"));
    }
    out.push('\n');
    for k in 0..p.d() {
        out.push_str(&format!("{},{},{}", k + 1, p.costs[k], p.thresholds[k]));
        for &a in p.loading_row(k) {
            out.push_str(&format!(",{a}"));
        }
        out.push('\n');
    }
    out
}
