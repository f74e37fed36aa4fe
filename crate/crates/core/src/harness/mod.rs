//! Experiments on top of the walk and the Brownian reference: diffusivity
//! estimation, good/nice site classification and uniform CLT sweeps.

mod classify;
pub mod report;
mod uclt;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ensemble;
use crate::environment::Environment;
use crate::error::{LabError, Result};
use crate::reference::oracle;
use crate::rng;
use crate::walk::{self, JumpSampler, SimOptions};

pub use classify::{
    classify_site, nice_probability, nice_site_density_scan, ClassifyConfig, DensityConfig, DensityReport, IntervalScan,
    SiteClassification,
};
pub use uclt::{
    brownian_estimates, start_grid, uclt_experiment, BrownianConfig, BrownianEstimate, GridPolicy, SetRow, UcltConfig,
    UcltReport, UcltRow, UcltSup,
};

/// Bounded, uniformly continuous path functionals on `C[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Functional {
    /// `min(1, sup_{t<=1} |w(t)|)`
    SupAbs,
    /// `cos w(1)`
    CosEnd,
    /// `min(1, max(0, w(1)))`
    ClampEnd,
    /// `exp(-int_0^1 w^2)`, trapezoid rule on the knots
    ExpEnergy,
    /// `1`
    Const,
}

impl Functional {
    pub const CATALOGUE: [Functional; 4] = [Functional::SupAbs, Functional::CosEnd, Functional::ClampEnd, Functional::ExpEnergy];

    pub fn name(self) -> &'static str {
        match self {
            Functional::SupAbs => "sup-abs",
            Functional::CosEnd => "cos-end",
            Functional::ClampEnd => "clamp-end",
            Functional::ExpEnergy => "exp-energy",
            Functional::Const => "const",
        }
    }

    /// Evaluate on a piecewise-linear path with knots `0, dt, ..., 1`.
    pub fn eval(self, knots: &[f64], dt: f64) -> f64 {
        let end = *knots.last().expect("nonempty path");
        match self {
            Functional::SupAbs => knots.iter().fold(0.0f64, |m, v| m.max(v.abs())).min(1.0),
            Functional::CosEnd => end.cos(),
            Functional::ClampEnd => end.clamp(0.0, 1.0),
            Functional::ExpEnergy => {
                let inner: f64 = knots[1..knots.len() - 1].iter().map(|v| v * v).sum();
                let energy = dt * (inner + 0.5 * (knots[0] * knots[0] + end * end));
                (-energy).exp()
            }
            Functional::Const => 1.0,
        }
    }

    /// `E[F(W)]` in closed form.
    pub fn brownian_mean(self) -> f64 {
        match self {
            Functional::SupAbs => oracle::mean_capped_abs_sup(),
            Functional::CosEnd => oracle::mean_cos_endpoint(),
            Functional::ClampEnd => oracle::mean_clamped_endpoint(),
            Functional::ExpEnergy => oracle::mean_exp_neg_energy(),
            Functional::Const => 1.0,
        }
    }
}

impl fmt::Display for Functional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Functional {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        [Functional::SupAbs, Functional::CosEnd, Functional::ClampEnd, Functional::ExpEnergy, Functional::Const]
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| LabError::Parse { what: "functional", detail: format!("unknown functional {s:?}") })
    }
}

/// Path sets for the portmanteau items: a closed set, its open complement and
/// a continuity set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathSet {
    /// `{sup_{t<=1} |w| <= 1}`, closed.
    SupWithin,
    /// `{sup_{t<=1} |w| > 1}`, open.
    SupBeyond,
    /// `{w(1) <= q}` with `q` the upper quartile of the standard normal.
    EndBelow,
}

impl PathSet {
    pub const CATALOGUE: [PathSet; 3] = [PathSet::SupWithin, PathSet::SupBeyond, PathSet::EndBelow];

    pub fn name(self) -> &'static str {
        match self {
            PathSet::SupWithin => "sup-within-1",
            PathSet::SupBeyond => "sup-beyond-1",
            PathSet::EndBelow => "end-below-q75",
        }
    }

    pub fn quartile() -> f64 {
        oracle::normal_quantile(0.75)
    }

    /// Indicator on a piecewise-linear path with knots on `[0, 1]`.
    pub fn contains(self, knots: &[f64]) -> bool {
        let sup = knots.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        match self {
            PathSet::SupWithin => sup <= 1.0,
            PathSet::SupBeyond => sup > 1.0,
            PathSet::EndBelow => *knots.last().unwrap() <= Self::quartile(),
        }
    }

    pub fn brownian_probability(self) -> f64 {
        match self {
            PathSet::SupWithin => oracle::prob_abs_sup_below(1.0, 1.0),
            PathSet::SupBeyond => 1.0 - oracle::prob_abs_sup_below(1.0, 1.0),
            PathSet::EndBelow => 0.75,
        }
    }
}

/// Knots `(X_k - X_0) / (sigma sqrt(n))`, `k = 0..=n`, of the rescaled path.
pub fn rescaled_knots(steps: &[i64], n: usize, sigma: f64) -> Vec<f64> {
    let scale = sigma * (n as f64).sqrt();
    let x0 = steps[0];
    steps[..=n].iter().map(|&x| (x - x0) as f64 / scale).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaConfig {
    pub n_list: Vec<usize>,
    pub paths_per_n: usize,
    /// Paths are spread round-robin over these starting sites.
    pub starts: Vec<i64>,
    pub sim: SimOptions,
}

impl Default for SigmaConfig {
    fn default() -> Self {
        SigmaConfig { n_list: vec![1000, 3000, 10_000], paths_per_n: 10_000, starts: vec![0], sim: SimOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariancePoint {
    pub n: usize,
    pub variance: f64,
    pub standard_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaEstimate {
    pub sigma: f64,
    pub standard_error: f64,
    pub sigma_sq: f64,
    pub sigma_sq_standard_error: f64,
    pub n_list: Vec<usize>,
    pub paths_per_n: usize,
    pub env_id: String,
    pub points: Vec<VariancePoint>,
}

/// Weighted least squares of `Var(X_n)` on `n` through the origin.
pub fn estimate_sigma(env: &Environment, cfg: &SigmaConfig, seed: u64) -> Result<SigmaEstimate> {
    let (lo, hi) = (cfg.n_list.iter().min(), cfg.n_list.iter().max());
    match (lo, hi) {
        (Some(&lo), Some(&hi)) if cfg.n_list.len() >= 3 && lo > 0 && hi >= 10 * lo => {}
        _ => return Err(LabError::InvalidArgument("n list needs at least 3 values spanning a decade".into())),
    }
    if cfg.starts.is_empty() || cfg.paths_per_n < 2 {
        return Err(LabError::InvalidArgument("need at least one start and two paths".into()));
    }
    for &x in &cfg.starts {
        walk::check_margin(env, x, *hi.unwrap(), &cfg.sim)?;
    }
    let sampler = JumpSampler::new(env);
    let mut points = Vec::new();
    for &n in &cfg.n_list {
        let disp = ensemble::map_indices(cfg.paths_per_n, |i| -> Result<f64> {
            let x = cfg.starts[i % cfg.starts.len()];
            let s = rng::derive_seed(seed, "sigma", &[n as u64, rng::site_index(x), i as u64]);
            Ok((walk::endpoint(&sampler, x, n, s)? - x) as f64)
        });
        let disp: Vec<f64> = disp.into_iter().collect::<Result<_>>()?;
        let m = disp.len() as f64;
        let mean = disp.iter().sum::<f64>() / m;
        let var = disp.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (m - 1.0);
        let m4 = disp.iter().map(|d| (d - mean).powi(4)).sum::<f64>() / m;
        points.push(VariancePoint { n, variance: var, standard_error: ((m4 - var * var).max(0.0) / m).sqrt() });
    }
    let (mut num, mut den) = (0.0, 0.0);
    for p in &points {
        let w = 1.0 / p.standard_error.powi(2).max(f64::MIN_POSITIVE);
        num += w * p.n as f64 * p.variance;
        den += w * (p.n as f64).powi(2);
    }
    let slope = num / den;
    let slope_se = den.sqrt().recip();
    let sigma = slope.sqrt();
    Ok(SigmaEstimate {
        sigma,
        standard_error: slope_se / (2.0 * sigma),
        sigma_sq: slope,
        sigma_sq_standard_error: slope_se,
        n_list: cfg.n_list.clone(),
        paths_per_n: cfg.paths_per_n,
        env_id: env.env_id(),
        points,
    })
}

/// Per-step variance of a spatially homogeneous field: `sum_y y^2 c_y 2 / C`.
pub fn homogeneous_step_variance(profile: &[f64]) -> f64 {
    let c: f64 = 2.0 * profile.iter().sum::<f64>();
    2.0 * profile.iter().enumerate().map(|(i, w)| ((i + 1) as f64).powi(2) * w).sum::<f64>() / c
}
