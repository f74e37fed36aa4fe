use std::collections::VecDeque;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{brownian_estimates, rescaled_knots, BrownianConfig, Functional};
use crate::ensemble;
use crate::environment::Environment;
use crate::error::{LabError, Result};
use crate::reference::{first_exceedance_shift, EpsilonThresholds, GridPath};
use crate::rng;
use crate::walk::{self, JumpSampler, SimOptions, WalkCursor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyConfig {
    /// Paths behind the item (ii), item (iii) and nice probabilities.
    pub mc_samples: usize,
    /// Paths per `m` behind the item (i) surrogate.
    pub surrogate_paths: usize,
    /// The surrogate checks `m = fraction * n` for each fraction.
    pub surrogate_fractions: Vec<f64>,
    pub functionals: Vec<Functional>,
    pub brownian: BrownianConfig,
    /// Number of metric terms evaluated on walk paths, i.e. the rescaled
    /// horizon the path is read up to. Dropped terms weigh at most `2^(1-T)`.
    pub metric_terms: usize,
    pub sim: SimOptions,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            mc_samples: 1000,
            surrogate_paths: 1000,
            surrogate_fractions: vec![0.25, 0.5, 1.0],
            functionals: Functional::CATALOGUE.to_vec(),
            brownian: BrownianConfig::default(),
            metric_terms: 8,
            sim: SimOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteClassification {
    pub x: i64,
    pub epsilon: f64,
    pub n: usize,
    pub samples: usize,
    /// Item (i) is a statistical surrogate on a finite grid of `m`.
    pub surrogate_grid: Vec<usize>,
    pub item_i: bool,
    pub item_i_discrepancy: f64,
    pub item_i_radius: f64,
    pub item_ii: bool,
    pub item_ii_probability: f64,
    pub item_ii_radius: f64,
    pub item_iii: bool,
    pub item_iii_probability: f64,
    pub item_iii_radius: f64,
    pub is_good: bool,
    pub nice_probability: f64,
    pub nice_radius: f64,
    pub is_nice: bool,
}

fn binomial(hits: usize, m: usize) -> (f64, f64) {
    let p = hits as f64 / m as f64;
    (p, (p * (1.0 - p) / m as f64).sqrt())
}

/// Smallest range over the windows `[k, k + w]`, `k <= w`; needs `2w + 1` sites.
fn min_window_range(xs: &[i64], w: usize) -> i64 {
    let (mut hi, mut lo) = (VecDeque::<usize>::new(), VecDeque::<usize>::new());
    let mut best = i64::MAX;
    for j in 0..=2 * w {
        while hi.back().is_some_and(|&i| xs[i] <= xs[j]) {
            hi.pop_back();
        }
        hi.push_back(j);
        while lo.back().is_some_and(|&i| xs[i] >= xs[j]) {
            lo.pop_back();
        }
        lo.push_back(j);
        if j >= w {
            let k = j - w;
            while hi[0] < k {
                hi.pop_front();
            }
            while lo[0] < k {
                lo.pop_front();
            }
            best = best.min(xs[hi[0]] - xs[lo[0]]);
        }
    }
    best
}

/// The walk as a grid path with `dt = 1/m`, generated on demand.
struct WalkGrid<'c, 's, 'e> {
    cursor: &'c mut WalkCursor<'s, 'e>,
    scale: f64,
    dt: f64,
}

impl GridPath for WalkGrid<'_, '_, '_> {
    fn dt(&self) -> f64 {
        self.dt
    }

    fn value(&mut self, k: usize) -> Result<f64> {
        if self.cursor.len() < k {
            self.cursor.extend_to(k)?;
        }
        let s = self.cursor.steps();
        Ok((s[k] - s[0]) as f64 / self.scale)
    }
}

struct Horizons {
    window: usize,
    threshold: f64,
}

fn horizons(th: &EpsilonThresholds, n: usize, sigma: f64) -> Horizons {
    Horizons {
        window: (th.h_eps * n as f64 + 1e-9).floor() as usize,
        threshold: th.delta_eps * th.h_eps.sqrt() * sigma * (n as f64).sqrt(),
    }
}

fn check_inputs(eps: f64, n: usize, sigma: f64, samples: usize) -> Result<()> {
    if !(eps > 0.0) || n < 2 || !(sigma > 0.0) || samples == 0 {
        return Err(LabError::InvalidArgument("need eps > 0, n >= 2, sigma > 0 and a positive sample count".into()));
    }
    Ok(())
}

/// `P^x[R_0(h n) >= delta h^(1/2) sigma sqrt(n)]` with its binomial standard
/// error. Uses the same paths as [`classify_site`].
pub fn nice_probability(
    env: &Environment,
    x: i64,
    n: usize,
    thresholds: &EpsilonThresholds,
    sigma: f64,
    samples: usize,
    sim: &SimOptions,
    seed: u64,
) -> Result<(f64, f64)> {
    check_inputs(thresholds.epsilon, n, sigma, samples)?;
    let hz = horizons(thresholds, n, sigma);
    walk::check_margin(env, x, hz.window, sim)?;
    let sampler = JumpSampler::new(env);
    nice_with(&sampler, x, n, &hz, samples, seed)
}

fn nice_with(sampler: &JumpSampler<'_>, x: i64, n: usize, hz: &Horizons, samples: usize, seed: u64) -> Result<(f64, f64)> {
    let hits = ensemble::map_indices(samples, |i| -> Result<bool> {
        let mut c = WalkCursor::new(sampler, x, rng::derive_seed(seed, "classify", &[n as u64, i as u64]))?;
        c.extend_to(hz.window)?;
        Ok(walk::range_of(c.steps(), 0, hz.window).r as f64 >= hz.threshold)
    });
    let mut count = 0;
    for h in hits {
        count += usize::from(h?);
    }
    Ok(binomial(count, samples))
}

/// Estimate the good-site items and the nice-site probability of `x`.
///
/// Items (ii) and (iii) and the nice event are read off the same paths, and
/// the item (ii) event is contained in the nice event, so a good site is
/// always nice. Path seeds depend on `(n, i)` only, not on `x`.
pub fn classify_site(
    env: &Environment,
    x: i64,
    n: usize,
    thresholds: &EpsilonThresholds,
    sigma: f64,
    cfg: &ClassifyConfig,
    seed: u64,
) -> Result<SiteClassification> {
    let eps = thresholds.epsilon;
    check_inputs(eps, n, sigma, cfg.mc_samples)?;
    if cfg.metric_terms == 0 || cfg.surrogate_paths < 2 {
        return Err(LabError::InvalidArgument("need at least one metric term and two surrogate paths".into()));
    }
    let hz = horizons(thresholds, n, sigma);
    let longest = (cfg.metric_terms * n + hz.window).max(2 * hz.window);
    walk::check_margin(env, x, longest, &cfg.sim)?;
    let sampler = JumpSampler::new(env);

    let scale = sigma * (n as f64).sqrt();
    let events = ensemble::map_indices(cfg.mc_samples, |i| -> Result<(bool, bool, bool)> {
        let mut c = WalkCursor::new(&sampler, x, rng::derive_seed(seed, "classify", &[n as u64, i as u64]))?;
        c.extend_to(2 * hz.window)?;
        let s = c.steps();
        let r0 = walk::range_of(s, 0, hz.window);
        let nice = r0.r as f64 >= hz.threshold;
        let ii = nice
            && r0.r_plus as f64 >= hz.threshold
            && r0.r_minus.abs() as f64 >= hz.threshold
            && min_window_range(s, hz.window) as f64 >= hz.threshold;
        let sup = s[..=hz.window].iter().map(|&y| (y - x).abs()).max().unwrap_or(0) as f64 / scale;
        let iii = sup <= eps && {
            let mut grid = WalkGrid { cursor: &mut c, scale, dt: 1.0 / n as f64 };
            first_exceedance_shift(&mut grid, eps, hz.window, cfg.metric_terms)?.is_none()
        };
        Ok((ii, iii, nice))
    });
    let (mut ii, mut iii, mut nice) = (0, 0, 0);
    for e in events {
        let (a, b, c) = e?;
        ii += usize::from(a);
        iii += usize::from(b);
        nice += usize::from(c);
    }
    let (p_ii, r_ii) = binomial(ii, cfg.mc_samples);
    let (p_iii, r_iii) = binomial(iii, cfg.mc_samples);
    let (p_nice, r_nice) = binomial(nice, cfg.mc_samples);

    // item (i) surrogate: every catalogue functional within eps at every m of the grid
    let grid: Vec<usize> = cfg.surrogate_fractions.iter().map(|f| ((f * n as f64).round() as usize).max(2)).collect();
    let brownian = brownian_estimates(&cfg.functionals, &cfg.brownian, rng::derive_seed(seed, "brownian", &[]))?;
    let (mut worst, mut worst_radius) = (0.0f64, 0.0f64);
    for &m in &grid {
        let vals = ensemble::map_indices(cfg.surrogate_paths, |i| -> Result<Vec<f64>> {
            let mut c = WalkCursor::new(&sampler, x, rng::derive_seed(seed, "classify-i", &[m as u64, i as u64]))?;
            c.extend_to(m)?;
            let knots = rescaled_knots(c.steps(), m, sigma);
            Ok(cfg.functionals.iter().map(|f| f.eval(&knots, 1.0 / m as f64)).collect())
        });
        let vals: Vec<Vec<f64>> = vals.into_iter().collect::<Result<_>>()?;
        let k = vals.len() as f64;
        for (j, b) in brownian.iter().enumerate() {
            let mean = vals.iter().map(|v| v[j]).sum::<f64>() / k;
            let var = vals.iter().map(|v| (v[j] - mean).powi(2)).sum::<f64>() / (k - 1.0);
            let d = (mean - b.mean).abs();
            if d >= worst {
                worst = d;
                worst_radius = (var / k + b.standard_error.powi(2)).sqrt();
            }
        }
    }

    let item_i = worst <= eps;
    let item_ii = p_ii >= 1.0 - eps;
    let item_iii = p_iii >= 1.0 - eps;
    Ok(SiteClassification {
        x,
        epsilon: eps,
        n,
        samples: cfg.mc_samples,
        surrogate_grid: grid,
        item_i,
        item_i_discrepancy: worst,
        item_i_radius: worst_radius,
        item_ii,
        item_ii_probability: p_ii,
        item_ii_radius: r_ii,
        item_iii,
        item_iii_probability: p_iii,
        item_iii_radius: r_iii,
        is_good: item_i && item_ii && item_iii,
        nice_probability: p_nice,
        nice_radius: r_nice,
        is_nice: p_nice >= 1.0 - 3.0 * eps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityConfig {
    /// Half-width of the scanned window in units of `2 sqrt(n)`.
    pub h: f64,
    pub nu: f64,
    /// Sites tried per interval before giving up on it.
    pub sites_per_interval: usize,
    pub mc_samples: usize,
    pub sim: SimOptions,
}

impl Default for DensityConfig {
    fn default() -> Self {
        DensityConfig { h: 1.0, nu: 0.45, sites_per_interval: 4, mc_samples: 400, sim: SimOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalScan {
    pub lo: i64,
    pub hi: i64,
    pub tried: usize,
    pub nice_site: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub n: usize,
    pub nu: f64,
    pub epsilon: f64,
    pub interval_length: usize,
    pub intervals: Vec<IntervalScan>,
    pub fraction: f64,
}

/// Split `[-2H sqrt(n), 2H sqrt(n)]` into intervals of length `n^nu` and look
/// for one nice site in each, trying sites in a seeded random order.
///
/// The order of each interval is a fixed permutation, so raising the budget
/// only appends sites and can only raise the fraction.
pub fn nice_site_density_scan(
    env: &Environment,
    n: usize,
    thresholds: &EpsilonThresholds,
    sigma: f64,
    cfg: &DensityConfig,
    seed: u64,
) -> Result<DensityReport> {
    let lower = 1.0 / (2.0 + env.tail_beta);
    if !(cfg.nu > lower && cfg.nu < 0.5) {
        return Err(LabError::InvalidArgument(format!("nu = {} outside ({lower}, 1/2)", cfg.nu)));
    }
    check_inputs(thresholds.epsilon, n, sigma, cfg.mc_samples)?;
    let half = (2.0 * cfg.h * (n as f64).sqrt()).floor() as i64;
    let len = ((n as f64).powf(cfg.nu).ceil() as i64).max(1);
    let hz = horizons(thresholds, n, sigma);
    for x in [-half, half] {
        walk::check_margin(env, x, hz.window, &cfg.sim)?;
    }
    let sampler = JumpSampler::new(env);

    let mut intervals = Vec::new();
    let mut lo = -half;
    while lo <= half {
        let hi = (lo + len - 1).min(half);
        let mut sites: Vec<i64> = (lo..=hi).collect();
        sites.shuffle(&mut rng::stream(seed, "density-order", &[n as u64, rng::site_index(lo)]));
        let mut scan = IntervalScan { lo, hi, tried: 0, nice_site: None };
        for &x in sites.iter().take(cfg.sites_per_interval) {
            scan.tried += 1;
            let (p, _) = nice_with(&sampler, x, n, &hz, cfg.mc_samples, seed)?;
            if p >= 1.0 - 3.0 * thresholds.epsilon {
                scan.nice_site = Some(x);
                break;
            }
        }
        intervals.push(scan);
        lo = hi + 1;
    }
    let found = intervals.iter().filter(|s| s.nice_site.is_some()).count();
    Ok(DensityReport {
        n,
        nu: cfg.nu,
        epsilon: thresholds.epsilon,
        interval_length: len as usize,
        fraction: found as f64 / intervals.len() as f64,
        intervals,
    })
}
