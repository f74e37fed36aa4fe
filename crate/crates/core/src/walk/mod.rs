//! Quenched random walk: simulation, path statistics and diffusive rescaling.

mod alias;
mod dump;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::ensemble;
use crate::environment::Environment;
use crate::error::{LabError, Result};
use crate::rng::{self, Stream};

pub use alias::{site_table, AliasTable, JumpSampler};
pub use dump::{read_path, write_path};

/// `p(x, y) = omega(x, y) / C_x`.
pub fn transition_probability(env: &Environment, x: i64, y: i64) -> Result<f64> {
    let c = env.total_conductance(x)?;
    Ok(env.conductance(x, y) / c)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Path {
    pub start: i64,
    /// `X_0, X_1, ..., X_n`.
    pub steps: Vec<i64>,
    pub env_id: String,
    pub seed: u64,
}

impl Path {
    /// Number of steps `n` (the path holds `n + 1` sites).
    pub fn len(&self) -> usize {
        self.steps.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn endpoint(&self) -> i64 {
        *self.steps.last().expect("path holds X_0")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Required distance to the edge of the interior, in units of `sqrt(n) ln(n)`.
    pub margin_factor: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { margin_factor: 6.0 }
    }
}

impl SimOptions {
    pub fn required_margin(&self, n_steps: usize) -> i64 {
        if n_steps < 2 {
            return 0;
        }
        let n = n_steps as f64;
        (self.margin_factor * n.sqrt() * n.ln()).ceil() as i64
    }
}

/// Distance from `x` to the nearest non-interior site.
pub fn margin(env: &Environment, x: i64) -> i64 {
    let (lo, hi) = env.interior();
    (x - lo).min(hi - x)
}

/// Pre-flight check shared by every simulation entry point.
pub fn check_margin(env: &Environment, start: i64, n_steps: usize, opts: &SimOptions) -> Result<()> {
    if !env.is_interior(start) {
        return Err(LabError::BoundarySite { site: start });
    }
    let have = margin(env, start);
    let need = opts.required_margin(n_steps);
    if have < need {
        return Err(LabError::MarginTooSmall { start, margin: have, required: need, steps: n_steps });
    }
    Ok(())
}

/// Incrementally extendable walk; used when the needed horizon is only known
/// while the path is being inspected.
pub struct WalkCursor<'s, 'e> {
    sampler: &'s JumpSampler<'e>,
    rng: Stream,
    steps: Vec<i64>,
    seed: u64,
}

impl<'s, 'e> WalkCursor<'s, 'e> {
    pub fn new(sampler: &'s JumpSampler<'e>, start: i64, seed: u64) -> Result<Self> {
        if !sampler.env().is_interior(start) {
            return Err(LabError::BoundarySite { site: start });
        }
        Ok(WalkCursor { sampler, rng: rng::stream_from_seed(seed), steps: vec![start], seed })
    }

    pub fn steps(&self) -> &[i64] {
        &self.steps
    }

    /// Extend until the path holds `n + 1` sites.
    pub fn extend_to(&mut self, n: usize) -> Result<()> {
        let env = self.sampler.env();
        self.steps.reserve(n.saturating_sub(self.len()));
        let mut x = *self.steps.last().unwrap();
        while self.steps.len() <= n {
            x += i64::from(self.sampler.jump(x, self.rng.next_u64()));
            if !env.is_interior(x) {
                return Err(LabError::WalkExited { partial: Box::new(self.clone_path()) });
            }
            self.steps.push(x);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.steps.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn clone_path(&self) -> Path {
        Path { start: self.steps[0], steps: self.steps.clone(), env_id: self.sampler.env().env_id(), seed: self.seed }
    }

    pub fn into_path(self) -> Path {
        let env_id = self.sampler.env().env_id();
        Path { start: self.steps[0], steps: self.steps, env_id, seed: self.seed }
    }
}

/// Simulate `n_steps` steps from `start` using a shared sampler.
pub fn simulate_with(sampler: &JumpSampler<'_>, start: i64, n_steps: usize, seed: u64, opts: &SimOptions) -> Result<Path> {
    check_margin(sampler.env(), start, n_steps, opts)?;
    let mut cursor = WalkCursor::new(sampler, start, seed)?;
    cursor.extend_to(n_steps)?;
    Ok(cursor.into_path())
}

pub fn simulate(env: &Environment, start: i64, n_steps: usize, seed: u64, opts: &SimOptions) -> Result<Path> {
    simulate_with(&JumpSampler::new(env), start, n_steps, seed, opts)
}

/// Seed of path `index` in an ensemble started at `start`.
pub fn ensemble_seed(master: u64, label: &str, start: i64, index: usize) -> u64 {
    rng::derive_seed(master, label, &[rng::site_index(start), index as u64])
}

/// `count` independent paths from `start`; path `i` uses
/// [`ensemble_seed`]`(master, "walk", start, i)`.
pub fn simulate_ensemble(
    sampler: &JumpSampler<'_>,
    start: i64,
    n_steps: usize,
    count: usize,
    master: u64,
    opts: &SimOptions,
) -> Result<Vec<Path>> {
    check_margin(sampler.env(), start, n_steps, opts)?;
    ensemble::map_indices(count, |i| simulate_with(sampler, start, n_steps, ensemble_seed(master, "walk", start, i), opts))
        .into_iter()
        .collect()
}

/// `X_n` for a single path, without storing the trajectory. The caller is
/// responsible for the margin check.
pub fn endpoint(sampler: &JumpSampler<'_>, start: i64, n_steps: usize, seed: u64) -> Result<i64> {
    let env = sampler.env();
    let mut rng = rng::stream_from_seed(seed);
    let mut x = start;
    for _ in 0..n_steps {
        x += i64::from(sampler.jump(x, rng.next_u64()));
        if !env.is_interior(x) {
            return Err(LabError::BoundarySite { site: x });
        }
    }
    Ok(x)
}

/// Run from `start` until the walk leaves the open interval `(a, b)`.
/// Returns the exit time and exit site, or `None` if the walk is still inside
/// after `max_steps` steps.
pub fn run_to_exit(sampler: &JumpSampler<'_>, start: i64, a: i64, b: i64, seed: u64, max_steps: usize) -> Result<Option<(usize, i64)>> {
    let env = sampler.env();
    if start <= a || start >= b {
        return Err(LabError::NotInterior { site: start, a, b });
    }
    if !env.is_interior(a + 1) || !env.is_interior(b - 1) {
        let (x_min, x_max) = env.window();
        return Err(LabError::IntervalMargin { a, b, radius: env.truncation_radius(), x_min, x_max });
    }
    let mut rng = rng::stream_from_seed(seed);
    let mut x = start;
    for t in 1..=max_steps {
        x += i64::from(sampler.jump(x, rng.next_u64()));
        if x <= a || x >= b {
            return Ok(Some((t, x)));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RangeStats {
    pub base: usize,
    pub horizon: usize,
    /// `max_{s <= m} (X_{n+s} - X_n)`.
    pub r_plus: i64,
    /// `min_{s <= m} (X_{n+s} - X_n)`.
    pub r_minus: i64,
    pub r: i64,
}

pub fn range_of(steps: &[i64], base: usize, horizon: usize) -> RangeStats {
    let origin = steps[base];
    let (mut hi, mut lo) = (0i64, 0i64);
    for &x in &steps[base..=base + horizon] {
        hi = hi.max(x - origin);
        lo = lo.min(x - origin);
    }
    RangeStats { base, horizon, r_plus: hi, r_minus: lo, r: hi - lo }
}

pub fn range_stats(path: &Path, base: usize, horizon: usize) -> Result<RangeStats> {
    if base + horizon > path.len() {
        return Err(LabError::PathTooShort { available: path.len(), requested: base + horizon });
    }
    Ok(range_of(&path.steps, base, horizon))
}

/// Polygonal interpolation of `k/n -> X_k / (sigma sqrt(n))`.
#[derive(Debug, Clone, PartialEq)]
pub struct RescaledPath {
    pub n: usize,
    pub sigma: f64,
    knots: Vec<f64>,
}

impl RescaledPath {
    pub fn from_steps(steps: &[i64], n: usize, sigma: f64) -> Self {
        let scale = sigma * (n as f64).sqrt();
        RescaledPath { n, sigma, knots: steps.iter().map(|&x| x as f64 / scale).collect() }
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Largest time at which the path is defined.
    pub fn horizon(&self) -> f64 {
        (self.knots.len() - 1) as f64 / self.n as f64
    }

    pub fn eval(&self, t: f64) -> f64 {
        let nt = t * self.n as f64;
        let k = nt.floor();
        let i = k as usize;
        if i + 1 >= self.knots.len() {
            return self.knots[self.knots.len() - 1];
        }
        let frac = nt - k;
        self.knots[i] + frac * (self.knots[i + 1] - self.knots[i])
    }
}

/// Rescale a path on `[0, horizon]`; the path must hold at least `ceil(n * horizon)` steps.
pub fn rescale(path: &Path, n: usize, sigma: f64, horizon: f64) -> Result<RescaledPath> {
    if !(sigma > 0.0) || n == 0 {
        return Err(LabError::InvalidArgument(format!("rescale needs n >= 1 and sigma > 0, got n = {n}, sigma = {sigma}")));
    }
    let need = (n as f64 * horizon).ceil() as usize;
    if path.len() < need {
        return Err(LabError::PathTooShort { available: path.len(), requested: need });
    }
    Ok(RescaledPath::from_steps(&path.steps, n, sigma))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LongJumpConfig {
    /// Fraction `h` of `n` during which jumps are watched.
    pub horizon_fraction: f64,
    pub samples: usize,
    pub sim: SimOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LongJumpEstimate {
    pub threshold: f64,
    pub steps_watched: usize,
    pub probability: f64,
    pub standard_error: f64,
    pub samples: usize,
}

/// Monte Carlo estimate of `P[some |X_{k+1} - X_k| >= n^nu, k < h n]`.
pub fn long_jump_frequency(
    env: &Environment,
    start: i64,
    n: usize,
    nu: f64,
    cfg: &LongJumpConfig,
    seed: u64,
) -> Result<LongJumpEstimate> {
    let lower = 1.0 / (2.0 + env.tail_beta);
    if !(nu > lower && nu < 0.5) {
        return Err(LabError::InvalidArgument(format!("nu = {nu} outside ({lower}, 1/2)")));
    }
    let threshold = (n as f64).powf(nu);
    let watched = (cfg.horizon_fraction * n as f64).floor() as usize;
    if (env.truncation_radius() as f64) < threshold {
        return Ok(LongJumpEstimate { threshold, steps_watched: watched, probability: 0.0, standard_error: 0.0, samples: 0 });
    }
    check_margin(env, start, watched, &cfg.sim)?;
    let sampler = JumpSampler::new(env);
    let hits = ensemble::map_indices(cfg.samples, |i| -> Result<bool> {
        let mut rng = rng::stream_from_seed(ensemble_seed(seed, "long-jump", start, i));
        let mut x = start;
        for _ in 0..watched {
            let d = sampler.jump(x, rng.next_u64());
            if f64::from(d.abs()) >= threshold {
                return Ok(true);
            }
            x += i64::from(d);
            if !env.is_interior(x) {
                return Err(LabError::BoundarySite { site: x });
            }
        }
        Ok(false)
    });
    let mut count = 0usize;
    for h in hits {
        count += usize::from(h?);
    }
    let m = cfg.samples as f64;
    let p = count as f64 / m;
    Ok(LongJumpEstimate {
        threshold,
        steps_watched: watched,
        probability: p,
        standard_error: (p * (1.0 - p) / m).sqrt(),
        samples: cfg.samples,
    })
}
