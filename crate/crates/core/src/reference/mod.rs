//! Brownian reference: sampling, the path metric `d`, range functionals and
//! the thresholds `δ_ε`, `h_ε`.

pub mod oracle;
mod table;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ensemble;
use crate::error::{LabError, Result};
use crate::rng::{self, Stream};

pub use table::{read_threshold_table, write_threshold_table};

/// Number of terms kept in the metric series; the dropped tail is at most
/// `2^-30 < 1e-9`.
pub const METRIC_TERMS: usize = 31;

/// Sum of the dropped metric terms beyond `terms`.
pub fn metric_truncation_bound(terms: usize) -> f64 {
    0.5f64.powi(terms as i32 - 1)
}

/// Grid points per unit time; `dt` must divide 1.
pub fn steps_per_unit(dt: f64) -> Result<usize> {
    let k = (1.0 / dt).round();
    if !(dt > 0.0) || k < 1.0 || (k * dt - 1.0).abs() > 1e-9 {
        return Err(LabError::InvalidArgument(format!("grid step {dt} does not divide 1")));
    }
    Ok(k as usize)
}

/// A path on a uniform time grid that may be generated on demand.
pub trait GridPath {
    fn dt(&self) -> f64;
    /// Value at time `k * dt`.
    fn value(&mut self, k: usize) -> Result<f64>;
}

/// Brownian motion generated lazily on a grid. With the bridge correction,
/// each grid cell also carries the maximum and minimum of the Brownian
/// bridge between its endpoints, sampled exactly (independently of each other).
pub struct LazyBrownian {
    dt: f64,
    sd: f64,
    rng: Stream,
    bridge: Option<Stream>,
    values: Vec<f64>,
    cell_max: Vec<f64>,
    cell_min: Vec<f64>,
}

impl LazyBrownian {
    pub fn new(dt: f64, seed: u64, bridge: bool) -> Self {
        LazyBrownian {
            dt,
            sd: dt.sqrt(),
            rng: rng::stream_from_seed(seed),
            bridge: bridge.then(|| rng::stream(seed, "bridge", &[])),
            values: vec![0.0],
            cell_max: Vec::new(),
            cell_min: Vec::new(),
        }
    }

    pub fn extend_to(&mut self, k: usize) {
        while self.values.len() <= k {
            let a = *self.values.last().unwrap();
            let z: f64 = self.rng.sample(StandardNormal);
            let b = a + self.sd * z;
            self.values.push(b);
            if let Some(br) = self.bridge.as_mut() {
                let spread = |u: f64| ((b - a).powi(2) - 2.0 * self.dt * u.ln()).sqrt();
                let u1: f64 = 1.0 - br.random::<f64>();
                let u2: f64 = 1.0 - br.random::<f64>();
                self.cell_max.push(0.5 * (a + b + spread(u1)));
                self.cell_min.push(0.5 * (a + b - spread(u2)));
            }
        }
    }

    /// Maximum and minimum over the cell `[k dt, (k + 1) dt]`.
    pub fn cell_extremes(&mut self, k: usize) -> (f64, f64) {
        self.extend_to(k + 1);
        if self.bridge.is_some() {
            (self.cell_max[k], self.cell_min[k])
        } else {
            let (a, b) = (self.values[k], self.values[k + 1]);
            (a.max(b), a.min(b))
        }
    }

    /// `(max, min)` of `W(t + s) - W(t)` over `s <= len * dt`, with `t = start * dt`.
    pub fn increment_extremes(&mut self, start: usize, len: usize) -> (f64, f64) {
        self.extend_to(start + len);
        let origin = self.values[start];
        let (mut hi, mut lo) = (0.0f64, 0.0f64);
        for k in start..start + len {
            let (mx, mn) = self.cell_extremes(k);
            hi = hi.max(mx - origin);
            lo = lo.min(mn - origin);
        }
        (hi, lo)
    }

    pub fn into_sample(mut self, horizon: f64, seed: u64) -> BrownianSample {
        let n = (horizon / self.dt).round() as usize;
        self.extend_to(n);
        self.values.truncate(n + 1);
        let extremes = self.bridge.is_some().then(|| {
            self.cell_max.truncate(n);
            self.cell_min.truncate(n);
            (self.cell_max, self.cell_min)
        });
        BrownianSample { horizon, dt: self.dt, seed, values: self.values, extremes }
    }
}

impl GridPath for LazyBrownian {
    fn dt(&self) -> f64 {
        self.dt
    }

    fn value(&mut self, k: usize) -> Result<f64> {
        self.extend_to(k);
        Ok(self.values[k])
    }
}

/// Brownian path on the grid `0, dt, ..., horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrownianSample {
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
    pub values: Vec<f64>,
    /// Per-cell bridge maxima and minima, when the bridge correction is on.
    pub extremes: Option<(Vec<f64>, Vec<f64>)>,
}

impl BrownianSample {
    /// Linear interpolation between grid values.
    pub fn eval(&self, t: f64) -> f64 {
        let x = t / self.dt;
        let k = x.floor() as usize;
        if k + 1 >= self.values.len() {
            return *self.values.last().unwrap();
        }
        let f = x - k as f64;
        self.values[k] + f * (self.values[k + 1] - self.values[k])
    }

    /// `sup_{t <= horizon} |W(t)|`, bridge-corrected when available.
    pub fn sup_abs(&self) -> f64 {
        match &self.extremes {
            Some((mx, mn)) => mx.iter().chain(mn).fold(0.0, |m, v| m.max(v.abs())),
            None => self.values.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }
}

pub fn sample_brownian(horizon: f64, dt: f64, seed: u64) -> Result<BrownianSample> {
    sample_brownian_with(horizon, dt, seed, false)
}

pub fn sample_brownian_with(horizon: f64, dt: f64, seed: u64, bridge: bool) -> Result<BrownianSample> {
    if !(horizon > 0.0 && dt > 0.0) {
        return Err(LabError::InvalidArgument(format!("need horizon > 0 and dt > 0, got {horizon}, {dt}")));
    }
    Ok(LazyBrownian::new(dt, seed, bridge).into_sample(horizon, seed))
}

/// `sum_{n <= N} 2^{-n+1} min(1, sups[n-1])`, where `sups[n-1]` is the sup
/// distance on `[0, n]`.
pub fn metric_from_sups(sups: &[f64]) -> f64 {
    sups.iter().enumerate().map(|(i, s)| 0.5f64.powi(i as i32) * s.min(1.0)).sum()
}

/// `d(f, g)` for two paths on the same grid, truncated after `terms` horizons.
/// Paths are piecewise linear, so the sup distance is attained at grid points.
pub fn path_distance(f: &[f64], g: &[f64], dt: f64, terms: usize) -> Result<f64> {
    let per = steps_per_unit(dt)?;
    let need = terms * per;
    let have = f.len().min(g.len()).saturating_sub(1);
    if have < need {
        return Err(LabError::PathTooShort { available: have, requested: need });
    }
    let mut sups = Vec::with_capacity(terms);
    let mut m = 0.0f64;
    let mut k = 0;
    for n in 1..=terms {
        while k <= n * per {
            m = m.max((f[k] - g[k]).abs());
            k += 1;
        }
        sups.push(m);
    }
    Ok(metric_from_sups(&sups))
}

/// Decide `d(θ_s w, w) > eps` for the shift `s = shift * dt`, where
/// `(θ_s w)(t) = w(s + t)`, generating no more of the path than the decision
/// needs.
pub fn shift_distance_exceeds<P: GridPath>(path: &mut P, shift: usize, eps: f64, terms: usize) -> Result<bool> {
    let per = steps_per_unit(path.dt())?;
    let mut partial = 0.0;
    let mut m = 0.0f64;
    let mut t = 0;
    for n in 1..=terms {
        while t <= n * per {
            m = m.max((path.value(t + shift)? - path.value(t)?).abs());
            t += 1;
        }
        let weight = 0.5f64.powi(n as i32 - 1);
        partial += weight * m.min(1.0);
        // every later term is at least min(1, m) and at most 1
        if partial + weight * m.min(1.0) > eps {
            return Ok(true);
        }
        if partial + weight <= eps {
            return Ok(false);
        }
    }
    Ok(partial > eps)
}

/// Smallest `j <= max_shift` with `d(θ_{j dt} w, w) > eps`.
pub fn first_exceedance_shift<P: GridPath>(path: &mut P, eps: f64, max_shift: usize, terms: usize) -> Result<Option<usize>> {
    for j in 1..=max_shift {
        if shift_distance_exceeds(path, j, eps, terms)? {
            return Ok(Some(j));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdOptions {
    pub samples: usize,
    pub dt: f64,
    pub bridge: bool,
    /// Ratio of the geometric search grid `1, r, r^2, ...`.
    pub grid_ratio: f64,
    /// Smallest `δ` on the grid; the `h` grid stops at `dt`.
    pub delta_floor: f64,
    pub metric_terms: usize,
}

impl Default for ThresholdOptions {
    fn default() -> Self {
        ThresholdOptions { samples: 10_000, dt: 1e-3, bridge: false, grid_ratio: 0.9, delta_floor: 1e-6, metric_terms: METRIC_TERMS }
    }
}

impl ThresholdOptions {
    fn check(&self, eps: f64) -> Result<usize> {
        if !(eps > 0.0) {
            return Err(LabError::InvalidArgument(format!("epsilon must be positive, got {eps}")));
        }
        if !(self.grid_ratio > 0.0 && self.grid_ratio < 1.0) || self.samples == 0 {
            return Err(LabError::InvalidArgument("grid ratio must lie in (0, 1) and samples be positive".into()));
        }
        let per = steps_per_unit(self.dt)?;
        if per % 2 != 0 {
            return Err(LabError::InvalidArgument(format!("grid step {} must divide 1/2", self.dt)));
        }
        Ok(per)
    }
}

/// Geometric grid `1, r, r^2, ...` down to `floor`.
pub fn threshold_grid(ratio: f64, floor: f64) -> Vec<f64> {
    let mut g = vec![1.0];
    loop {
        let next = g.last().unwrap() * ratio;
        if next < floor {
            return g;
        }
        g.push(next);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEstimate {
    pub value: f64,
    /// No grid value satisfied the constraint; `value` is the smallest one.
    pub bottomed_out: bool,
    /// Estimated constraint sum at `value`.
    pub probability: f64,
    /// Sum of the per-term binomial standard errors at `value`.
    pub confidence_radius: f64,
    /// Per-term probabilities at `value`.
    pub terms: Vec<f64>,
    pub samples: usize,
}

/// Largest grid value whose summed term probabilities stay within `eps / 2`.
/// `term_prob(i, g)` is the probability of term `i` at grid value `g`; it must
/// be nondecreasing in `g`.
fn scan_grid(grid: &[f64], n_terms: usize, eps: f64, samples: usize, term_prob: impl Fn(usize, f64) -> f64) -> ThresholdEstimate {
    let at = |g: f64| -> Vec<f64> { (0..n_terms).map(|i| term_prob(i, g)).collect() };
    let mut chosen = None;
    for &g in grid {
        if at(g).iter().sum::<f64>() <= eps / 2.0 {
            chosen = Some(g);
            break;
        }
    }
    let (value, bottomed_out) = match chosen {
        Some(g) => (g, false),
        None => (*grid.last().unwrap(), true),
    };
    let terms = at(value);
    let m = samples as f64;
    ThresholdEstimate {
        value,
        bottomed_out,
        probability: terms.iter().sum(),
        confidence_radius: terms.iter().map(|p| (p * (1.0 - p) / m).sqrt()).sum(),
        terms,
        samples,
    }
}

/// The five range statistics entering `δ_ε`: ranges over `[0, 1/2]`,
/// `[1/2, 1]`, `[1, 3/2]`, then the one-sided ranges `max_{s<=1} W(s)` and
/// `|min_{s<=1} W(s)|`.
pub fn delta_statistics(path: &mut LazyBrownian, per_unit: usize) -> [f64; 5] {
    let half = per_unit / 2;
    let r = |p: &mut LazyBrownian, start: usize| {
        let (hi, lo) = p.increment_extremes(start, half);
        hi - lo
    };
    let r0 = r(path, 0);
    let r1 = r(path, half);
    let r2 = r(path, 2 * half);
    let (hi, lo) = path.increment_extremes(0, per_unit);
    [r0, r1, r2, hi, -lo]
}

pub fn estimate_delta_eps(eps: f64, samples: usize, dt: f64, seed: u64) -> Result<ThresholdEstimate> {
    estimate_delta_eps_with(eps, &ThresholdOptions { samples, dt, ..Default::default() }, seed)
}

/// `δ_ε`: the largest grid `δ` with the five range probabilities
/// `P[stat < δ]` summing to at most `ε / 2`. All grid points share samples.
pub fn estimate_delta_eps_with(eps: f64, opts: &ThresholdOptions, seed: u64) -> Result<ThresholdEstimate> {
    let per = opts.check(eps)?;
    let stats = ensemble::map_indices(opts.samples, |i| {
        let mut w = LazyBrownian::new(opts.dt, rng::derive_seed(seed, "brownian-delta", &[i as u64]), opts.bridge);
        delta_statistics(&mut w, per)
    });
    let mut columns: Vec<Vec<f64>> = (0..5).map(|j| stats.iter().map(|s| s[j]).collect()).collect();
    for c in &mut columns {
        c.sort_by(f64::total_cmp);
    }
    let m = opts.samples as f64;
    let grid = threshold_grid(opts.grid_ratio, opts.delta_floor);
    Ok(scan_grid(&grid, 5, eps, opts.samples, |i, d| columns[i].partition_point(|&v| v < d) as f64 / m))
}

/// First `k` such that `|W|` exceeds `eps` on the cell ending at `k dt`.
fn first_passage(w: &mut LazyBrownian, eps: f64, max_steps: usize) -> Option<usize> {
    (0..max_steps).find(|&k| {
        let (mx, mn) = w.cell_extremes(k);
        mx > eps || -mn > eps
    }).map(|k| k + 1)
}

pub fn estimate_h_eps(eps: f64, samples: usize, dt: f64, seed: u64) -> Result<ThresholdEstimate> {
    estimate_h_eps_with(eps, &ThresholdOptions { samples, dt, ..Default::default() }, seed)
}

/// `h_ε`: the largest grid `h` with `P[sup_{s<=h} |W(s)| > ε] + P[sup_{s<=h} d(θ_s W, W) > ε]`
/// at most `ε / 2`. Shifts range over multiples of `dt`, so the grid stops at `dt`.
pub fn estimate_h_eps_with(eps: f64, opts: &ThresholdOptions, seed: u64) -> Result<ThresholdEstimate> {
    let per = opts.check(eps)?;
    let grid = threshold_grid(opts.grid_ratio, opts.dt);
    let steps = |h: f64| ((h / opts.dt) + 1e-9).floor() as usize;

    // first pass: the sup term alone bounds how far the shift scan must look
    let seeds = |i: usize| rng::derive_seed(seed, "brownian-h", &[i as u64]);
    let passage = ensemble::map_indices(opts.samples, |i| {
        let mut w = LazyBrownian::new(opts.dt, seeds(i), opts.bridge);
        first_passage(&mut w, eps, per)
    });
    let m = opts.samples as f64;
    let frac = |v: &[Option<usize>], k: usize| v.iter().filter(|s| s.is_some_and(|s| s <= k)).count() as f64 / m;
    let reach = grid.iter().copied().find(|&h| frac(&passage, steps(h)) <= eps / 2.0).unwrap_or(opts.dt);

    let shifts = ensemble::map_indices(opts.samples, |i| {
        let mut w = LazyBrownian::new(opts.dt, seeds(i), opts.bridge);
        first_exceedance_shift(&mut w, eps, steps(reach), opts.metric_terms)
    });
    let shifts: Vec<Option<usize>> = shifts.into_iter().collect::<Result<_>>()?;
    Ok(scan_grid(&grid, 2, eps, opts.samples, |i, h| {
        if i == 0 {
            frac(&passage, steps(h))
        } else if h > reach {
            // not scanned; the sup term alone already rules this h out
            1.0
        } else {
            frac(&shifts, steps(h))
        }
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonThresholds {
    pub epsilon: f64,
    pub delta_eps: f64,
    pub h_eps: f64,
    pub mc_samples: usize,
    pub dt: f64,
    pub delta_radius: f64,
    pub h_radius: f64,
    pub delta_bottomed_out: bool,
    pub h_bottomed_out: bool,
    pub bridge: bool,
}

pub fn estimate_thresholds(eps: f64, opts: &ThresholdOptions, seed: u64) -> Result<EpsilonThresholds> {
    let d = estimate_delta_eps_with(eps, opts, seed)?;
    let h = estimate_h_eps_with(eps, opts, seed)?;
    Ok(EpsilonThresholds {
        epsilon: eps,
        delta_eps: d.value,
        h_eps: h.value,
        mc_samples: opts.samples,
        dt: opts.dt,
        delta_radius: d.confidence_radius,
        h_radius: h.confidence_radius,
        delta_bottomed_out: d.bottomed_out,
        h_bottomed_out: h.bottomed_out,
        bridge: opts.bridge,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sample_starts_at_zero_and_is_reproducible() {
        let a = sample_brownian(2.0, 0.01, 5).unwrap();
        assert_eq!(a.values[0], 0.0);
        assert_eq!(a.values.len(), 201);
        assert_eq!(a, sample_brownian(2.0, 0.01, 5).unwrap());
        // the bridge stream is separate, so grid values do not move
        assert_eq!(a.values, sample_brownian_with(2.0, 0.01, 5, true).unwrap().values);
        assert!(sample_brownian(0.0, 0.01, 5).is_err());
    }

    #[test]
    fn endpoint_variance_is_one() {
        let m = 100_000;
        let ends = ensemble::map_indices(m, |i| sample_brownian(1.0, 0.05, i as u64).unwrap().values[20]);
        let mean = ends.iter().sum::<f64>() / m as f64;
        let var = ends.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        assert!((var - 1.0).abs() < 3.0 * (2.0 / m as f64).sqrt());
    }

    #[test]
    fn bridge_corrected_sup_matches_reflection() {
        // the bridge correction makes the coarse grid exact in law
        let m = 100_000;
        let hits = ensemble::map_indices(m, |i| {
            let w = sample_brownian_with(1.0, 0.05, rng::derive_seed(9, "t", &[i as u64]), true).unwrap();
            w.extremes.as_ref().unwrap().0.iter().any(|&v| v > 1.0)
        });
        let p = hits.iter().filter(|&&h| h).count() as f64 / m as f64;
        assert!((p - oracle::prob_sup_exceeds(1.0, 1.0)).abs() < 0.01, "{p}");
    }

    #[test]
    fn fine_grid_sup_matches_reflection() {
        let m = 20_000;
        let hits = ensemble::map_indices(m, |i| {
            let w = sample_brownian(1.0, 1e-4, rng::derive_seed(10, "t", &[i as u64])).unwrap();
            w.values.iter().any(|&v| v > 1.0)
        });
        let p = hits.iter().filter(|&&h| h).count() as f64 / m as f64;
        // discrete monitoring biases the estimate down by about 0.58 sqrt(dt) * density
        assert!((p - oracle::prob_sup_exceeds(1.0, 1.0)).abs() < 0.015, "{p}");
    }

    #[test]
    fn distance_examples() {
        let f: Vec<f64> = (0..=3200).map(|k| (k as f64 * 0.01).sin()).collect();
        assert_eq!(path_distance(&f, &f, 0.1, 31).unwrap(), 0.0);
        let g: Vec<f64> = f.iter().map(|v| v + 1.5).collect();
        assert!((path_distance(&f, &g, 0.01, 31).unwrap() - 2.0).abs() < 1e-9);
        let g: Vec<f64> = f.iter().map(|v| v - 0.5).collect();
        assert!((path_distance(&f, &g, 0.01, 31).unwrap() - 1.0).abs() < 1e-9);
        assert!(path_distance(&f, &g, 0.01, 33).is_err());
        assert!(metric_truncation_bound(METRIC_TERMS) <= 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn distance_is_a_metric(s1 in 0u64..1000, s2 in 0u64..1000, s3 in 0u64..1000) {
            let path = |s| sample_brownian(32.0, 0.05, s).unwrap().values;
            let (f, g, h) = (path(s1), path(s2), path(s3));
            let d = |a: &[f64], b: &[f64]| path_distance(a, b, 0.05, METRIC_TERMS).unwrap();
            prop_assert_eq!(d(&f, &g), d(&g, &f));
            prop_assert!(d(&f, &h) <= d(&f, &g) + d(&g, &h) + 1e-12);
        }

        #[test]
        fn lazy_shift_decision_matches_full_distance(seed in 0u64..500, shift in 1usize..40, eps in 0.05f64..1.9) {
            let dt = 0.05;
            let w = sample_brownian(40.0, dt, seed).unwrap().values;
            let shifted: Vec<f64> = w[shift..].to_vec();
            let full = path_distance(&shifted, &w, dt, METRIC_TERMS).unwrap();
            let mut lazy = LazyBrownian::new(dt, seed, false);
            let decided = shift_distance_exceeds(&mut lazy, shift, eps, METRIC_TERMS).unwrap();
            prop_assume!((full - eps).abs() > 1e-9);
            prop_assert_eq!(decided, full > eps);
        }
    }

    #[test]
    fn delta_cap_and_positivity() {
        // at δ = 1 the five terms sum to about 2.6, so the cap needs ε above 5.2
        let opts = ThresholdOptions { samples: 10_000, dt: 0.001, bridge: true, ..Default::default() };
        let big = estimate_delta_eps_with(5.6, &opts, 1).unwrap();
        assert_eq!(big.value, 1.0);
        let opts = ThresholdOptions { samples: 10_000, dt: 0.01, ..Default::default() };
        let small = estimate_delta_eps_with(0.01, &opts, 1).unwrap();
        assert!(small.value > 0.0);
    }

    #[test]
    fn delta_is_monotone_in_epsilon() {
        let opts = ThresholdOptions { samples: 10_000, dt: 0.01, ..Default::default() };
        let values: Vec<f64> = [0.1, 0.3, 0.5, 1.0, 2.0]
            .iter()
            .map(|&e| estimate_delta_eps_with(e, &opts, 3).unwrap().value)
            .collect();
        assert!(values.windows(2).all(|w| w[0] <= w[1]), "{values:?}");
    }

    #[test]
    fn one_sided_term_matches_reflection() {
        let opts = ThresholdOptions { samples: 20_000, dt: 0.01, bridge: true, ..Default::default() };
        let est = estimate_delta_eps_with(0.5, &opts, 4).unwrap();
        // P[sup_{t<=1} W < δ] = 1 - 2 (1 - N(δ))
        let exact = 1.0 - oracle::prob_sup_exceeds(est.value, 1.0);
        assert!((est.terms[3] - exact).abs() < 0.01, "{} vs {exact}", est.terms[3]);
    }

    #[test]
    fn h_threshold_examples() {
        let opts = ThresholdOptions { samples: 10_000, dt: 0.01, ..Default::default() };
        let capped = estimate_h_eps_with(2.0, &opts, 5).unwrap();
        assert_eq!(capped.value, 1.0);
        let est = estimate_h_eps_with(0.5, &opts, 5).unwrap();
        assert!(est.value > 0.0 && est.value < 1.0);
        // the sup term never exceeds the reflection bound
        let bound = oracle::abs_sup_exceeds_bound(0.5, est.value);
        assert!(est.terms[0] <= bound + 3.0 * (bound / 1e4).sqrt());
    }

    #[test]
    fn grid_is_geometric() {
        let g = threshold_grid(0.9, 0.5);
        assert_eq!(g[0], 1.0);
        assert!((g[1] - 0.9).abs() < 1e-15);
        assert!(*g.last().unwrap() >= 0.5 && g.last().unwrap() * 0.9 < 0.5);
    }
}
