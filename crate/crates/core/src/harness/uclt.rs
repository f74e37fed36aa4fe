use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{rescaled_knots, Functional, PathSet};
use crate::ensemble;
use crate::environment::Environment;
use crate::error::{LabError, Result};
use crate::reference::{sample_brownian_with, steps_per_unit};
use crate::rng;
use crate::walk::{self, JumpSampler, SimOptions};

/// Start points: every `ceil(n^alpha / divisor)`-th site of
/// `[-H n^alpha, H n^alpha]`, plus `extra` seeded uniform sites.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPolicy {
    pub divisor: f64,
    pub extra: usize,
}

impl Default for GridPolicy {
    fn default() -> Self {
        GridPolicy { divisor: 10.0, extra: 32 }
    }
}

pub fn start_grid(n: usize, h: f64, alpha: f64, policy: &GridPolicy, seed: u64) -> Vec<i64> {
    let scale = (n as f64).powf(alpha);
    let half = (h * scale).floor() as i64;
    let spacing = ((scale / policy.divisor).ceil() as i64).max(1);
    let mut grid: Vec<i64> = (-(half / spacing)..=half / spacing).map(|k| k * spacing).collect();
    let mut s = rng::stream(seed, "uclt-grid", &[n as u64]);
    for _ in 0..policy.extra {
        grid.push(s.random_range(-half..=half));
    }
    grid.sort_unstable();
    grid.dedup();
    grid
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrownianConfig {
    pub samples: usize,
    pub dt: f64,
    pub bridge: bool,
}

impl Default for BrownianConfig {
    fn default() -> Self {
        BrownianConfig { samples: 100_000, dt: 1e-3, bridge: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrownianEstimate {
    pub name: String,
    pub mean: f64,
    pub standard_error: f64,
    pub closed_form: f64,
}

type CacheKey = (u64, u64, usize, bool);

fn cache() -> &'static Mutex<HashMap<CacheKey, Vec<(f64, f64)>>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Vec<(f64, f64)>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Monte Carlo means of every catalogue functional and set indicator, in
/// catalogue order (`Functional::CATALOGUE`, `Const`, `PathSet::CATALOGUE`).
/// Cached per `(seed, dt, samples, bridge)` for the lifetime of the process.
fn brownian_table(cfg: &BrownianConfig, seed: u64) -> Result<Vec<(f64, f64)>> {
    let key = (seed, cfg.dt.to_bits(), cfg.samples, cfg.bridge);
    if let Some(hit) = cache().lock().unwrap().get(&key) {
        return Ok(hit.clone());
    }
    steps_per_unit(cfg.dt)?;
    let rows = ensemble::map_indices(cfg.samples, |i| -> Result<Vec<f64>> {
        let w = sample_brownian_with(1.0, cfg.dt, rng::derive_seed(seed, "uclt-brownian", &[i as u64]), cfg.bridge)?;
        let sup = w.sup_abs();
        let mut out: Vec<f64> = Functional::CATALOGUE
            .iter()
            .map(|f| match f {
                // the bridge-corrected sup replaces the grid sup when enabled
                Functional::SupAbs => sup.min(1.0),
                _ => f.eval(&w.values, cfg.dt),
            })
            .collect();
        out.push(1.0);
        for set in PathSet::CATALOGUE {
            let hit = match set {
                PathSet::SupWithin => sup <= 1.0,
                PathSet::SupBeyond => sup > 1.0,
                PathSet::EndBelow => set.contains(&w.values),
            };
            out.push(f64::from(u8::from(hit)));
        }
        Ok(out)
    });
    let rows: Vec<Vec<f64>> = rows.into_iter().collect::<Result<_>>()?;
    let table: Vec<(f64, f64)> = (0..rows[0].len()).map(|j| mean_se(rows.iter().map(|r| r[j]))).collect();
    cache().lock().unwrap().insert(key, table.clone());
    Ok(table)
}

fn mean_se(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (mut n, mut sum) = (0usize, 0.0);
    for v in values.clone() {
        n += 1;
        sum += v;
    }
    let m = n as f64;
    let mean = sum / m;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
    (mean, (var / m).sqrt())
}

fn functional_slot(f: Functional) -> usize {
    Functional::CATALOGUE.iter().position(|&g| g == f).unwrap_or(Functional::CATALOGUE.len())
}

fn set_slot(s: PathSet) -> usize {
    Functional::CATALOGUE.len() + 1 + PathSet::CATALOGUE.iter().position(|&t| t == s).unwrap()
}

/// Brownian-side estimates for the requested functionals.
pub fn brownian_estimates(functionals: &[Functional], cfg: &BrownianConfig, seed: u64) -> Result<Vec<BrownianEstimate>> {
    let table = brownian_table(cfg, seed)?;
    Ok(functionals
        .iter()
        .map(|&f| {
            let (mean, se) = table[functional_slot(f)];
            BrownianEstimate { name: f.name().to_string(), mean, standard_error: se, closed_form: f.brownian_mean() }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UcltConfig {
    /// Half-width `H` of the start window in units of `n^alpha`.
    pub h: f64,
    /// Window exponent; `1/2` is the diffusive window of the theorem.
    pub alpha: f64,
    pub n_list: Vec<usize>,
    pub functionals: Vec<Functional>,
    pub sets: bool,
    pub paths_per_start: usize,
    pub grid: GridPolicy,
    pub brownian: BrownianConfig,
    pub sim: SimOptions,
}

impl Default for UcltConfig {
    fn default() -> Self {
        UcltConfig {
            h: 1.0,
            alpha: 0.5,
            n_list: vec![1000, 4000, 16_000],
            functionals: Functional::CATALOGUE.to_vec(),
            sets: true,
            paths_per_start: 2000,
            grid: GridPolicy::default(),
            brownian: BrownianConfig::default(),
            sim: SimOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UcltRow {
    pub n: usize,
    pub functional: Functional,
    pub x: i64,
    pub walk_mean: f64,
    pub walk_se: f64,
    pub discrepancy: f64,
    /// Two-sample standard error of the discrepancy.
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UcltSup {
    pub n: usize,
    pub functional: Functional,
    pub discrepancy: f64,
    pub radius: f64,
    pub argmax: i64,
    pub grid_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetRow {
    pub n: usize,
    pub set: PathSet,
    pub sup_probability: f64,
    pub inf_probability: f64,
    pub brownian_probability: f64,
    pub brownian_se: f64,
    /// Largest per-start standard error.
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UcltReport {
    pub env_id: String,
    pub sigma: f64,
    pub master_seed: u64,
    pub config: UcltConfig,
    pub brownian: Vec<BrownianEstimate>,
    pub grids: Vec<(usize, Vec<i64>)>,
    pub rows: Vec<UcltRow>,
    pub sups: Vec<UcltSup>,
    pub sets: Vec<SetRow>,
}

impl UcltReport {
    pub fn sups_for(&self, f: Functional) -> Vec<&UcltSup> {
        self.sups.iter().filter(|s| s.functional == f).collect()
    }

    /// `D_{i+1} <= D_i + k sqrt(r_i^2 + r_{i+1}^2)` along the sweep.
    pub fn trend_ok(&self, f: Functional, k: f64) -> bool {
        self.sups_for(f)
            .windows(2)
            .all(|w| w[1].discrepancy <= w[0].discrepancy + k * (w[0].radius.powi(2) + w[1].radius.powi(2)).sqrt())
    }

    /// The discrepancy at the largest `n`.
    pub fn last(&self, f: Functional) -> Option<&UcltSup> {
        self.sups_for(f).into_iter().last()
    }

    /// `D <= bound + k r` at the largest `n`.
    pub fn final_ok(&self, f: Functional, bound: f64, k: f64) -> bool {
        self.last(f).is_some_and(|s| s.discrepancy <= bound + k * s.radius)
    }

    /// Some functional stays above `floor` at the largest `n` by more than `k`
    /// radii. Only meaningful on a window wider than diffusive (`alpha > 1/2`).
    pub fn counterexample_consistent(&self, floor: f64, k: f64) -> bool {
        self.config.alpha > 0.5
            && self.config.functionals.iter().any(|&f| self.last(f).is_some_and(|s| s.discrepancy - k * s.radius > floor))
    }
}

/// Sup over a start grid of the distance between walk-side and Brownian-side
/// means of each functional, for each `n`.
pub fn uclt_experiment(env: &Environment, sigma: f64, cfg: &UcltConfig, seed: u64) -> Result<UcltReport> {
    if !(sigma > 0.0) || cfg.paths_per_start < 2 || cfg.n_list.is_empty() {
        return Err(LabError::InvalidArgument("need sigma > 0, two paths per start and a nonempty n list".into()));
    }
    let table = brownian_table(&cfg.brownian, rng::derive_seed(seed, "brownian", &[]))?;
    let brownian: Vec<BrownianEstimate> = cfg
        .functionals
        .iter()
        .map(|&f| {
            let (mean, se) = table[functional_slot(f)];
            BrownianEstimate { name: f.name().to_string(), mean, standard_error: se, closed_form: f.brownian_mean() }
        })
        .collect();
    let sampler = JumpSampler::new(env);
    let (mut rows, mut sups, mut sets, mut grids) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let width = cfg.functionals.len() + if cfg.sets { PathSet::CATALOGUE.len() } else { 0 };

    for &n in &cfg.n_list {
        let grid = start_grid(n, cfg.h, cfg.alpha, &cfg.grid, seed);
        for &x in &grid {
            walk::check_margin(env, x, n, &cfg.sim)?;
        }
        let m = cfg.paths_per_start;
        let values = ensemble::map_indices(grid.len() * m, |j| -> Result<Vec<f64>> {
            let (x, i) = (grid[j / m], j % m);
            let s = rng::derive_seed(seed, "uclt-walk", &[n as u64, rng::site_index(x), i as u64]);
            let path = walk::simulate_with(&sampler, x, n, s, &cfg.sim)?;
            let knots = rescaled_knots(&path.steps, n, sigma);
            let dt = 1.0 / n as f64;
            let mut out: Vec<f64> = cfg.functionals.iter().map(|f| f.eval(&knots, dt)).collect();
            if cfg.sets {
                out.extend(PathSet::CATALOGUE.iter().map(|s| f64::from(u8::from(s.contains(&knots)))));
            }
            Ok(out)
        });
        let values: Vec<Vec<f64>> = values.into_iter().collect::<Result<_>>()?;
        let per_start: Vec<Vec<(f64, f64)>> = grid
            .iter()
            .enumerate()
            .map(|(g, _)| (0..width).map(|c| mean_se(values[g * m..(g + 1) * m].iter().map(|v| v[c]))).collect())
            .collect();

        for (c, &f) in cfg.functionals.iter().enumerate() {
            let b = &brownian[c];
            let mut best: Option<UcltSup> = None;
            for (g, &x) in grid.iter().enumerate() {
                let (mean, se) = per_start[g][c];
                let disc = (mean - b.mean).abs();
                let radius = (se * se + b.standard_error * b.standard_error).sqrt();
                rows.push(UcltRow { n, functional: f, x, walk_mean: mean, walk_se: se, discrepancy: disc, radius });
                if best.as_ref().is_none_or(|s| disc > s.discrepancy) {
                    best = Some(UcltSup { n, functional: f, discrepancy: disc, radius, argmax: x, grid_size: grid.len() });
                }
            }
            sups.extend(best);
        }
        if cfg.sets {
            for (k, &set) in PathSet::CATALOGUE.iter().enumerate() {
                let c = cfg.functionals.len() + k;
                let probs: Vec<(f64, f64)> = per_start.iter().map(|p| p[c]).collect();
                let (bp, bse) = table[set_slot(set)];
                sets.push(SetRow {
                    n,
                    set,
                    sup_probability: probs.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max),
                    inf_probability: probs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min),
                    brownian_probability: bp,
                    brownian_se: bse,
                    radius: probs.iter().map(|p| p.1).fold(0.0, f64::max),
                });
            }
        }
        grids.push((n, grid));
    }

    Ok(UcltReport { env_id: env.env_id(), sigma, master_seed: seed, config: cfg.clone(), brownian, grids, rows, sups, sets })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{generate, EnvironmentSpec};

    fn small_config() -> UcltConfig {
        UcltConfig {
            n_list: vec![100, 400],
            paths_per_start: 200,
            grid: GridPolicy { divisor: 4.0, extra: 3 },
            brownian: BrownianConfig { samples: 4000, dt: 0.01, bridge: false },
            ..Default::default()
        }
    }

    #[test]
    fn grid_layout() {
        let g = start_grid(10_000, 1.0, 0.5, &GridPolicy::default(), 1);
        assert!(g.contains(&0) && g.contains(&100) && g.contains(&-100));
        assert!(g.iter().all(|x| x.abs() <= 100));
        assert!(g.len() <= 21 + 32 && g.len() >= 21);
        assert_eq!(g, start_grid(10_000, 1.0, 0.5, &GridPolicy::default(), 1));
    }

    #[test]
    fn constant_functional_has_zero_discrepancy() {
        let env = generate(&EnvironmentSpec::iid_polynomial(0.5, 2.0, 2.0, (-3000, 3000), 2)).unwrap();
        let cfg = UcltConfig { functionals: vec![Functional::Const], sets: false, ..small_config() };
        let r = uclt_experiment(&env, 1.0, &cfg, 3).unwrap();
        assert!(r.rows.iter().all(|row| row.discrepancy == 0.0 && row.walk_se == 0.0));
        assert!(r.sups.iter().all(|s| s.discrepancy == 0.0));
    }

    #[test]
    fn closed_and_open_sets_are_complementary() {
        let env = generate(&EnvironmentSpec::homogeneous(vec![1.0], (-3000, 3000), 0)).unwrap();
        let r = uclt_experiment(&env, 1.0, &small_config(), 4).unwrap();
        for n in [100, 400] {
            let b = r.sets.iter().find(|s| s.n == n && s.set == PathSet::SupWithin).unwrap();
            let g = r.sets.iter().find(|s| s.n == n && s.set == PathSet::SupBeyond).unwrap();
            assert!((b.sup_probability + g.inf_probability - 1.0).abs() < 1e-15);
            assert!((b.inf_probability + g.sup_probability - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn doubling_sigma_halves_the_path() {
        let env = generate(&EnvironmentSpec::iid_polynomial(0.5, 2.0, 2.0, (-3000, 3000), 5)).unwrap();
        let cfg = UcltConfig { functionals: vec![Functional::SupAbs], sets: false, ..small_config() };
        let sampler = JumpSampler::new(&env);
        let a = uclt_experiment(&env, 2.0, &cfg, 6).unwrap();
        // recompute F(w / 2) at sigma = 1 from the same seeds
        for row in a.rows.iter().filter(|r| r.n == 100).take(5) {
            let vals: Vec<f64> = (0..cfg.paths_per_start)
                .map(|i| {
                    let s = rng::derive_seed(6, "uclt-walk", &[100, rng::site_index(row.x), i as u64]);
                    let p = walk::simulate_with(&sampler, row.x, 100, s, &cfg.sim).unwrap();
                    let half: Vec<f64> = rescaled_knots(&p.steps, 100, 1.0).iter().map(|v| v / 2.0).collect();
                    Functional::SupAbs.eval(&half, 0.01)
                })
                .collect();
            assert_eq!(mean_se(vals.iter().copied()).0, row.walk_mean);
        }
    }

    #[test]
    fn homogeneous_sup_tracks_single_start() {
        let env = generate(&EnvironmentSpec::homogeneous(vec![1.0], (-3000, 3000), 0)).unwrap();
        let cfg = UcltConfig { functionals: vec![Functional::CosEnd], sets: false, ..small_config() };
        let r = uclt_experiment(&env, 1.0, &cfg, 8).unwrap();
        let sup = r.last(Functional::CosEnd).unwrap();
        let at0 = r.rows.iter().find(|row| row.n == 400 && row.x == 0).unwrap();
        // the sup over a grid of i.i.d. estimates exceeds a single one by a few radii at most
        assert!(sup.discrepancy - at0.discrepancy <= 4.0 * (sup.radius + at0.radius));
    }

    #[test]
    fn brownian_side_matches_closed_forms() {
        let cfg = BrownianConfig { samples: 20_000, dt: 1e-3, bridge: true };
        for b in brownian_estimates(&Functional::CATALOGUE, &cfg, 11).unwrap() {
            assert!((b.mean - b.closed_form).abs() < 4.0 * b.standard_error + 2e-3, "{b:?}");
        }
    }
}
