use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use conductance_lab::environment::{generate, validate, write_environment};
use conductance_lab::harness::{
    self, classify_site, estimate_sigma, nice_site_density_scan, report, uclt_experiment, BrownianConfig, ClassifyConfig,
    DensityConfig, GridPolicy, SigmaConfig, UcltConfig,
};
use conductance_lab::interval_solver::{escape_probability, Geometry, IntervalProblem};
use conductance_lab::reference::{estimate_thresholds, read_threshold_table, write_threshold_table, EpsilonThresholds, ThresholdOptions};
use conductance_lab::walk::{self, range_of, write_path, JumpSampler};
use conductance_lab::{Environment, LabError, Result, SimOptions};
use serde::Serialize;

use crate::config::{
    describe, ClassifyArgs, Command, ExactArgs, ExactOp, RunConfig, SigmaArgs, SimulateArgs, ThresholdArgs, UcltArgs,
};

pub enum Outcome {
    Done,
    ValidationFailed,
}

/// Output directory plus the `#` header echoed into every table.
pub struct Sink {
    dir: PathBuf,
    header: Vec<String>,
    pub outputs: Vec<String>,
}

impl Sink {
    pub fn new(dir: &Path, cfg: &RunConfig) -> Result<Sink> {
        fs::create_dir_all(dir)?;
        let config = serde_json::to_string(cfg).map_err(|e| LabError::Io(e.into()))?;
        Ok(Sink {
            dir: dir.to_path_buf(),
            header: vec![format!("conductance-lab {}", env!("CARGO_PKG_VERSION")), format!("config: {config}")],
            outputs: Vec::new(),
        })
    }

    fn note_env(&mut self, env: &Environment) {
        self.header.push(format!("env_id: {}", env.env_id()));
        self.header.push(format!("env: {}", describe(env)));
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        self.outputs.push(name.to_string());
        Ok(BufWriter::new(File::create(path)?))
    }

    fn table<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let header = self.header.clone();
        report::write_table(self.create(name)?, &header, rows)
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        report::write_json(self.create(name)?, value)
    }

    fn with<F: FnOnce(&mut BufWriter<File>, &[String]) -> Result<()>>(&mut self, name: &str, f: F) -> Result<()> {
        let header = self.header.clone();
        let mut w = self.create(name)?;
        f(&mut w, &header)?;
        w.flush()?;
        Ok(())
    }
}

/// Run one command. Returns the environment id when one was involved.
pub fn run(cfg: &RunConfig, sink: &mut Sink) -> Result<(Outcome, Option<String>)> {
    let seed = cfg.seed;
    let env = match &cfg.command {
        Command::GenEnv(spec) => {
            let env = generate(&spec.to_spec(seed)?)?;
            sink.note_env(&env);
            let mut w = sink.create("env.txt")?;
            write_environment(&env, &mut w)?;
            w.flush()?;
            return validation(&env, sink);
        }
        Command::Validate(a) => {
            let env = a.load(seed)?;
            sink.note_env(&env);
            return validation(&env, sink);
        }
        Command::Simulate(a) => a.env.load(seed)?,
        Command::Exact(a) => a.env.load(seed)?,
        Command::EstimateSigma(a) => a.env.load(seed)?,
        Command::ClassifySites(a) => a.env.load(seed)?,
        Command::VerifyUclt(a) => a.env.load(seed)?,
        Command::Rerun(_) => return Err(LabError::InvalidArgument("rerun cannot be nested".into())),
    };
    sink.note_env(&env);
    match &cfg.command {
        Command::Simulate(a) => simulate(&env, a, seed, sink)?,
        Command::Exact(a) => exact(&env, a, sink)?,
        Command::EstimateSigma(a) => sigma_cmd(&env, a, seed, sink)?,
        Command::ClassifySites(a) => classify(&env, a, seed, sink)?,
        Command::VerifyUclt(a) => verify_uclt(&env, a, seed, sink)?,
        _ => unreachable!(),
    }
    Ok((Outcome::Done, Some(env.env_id())))
}

fn validation(env: &Environment, sink: &mut Sink) -> Result<(Outcome, Option<String>)> {
    let v = validate(env);
    sink.json("validation.json", &v)?;
    println!("env_id {}", v.env_id);
    println!("C bounds [{}, {}], kappa_hat {}", v.c_bounds.0, v.c_bounds.1, v.kappa_hat);
    for c in &v.checks {
        let status = if c.passed { "pass" } else { "FAIL" };
        match &c.witness {
            Some(w) => println!("{status} {} (witness {w})", c.name),
            None => println!("{status} {}", c.name),
        }
    }
    let outcome = if v.passed() { Outcome::Done } else { Outcome::ValidationFailed };
    Ok((outcome, Some(v.env_id)))
}

#[derive(Serialize)]
struct PathRow {
    index: usize,
    seed: u64,
    start: i64,
    endpoint: i64,
    r_plus: i64,
    r_minus: i64,
    r: i64,
}

fn simulate(env: &Environment, a: &SimulateArgs, seed: u64, sink: &mut Sink) -> Result<()> {
    let opts = SimOptions { margin_factor: a.margin_factor };
    let sampler = JumpSampler::new(env);
    let paths = walk::simulate_ensemble(&sampler, a.x, a.n, a.count, seed, &opts)?;
    let rows: Vec<PathRow> = paths
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let r = range_of(&p.steps, 0, a.n);
            PathRow { index: i, seed: p.seed, start: p.start, endpoint: p.endpoint(), r_plus: r.r_plus, r_minus: r.r_minus, r: r.r }
        })
        .collect();
    sink.table("paths.csv", &rows)?;
    if a.dump {
        for (i, p) in paths.iter().enumerate() {
            sink.with(&format!("paths/path-{i:06}.bin"), |w, _| write_path(p, w))?;
        }
    }
    let m = rows.len() as f64;
    let mean = rows.iter().map(|r| (r.endpoint - r.start) as f64).sum::<f64>() / m;
    let var = rows.iter().map(|r| ((r.endpoint - r.start) as f64 - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
    println!("{} paths of {} steps from {}: mean displacement {mean:.4}, variance {var:.4}", a.count, a.n, a.x);
    Ok(())
}

#[derive(Serialize)]
struct EscapeRow {
    l: i64,
    probability: f64,
    bound: f64,
    gamma_1: f64,
    kappa_hat: f64,
}

#[derive(Serialize)]
struct PairRow {
    x: i64,
    y: i64,
    value: f64,
}

#[derive(Serialize)]
struct CheckRow {
    x: i64,
    y: i64,
    lhs: f64,
    rhs: f64,
    relative_residual: f64,
}

fn relative(lhs: f64, rhs: f64) -> f64 {
    (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE)
}

fn exact(env: &Environment, a: &ExactArgs, sink: &mut Sink) -> Result<()> {
    let name = format!("{}.csv", a.op.name());
    if a.op == ExactOp::Escape {
        let p = escape_probability(env, a.l)?;
        let v = validate(env);
        let gamma_1 = env.second_moment_bound();
        let bound = 4.0 * gamma_1 / (v.kappa_hat * a.l as f64);
        sink.table(&name, &[EscapeRow { l: a.l, probability: p, bound, gamma_1, kappa_hat: v.kappa_hat }])?;
        println!("escape L={} probability {p:.15} bound {bound:.6}", a.l);
        return Ok(());
    }
    let geometry = if a.two_sided || matches!(a.op, ExactOp::CommuteCheck | ExactOp::ReversalCheck) {
        Geometry::TwoSided
    } else {
        Geometry::Surrounding
    };
    let problem = IntervalProblem::new(env, a.a, a.b, geometry)?;
    let mid = a.x.unwrap_or((a.a + a.b).div_euclid(2));
    match a.op {
        ExactOp::ExitDist => {
            let d = problem.exit_distribution(mid)?;
            let rows: Vec<PairRow> = d.sites.iter().zip(&d.probs).map(|(&y, &p)| PairRow { x: mid, y, value: p }).collect();
            sink.table(&name, &rows)?;
            let right: f64 = d.sites.iter().zip(&d.probs).filter(|(y, _)| **y >= a.b).map(|(_, p)| p).sum();
            println!("exit from ({}, {}) started at {mid}: P[exit >= b] = {right:.15}", a.a, a.b);
        }
        ExactOp::ExitTime => {
            let t = problem.expected_exit_times()?;
            let rows: Vec<PairRow> = problem.interior_sites().zip(&t).map(|(x, &v)| PairRow { x, y: x, value: v }).collect();
            sink.table(&name, &rows)?;
            println!("expected exit time from {mid}: {:.12}", problem.expected_exit_time(mid)?);
        }
        ExactOp::Confinement => {
            let curve = problem.log_confinement_curve(mid, a.n_max)?;
            let rows: Vec<PairRow> = curve.iter().enumerate().map(|(n, &v)| PairRow { x: mid, y: n as i64, value: v }).collect();
            sink.table(&name, &rows)?;
            let rate = problem.confinement_rate(mid, a.n_max)?;
            sink.json("confinement-rate.json", &rate)?;
            println!(
                "confinement rate {:.6e}, rate*(b-a)^2 {:.6}, slope variation {:.4}",
                rate.rate, rate.scaled_rate, rate.slope_variation
            );
        }
        ExactOp::CommuteCheck => {
            let xs: Vec<i64> = match a.x {
                Some(x) => vec![x],
                None => problem.interior_sites().collect(),
            };
            let mut rows = Vec::new();
            for x in xs {
                let (lhs, rhs) = problem.commute_time_check(x)?;
                rows.push(CheckRow { x, y: x, lhs, rhs, relative_residual: relative(lhs, rhs) });
            }
            sink.table(&name, &rows)?;
            let worst = rows.iter().map(|r| r.relative_residual).fold(0.0, f64::max);
            println!("commute-check max relative residual {worst:.3e} over {} sites", rows.len());
        }
        ExactOp::ReversalCheck => {
            let y = a.y.unwrap_or(a.b);
            let (lhs, rhs) = problem.reversal_identity_check(mid, y)?;
            let rel = relative(lhs, rhs);
            sink.table(&name, &[CheckRow { x: mid, y, lhs, rhs, relative_residual: rel }])?;
            println!("reversal-check x={mid} y={y} relative residual {rel:.3e}");
        }
        ExactOp::Margin => {
            let m = problem.locate_margin(a.eta)?;
            let rows: Vec<PairRow> =
                m.min_mass.iter().enumerate().map(|(k, &v)| PairRow { x: a.a, y: k as i64, value: v }).collect();
            sink.table(&name, &rows)?;
            match m.margin {
                Some(k) => println!("margin {k} reaches mass 1 - {}", a.eta),
                None => println!("no margin below the truncation radius reaches mass 1 - {}", a.eta),
            }
        }
        ExactOp::Escape => unreachable!(),
    }
    Ok(())
}

fn sigma_cmd(env: &Environment, a: &SigmaArgs, seed: u64, sink: &mut Sink) -> Result<()> {
    let cfg = SigmaConfig {
        n_list: a.n_list.clone(),
        paths_per_n: a.paths,
        starts: a.starts.clone(),
        sim: SimOptions { margin_factor: a.margin_factor },
    };
    let est = estimate_sigma(env, &cfg, seed)?;
    sink.table("variance.csv", &est.points)?;
    sink.json("sigma.json", &est)?;
    println!("sigma {:.6} +- {:.6} (sigma^2 {:.6} +- {:.6})", est.sigma, est.standard_error, est.sigma_sq, est.sigma_sq_standard_error);
    Ok(())
}

/// Sigma from the flag, or from a decade of `n` ending at `top`.
fn resolve_sigma(env: &Environment, given: Option<f64>, top: usize, paths: usize, sim: SimOptions, seed: u64) -> Result<f64> {
    if let Some(s) = given {
        return Ok(s);
    }
    let top = top.max(100);
    let cfg = SigmaConfig { n_list: vec![top / 10, top / 3, top], paths_per_n: paths, starts: vec![0], sim };
    let est = estimate_sigma(env, &cfg, seed)?;
    println!("sigma {:.6} +- {:.6}", est.sigma, est.standard_error);
    Ok(est.sigma)
}

fn resolve_thresholds(t: &ThresholdArgs, seed: u64, sink: &mut Sink) -> Result<EpsilonThresholds> {
    let row = match &t.thresholds {
        Some(path) => read_threshold_table(File::open(path)?)?
            .into_iter()
            .find(|r| (r.epsilon - t.eps).abs() <= 1e-12 * t.eps.abs().max(1.0))
            .ok_or_else(|| LabError::InvalidArgument(format!("no row for eps = {} in {}", t.eps, path.display())))?,
        None => {
            let opts = ThresholdOptions { samples: t.threshold_samples, dt: t.threshold_dt, bridge: t.bridge, ..Default::default() };
            estimate_thresholds(t.eps, &opts, seed)?
        }
    };
    sink.with("thresholds.csv", |w, header| {
        for line in header {
            writeln!(w, "# {line}")?;
        }
        write_threshold_table(std::slice::from_ref(&row), w)
    })?;
    println!("eps {} delta_eps {} h_eps {}", row.epsilon, row.delta_eps, row.h_eps);
    if row.delta_bottomed_out || row.h_bottomed_out {
        println!("warning: threshold search reached the end of its grid; a finer --threshold-dt may help");
    }
    Ok(row)
}

fn classify(env: &Environment, a: &ClassifyArgs, seed: u64, sink: &mut Sink) -> Result<()> {
    let th = resolve_thresholds(&a.thresholds, seed, sink)?;
    let sim = SimOptions::default();
    let sigma = resolve_sigma(env, a.sigma, a.n, a.sigma_paths, sim, seed)?;
    if a.scan {
        let cfg = DensityConfig { h: a.h, nu: a.nu, sites_per_interval: a.sites_per_interval, mc_samples: a.mc, sim };
        let r = nice_site_density_scan(env, a.n, &th, sigma, &cfg, seed)?;
        sink.table("density.csv", &r.intervals.iter().map(DensityRow::from).collect::<Vec<_>>())?;
        sink.json("density.json", &r)?;
        println!("{} intervals of length {}: nice-site fraction {:.4}", r.intervals.len(), r.interval_length, r.fraction);
        return Ok(());
    }
    let cfg = ClassifyConfig {
        mc_samples: a.mc,
        surrogate_paths: a.surrogate_paths,
        brownian: BrownianConfig { bridge: a.thresholds.bridge, ..Default::default() },
        metric_terms: a.metric_terms,
        ..Default::default()
    };
    let mut out = Vec::new();
    for &x in &a.sites {
        let c = classify_site(env, x, a.n, &th, sigma, &cfg, seed)?;
        println!(
            "x={x}: good={} (i={} ii={} iii={}) nice={} p_nice={:.4}",
            c.is_good, c.item_i, c.item_ii, c.item_iii, c.is_nice, c.nice_probability
        );
        out.push(c);
    }
    sink.with("classification.csv", |w, header| report::write_classifications(w, header, &out))?;
    Ok(())
}

#[derive(Serialize)]
struct DensityRow {
    lo: i64,
    hi: i64,
    tried: usize,
    nice_site: Option<i64>,
}

impl From<&harness::IntervalScan> for DensityRow {
    fn from(s: &harness::IntervalScan) -> Self {
        DensityRow { lo: s.lo, hi: s.hi, tried: s.tried, nice_site: s.nice_site }
    }
}

fn verify_uclt(env: &Environment, a: &UcltArgs, seed: u64, sink: &mut Sink) -> Result<()> {
    let sim = SimOptions { margin_factor: a.margin_factor };
    let functionals = a.functionals()?;
    let top = a.n_list.iter().copied().max().ok_or_else(|| LabError::InvalidArgument("empty --n-list".into()))?;
    let sigma = resolve_sigma(env, a.sigma, top, a.sigma_paths, sim, seed)?;
    let brownian = BrownianConfig { samples: a.brownian_samples, dt: 1e-3, bridge: a.thresholds.bridge };

    if a.classify > 0 {
        let th = resolve_thresholds(&a.thresholds, seed, sink)?;
        let n = a.n_list.iter().copied().min().unwrap_or(top);
        let half = a.h * (n as f64).sqrt();
        let cfg = ClassifyConfig {
            mc_samples: a.classify_mc,
            surrogate_paths: a.classify_mc,
            brownian,
            sim,
            ..Default::default()
        };
        let mut out = Vec::new();
        for j in 0..a.classify {
            let x = if a.classify == 1 { 0 } else { (-half + 2.0 * half * j as f64 / (a.classify - 1) as f64).round() as i64 };
            out.push(classify_site(env, x, n, &th, sigma, &cfg, seed)?);
        }
        let good = out.iter().filter(|c| c.is_good).count();
        let nice = out.iter().filter(|c| c.is_nice).count();
        println!("classified {} sites at n={n}: {good} good, {nice} nice", out.len());
        sink.with("classification.csv", |w, header| report::write_classifications(w, header, &out))?;
    }

    let cfg = UcltConfig {
        h: a.h,
        alpha: a.alpha,
        n_list: a.n_list.clone(),
        functionals: functionals.clone(),
        sets: true,
        paths_per_start: a.paths_per_start,
        grid: GridPolicy { divisor: a.grid_divisor, extra: a.grid_extra },
        brownian,
        sim,
    };
    let r = uclt_experiment(env, sigma, &cfg, seed)?;
    sink.with("uclt_rows.csv", |w, h| report::write_uclt_rows(w, h, &r))?;
    sink.with("uclt_sups.csv", |w, h| report::write_uclt_sups(w, h, &r))?;
    sink.with("uclt_sets.csv", |w, h| report::write_uclt_sets(w, h, &r))?;
    sink.json("uclt.json", &r)?;
    sink.with("uclt.gp", |w, _| report::gnuplot_uclt(w, &r, "uclt_sups.csv", "uclt_sups.png"))?;

    for &f in &functionals {
        let column: Vec<String> =
            r.sups_for(f).iter().map(|s| format!("n={} D={:.4}+-{:.4}", s.n, s.discrepancy, s.radius)).collect();
        let trend = if r.trend_ok(f, 3.0) { "nonincreasing" } else { "NOT nonincreasing" };
        println!("{f}: {} ({trend})", column.join(", "));
    }
    if r.counterexample_consistent(0.1, 3.0) {
        println!("COUNTEREXAMPLE-CONSISTENT: discrepancy stays above 0.1 at n={top} on the n^{} window", a.alpha);
    }
    Ok(())
}
