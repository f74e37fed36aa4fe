use rand::Rng;

use super::{Environment, EnvironmentSpec, ModelParams, RawEnvironment, TAIL_MASS_TOLERANCE};
use crate::error::{LabError, Result};
use crate::rng;

/// Upper bound on `sum_{y > R} K / (1 + y^(3+beta))` via the integral test.
pub fn tail_mass_bound(tail_k: f64, tail_beta: f64, radius: usize) -> f64 {
    let p = 2.0 + tail_beta;
    tail_k * (radius as f64).powf(-p) / p
}

/// Smallest radius whose tail-mass bound is below `TAIL_MASS_TOLERANCE * kappa`.
pub fn min_truncation_radius(kappa: f64, tail_k: f64, tail_beta: f64) -> usize {
    let p = 2.0 + tail_beta;
    let limit = TAIL_MASS_TOLERANCE * kappa;
    let guess = (tail_k / (p * limit)).powf(1.0 / p).floor().max(1.0) as usize;
    let mut r = guess.saturating_sub(2).max(1);
    while tail_mass_bound(tail_k, tail_beta, r) >= limit {
        r += 1;
    }
    r
}

pub(crate) fn envelope(tail_k: f64, tail_beta: f64, y: usize) -> f64 {
    tail_k / (1.0 + (y as f64).powf(3.0 + tail_beta))
}

pub fn generate(spec: &EnvironmentSpec) -> Result<Environment> {
    spec.check()?;
    let (x_min, x_max) = spec.window;
    let radius = spec.truncation_radius;
    let n_sites = (x_max - x_min + 1) as usize;
    let mut forward = vec![0.0; n_sites * radius];

    let tail_mass = match &spec.params {
        ModelParams::IidPolynomial => {
            let bound = tail_mass_bound(spec.tail_k, spec.tail_beta, radius);
            let limit = TAIL_MASS_TOLERANCE * spec.kappa;
            if bound >= limit {
                return Err(LabError::TruncationTooShort { radius, bound, limit });
            }
            fill_iid(spec, &mut forward);
            bound
        }
        ModelParams::BlockCounterexample { block_eps } => {
            fill_blocks(*block_eps, spec.seed, n_sites, &mut forward);
            0.0
        }
        ModelParams::Homogeneous { profile } => {
            for (i, row) in forward.chunks_exact_mut(radius).enumerate() {
                let x = x_min + i as i64;
                for (d, &c) in profile.iter().enumerate() {
                    if x + d as i64 + 1 <= x_max {
                        row[d] = c;
                    }
                }
            }
            0.0
        }
    };

    let mut env = Environment::from_raw(RawEnvironment {
        x_min,
        x_max,
        radius,
        forward,
        kappa: spec.kappa,
        tail_k: spec.tail_k,
        tail_beta: spec.tail_beta,
        seed: spec.seed,
        model_tag: spec.params.tag(),
        params: Some(spec.params.clone()),
        defects: spec.defects.clone(),
        tail_mass_bound: tail_mass,
    });
    if !spec.defects.is_empty() {
        for d in &spec.defects {
            env.set_conductance(d.x, d.y, d.value)?;
        }
        // recompute the content hash over the edited field
        env = rehash(env);
    }
    Ok(env)
}

fn rehash(env: Environment) -> Environment {
    Environment::from_raw(RawEnvironment {
        x_min: env.x_min,
        x_max: env.x_max,
        radius: env.radius,
        forward: env.forward.to_vec(),
        kappa: env.kappa,
        tail_k: env.tail_k,
        tail_beta: env.tail_beta,
        seed: env.seed,
        model_tag: env.model_tag,
        params: env.params,
        defects: env.defects,
        tail_mass_bound: env.tail_mass_bound,
    })
}

/// Each site owns its stream, so the field on a sub-window does not depend on
/// how wide the generated window is.
fn fill_iid(spec: &EnvironmentSpec, forward: &mut [f64]) {
    let (x_min, x_max) = spec.window;
    let radius = spec.truncation_radius;
    let envelopes: Vec<f64> = (1..=radius).map(|y| envelope(spec.tail_k, spec.tail_beta, y)).collect();
    for (i, row) in forward.chunks_exact_mut(radius).enumerate() {
        let x = x_min + i as i64;
        let mut s = rng::stream(spec.seed, "env-iid", &[rng::site_index(x)]);
        for (d, slot) in row.iter_mut().enumerate() {
            let u: f64 = s.random();
            if x + d as i64 + 1 > x_max {
                continue;
            }
            let lo = if d == 0 { spec.kappa } else { 0.0 };
            *slot = lo + u * (envelopes[d] - lo);
        }
    }
}

/// Discrete Pareto: `P[V >= k] = k^-a` for integer `k >= 1`.
fn block_size<R: Rng>(rng: &mut R, a: f64) -> u64 {
    let u: f64 = 1.0 - rng.random::<f64>();
    let v = u.powf(-1.0 / a).floor();
    if v >= 1e15 {
        1_000_000_000_000_000
    } else {
        v as u64
    }
}

/// Size-biased block length `P[V* = k] ∝ k P[V = k]`, by rejection from a
/// discrete Pareto proposal with exponent `a - 1`.
fn size_biased_block<R: Rng>(rng: &mut R, a: f64) -> u64 {
    let eps = a - 1.0;
    let pmf = |k: f64, e: f64| k.powf(-e) - (k + 1.0).powf(-e);
    let ratio = |k: u64| -> f64 {
        if k > 1_000_000 {
            a / eps
        } else {
            let kf = k as f64;
            kf * pmf(kf, a) / pmf(kf, eps)
        }
    };
    let bound = (1..=10_000u64).map(ratio).fold(a / eps, f64::max) * 1.01;
    loop {
        let k = block_size(rng, eps);
        let accept: f64 = rng.random();
        if accept * bound <= ratio(k) {
            return k;
        }
    }
}

fn fill_blocks(block_eps: f64, seed: u64, n_sites: usize, forward: &mut [f64]) {
    let a = 1.0 + block_eps;
    let mut s = rng::stream(seed, "env-blocks", &[]);
    // edges are indexed by their left endpoint; the last site has no edge
    let n_edges = n_sites - 1;
    let mut edge = 0usize;
    let mut first = true;
    while edge < n_edges {
        let (len, offset) = if first {
            first = false;
            let len = size_biased_block(&mut s, a);
            let offset = (s.random::<f64>() * len as f64).floor() as u64;
            (len, offset.min(len - 1))
        } else {
            (block_size(&mut s, a), 0)
        };
        let alternating = s.random::<bool>();
        let mut pos = offset;
        while pos < len && edge < n_edges {
            forward[edge] = if alternating && pos % 2 == 0 { 2.0 } else { 1.0 };
            pos += 1;
            edge += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::ModelTag;

    #[test]
    fn radius_meets_tolerance_and_is_minimal() {
        let r = min_truncation_radius(0.5, 2.0, 2.0);
        assert!(tail_mass_bound(2.0, 2.0, r) < 0.5e-9);
        assert!(tail_mass_bound(2.0, 2.0, r - 1) >= 0.5e-9);
        // K R^-4 / 4 < 5e-10  =>  R^4 > 1e9
        assert_eq!(r, 178);
    }

    #[test]
    fn short_radius_is_rejected() {
        let mut spec = EnvironmentSpec::iid_polynomial(0.5, 2.0, 2.0, (-500, 500), 3);
        spec.truncation_radius = 20;
        assert!(matches!(generate(&spec), Err(LabError::TruncationTooShort { .. })));
    }

    #[test]
    fn window_too_small_for_radius() {
        let spec = EnvironmentSpec::iid_polynomial(0.5, 2.0, 2.0, (-50, 50), 3);
        assert!(matches!(generate(&spec), Err(LabError::WindowTooSmall { .. })));
    }

    #[test]
    fn iid_respects_envelope_and_floor() {
        let spec = EnvironmentSpec::iid_polynomial(0.5, 1.0, 1.0, (-1000, 1000), 5);
        let env = generate(&spec).unwrap();
        for x in -1000..1000 {
            assert!(env.conductance(x, x + 1) >= 0.5);
            assert!(env.conductance(x, x + 2) <= 1.0 / 17.0);
        }
    }

    #[test]
    fn iid_is_window_independent() {
        let small = generate(&EnvironmentSpec::iid_polynomial(0.5, 2.0, 3.0, (-150, 150), 9)).unwrap();
        let large = generate(&EnvironmentSpec::iid_polynomial(0.5, 2.0, 3.0, (-400, 400), 9)).unwrap();
        for x in -100..100 {
            for d in 1..=(small.truncation_radius() as i64).min(150 - x) {
                assert_eq!(small.conductance(x, x + d), large.conductance(x, x + d));
            }
        }
    }

    #[test]
    fn generation_is_reproducible() {
        let spec = EnvironmentSpec::block_counterexample(0.5, (-5000, 5000), 21);
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.env_id(), b.env_id());
        assert_eq!(a.forward, b.forward);
        assert_eq!(a.model_tag, ModelTag::BlockCounterexample);
    }

    #[test]
    fn blocks_only_take_values_one_and_two() {
        let env = generate(&EnvironmentSpec::block_counterexample(0.5, (-2000, 2000), 4)).unwrap();
        let mut twos = 0;
        for x in -2000..2000 {
            let w = env.conductance(x, x + 1);
            assert!(w == 1.0 || w == 2.0);
            if w == 2.0 {
                twos += 1;
            }
        }
        assert!(twos > 0);
    }
}
