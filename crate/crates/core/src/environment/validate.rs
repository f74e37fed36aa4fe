use serde::Serialize;

use super::generate::envelope;
use super::Environment;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// First offending site or pair, when the check fails.
    pub witness: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub env_id: String,
    pub checks: Vec<Check>,
    /// `[min C_x, max C_x]` over interior sites.
    pub c_bounds: (f64, f64),
    /// Largest `k` with `k <= C_x <= 1/k` for every interior site.
    pub kappa_hat: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Failures are reported as data, never as errors.
pub fn validate(env: &Environment) -> ValidationReport {
    let (x_min, x_max) = env.window();
    let radius = env.truncation_radius();

    let mut symmetry = None;
    let mut negative = None;
    let mut cond_e = None;
    let mut cond_k = None;
    let envelopes: Vec<f64> = (1..=radius).map(|y| envelope(env.tail_k, env.tail_beta, y)).collect();

    for x in x_min..=x_max {
        for d in 1..=radius as i64 {
            let y = x + d;
            if y > x_max {
                break;
            }
            let w = env.conductance(x, y);
            if symmetry.is_none() && w.to_bits() != env.conductance(y, x).to_bits() {
                symmetry = Some(format!("({x}, {y})"));
            }
            if negative.is_none() && !(w >= 0.0) {
                negative = Some(format!("({x}, {y}) = {w}"));
            }
            if d == 1 && cond_e.is_none() && !(w >= env.kappa) {
                cond_e = Some(format!("edge ({x}, {y}) = {w} < kappa = {}", env.kappa));
            }
            if cond_k.is_none() && !(w <= envelopes[d as usize - 1]) {
                cond_k = Some(format!(
                    "({x}, {y}) = {w} > K/(1+{d}^(3+beta)) = {}",
                    envelopes[d as usize - 1]
                ));
            }
        }
    }

    let (lo, hi) = env.interior();
    let (mut c_min, mut c_max) = (f64::INFINITY, 0.0f64);
    let mut c_witness = None;
    for x in lo..=hi {
        let c = env.total_conductance_unchecked(x);
        if !(c > 0.0 && c.is_finite()) && c_witness.is_none() {
            c_witness = Some(format!("C_{x} = {c}"));
        }
        c_min = c_min.min(c);
        c_max = c_max.max(c);
    }
    let kappa_hat = if c_min > 0.0 && c_max.is_finite() { c_min.min(1.0 / c_max) } else { 0.0 };

    let check = |name, witness: Option<String>| Check { name, passed: witness.is_none(), witness };
    ValidationReport {
        env_id: env.env_id(),
        checks: vec![
            check("symmetry", symmetry),
            check("nonnegativity", negative),
            check("condition-E", cond_e),
            check("condition-K", cond_k),
            check("total-conductance-bounds", c_witness),
        ],
        c_bounds: (c_min, c_max),
        kappa_hat,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{generate, Defect, EnvironmentSpec};

    #[test]
    fn homogeneous_passes_with_tight_bounds() {
        let env = generate(&EnvironmentSpec::homogeneous(vec![1.0], (-10, 10), 0)).unwrap();
        let report = validate(&env);
        assert!(report.passed());
        assert_eq!(report.c_bounds, (2.0, 2.0));
        assert_eq!(report.kappa_hat, 0.5);
    }

    #[test]
    fn zero_edge_fails_condition_e_at_that_edge() {
        let spec = EnvironmentSpec::homogeneous(vec![1.0], (-10, 10), 0).with_defect(Defect { x: 0, y: 1, value: 0.0 });
        let report = validate(&generate(&spec).unwrap());
        assert!(!report.passed());
        let failed: Vec<_> = report.failures().collect();
        assert_eq!(failed.len(), 1);
        assert_eq!(failed[0].name, "condition-E");
        assert!(failed[0].witness.as_ref().unwrap().contains("(0, 1)"));
    }

    #[test]
    fn long_jump_defect_fails_condition_k() {
        let mut spec = EnvironmentSpec::homogeneous(vec![0.4, 0.0001, 0.0001, 0.0001, 0.0001], (-20, 20), 0);
        spec.kappa = 0.4;
        spec.tail_k = 1.0;
        spec.tail_beta = 1.0;
        let spec = spec.with_defect(Defect { x: 0, y: 5, value: 1.0 });
        let report = validate(&generate(&spec).unwrap());
        let failed: Vec<_> = report.failures().map(|c| c.name).collect();
        assert_eq!(failed, vec!["condition-K"]);
    }

    #[test]
    fn iid_field_passes() {
        let env = generate(&EnvironmentSpec::iid_polynomial(0.5, 1.0, 1.0, (-2000, 2000), 8)).unwrap();
        let report = validate(&env);
        assert!(report.passed(), "{report:?}");
        assert!(report.kappa_hat > 0.0);
    }

    #[test]
    fn block_field_passes_with_k_four_and_any_beta() {
        for beta in [0.1, 1.0, 7.0] {
            let mut spec = EnvironmentSpec::block_counterexample(0.5, (-3000, 3000), 2);
            spec.tail_beta = beta;
            let report = validate(&generate(&spec).unwrap());
            assert!(report.passed(), "{report:?}");
        }
        let mut spec = EnvironmentSpec::block_counterexample(0.5, (-3000, 3000), 2);
        spec.tail_k = 3.9;
        let report = validate(&generate(&spec).unwrap());
        assert_eq!(report.failures().map(|c| c.name).collect::<Vec<_>>(), vec!["condition-K"]);
    }
}
