//! Exact finite-interval computations for the walk: hitting probabilities,
//! exit laws, exit times, confinement tails and effective conductances.
//!
//! Everything is reduced to dense linear solves on the sites strictly inside
//! `(a, b)`, optionally augmented by collapsed boundary states. Only boundary
//! sites within the truncation radius of the interval are materialized; all
//! others have zero conductance into it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::environment::Environment;
use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Geometry {
    /// `B = (-inf, a]` and `E = [b, inf)` collapsed into two states `Δ_B`, `Δ_E`.
    TwoSided,
    /// `E = (-inf, a] ∪ [b, inf)` collapsed into a single state `Δ_E`.
    Surrounding,
}

/// Interval `[a, b]` together with its collapsed chain.
///
/// State order: interior sites `a+1..b`, then `Δ_B` and `Δ_E` ([`Geometry::TwoSided`])
/// or `Δ_E` alone ([`Geometry::Surrounding`]).
#[derive(Debug, Clone)]
pub struct IntervalProblem<'e> {
    env: &'e Environment,
    pub a: i64,
    pub b: i64,
    pub geometry: Geometry,
    /// Materialized boundary sites, increasing; left ones are `<= a`.
    boundary: Vec<i64>,
    /// `C'_y` for each boundary site: its conductance into the interior.
    boundary_mass: Vec<f64>,
    /// `C_x` for interior sites.
    interior_mass: Vec<f64>,
    /// Interior-to-interior transition block.
    q: DMatrix<f64>,
    /// `p(x, y)` from interior `x` to boundary site `y`.
    to_boundary: DMatrix<f64>,
    /// Collapsed stochastic matrix.
    p: DMatrix<f64>,
    /// Reversible weights of the collapsed states.
    weights: Vec<f64>,
}

impl<'e> IntervalProblem<'e> {
    pub fn new(env: &'e Environment, a: i64, b: i64, geometry: Geometry) -> Result<Self> {
        if b - a < 2 {
            return Err(LabError::IntervalTooShort { a, b });
        }
        let r = env.truncation_radius() as i64;
        let (x_min, x_max) = env.window();
        if a - r < x_min || b + r > x_max {
            return Err(LabError::IntervalMargin { a, b, radius: r as usize, x_min, x_max });
        }
        let n = (b - a - 1) as usize;
        let boundary: Vec<i64> = (a + 1 - r..=a).chain(b..=b - 1 + r).collect();
        let m = boundary.len();
        let interior_mass: Vec<f64> = (a + 1..b).map(|x| env.total_conductance_unchecked(x)).collect();
        let boundary_mass: Vec<f64> = boundary
            .iter()
            .map(|&y| (a + 1..b).map(|z| env.conductance(y, z)).sum())
            .collect();

        let mut q = DMatrix::zeros(n, n);
        let mut to_boundary = DMatrix::zeros(n, m);
        for i in 0..n {
            let x = a + 1 + i as i64;
            let c = interior_mass[i];
            for j in 0..n {
                let y = a + 1 + j as i64;
                if (y - x).abs() <= r {
                    q[(i, j)] = env.conductance(x, y) / c;
                }
            }
            for (k, &y) in boundary.iter().enumerate() {
                to_boundary[(i, k)] = env.conductance(x, y) / c;
            }
        }

        let left = (r as usize).min(m);
        let groups: Vec<std::ops::Range<usize>> = match geometry {
            Geometry::TwoSided => vec![0..left, left..m],
            Geometry::Surrounding => vec![0..m],
        };
        let s = n + groups.len();
        let mut p = DMatrix::zeros(s, s);
        p.view_mut((0, 0), (n, n)).copy_from(&q);
        let mut weights = interior_mass.clone();
        for (g, range) in groups.iter().enumerate() {
            let mass: f64 = boundary_mass[range.clone()].iter().sum();
            weights.push(mass);
            for i in 0..n {
                let x = a + 1 + i as i64;
                let mut flow = 0.0;
                for k in range.clone() {
                    flow += env.conductance(x, boundary[k]);
                }
                p[(i, n + g)] = flow / interior_mass[i];
                if mass > 0.0 {
                    p[(n + g, i)] = flow / mass;
                }
            }
        }

        Ok(IntervalProblem { env, a, b, geometry, boundary, boundary_mass, interior_mass, q, to_boundary, p, weights })
    }

    pub fn env(&self) -> &'e Environment {
        self.env
    }

    pub fn interior_len(&self) -> usize {
        self.interior_mass.len()
    }

    pub fn interior_sites(&self) -> impl Iterator<Item = i64> {
        self.a + 1..self.b
    }

    pub fn boundary_sites(&self) -> &[i64] {
        &self.boundary
    }

    /// `C'_y` for every materialized boundary site, aligned with [`Self::boundary_sites`].
    pub fn boundary_masses(&self) -> &[f64] {
        &self.boundary_mass
    }

    /// The collapsed stochastic matrix.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    /// Reversible weights `C'` of the collapsed states.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Index of `Δ_B` in the collapsed chain (two-sided geometry only).
    pub fn delta_b(&self) -> Option<usize> {
        match self.geometry {
            Geometry::TwoSided => Some(self.interior_len()),
            Geometry::Surrounding => None,
        }
    }

    pub fn delta_e(&self) -> usize {
        self.p.nrows() - 1
    }

    /// `C'_E`, or `C'_B` when `left` is set in the two-sided geometry.
    pub fn collapsed_mass(&self, left: bool) -> f64 {
        match (self.geometry, left) {
            (Geometry::TwoSided, true) => self.weights[self.interior_len()],
            _ => self.weights[self.delta_e()],
        }
    }

    /// `π_B` (if `left`) or `π_E`: boundary sites weighted by `C'_y`.
    pub fn boundary_measure(&self, left: bool) -> Vec<(i64, f64)> {
        let sites: Vec<usize> = (0..self.boundary.len())
            .filter(|&k| match self.geometry {
                Geometry::TwoSided => (self.boundary[k] <= self.a) == left,
                Geometry::Surrounding => true,
            })
            .collect();
        let total: f64 = sites.iter().map(|&k| self.boundary_mass[k]).sum();
        sites.iter().map(|&k| (self.boundary[k], self.boundary_mass[k] / total)).collect()
    }

    pub fn state_of(&self, x: i64) -> Result<usize> {
        if x <= self.a || x >= self.b {
            return Err(LabError::NotInterior { site: x, a: self.a, b: self.b });
        }
        Ok((x - self.a - 1) as usize)
    }

    /// `max |C'_i P_ij - C'_j P_ji|` over collapsed state pairs.
    pub fn detailed_balance_residual(&self) -> f64 {
        let s = self.p.nrows();
        let mut worst = 0.0f64;
        for i in 0..s {
            for j in i + 1..s {
                let r = (self.weights[i] * self.p[(i, j)] - self.weights[j] * self.p[(j, i)]).abs();
                worst = worst.max(r);
            }
        }
        worst
    }

    /// `max |sum_j P_ij - 1|` over collapsed states with positive weight.
    pub fn row_sum_residual(&self) -> f64 {
        (0..self.p.nrows())
            .filter(|&i| self.weights[i] > 0.0)
            .map(|i| (self.p.row(i).sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// `P^x[τ_{B∪E} > n]` for `n = 0..=n_max`, as natural logarithms.
    ///
    /// The iterated vector is renormalized whenever it gets small, so the
    /// result stays finite far past double-precision underflow.
    pub fn log_confinement_curve(&self, x: i64, n_max: usize) -> Result<Vec<f64>> {
        let i = self.state_of(x)?;
        let mut v = DVector::from_element(self.interior_len(), 1.0);
        let mut scale = 0.0;
        let mut out = Vec::with_capacity(n_max + 1);
        out.push(0.0);
        for _ in 0..n_max {
            v = &self.q * v;
            let top = v.max();
            if top < 1e-100 {
                v /= top;
                scale += top.ln();
            }
            out.push(v[i].ln() + scale);
        }
        Ok(out)
    }

    /// `P^x[τ_{B∪E} > n]`.
    pub fn confinement_tail(&self, x: i64, n: usize) -> Result<f64> {
        Ok(self.log_confinement_curve(x, n)?[n].exp())
    }

    /// Decay rate of the confinement tail measured on the last third of `[0, n_max]`.
    pub fn confinement_rate(&self, x: i64, n_max: usize) -> Result<ConfinementRate> {
        if n_max < 9 {
            return Err(LabError::InvalidArgument(format!("n_max = {n_max} too small for a rate fit")));
        }
        let curve = self.log_confinement_curve(x, n_max)?;
        let start = 2 * n_max / 3;
        let slope = |lo: usize, hi: usize| (curve[lo] - curve[hi]) / (hi - lo) as f64;
        let piece = (n_max - start) / 3;
        let slopes: Vec<f64> = (0..3).map(|k| slope(start + k * piece, start + (k + 1) * piece)).collect();
        let mean = slopes.iter().sum::<f64>() / 3.0;
        let spread = slopes.iter().cloned().fold(f64::MIN, f64::max) - slopes.iter().cloned().fold(f64::MAX, f64::min);
        Ok(ConfinementRate {
            rate: slope(start, n_max),
            slope_variation: spread / mean,
            scaled_rate: slope(start, n_max) * ((self.b - self.a) as f64).powi(2),
            n_max,
        })
    }

    /// `E^x[τ_{B∪E}]` for every interior site.
    pub fn expected_exit_times(&self) -> Result<Vec<f64>> {
        let n = self.interior_len();
        let m = DMatrix::identity(n, n) - &self.q;
        let t = m.lu().solve(&DVector::from_element(n, 1.0)).ok_or(LabError::Singular("expected exit time"))?;
        Ok(t.iter().copied().collect())
    }

    pub fn expected_exit_time(&self, x: i64) -> Result<f64> {
        let i = self.state_of(x)?;
        Ok(self.expected_exit_times()?[i])
    }

    /// Law of `X_{τ_{B∪E}}` from `x`.
    pub fn exit_distribution(&self, x: i64) -> Result<ExitDistribution> {
        let i = self.state_of(x)?;
        let n = self.interior_len();
        let m = (DMatrix::identity(n, n) - &self.q).transpose();
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        // row i of the Green function (I - Q)^{-1}
        let g = m.lu().solve(&e).ok_or(LabError::Singular("exit distribution"))?;
        let probs = self.to_boundary.tr_mul(&g);
        Ok(ExitDistribution { start: x, a: self.a, b: self.b, sites: self.boundary.clone(), probs: probs.iter().copied().collect() })
    }

    /// Exit laws from every interior site, in site order.
    pub fn exit_distributions(&self) -> Result<Vec<ExitDistribution>> {
        let n = self.interior_len();
        let m = DMatrix::identity(n, n) - &self.q;
        let u = m.lu().solve(&self.to_boundary).ok_or(LabError::Singular("exit distribution"))?;
        Ok((0..n)
            .map(|i| ExitDistribution {
                start: self.a + 1 + i as i64,
                a: self.a,
                b: self.b,
                sites: self.boundary.clone(),
                probs: u.row(i).iter().copied().collect(),
            })
            .collect())
    }

    /// Smallest `M` with `min_x mass_inside(M) >= 1 - eta`, together with the
    /// curve `M -> min_x mass_inside(M)` up to that point.
    pub fn locate_margin(&self, eta: f64) -> Result<MarginSearch> {
        let laws = self.exit_distributions()?;
        let r = self.env.truncation_radius();
        let mut curve = Vec::new();
        for m in 0..r {
            let worst = laws.iter().map(|d| d.mass_inside(m)).fold(f64::INFINITY, f64::min);
            curve.push(worst);
            if worst >= 1.0 - eta {
                return Ok(MarginSearch { eta, margin: Some(m), min_mass: curve });
            }
        }
        Ok(MarginSearch { eta, margin: None, min_mass: curve })
    }

    /// `h(z) = P^z[τ_target < τ_avoid]` on the collapsed chain, solved on the
    /// remaining states; `h = 1` on `target` and `0` on `avoid`.
    pub fn hitting_probability(&self, target: &[usize], avoid: &[usize]) -> Result<DVector<f64>> {
        let s = self.p.nrows();
        let free: Vec<usize> = (0..s).filter(|i| !target.contains(i) && !avoid.contains(i)).collect();
        let k = free.len();
        let mut m = DMatrix::zeros(k, k);
        let mut rhs = DVector::zeros(k);
        for (r, &i) in free.iter().enumerate() {
            for (c, &j) in free.iter().enumerate() {
                m[(r, c)] = if i == j { 1.0 } else { 0.0 } - self.p[(i, j)];
            }
            rhs[r] = target.iter().map(|&t| self.p[(i, t)]).sum();
        }
        let sol = solve(m, rhs, "hitting probability")?;
        let mut h = DVector::zeros(s);
        for &t in target {
            h[t] = 1.0;
        }
        for (r, &i) in free.iter().enumerate() {
            h[i] = sol[r];
        }
        Ok(h)
    }

    /// `E^z[τ_target]` on the collapsed chain.
    pub fn hitting_time(&self, target: &[usize]) -> Result<DVector<f64>> {
        let s = self.p.nrows();
        let free: Vec<usize> = (0..s).filter(|i| !target.contains(i)).collect();
        let k = free.len();
        let mut m = DMatrix::zeros(k, k);
        for (r, &i) in free.iter().enumerate() {
            for (c, &j) in free.iter().enumerate() {
                m[(r, c)] = if i == j { 1.0 } else { 0.0 } - self.p[(i, j)];
            }
        }
        let sol = solve(m, DVector::from_element(k, 1.0), "hitting time")?;
        let mut t = DVector::zeros(s);
        for (r, &i) in free.iter().enumerate() {
            t[i] = sol[r];
        }
        Ok(t)
    }

    /// `P^i[τ_j < τ_i^+]` on the collapsed chain.
    pub fn escape_between(&self, i: usize, j: usize) -> Result<f64> {
        let h = self.hitting_probability(&[j], &[i])?;
        Ok(self.p.row(i).iter().zip(h.iter()).map(|(p, h)| p * h).sum())
    }

    /// `C_eff(Δ_E, x) = C'_E P^{Δ_E}[τ_x < τ^+_{Δ_E}]`.
    pub fn effective_conductance(&self, x: i64) -> Result<f64> {
        let i = self.state_of(x)?;
        let e = self.delta_e();
        Ok(self.weights[e] * self.escape_between(e, i)?)
    }

    /// Two disjoint nearest-neighbour series paths from `x` to the boundary.
    pub fn series_lower_bound(&self, x: i64) -> Result<f64> {
        self.state_of(x)?;
        let series = |lo: i64, hi: i64| 1.0 / (lo..hi).map(|i| 1.0 / self.env.conductance(i, i + 1)).sum::<f64>();
        Ok(series(self.a, x) + series(x, self.b))
    }

    /// Both sides of the commute-time identity between `x` and `Δ_B`:
    /// `E^x[τ_{Δ_B}] + E^{Δ_B}[τ_x]` and `(sum C') R_eff(Δ_B, x)`.
    pub fn commute_time_check(&self, x: i64) -> Result<(f64, f64)> {
        let db = self.delta_b().ok_or_else(|| LabError::InvalidArgument("commute check needs the two-sided geometry".into()))?;
        let i = self.state_of(x)?;
        let lhs = self.hitting_time(&[db])?[i] + self.hitting_time(&[i])?[db];
        let c_eff = self.weights[i] * self.escape_between(i, db)?;
        let total: f64 = self.weights.iter().sum();
        Ok((lhs, total / c_eff))
    }

    /// Both sides of the path-reversal identity on the chain with boundary
    /// sites kept apart: `C'_x P^x[X_{τ_E} = y, τ_E < τ_x^+]` and
    /// `C'_y P^y[τ_x < τ_E^+]`.
    pub fn reversal_identity_check(&self, x: i64, y: i64) -> Result<(f64, f64)> {
        let i = self.state_of(x)?;
        let k = self
            .boundary
            .iter()
            .position(|&s| s == y)
            .ok_or_else(|| LabError::InvalidArgument(format!("{y} is not a materialized boundary site")))?;
        let n = self.interior_len();
        let free: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let f = free.len();
        let mut m = DMatrix::zeros(f, f);
        let mut rhs = DMatrix::zeros(f, 2);
        for (r, &u) in free.iter().enumerate() {
            for (c, &v) in free.iter().enumerate() {
                m[(r, c)] = if u == v { 1.0 } else { 0.0 } - self.q[(u, v)];
            }
            rhs[(r, 0)] = self.to_boundary[(u, k)];
            rhs[(r, 1)] = self.q[(u, i)];
        }
        // column 0: first exit at y before returning to x; column 1: reach x before exiting
        let sol = if f == 0 { rhs } else { m.lu().solve(&rhs).ok_or(LabError::Singular("reversal identity"))? };
        let mut lhs = self.env.conductance(x, y);
        let mut rhs_val = self.env.conductance(y, x);
        for (r, &u) in free.iter().enumerate() {
            let z = self.a + 1 + u as i64;
            lhs += self.env.conductance(x, z) * sol[(r, 0)];
            rhs_val += self.env.conductance(y, z) * sol[(r, 1)];
        }
        Ok((lhs, rhs_val))
    }
}

fn solve(m: DMatrix<f64>, rhs: DVector<f64>, what: &'static str) -> Result<DVector<f64>> {
    if rhs.is_empty() {
        return Ok(rhs);
    }
    m.lu().solve(&rhs).ok_or(LabError::Singular(what))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfinementRate {
    /// Slope of `-log P[τ > n]` on the last third.
    pub rate: f64,
    /// `(max - min) / mean` of the slopes on the three sub-windows of the last third.
    pub slope_variation: f64,
    /// `rate * (b - a)^2`.
    pub scaled_rate: f64,
    pub n_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitDistribution {
    pub start: i64,
    pub a: i64,
    pub b: i64,
    pub sites: Vec<i64>,
    pub probs: Vec<f64>,
}

impl ExitDistribution {
    pub fn prob(&self, y: i64) -> f64 {
        self.sites.iter().position(|&s| s == y).map_or(0.0, |k| self.probs[k])
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Mass on `[a - margin, b + margin]`.
    pub fn mass_inside(&self, margin: usize) -> f64 {
        let m = margin as i64;
        self.sites
            .iter()
            .zip(&self.probs)
            .filter(|(y, _)| **y >= self.a - m && **y <= self.b + m)
            .map(|(_, p)| p)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginSearch {
    pub eta: f64,
    pub margin: Option<usize>,
    /// `min_x mass_inside(M)` for `M = 0, 1, ...`.
    pub min_mass: Vec<f64>,
}

/// Escape probability from the origin to `{|x| >= L}` before returning:
/// `P[τ_{I_L^c} < τ_0^+]`.
pub fn escape_probability(env: &Environment, l: i64) -> Result<f64> {
    let problem = IntervalProblem::new(env, -l, l, Geometry::Surrounding)?;
    problem.escape_between(problem.state_of(0)?, problem.delta_e())
}

/// The minimizer of the Dirichlet form for the escape problem:
/// `h(x) = P^x[τ_{I_L^c} < τ_0]`, with `h = 1` off `(-L, L)`.
pub fn escape_potential(env: &Environment, l: i64) -> Result<impl Fn(i64) -> f64> {
    let problem = IntervalProblem::new(env, -l, l, Geometry::Surrounding)?;
    let h = problem.hitting_probability(&[problem.delta_e()], &[problem.state_of(0)?])?;
    let values: Vec<f64> = h.iter().take(problem.interior_len()).copied().collect();
    Ok(move |x: i64| if x <= -l || x >= l { 1.0 } else { values[(x + l - 1) as usize] })
}

/// `sum_{x,y} omega(x,y) (f(x) - f(y))^2` over ordered pairs with at least one
/// endpoint in `support`; `f` must be constant off the support on each side.
pub fn dirichlet_form(env: &Environment, f: impl Fn(i64) -> f64, support: (i64, i64)) -> Result<f64> {
    let r = env.truncation_radius() as i64;
    let (x_min, x_max) = env.window();
    let (lo, hi) = support;
    if lo - r < x_min || hi + r > x_max {
        return Err(LabError::IntervalMargin { a: lo, b: hi, radius: r as usize, x_min, x_max });
    }
    let mut inside = 0.0;
    let mut crossing = 0.0;
    for x in lo..=hi {
        let fx = f(x);
        for d in 1..=r {
            let y = x + d;
            let w = env.conductance(x, y);
            if w == 0.0 {
                continue;
            }
            let e = w * (fx - f(y)).powi(2);
            if y <= hi {
                inside += e;
            } else {
                crossing += e;
            }
        }
        for d in 1..=r {
            let y = x - d;
            if y < lo {
                crossing += env.conductance(x, y) * (fx - f(y)).powi(2);
            }
        }
    }
    // ordered pairs: inside pairs twice, support-to-outside pairs twice as well
    Ok(2.0 * (inside + crossing))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{generate, Defect, EnvironmentSpec};
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn homogeneous(profile: Vec<f64>, half: i64) -> Environment {
        generate(&EnvironmentSpec::homogeneous(profile, (-half, half), 0)).unwrap()
    }

    /// Two-range field with independently perturbed conductances.
    fn random_two_range(half: i64, seed: u64) -> Environment {
        let mut spec = EnvironmentSpec::homogeneous(vec![1.0, 0.05], (-half, half), seed);
        let mut s = rng::stream(seed, "test-two-range", &[]);
        for x in -half..half {
            spec = spec.with_defect(Defect { x, y: x + 1, value: s.random_range(0.5..1.5) });
            if x + 2 <= half {
                spec = spec.with_defect(Defect { x, y: x + 2, value: s.random_range(0.0..0.1) });
            }
        }
        generate(&spec).unwrap()
    }

    #[test]
    fn nearest_neighbour_collapsed_chain() {
        let env = homogeneous(vec![1.0], 10);
        let p = IntervalProblem::new(&env, 0, 4, Geometry::TwoSided).unwrap();
        let m = p.matrix();
        let (db, de) = (p.delta_b().unwrap(), p.delta_e());
        assert_eq!(m[(0, db)], 0.5);
        assert_eq!(m[(2, de)], 0.5);
        assert_eq!(m[(1, 0)], 0.5);
        assert_eq!(m[(db, de)], 0.0);
        assert_eq!(m[(de, db)], 0.0);
        assert_eq!(m[(db, db)], 0.0);
        assert_eq!(m[(db, 0)], 1.0);
        assert!(p.row_sum_residual() < 1e-12);
    }

    #[test]
    fn two_range_boundary_row() {
        let env = homogeneous(vec![1.0, 0.05], 10);
        let p = IntervalProblem::new(&env, 0, 4, Geometry::TwoSided).unwrap();
        // (omega_{1,0} + omega_{1,-1}) / C'_1 = 1.05 / 2.1
        assert!((p.matrix()[(0, p.delta_b().unwrap())] - 0.5).abs() < 1e-15);
        assert_eq!(p.boundary_sites(), &[-1, 0, 4, 5]);
        // C'_{-1} = omega_{-1,1}, C'_0 = omega_{0,1} + omega_{0,2}
        assert_eq!(p.boundary_masses(), &[0.05, 1.05, 1.05, 0.05]);
        let pi_b = p.boundary_measure(true);
        assert!((pi_b.iter().map(|(_, w)| w).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((p.collapsed_mass(true) - 1.1).abs() < 1e-15);
    }

    #[test]
    fn build_rejects_bad_intervals() {
        let env = homogeneous(vec![1.0, 0.05], 10);
        assert!(matches!(IntervalProblem::new(&env, 0, 1, Geometry::TwoSided), Err(LabError::IntervalTooShort { .. })));
        assert!(matches!(IntervalProblem::new(&env, -9, 0, Geometry::TwoSided), Err(LabError::IntervalMargin { .. })));
    }

    #[test]
    fn escape_is_one_over_l_for_unit_conductances() {
        let env = homogeneous(vec![1.0], 300);
        let mut last = 1.0;
        for l in [1, 2, 5, 10, 50, 250] {
            let p = escape_probability(&env, l).unwrap();
            assert!((p - 1.0 / l as f64).abs() < 1e-12, "L = {l}: {p}");
            assert!(p <= last);
            last = p;
        }
    }

    #[test]
    fn dirichlet_form_examples() {
        let env = homogeneous(vec![1.0], 100);
        assert_eq!(dirichlet_form(&env, |_| 0.3, (-20, 20)).unwrap(), 0.0);
        let l = 10i64;
        let ramp = |x: i64| (x.abs() as f64 / l as f64).min(1.0);
        let phi = dirichlet_form(&env, ramp, (-l, l)).unwrap();
        assert!((phi - 4.0 / l as f64).abs() < 1e-14);
    }

    #[test]
    fn dirichlet_principle_is_attained() {
        let env = random_two_range(80, 3);
        for l in [3, 10, 40] {
            let p = escape_probability(&env, l).unwrap();
            let h = escape_potential(&env, l).unwrap();
            let phi = dirichlet_form(&env, &h, (-l - 2, l + 2)).unwrap();
            let c0 = env.total_conductance(0).unwrap();
            assert!((phi - 2.0 * c0 * p).abs() < 1e-10, "L = {l}");
            let ramp = |x: i64| (x.abs() as f64 / l as f64).min(1.0);
            assert!(2.0 * c0 * p <= dirichlet_form(&env, ramp, (-l - 2, l + 2)).unwrap());
        }
    }

    #[test]
    fn confinement_matches_hand_powers() {
        // interior {1,2,3}, simple random walk; from 2: after one step at 1 or 3,
        // each of which survives a second step with probability 1/2
        let env = homogeneous(vec![1.0], 10);
        let p = IntervalProblem::new(&env, 0, 4, Geometry::Surrounding).unwrap();
        assert_eq!(p.confinement_tail(2, 0).unwrap(), 1.0);
        assert!((p.confinement_tail(2, 1).unwrap() - 1.0).abs() < 1e-15);
        assert!((p.confinement_tail(2, 2).unwrap() - 0.5).abs() < 1e-15);
        assert!((p.confinement_tail(1, 2).unwrap() - 0.5).abs() < 1e-15);
        let curve = p.log_confinement_curve(2, 2000).unwrap();
        assert!(curve.windows(2).all(|w| w[1] <= w[0]));
        assert!(curve[2000].is_finite() && curve[2000] < -500.0);
    }

    #[test]
    fn confinement_rate_is_the_principal_eigenvalue() {
        // simple random walk on {1..N-1}: spectral radius cos(pi/N)
        let env = homogeneous(vec![1.0], 60);
        let p = IntervalProblem::new(&env, 0, 20, Geometry::Surrounding).unwrap();
        let rate = p.confinement_rate(10, 4000).unwrap();
        let expected = -(std::f64::consts::PI / 20.0).cos().ln();
        assert!((rate.rate - expected).abs() < 1e-9 * expected.max(1.0));
        assert!(rate.slope_variation < 1e-6);
    }

    #[test]
    fn exit_time_closed_forms() {
        let env = homogeneous(vec![1.0], 50);
        let p = IntervalProblem::new(&env, 0, 2, Geometry::Surrounding).unwrap();
        assert!((p.expected_exit_time(1).unwrap() - 1.0).abs() < 1e-12);
        let p = IntervalProblem::new(&env, 0, 30, Geometry::Surrounding).unwrap();
        let t = p.expected_exit_times().unwrap();
        for (i, &ti) in t.iter().enumerate() {
            let x = (i + 1) as f64;
            assert!((ti - x * (30.0 - x)).abs() < 1e-10);
        }
    }

    #[test]
    fn gamblers_ruin_exit_law() {
        let env = homogeneous(vec![1.0], 30);
        let p = IntervalProblem::new(&env, 0, 10, Geometry::Surrounding).unwrap();
        for x in 1..10 {
            let d = p.exit_distribution(x).unwrap();
            assert!((d.prob(10) - x as f64 / 10.0).abs() < 1e-12);
            assert_eq!(d.mass_inside(0), d.total());
            assert!((d.total() - 1.0).abs() < 1e-12);
        }
        let all = p.exit_distributions().unwrap();
        assert!((all[2].prob(10) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn effective_conductance_series_law() {
        let env = homogeneous(vec![1.0], 40);
        let p = IntervalProblem::new(&env, -3, 12, Geometry::Surrounding).unwrap();
        for x in -2..12 {
            let c = p.effective_conductance(x).unwrap();
            let exact = 1.0 / (x + 3) as f64 + 1.0 / (12 - x) as f64;
            assert!((c - exact).abs() < 1e-12);
            assert!((p.series_lower_bound(x).unwrap() - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn long_range_edges_raise_effective_conductance() {
        let nn = homogeneous(vec![1.0], 40);
        let two = homogeneous(vec![1.0, 0.05], 40);
        let p = IntervalProblem::new(&nn, 0, 10, Geometry::Surrounding).unwrap();
        let q = IntervalProblem::new(&two, 0, 10, Geometry::Surrounding).unwrap();
        for x in 1..10 {
            assert!(q.effective_conductance(x).unwrap() >= p.effective_conductance(x).unwrap());
        }
        assert!(q.effective_conductance(5).unwrap() >= 0.4 * two.kappa);
    }

    #[test]
    fn commute_time_closed_form() {
        // [0,4]: the collapsed chain is the path Δ_B-1-2-3-Δ_E with unit edges,
        // total weight 8 and R_eff(Δ_B, 2) = 2
        let env = homogeneous(vec![1.0], 10);
        let p = IntervalProblem::new(&env, 0, 4, Geometry::TwoSided).unwrap();
        let (lhs, rhs) = p.commute_time_check(2).unwrap();
        assert!((rhs - 16.0).abs() < 1e-12);
        assert!((lhs - 16.0).abs() < 1e-10);
        let (lhs, rhs) = IntervalProblem::new(&env, 0, 2, Geometry::TwoSided).unwrap().commute_time_check(1).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn reversal_identity_nearest_neighbour() {
        let env = homogeneous(vec![1.0], 30);
        let p = IntervalProblem::new(&env, 0, 10, Geometry::Surrounding).unwrap();
        let (lhs, rhs) = p.reversal_identity_check(3, 10).unwrap();
        // C_3 P^3[exit at 10 before return] = 2 * 1/2 * 1/7
        assert!((lhs - 1.0 / 7.0).abs() < 1e-12);
        assert!((rhs - 1.0 / 7.0).abs() < 1e-12);
        let sym = homogeneous(vec![1.0, 0.05], 30);
        let p = IntervalProblem::new(&sym, 0, 10, Geometry::Surrounding).unwrap();
        let (l1, _) = p.reversal_identity_check(5, -1).unwrap();
        let (l2, _) = p.reversal_identity_check(5, 11).unwrap();
        assert!((l1 - l2).abs() < 1e-14);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn identities_hold_on_random_fields(seed in 0u64..1000, a in -60i64..-5, len in 3i64..40, frac in 0.0f64..1.0) {
            let env = random_two_range(120, seed);
            let b = a + len;
            let x = a + 1 + ((len - 2) as f64 * frac) as i64;
            let two = IntervalProblem::new(&env, a, b, Geometry::TwoSided).unwrap();
            prop_assert!(two.detailed_balance_residual() <= 1e-12);
            prop_assert!(two.row_sum_residual() <= 1e-12);
            let (lhs, rhs) = two.commute_time_check(x).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-8 * rhs);

            let sur = IntervalProblem::new(&env, a, b, Geometry::Surrounding).unwrap();
            prop_assert!(sur.detailed_balance_residual() <= 1e-12);
            for &y in sur.boundary_sites() {
                let (lhs, rhs) = sur.reversal_identity_check(x, y).unwrap();
                prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1e-300));
            }
            let d = sur.exit_distribution(x).unwrap();
            prop_assert!((d.total() - 1.0).abs() <= 1e-10);
            prop_assert!(d.mass_inside(0) <= d.mass_inside(1) + 1e-15);
            let c_eff = sur.effective_conductance(x).unwrap();
            let from_x = sur.weights()[sur.state_of(x).unwrap()] * sur.escape_between(sur.state_of(x).unwrap(), sur.delta_e()).unwrap();
            prop_assert!((c_eff - from_x).abs() <= 1e-10 * c_eff);
            prop_assert!(c_eff >= sur.series_lower_bound(x).unwrap() * (1.0 - 1e-12));
            let t = sur.expected_exit_time(x).unwrap();
            let gamma = sur.weights().iter().cloned().fold(0.0, f64::max);
            prop_assert!(t <= gamma / 0.5 * ((b - a + 1) as f64).powi(2));
        }
    }
}
