//! Conductance fields on a finite window of the integers.
//!
//! Conductances are stored once per unordered pair `{x, x + y}`, `1 <= y <= R`,
//! keyed by the left endpoint, so symmetry holds by construction.

mod generate;
mod io;
mod validate;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

pub use generate::{generate, min_truncation_radius, tail_mass_bound};
pub use io::{read_environment, write_environment};
pub use validate::{validate, Check, ValidationReport};

/// Tail mass beyond the truncation radius must stay below this multiple of kappa.
pub const TAIL_MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelTag {
    IidPolynomial,
    BlockCounterexample,
    Homogeneous,
    File,
}

impl ModelTag {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelTag::IidPolynomial => "iid-polynomial",
            ModelTag::BlockCounterexample => "block-counterexample",
            ModelTag::Homogeneous => "homogeneous",
            ModelTag::File => "file",
        }
    }
}

impl fmt::Display for ModelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelTag {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iid-polynomial" => Ok(ModelTag::IidPolynomial),
            "block-counterexample" => Ok(ModelTag::BlockCounterexample),
            "homogeneous" => Ok(ModelTag::Homogeneous),
            "file" => Ok(ModelTag::File),
            other => Err(LabError::InvalidSpec(format!("unknown model `{other}`"))),
        }
    }
}

/// Per-model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum ModelParams {
    /// Independent conductances, uniform under the polynomial envelope.
    IidPolynomial,
    /// Nearest-neighbour blocks with `P[V > s] ~ s^-(1 + block_eps)`, each
    /// filled with all 1s or with the alternating pattern 2,1,2,...
    BlockCounterexample { block_eps: f64 },
    /// `omega(x, x + y) = profile[y - 1]`.
    Homogeneous { profile: Vec<f64> },
}

impl ModelParams {
    pub fn tag(&self) -> ModelTag {
        match self {
            ModelParams::IidPolynomial => ModelTag::IidPolynomial,
            ModelParams::BlockCounterexample { .. } => ModelTag::BlockCounterexample,
            ModelParams::Homogeneous { .. } => ModelTag::Homogeneous,
        }
    }
}

/// A single planted override `omega(x, y) = value`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Defect {
    pub x: i64,
    pub y: i64,
    pub value: f64,
}

impl FromStr for Defect {
    type Err = LabError;

    /// `edge:x:value` sets `omega(x, x+1)`; `pair:x:y:value` sets `omega(x, y)`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || LabError::InvalidSpec(format!("bad defect `{s}`"));
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["edge", x, v] => {
                let x: i64 = x.parse().map_err(|_| bad())?;
                Ok(Defect { x, y: x + 1, value: v.parse().map_err(|_| bad())? })
            }
            ["pair", x, y, v] => Ok(Defect {
                x: x.parse().map_err(|_| bad())?,
                y: y.parse().map_err(|_| bad())?,
                value: v.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    pub params: ModelParams,
    pub window: (i64, i64),
    pub truncation_radius: usize,
    pub kappa: f64,
    pub tail_k: f64,
    pub tail_beta: f64,
    pub seed: u64,
    #[serde(default)]
    pub defects: Vec<Defect>,
}

impl EnvironmentSpec {
    /// Homogeneous profile with certificate parameters chosen as tight as
    /// the profile allows: `kappa = c_1`, `beta = 1`, smallest admissible `K`.
    pub fn homogeneous(profile: Vec<f64>, window: (i64, i64), seed: u64) -> Self {
        let beta = 1.0;
        let tail_k = profile
            .iter()
            .enumerate()
            .map(|(i, &c)| c * (1.0 + ((i + 1) as f64).powf(3.0 + beta)))
            .fold(0.0, f64::max);
        EnvironmentSpec {
            kappa: profile.first().copied().unwrap_or(0.0),
            truncation_radius: profile.len(),
            params: ModelParams::Homogeneous { profile },
            window,
            tail_k,
            tail_beta: beta,
            seed,
            defects: Vec::new(),
        }
    }

    /// Independent polynomial-tail field with the smallest truncation radius
    /// meeting [`TAIL_MASS_TOLERANCE`].
    pub fn iid_polynomial(kappa: f64, tail_k: f64, tail_beta: f64, window: (i64, i64), seed: u64) -> Self {
        EnvironmentSpec {
            params: ModelParams::IidPolynomial,
            window,
            truncation_radius: min_truncation_radius(kappa, tail_k, tail_beta),
            kappa,
            tail_k,
            tail_beta,
            seed,
            defects: Vec::new(),
        }
    }

    pub fn block_counterexample(block_eps: f64, window: (i64, i64), seed: u64) -> Self {
        EnvironmentSpec {
            params: ModelParams::BlockCounterexample { block_eps },
            window,
            truncation_radius: 1,
            kappa: 1.0,
            tail_k: 4.0,
            tail_beta: 1.0,
            seed,
            defects: Vec::new(),
        }
    }

    pub fn with_defect(mut self, defect: Defect) -> Self {
        self.defects.push(defect);
        self
    }

    pub fn check(&self) -> Result<()> {
        let (lo, hi) = self.window;
        if self.truncation_radius < 1 {
            return Err(LabError::InvalidSpec("truncation radius must be >= 1".into()));
        }
        if hi < lo || hi - lo + 1 < 3 {
            return Err(LabError::InvalidSpec(format!("window [{lo}, {hi}] shorter than 3 sites")));
        }
        if hi - lo < 2 * self.truncation_radius as i64 {
            return Err(LabError::WindowTooSmall { x_min: lo, x_max: hi, radius: self.truncation_radius });
        }
        for (name, v) in [("kappa", self.kappa), ("tail_K", self.tail_k), ("tail_beta", self.tail_beta)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(LabError::InvalidSpec(format!("{name} must be positive, got {v}")));
            }
        }
        match &self.params {
            ModelParams::IidPolynomial => {
                let envelope_1 = self.tail_k / 2.0;
                if self.kappa > envelope_1 {
                    return Err(LabError::InvalidSpec(format!(
                        "kappa {} exceeds the nearest-neighbour envelope K/2 = {envelope_1}",
                        self.kappa
                    )));
                }
            }
            ModelParams::BlockCounterexample { block_eps } => {
                if !(*block_eps > 0.0 && block_eps.is_finite()) {
                    return Err(LabError::InvalidSpec("block_eps must be positive".into()));
                }
                if self.truncation_radius != 1 {
                    return Err(LabError::InvalidSpec("block counterexample is nearest-neighbour (R = 1)".into()));
                }
            }
            ModelParams::Homogeneous { profile } => {
                if profile.is_empty() || profile.len() > self.truncation_radius {
                    return Err(LabError::InvalidSpec("profile length must be in 1..=R".into()));
                }
                if profile.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
                    return Err(LabError::InvalidSpec("profile values must be positive".into()));
                }
            }
        }
        Ok(())
    }
}

/// Materialized conductance field. Cheap to clone and to shift: the data is
/// shared and only the coordinate labels move.
#[derive(Debug, Clone)]
pub struct Environment {
    x_min: i64,
    x_max: i64,
    radius: usize,
    /// `forward[(x - x_min) * radius + (y - 1)] = omega(x, x + y)`.
    forward: Arc<[f64]>,
    pub kappa: f64,
    pub tail_k: f64,
    pub tail_beta: f64,
    pub seed: u64,
    pub model_tag: ModelTag,
    pub params: Option<ModelParams>,
    pub defects: Vec<Defect>,
    pub tail_mass_bound: f64,
    shift_total: i64,
    content_hash: u64,
}

pub(crate) struct RawEnvironment {
    pub x_min: i64,
    pub x_max: i64,
    pub radius: usize,
    pub forward: Vec<f64>,
    pub kappa: f64,
    pub tail_k: f64,
    pub tail_beta: f64,
    pub seed: u64,
    pub model_tag: ModelTag,
    pub params: Option<ModelParams>,
    pub defects: Vec<Defect>,
    pub tail_mass_bound: f64,
}

impl Environment {
    pub(crate) fn from_raw(raw: RawEnvironment) -> Self {
        let mut hash = 0xcbf2_9ce4_8422_2325_u64;
        let mut feed = |v: u64| {
            for b in v.to_le_bytes() {
                hash ^= u64::from(b);
                hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        feed(raw.x_min as u64);
        feed(raw.x_max as u64);
        feed(raw.radius as u64);
        for w in &raw.forward {
            feed(w.to_bits());
        }
        Environment {
            x_min: raw.x_min,
            x_max: raw.x_max,
            radius: raw.radius,
            forward: raw.forward.into(),
            kappa: raw.kappa,
            tail_k: raw.tail_k,
            tail_beta: raw.tail_beta,
            seed: raw.seed,
            model_tag: raw.model_tag,
            params: raw.params,
            defects: raw.defects,
            tail_mass_bound: raw.tail_mass_bound,
            shift_total: 0,
            content_hash: hash,
        }
    }

    pub fn window(&self) -> (i64, i64) {
        (self.x_min, self.x_max)
    }

    pub fn truncation_radius(&self) -> usize {
        self.radius
    }

    /// Stable identifier: content hash of the field plus the accumulated shift.
    pub fn env_id(&self) -> String {
        if self.shift_total == 0 {
            format!("{}-{:016x}", self.model_tag, self.content_hash)
        } else {
            format!("{}-{:016x}@{:+}", self.model_tag, self.content_hash, self.shift_total)
        }
    }

    pub fn contains(&self, x: i64) -> bool {
        x >= self.x_min && x <= self.x_max
    }

    /// All jumps out of `x` are materialized.
    pub fn is_interior(&self, x: i64) -> bool {
        let r = self.radius as i64;
        x - r >= self.x_min && x + r <= self.x_max
    }

    /// Interior sites, as an inclusive range.
    pub fn interior(&self) -> (i64, i64) {
        let r = self.radius as i64;
        (self.x_min + r, self.x_max - r)
    }

    fn slot(&self, x: i64, y: i64) -> Option<usize> {
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        let d = (hi - lo) as usize;
        if d == 0 || d > self.radius || lo < self.x_min || hi > self.x_max {
            return None;
        }
        Some((lo - self.x_min) as usize * self.radius + d - 1)
    }

    /// `omega(x, y)`; zero for pairs that are not materialized.
    pub fn conductance(&self, x: i64, y: i64) -> f64 {
        self.slot(x, y).map_or(0.0, |i| self.forward[i])
    }

    pub(crate) fn forward_row(&self, x: i64) -> &[f64] {
        let start = (x - self.x_min) as usize * self.radius;
        &self.forward[start..start + self.radius]
    }

    /// Total conductance `C_x`.
    pub fn total_conductance(&self, x: i64) -> Result<f64> {
        if !self.is_interior(x) {
            return Err(LabError::BoundarySite { site: x });
        }
        Ok(self.total_conductance_unchecked(x))
    }

    pub(crate) fn total_conductance_unchecked(&self, x: i64) -> f64 {
        let mut c = 0.0;
        for d in 1..=self.radius as i64 {
            c += self.conductance(x, x - d);
        }
        for d in 1..=self.radius as i64 {
            c += self.conductance(x, x + d);
        }
        c
    }

    /// `max_x sum_y omega(x,y) (y-x)^2` over interior sites.
    pub fn second_moment_bound(&self) -> f64 {
        let (lo, hi) = self.interior();
        (lo..=hi)
            .map(|x| {
                (1..=self.radius as i64)
                    .map(|d| {
                        let d2 = (d * d) as f64;
                        d2 * (self.conductance(x, x + d) + self.conductance(x, x - d))
                    })
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// The field seen from `z`: `shift(env, z).conductance(x, y) = env.conductance(x + z, y + z)`.
    pub fn shift(&self, z: i64) -> Result<Environment> {
        if !self.contains(z) {
            return Err(LabError::ShiftOutOfWindow { shift: z });
        }
        let mut out = self.clone();
        out.x_min -= z;
        out.x_max -= z;
        out.shift_total += z;
        Ok(out)
    }

    pub(crate) fn set_conductance(&mut self, x: i64, y: i64, value: f64) -> Result<()> {
        let i = self
            .slot(x, y)
            .ok_or_else(|| LabError::InvalidSpec(format!("pair ({x}, {y}) is not materialized")))?;
        let mut data = self.forward.to_vec();
        data[i] = value;
        self.forward = data.into();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn homogeneous(profile: Vec<f64>, window: (i64, i64)) -> Environment {
        generate(&EnvironmentSpec::homogeneous(profile, window, 1)).unwrap()
    }

    #[test]
    fn homogeneous_nearest_neighbour_totals() {
        let env = homogeneous(vec![1.0], (-10, 10));
        for x in -9..=9 {
            assert_eq!(env.conductance(x, x + 1), 1.0);
            assert_eq!(env.total_conductance(x).unwrap(), 2.0);
        }
    }

    #[test]
    fn two_range_total_is_direct_sum() {
        let env = homogeneous(vec![1.0, 0.05], (-10, 10));
        assert!((env.total_conductance(0).unwrap() - 2.1).abs() < 1e-15);
    }

    #[test]
    fn boundary_site_is_rejected() {
        let env = homogeneous(vec![1.0, 0.05], (-10, 10));
        assert!(matches!(env.total_conductance(9), Err(LabError::BoundarySite { site: 9 })));
        assert!(env.total_conductance(8).is_ok());
    }

    #[test]
    fn shift_relabels_and_composes() {
        let spec = EnvironmentSpec::iid_polynomial(0.5, 2.0, 3.0, (-200, 200), 11);
        let env = generate(&spec).unwrap();
        let zero = env.shift(0).unwrap();
        assert_eq!(zero.conductance(4, 5), env.conductance(4, 5));
        let s3 = env.shift(3).unwrap();
        assert_eq!(s3.conductance(0, 1), env.conductance(3, 4));
        assert_eq!(s3.conductance(-2, 5), env.conductance(1, 8));
        let s3m7 = s3.shift(-7).unwrap();
        let s4m = env.shift(-4).unwrap();
        for x in -20..20 {
            for d in 1..6 {
                assert_eq!(s3m7.conductance(x, x + d), s4m.conductance(x, x + d));
            }
        }
        assert_eq!(s3m7.window(), s4m.window());
        assert!(matches!(env.shift(1000), Err(LabError::ShiftOutOfWindow { .. })));
    }

    #[test]
    fn homogeneous_shift_is_equal_field() {
        let env = homogeneous(vec![1.0, 0.05], (-50, 50));
        let s = env.shift(17).unwrap();
        for x in -20..20 {
            assert_eq!(s.conductance(x, x + 1), env.conductance(x, x + 1));
            assert_eq!(s.conductance(x, x + 2), env.conductance(x, x + 2));
        }
    }

    #[test]
    fn defect_parsing() {
        let d: Defect = "edge:0:0.0".parse().unwrap();
        assert_eq!(d, Defect { x: 0, y: 1, value: 0.0 });
        let d: Defect = "pair:0:5:1".parse().unwrap();
        assert_eq!(d, Defect { x: 0, y: 5, value: 1.0 });
        assert!("edge:zero:1".parse::<Defect>().is_err());
    }
}
