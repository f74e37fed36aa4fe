//! Walker/Vose alias tables for the per-site jump law.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::OnceLock;

use crate::environment::Environment;

#[derive(Debug, Clone)]
pub struct AliasTable {
    offsets: Vec<i32>,
    threshold: Vec<f64>,
    alias: Vec<u32>,
}

impl AliasTable {
    /// Build from `(outcome, weight)` pairs; weights need not be normalized.
    /// Zero-weight outcomes are dropped.
    pub fn new(weighted: &[(i32, f64)]) -> Self {
        let items: Vec<(i32, f64)> = weighted.iter().copied().filter(|&(_, w)| w > 0.0).collect();
        assert!(!items.is_empty(), "alias table needs a positive weight");
        let n = items.len();
        let total: f64 = items.iter().map(|&(_, w)| w).sum();
        let mut scaled: Vec<f64> = items.iter().map(|&(_, w)| w * n as f64 / total).collect();
        let mut threshold = vec![1.0; n];
        let mut alias: Vec<u32> = (0..n as u32).collect();
        let (mut small, mut large): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| scaled[i] < 1.0);
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            threshold[s] = scaled[s];
            alias[s] = l as u32;
            scaled[l] = (scaled[l] + scaled[s]) - 1.0;
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // leftovers are 1 up to rounding
        for i in small.into_iter().chain(large) {
            threshold[i] = 1.0;
        }
        AliasTable { offsets: items.into_iter().map(|(o, _)| o).collect(), threshold, alias }
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// One 64-bit draw per sample: high half picks the column, low half
    /// flips the biased coin.
    #[inline]
    pub fn sample_bits(&self, bits: u64) -> i32 {
        let column = (((bits >> 32) * self.offsets.len() as u64) >> 32) as usize;
        let coin = (bits & 0xffff_ffff) as f64 * (1.0 / 4_294_967_296.0);
        if coin < self.threshold[column] {
            self.offsets[column]
        } else {
            self.offsets[self.alias[column] as usize]
        }
    }

    /// Probability assigned to each outcome, reconstructed from the table.
    pub fn probabilities(&self) -> Vec<(i32, f64)> {
        let n = self.len() as f64;
        let mut p = vec![0.0; self.len()];
        for (i, &t) in self.threshold.iter().enumerate() {
            p[i] += t / n;
            p[self.alias[i] as usize] += (1.0 - t) / n;
        }
        self.offsets.iter().copied().zip(p).collect()
    }
}

/// Jump law of site `x`: offsets `y - x` with weights `omega(x, y)`.
pub fn site_table(env: &Environment, x: i64) -> AliasTable {
    let r = env.truncation_radius() as i64;
    let weighted: Vec<(i32, f64)> = (-r..=r)
        .filter(|&d| d != 0)
        .map(|d| (d as i32, env.conductance(x, x + d)))
        .collect();
    AliasTable::new(&weighted)
}

/// Lazily built per-site alias tables, shared read-mostly between workers.
/// Once `capacity` tables are cached, further sites get a transient table;
/// results never depend on whether a lookup hit the cache.
pub struct JumpSampler<'e> {
    env: &'e Environment,
    lo: i64,
    tables: Vec<OnceLock<AliasTable>>,
    cached: AtomicUsize,
    capacity: usize,
}

impl<'e> JumpSampler<'e> {
    /// Memory budget for cached tables when no explicit capacity is given.
    pub const DEFAULT_BUDGET_BYTES: usize = 256 << 20;

    pub fn new(env: &'e Environment) -> Self {
        // offset, threshold and alias per outcome
        let per_table = 2 * env.truncation_radius() * 16;
        Self::with_capacity(env, (Self::DEFAULT_BUDGET_BYTES / per_table).max(1024))
    }

    pub fn with_capacity(env: &'e Environment, capacity: usize) -> Self {
        let (lo, hi) = env.interior();
        let n = (hi - lo + 1).max(0) as usize;
        JumpSampler { env, lo, tables: (0..n).map(|_| OnceLock::new()).collect(), cached: AtomicUsize::new(0), capacity }
    }

    pub fn env(&self) -> &'e Environment {
        self.env
    }

    pub fn cached_tables(&self) -> usize {
        self.cached.load(Ordering::Relaxed)
    }

    /// Sample a jump offset out of interior site `x`.
    #[inline]
    pub fn jump(&self, x: i64, bits: u64) -> i32 {
        let slot = &self.tables[(x - self.lo) as usize];
        if let Some(t) = slot.get() {
            return t.sample_bits(bits);
        }
        if self.cached.load(Ordering::Relaxed) < self.capacity {
            let t = slot.get_or_init(|| {
                self.cached.fetch_add(1, Ordering::Relaxed);
                site_table(self.env, x)
            });
            t.sample_bits(bits)
        } else {
            site_table(self.env, x).sample_bits(bits)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_reproduces_weights() {
        let t = AliasTable::new(&[(-2, 0.05), (-1, 1.0), (1, 1.0), (2, 0.05), (3, 0.0)]);
        assert_eq!(t.len(), 4);
        for (o, p) in t.probabilities() {
            let expect = if o.abs() == 1 { 1.0 / 2.1 } else { 0.05 / 2.1 };
            assert!((p - expect).abs() < 1e-12, "{o}: {p} vs {expect}");
        }
    }

    #[test]
    fn single_outcome() {
        let t = AliasTable::new(&[(1, 3.0)]);
        assert_eq!(t.sample_bits(0), 1);
        assert_eq!(t.sample_bits(u64::MAX), 1);
    }
}
