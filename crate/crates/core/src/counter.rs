//! Continual-release stream counters and the monotone bank that keeps the
//! per-threshold counts of the cumulative synthesizer mutually feasible.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::privacy::{ceil_log2, PrivacyBudget};
use crate::sampler::{sample_discrete_gaussian, NoiseScale};

/// A mechanism releasing noisy prefix sums `S̃^t ≈ z^1 + … + z^t`.
///
/// Implementations must be ρ-zCDP under the neighbouring relation "streams
/// differ in one entry, by at most 1".
pub trait StreamCounter {
    /// Consumes `z^t` for the next round and returns `S̃^t`.
    fn feed(&mut self, z: u64, rng: &mut dyn RngCore) -> Result<i64>;

    /// Rounds consumed so far.
    fn steps(&self) -> usize;

    fn horizon(&self) -> usize;
}

/// Which [`StreamCounter`] backs each threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CounterKind {
    /// Binary-tree aggregation with discrete Gaussian node noise.
    #[default]
    Tree,
}

impl CounterKind {
    pub fn name(&self) -> &'static str {
        match self {
            CounterKind::Tree => "tree",
        }
    }

    /// Builds a counter; `rho = None` means noiseless.
    pub fn build(
        &self,
        horizon: usize,
        rho: Option<PrivacyBudget>,
    ) -> Result<Box<dyn StreamCounter + Send>> {
        match self {
            CounterKind::Tree => Ok(Box::new(match rho {
                Some(rho) => TreeCounter::new(horizon, rho)?,
                None => TreeCounter::noiseless(horizon)?,
            })),
        }
    }
}

/// Tree-based aggregation over a horizon of `T` rounds.
///
/// Register `j` holds the sum over the latest dyadic block of length `2^j`;
/// the released sum at round `t` adds the noisy registers at the set bits
/// of `t`.
#[derive(Debug, Clone)]
pub struct TreeCounter {
    horizon: usize,
    scale: NoiseScale,
    t: usize,
    alpha: Vec<i64>,
    alpha_noisy: Vec<i64>,
}

impl TreeCounter {
    /// Per-node noise `σ² = ln(max(T, 2)) / (2ρ)`.
    ///
    /// `T = 1` uses `ln 2` so a one-step counter still adds noise.
    pub fn new(horizon: usize, rho: PrivacyBudget) -> Result<Self> {
        if rho.rho() <= 0.0 {
            return Err(Error::InvalidParameter("tree counter needs rho > 0"));
        }
        let sigma2 = libm::log(horizon.max(2) as f64) / (2.0 * rho.rho());
        Self::with_scale(horizon, NoiseScale::from_f64(sigma2)?)
    }

    /// Exact prefix sums.
    pub fn noiseless(horizon: usize) -> Result<Self> {
        Self::with_scale(horizon, NoiseScale::ZERO)
    }

    pub fn with_scale(horizon: usize, scale: NoiseScale) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be at least 1"));
        }
        let registers = Self::register_count(horizon);
        Ok(Self {
            horizon,
            scale,
            t: 0,
            alpha: vec![0; registers],
            alpha_noisy: vec![0; registers],
        })
    }

    /// `⌈log₂ T⌉ + 1`.
    pub fn register_count(horizon: usize) -> usize {
        ceil_log2(horizon) as usize + 1
    }

    pub fn scale(&self) -> NoiseScale {
        self.scale
    }

    /// Exact (pre-noise) registers `α_j`.
    pub fn registers(&self) -> &[i64] {
        &self.alpha
    }

    /// Noisy registers `α̃_j`.
    pub fn noisy_registers(&self) -> &[i64] {
        &self.alpha_noisy
    }

    fn step<R: RngCore + ?Sized>(&mut self, z: u64, rng: &mut R) -> Result<i64> {
        if self.t >= self.horizon {
            return Err(Error::HorizonExceeded { horizon: self.horizon });
        }
        self.t += 1;
        let t = self.t;
        let i = t.trailing_zeros() as usize;
        let folded: i64 = self.alpha[..i].iter().sum();
        self.alpha[i] = folded + z as i64;
        self.alpha[..i].fill(0);
        self.alpha_noisy[..i].fill(0);
        self.alpha_noisy[i] = self.alpha[i] + sample_discrete_gaussian(self.scale, rng);
        Ok((0..self.alpha.len())
            .filter(|&j| (t >> j) & 1 == 1)
            .map(|j| self.alpha_noisy[j])
            .sum())
    }
}

impl StreamCounter for TreeCounter {
    fn feed(&mut self, z: u64, rng: &mut dyn RngCore) -> Result<i64> {
        self.step(z, rng)
    }

    fn steps(&self) -> usize {
        self.t
    }

    fn horizon(&self) -> usize {
        self.horizon
    }
}

/// Monotonized counts `Ŝ_b^t` for `b, t ∈ 0..=T`.
///
/// Invariants: `Ŝ_0^t = m`, `Ŝ_b^0 = 0` for `b ≥ 1`, `Ŝ_b^t = 0` for
/// `b > t`, and `Ŝ_b^{t−1} ≤ Ŝ_b^t ≤ Ŝ_{b−1}^{t−1}` everywhere else.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonotoneBank {
    horizon: usize,
    m: u64,
    values: Vec<Option<i64>>,
}

impl MonotoneBank {
    pub fn new(horizon: usize, m: u64) -> Self {
        let side = horizon + 1;
        let mut values = vec![None; side * side];
        for t in 0..=horizon {
            values[t] = Some(m as i64);
            for b in t + 1..=horizon {
                values[b * side + t] = Some(0);
            }
        }
        Self { horizon, m, values }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    fn idx(&self, b: usize, t: usize) -> usize {
        b * (self.horizon + 1) + t
    }

    /// `Ŝ_b^t`, if already determined.
    pub fn get(&self, b: usize, t: usize) -> Option<i64> {
        if b > self.horizon || t > self.horizon {
            return None;
        }
        self.values[self.idx(b, t)]
    }

    /// Clamps `S̃_b^t` into `[Ŝ_b^{t−1}, Ŝ_{b−1}^{t−1}]`, stores and returns it.
    pub fn monotonize(&mut self, b: usize, t: usize, noisy: i64) -> Result<i64> {
        if b == 0 || b > t || t > self.horizon {
            return Err(Error::InvalidParameter("monotonize needs 1 <= b <= t <= T"));
        }
        let idx = self.idx(b, t);
        if self.values[idx].is_some() {
            return Err(Error::AlreadyReleased { b, t });
        }
        let lower = self.get(b, t - 1).ok_or(Error::MissingPredecessor { b, t })?;
        let upper = self.get(b - 1, t - 1).ok_or(Error::MissingPredecessor { b, t })?;
        let value = noisy.max(lower).min(upper);
        self.values[idx] = Some(value);
        Ok(value)
    }

    /// Checks every stored value against the bank invariants.
    pub fn invariants_hold(&self) -> bool {
        let m = self.m as i64;
        for t in 0..=self.horizon {
            if self.get(0, t) != Some(m) {
                return false;
            }
            for b in 1..=self.horizon {
                let Some(v) = self.get(b, t) else { continue };
                if t == 0 || b > t {
                    if v != 0 {
                        return false;
                    }
                    continue;
                }
                let (Some(lo), Some(hi)) = (self.get(b, t - 1), self.get(b - 1, t - 1)) else {
                    return false;
                };
                if v < lo || v > hi {
                    return false;
                }
            }
        }
        true
    }
}
