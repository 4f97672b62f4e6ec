//! zCDP budgets: composition, conversion to (ε, δ)-DP and split schedules.
//!
//! Every `log` here is natural except [`ceil_log2`], which is only used
//! where the schedule is stated in base 2.

use alloc::vec::Vec;
use core::iter::Sum;
use core::ops::Add;

use crate::error::{Error, Result};

/// A ρ-zCDP budget.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct PrivacyBudget(f64);

impl PrivacyBudget {
    pub const ZERO: PrivacyBudget = PrivacyBudget(0.0);

    pub fn new(rho: f64) -> Result<Self> {
        if !(rho.is_finite() && rho >= 0.0) {
            return Err(Error::InvalidParameter("rho must be finite and non-negative"));
        }
        Ok(Self(rho))
    }

    pub fn rho(&self) -> f64 {
        self.0
    }

    /// Sequential composition: ρ-zCDP followed by ρ′-zCDP is (ρ+ρ′)-zCDP.
    pub fn compose(self, other: PrivacyBudget) -> PrivacyBudget {
        PrivacyBudget(self.0 + other.0)
    }
}

impl Add for PrivacyBudget {
    type Output = PrivacyBudget;

    fn add(self, rhs: PrivacyBudget) -> PrivacyBudget {
        self.compose(rhs)
    }
}

impl Sum for PrivacyBudget {
    fn sum<I: Iterator<Item = PrivacyBudget>>(iter: I) -> PrivacyBudget {
        iter.fold(PrivacyBudget::ZERO, PrivacyBudget::compose)
    }
}

pub fn compose(a: PrivacyBudget, b: PrivacyBudget) -> PrivacyBudget {
    a.compose(b)
}

/// ε such that a ρ-zCDP mechanism is (ε, δ)-DP: `ε = ρ + 2·sqrt(ρ·ln(1/δ))`.
pub fn zcdp_to_approx_dp(rho: PrivacyBudget, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter("delta must lie in (0, 1)"));
    }
    let rho = rho.rho();
    Ok(rho + 2.0 * libm::sqrt(rho * libm::log(1.0 / delta)))
}

/// `⌈log₂ x⌉` for `x ≥ 1`, in exact integer arithmetic.
pub fn ceil_log2(x: usize) -> u32 {
    assert!(x >= 1, "ceil_log2 of zero");
    if x == 1 {
        0
    } else {
        (x - 1).ilog2() + 1
    }
}

/// Per-unit shares `ρ_1, …, ρ_T` of a total budget.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetSchedule {
    total: PrivacyBudget,
    per_unit: Vec<f64>,
}

const SCHEDULE_RTOL: f64 = 1e-9;

impl BudgetSchedule {
    /// Validates that `shares` are non-negative and sum to `total`
    /// (1e-9 relative).
    pub fn from_shares(total: PrivacyBudget, shares: Vec<f64>) -> Result<Self> {
        if shares.is_empty() {
            return Err(Error::InvalidParameter("schedule must have at least one entry"));
        }
        if shares.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidParameter("schedule entries must be non-negative"));
        }
        let sum: f64 = shares.iter().sum();
        let scale = total.rho().max(f64::MIN_POSITIVE);
        if libm::fabs(sum - total.rho()) > SCHEDULE_RTOL * scale {
            return Err(Error::InvalidParameter("schedule does not sum to the total budget"));
        }
        Ok(Self { total, per_unit: shares })
    }

    pub fn total(&self) -> PrivacyBudget {
        self.total
    }

    pub fn len(&self) -> usize {
        self.per_unit.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_unit.is_empty()
    }

    /// Share of unit `b`, 1-based.
    pub fn get(&self, b: usize) -> PrivacyBudget {
        PrivacyBudget(self.per_unit[b - 1])
    }

    pub fn shares(&self) -> &[f64] {
        &self.per_unit
    }

    /// Composition of all shares.
    pub fn composed(&self) -> PrivacyBudget {
        self.per_unit.iter().map(|&r| PrivacyBudget(r)).sum()
    }
}

/// `ρ/steps` for each of `steps` units.
pub fn split_uniform(rho: PrivacyBudget, steps: usize) -> Result<BudgetSchedule> {
    if steps == 0 {
        return Err(Error::InvalidParameter("steps must be at least 1"));
    }
    let share = rho.rho() / steps as f64;
    BudgetSchedule::from_shares(rho, alloc::vec![share; steps])
}

/// Unnormalized weight `max(⌈log₂(T−b+1)⌉, 1)³` of threshold `b`.
pub fn cumulative_weight(horizon: usize, b: usize) -> u64 {
    u64::from(ceil_log2(horizon - b + 1).max(1)).pow(3)
}

/// `Σ_b max(⌈log₂(T−b+1)⌉, 1)³` over `b = 1..=T`.
pub fn cumulative_weight_total(horizon: usize) -> u64 {
    (1..=horizon).map(|b| cumulative_weight(horizon, b)).sum()
}

/// Threshold shares `ρ_b ∝ max(⌈log₂(T−b+1)⌉, 1)³`, which equalize the
/// worst-case error bounds of tree counters with horizons `T−b+1`.
pub fn split_cumulative(rho: PrivacyBudget, horizon: usize) -> Result<BudgetSchedule> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1"));
    }
    let total = cumulative_weight_total(horizon) as f64;
    let shares = (1..=horizon)
        .map(|b| rho.rho() * cumulative_weight(horizon, b) as f64 / total)
        .collect();
    BudgetSchedule::from_shares(rho, shares)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rho(x: f64) -> PrivacyBudget {
        PrivacyBudget::new(x).unwrap()
    }

    #[test]
    fn compose_adds() {
        assert!((compose(rho(0.003), rho(0.002)).rho() - 0.005).abs() < 1e-15);
        assert_eq!(compose(PrivacyBudget::ZERO, rho(0.7)), rho(0.7));
        let folded: PrivacyBudget = core::iter::repeat_n(rho(0.05 / 10.0), 10).sum();
        assert!((folded.rho() - 0.05).abs() < 1e-12);
    }

    #[test]
    fn budget_rejects_negative() {
        assert!(PrivacyBudget::new(-0.1).is_err());
        assert!(PrivacyBudget::new(f64::INFINITY).is_err());
    }

    #[test]
    fn approx_dp_conversion() {
        let eps = zcdp_to_approx_dp(rho(0.005), 1e-6).unwrap();
        let expected = 0.005 + 2.0 * (0.005f64 * (1e6f64).ln()).sqrt();
        assert!((eps - expected).abs() < 1e-12);
        assert!((eps - 0.5307).abs() < 5e-5);
        assert_eq!(zcdp_to_approx_dp(PrivacyBudget::ZERO, 0.01).unwrap(), 0.0);
        let eps = zcdp_to_approx_dp(rho(1.0), (-1.0f64).exp()).unwrap();
        assert!((eps - 3.0).abs() < 1e-12);
        assert!(zcdp_to_approx_dp(rho(1.0), 0.0).is_err());
        assert!(zcdp_to_approx_dp(rho(1.0), 1.0).is_err());
    }

    #[test]
    fn uniform_split() {
        let s = split_uniform(rho(0.005), 10).unwrap();
        assert!(s.shares().iter().all(|&x| (x - 0.0005).abs() < 1e-18));
        assert_eq!(split_uniform(rho(0.3), 1).unwrap().shares(), &[0.3]);
        let s = split_uniform(rho(0.007), 12).unwrap();
        assert!((s.composed().rho() - 0.007).abs() <= 1e-9 * 0.007);
        assert!(split_uniform(rho(0.1), 0).is_err());
    }

    #[test]
    fn ceil_log2_values() {
        let got: Vec<u32> = (1..=9).map(ceil_log2).collect();
        assert_eq!(got, [0, 1, 2, 2, 3, 3, 3, 3, 4]);
    }

    #[test]
    fn cumulative_split_small_horizons() {
        assert_eq!(split_cumulative(rho(0.4), 1).unwrap().shares(), &[0.4]);
        let weights: Vec<u64> = (1..=4).map(|b| cumulative_weight(4, b)).collect();
        assert_eq!(weights, [8, 8, 1, 1]);
        let s = split_cumulative(rho(1.8), 4).unwrap();
        assert!((s.get(1).rho() - 8.0 * 1.8 / 18.0).abs() < 1e-15);
        assert!((s.get(4).rho() - 1.8 / 18.0).abs() < 1e-15);
        assert!(split_cumulative(rho(1.0), 0).is_err());
    }

    #[test]
    fn cumulative_split_twelve_rounds() {
        // T = 12: four counters at ⌈log₂⌉ = 4, four at 3, two at 2, two at 1
        assert_eq!(cumulative_weight_total(12), 4 * 64 + 4 * 27 + 2 * 8 + 2);
        let s = split_cumulative(rho(0.005), 12).unwrap();
        assert!((s.composed().rho() - 0.005).abs() <= 1e-9 * 0.005);
    }

    #[test]
    fn schedule_validation() {
        assert!(BudgetSchedule::from_shares(rho(1.0), alloc::vec![0.5, 0.4]).is_err());
        assert!(BudgetSchedule::from_shares(rho(1.0), alloc::vec![1.5, -0.5]).is_err());
        assert!(BudgetSchedule::from_shares(rho(1.0), alloc::vec![0.5, 0.5]).is_ok());
    }
}
