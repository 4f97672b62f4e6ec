//! Continual synthetic data preserving cumulative threshold counts
//! `S_b^t = #{i : x_i^1 + … + x_i^t ≥ b}` for every `b` at once.
//!
//! Threshold `b` gets its own stream counter over
//! `z_b^t = #{i : weight up to t−1 is b−1 and x_i^t = 1}`. The counter only
//! sees rounds `t ≥ b` (earlier `z_b^t` are zero by construction), so it is
//! built with horizon `T − b + 1`. Noisy outputs are monotonized through a
//! [`MonotoneBank`] and realized by promoting exactly `Ŝ_b^t − Ŝ_b^{t−1}`
//! synthetic records of weight `b−1`.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::counter::{CounterKind, MonotoneBank, StreamCounter};
use crate::error::{Error, Result};
use crate::model::{hamming_weights, BitPanel, LongitudinalDataset, SyntheticStore};
use crate::privacy::{cumulative_weight_total, split_cumulative, BudgetSchedule, PrivacyBudget};

#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeSynthConfig {
    pub horizon: usize,
    pub rho: PrivacyBudget,
    /// `ρ_b` for `b = 1..=T`.
    pub schedule: BudgetSchedule,
    pub counter: CounterKind,
    pub noiseless: bool,
}

impl CumulativeSynthConfig {
    /// Tree counters with the default cube-of-depth budget split.
    pub fn new(horizon: usize, rho: PrivacyBudget) -> Result<Self> {
        Ok(Self {
            horizon,
            rho,
            schedule: split_cumulative(rho, horizon)?,
            counter: CounterKind::Tree,
            noiseless: false,
        })
    }

    pub fn with_schedule(mut self, schedule: BudgetSchedule) -> Result<Self> {
        if schedule.len() != self.horizon {
            return Err(Error::LengthMismatch { expected: self.horizon, found: schedule.len() });
        }
        if (schedule.total().rho() - self.rho.rho()).abs() > 1e-9 * self.rho.rho().max(1e-300) {
            return Err(Error::InvalidParameter("schedule total differs from rho"));
        }
        self.schedule = schedule;
        Ok(self)
    }

    pub fn noiseless(mut self) -> Self {
        self.noiseless = true;
        self
    }
}

/// A cumulative-synthesizer run in progress.
pub struct CumulativeSynthesizer {
    cfg: CumulativeSynthConfig,
    t: usize,
    bank: MonotoneBank,
    counters: Vec<Box<dyn StreamCounter + Send>>,
    /// `S̃_b^t`, row-major over `(b, t)`, `b, t ∈ 0..=T`.
    noisy: Vec<Option<i64>>,
    store: SyntheticStore,
    weights: Vec<u32>,
}

impl core::fmt::Debug for CumulativeSynthesizer {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("CumulativeSynthesizer")
            .field("cfg", &self.cfg)
            .field("t", &self.t)
            .field("bank", &self.bank)
            .field("m", &self.store.m())
            .finish_non_exhaustive()
    }
}

impl CumulativeSynthesizer {
    /// All-zero start: `n` synthetic records, no columns.
    pub fn init(n: usize, cfg: CumulativeSynthConfig) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("population must be at least 1"));
        }
        if cfg.horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be at least 1"));
        }
        if cfg.schedule.len() != cfg.horizon {
            return Err(Error::LengthMismatch { expected: cfg.horizon, found: cfg.schedule.len() });
        }
        let counters = (1..=cfg.horizon)
            .map(|b| {
                let rho = (!cfg.noiseless).then(|| cfg.schedule.get(b));
                cfg.counter.build(cfg.horizon - b + 1, rho)
            })
            .collect::<Result<Vec<_>>>()?;
        let side = cfg.horizon + 1;
        Ok(Self {
            bank: MonotoneBank::new(cfg.horizon, n as u64),
            noisy: vec![None; side * side],
            counters,
            store: SyntheticStore::new(n),
            weights: vec![0; n],
            t: 0,
            cfg,
        })
    }

    /// Release for round `t = round() + 1`; returns the new column.
    pub fn step<R: Rng>(
        &mut self,
        dataset: &LongitudinalDataset,
        t: usize,
        rng: &mut R,
    ) -> Result<&[u8]> {
        let expected = self.t + 1;
        if t != expected {
            return Err(Error::OutOfOrderRound { expected, found: t });
        }
        if t > self.cfg.horizon {
            return Err(Error::HorizonExceeded { horizon: self.cfg.horizon });
        }
        if dataset.n() != self.store.m() {
            return Err(Error::LengthMismatch { expected: self.store.m(), found: dataset.n() });
        }
        if dataset.t_max() < t {
            return Err(Error::RoundOutOfRange { t, available: dataset.t_max() });
        }

        // z_b^t for b = 1..=t, indexed by b − 1
        let mut increments = vec![0u64; t];
        let real_weights = hamming_weights(dataset, t - 1)?;
        for (&w, &bit) in real_weights.iter().zip(dataset.column(t)) {
            if bit == 1 {
                increments[w as usize] += 1;
            }
        }

        let side = self.cfg.horizon + 1;
        let mut promoted = vec![0usize; t];
        for b in 1..=t {
            let noisy = self.counters[b - 1].feed(increments[b - 1], rng)?;
            self.noisy[b * side + t] = Some(noisy);
            let clamped = self.bank.monotonize(b, t, noisy)?;
            let previous = self.bank.get(b, t - 1).expect("predecessor released");
            promoted[b - 1] = (clamped - previous) as usize;
        }

        // pool b−1 holds synthetic records of weight b−1 after round t−1
        let mut pools: Vec<Vec<usize>> = vec![Vec::new(); t];
        for (i, &w) in self.weights.iter().enumerate() {
            pools[w as usize].push(i);
        }
        let mut column = vec![0u8; self.store.m()];
        for (pool, &count) in pools.iter_mut().zip(&promoted) {
            assert!(count <= pool.len(), "monotone clamp guarantees a feasible extension");
            let (chosen, _) = pool.partial_shuffle(rng, count);
            for &i in chosen.iter() {
                column[i] = 1;
            }
        }
        for (w, &bit) in self.weights.iter_mut().zip(&column) {
            *w += u32::from(bit);
        }
        self.store.push_column(column)?;
        self.t = t;
        debug_assert_eq!(
            hamming_weights(&self.store, t).expect("store covers t"),
            self.weights
        );
        Ok(self.store.column(t))
    }

    /// Runs every round up to the horizon.
    pub fn run<R: Rng>(
        dataset: &LongitudinalDataset,
        cfg: CumulativeSynthConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let mut synth = Self::init(dataset.n(), cfg)?;
        for t in 1..=synth.cfg.horizon {
            synth.step(dataset, t, rng)?;
        }
        Ok(synth)
    }

    pub fn config(&self) -> &CumulativeSynthConfig {
        &self.cfg
    }

    pub fn round(&self) -> usize {
        self.t
    }

    pub fn bank(&self) -> &MonotoneBank {
        &self.bank
    }

    /// Raw counter output `S̃_b^t` before monotonization.
    pub fn noisy_count(&self, b: usize, t: usize) -> Option<i64> {
        let side = self.cfg.horizon + 1;
        if b > self.cfg.horizon || t > self.cfg.horizon {
            return None;
        }
        self.noisy[b * side + t]
    }

    pub fn store(&self) -> &SyntheticStore {
        &self.store
    }

    pub fn into_store(self) -> SyntheticStore {
        self.store
    }

    /// Current Hamming weight of every synthetic record.
    pub fn weights(&self) -> &[u32] {
        &self.weights
    }
}

/// `(α*, β*)` for tree counters under the default split:
/// `α* = (1/n)·sqrt(Σ_b max(⌈log₂(T−b+1)⌉,1)³ / ρ · ln(1/β))`, `β* = Tβ`.
pub fn accuracy_of(horizon: usize, rho: PrivacyBudget, n: usize, beta: f64) -> Result<(f64, f64)> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidParameter("beta must lie in (0, 1)"));
    }
    if horizon == 0 || n == 0 {
        return Err(Error::InvalidParameter("horizon and n must be positive"));
    }
    let total = cumulative_weight_total(horizon) as f64;
    let alpha = libm::sqrt(total / rho.rho() * libm::log(1.0 / beta)) / n as f64;
    Ok((alpha, horizon as f64 * beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::true_cumulative_counts;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn rho(x: f64) -> PrivacyBudget {
        PrivacyBudget::new(x).unwrap()
    }

    fn synthetic_counts(store: &SyntheticStore, t: usize) -> Vec<u64> {
        true_cumulative_counts(store, t).unwrap()
    }

    #[test]
    fn init_shape() {
        let synth = CumulativeSynthesizer::init(5, CumulativeSynthConfig::new(3, rho(0.1)).unwrap())
            .unwrap();
        assert_eq!(synth.counters.len(), 3);
        assert!((0..=3).all(|t| synth.bank().get(0, t) == Some(5)));
        assert!(synth.weights().iter().all(|&w| w == 0));
        assert!((synth.config().schedule.composed().rho() - 0.1).abs() < 1e-12);
        assert_eq!(synth.counters[0].horizon(), 3);
        assert_eq!(synth.counters[2].horizon(), 1);
        assert!(CumulativeSynthesizer::init(0, CumulativeSynthConfig::new(3, rho(0.1)).unwrap())
            .is_err());
    }

    #[test]
    fn noiseless_hand_example() {
        let ds = LongitudinalDataset::from_rows(&[vec![1, 1, 0], vec![0, 1, 1], vec![0, 0, 0]])
            .unwrap();
        let cfg = CumulativeSynthConfig::new(3, rho(1.0)).unwrap().noiseless();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let synth = CumulativeSynthesizer::run(&ds, cfg, &mut rng).unwrap();
        for t in 1..=3 {
            assert_eq!(synthetic_counts(synth.store(), t), true_cumulative_counts(&ds, t).unwrap());
        }
        let mut weights = synth.weights().to_vec();
        weights.sort_unstable();
        assert_eq!(weights, [0, 2, 2]);
    }

    #[test]
    fn all_zero_input_stays_zero() {
        let ds = LongitudinalDataset::from_rows(&vec![vec![0; 4]; 6]).unwrap();
        let cfg = CumulativeSynthConfig::new(4, rho(1.0)).unwrap().noiseless();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let synth = CumulativeSynthesizer::run(&ds, cfg, &mut rng).unwrap();
        for t in 1..=4 {
            for b in 1..=4 {
                assert_eq!(synth.bank().get(b, t), Some(0));
            }
        }
        assert!(synth.store().columns().iter().flatten().all(|&x| x == 0));
    }

    #[test]
    fn noisy_run_realizes_bank() {
        let rows: Vec<Vec<u8>> = (0..60u32)
            .map(|i| (0..6).map(|t| ((i * 5 + t * 7) % 3 == 0) as u8).collect())
            .collect();
        let ds = LongitudinalDataset::from_rows(&rows).unwrap();
        let cfg = CumulativeSynthConfig::new(6, rho(0.05)).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let synth = CumulativeSynthesizer::run(&ds, cfg, &mut rng).unwrap();
        assert!(synth.bank().invariants_hold());
        for t in 1..=6 {
            let realized = synthetic_counts(synth.store(), t);
            for (b, &count) in realized.iter().enumerate().take(t + 1) {
                assert_eq!(count as i64, synth.bank().get(b, t).unwrap());
            }
            assert!(synth.noisy_count(1, t).is_some());
        }
    }

    #[test]
    fn step_preconditions() {
        let ds = LongitudinalDataset::from_rows(&[vec![1, 0], vec![0, 1]]).unwrap();
        let cfg = CumulativeSynthConfig::new(2, rho(1.0)).unwrap().noiseless();
        let mut synth = CumulativeSynthesizer::init(2, cfg).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        assert!(matches!(synth.step(&ds, 2, &mut rng), Err(Error::OutOfOrderRound { .. })));
        synth.step(&ds, 1, &mut rng).unwrap();
        synth.step(&ds, 2, &mut rng).unwrap();
        assert!(synth.step(&ds, 3, &mut rng).is_err());
    }

    #[test]
    fn accuracy_formula() {
        let (alpha, beta_star) = accuracy_of(1, rho(0.5), 100, 0.1).unwrap();
        assert!((alpha - ((10f64).ln() / 0.5).sqrt() / 100.0).abs() < 1e-12);
        assert!((beta_star - 0.1).abs() < 1e-15);
        let (a_small, b12) = accuracy_of(12, rho(0.005), 1000, 0.01).unwrap();
        let (a_big_n, _) = accuracy_of(12, rho(0.005), 2000, 0.01).unwrap();
        let (a_big_rho, _) = accuracy_of(12, rho(0.05), 1000, 0.01).unwrap();
        assert!(a_big_n < a_small && a_big_rho < a_small);
        assert!((b12 - 0.12).abs() < 1e-12);
    }

    #[test]
    fn schedule_must_match_horizon() {
        let cfg = CumulativeSynthConfig::new(4, rho(1.0)).unwrap();
        let bad = crate::privacy::split_uniform(rho(1.0), 3).unwrap();
        assert!(cfg.clone().with_schedule(bad).is_err());
        let good = crate::privacy::split_uniform(rho(1.0), 4).unwrap();
        assert!(cfg.with_schedule(good).is_ok());
    }
}
