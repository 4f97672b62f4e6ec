//! Continual synthetic data preserving every length-`k` window histogram.
//!
//! Each update step releases a padded noisy histogram
//! `Ĉ_s^t = C_s^t + n_pad + N_Z(0, (T−k+1)/(2ρ))`. At `t = k` the synthetic
//! population is laid out to match it exactly; afterwards, for every
//! overlap `z ∈ {0,1}^{k−1}` the targets `p_{z0}^t, p_{z1}^t` are shifted by
//! the correction `Δ_z` (plus a fair ±½ rounding when `Δ_z` is a
//! half-integer) so that they split exactly the records currently ending in
//! `z`. Records are extended by one bit per round and never rewritten.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, PaddingFailure, Result};
use crate::model::{
    true_suffix_histogram, BitPanel, LongitudinalDataset, SuffixHistogram,
    SuffixKey, SyntheticStore,
};
use crate::privacy::PrivacyBudget;
use crate::sampler::{sample_discrete_gaussian, NoiseScale};

/// Parameters of one window-synthesizer run.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSynthConfig {
    pub horizon: usize,
    pub k: usize,
    pub rho: PrivacyBudget,
    /// Failure probability the default padding is calibrated for.
    pub beta_target: f64,
    /// Overrides the calibrated padding.
    pub n_pad: Option<u64>,
    /// Skip all noise (`σ² = 0`). Not private; for testing and oracles.
    pub noiseless: bool,
}

impl WindowSynthConfig {
    pub fn new(horizon: usize, k: usize, rho: PrivacyBudget, beta_target: f64) -> Self {
        Self { horizon, k, rho, beta_target, n_pad: None, noiseless: false }
    }

    pub fn with_n_pad(mut self, n_pad: u64) -> Self {
        self.n_pad = Some(n_pad);
        self
    }

    pub fn noiseless(mut self) -> Self {
        self.noiseless = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > self.horizon {
            return Err(Error::InvalidParameter("window length must satisfy 1 <= k <= T"));
        }
        SuffixKey::new(self.k, 0)?;
        if !(self.beta_target > 0.0 && self.beta_target < 1.0) {
            return Err(Error::InvalidParameter("beta_target must lie in (0, 1)"));
        }
        if !self.noiseless && self.rho.rho() <= 0.0 {
            return Err(Error::InvalidParameter("rho must be positive"));
        }
        Ok(())
    }

    /// Number of update steps `T − k + 1`.
    pub fn update_steps(&self) -> usize {
        self.horizon + 1 - self.k
    }

    /// Budget spent per update step.
    pub fn per_step_rho(&self) -> PrivacyBudget {
        PrivacyBudget::new(self.rho.rho() / self.update_steps() as f64)
            .expect("share of a valid budget")
    }

    /// Padding actually used: the override, else [`compute_n_pad`].
    pub fn resolved_n_pad(&self) -> Result<u64> {
        match self.n_pad {
            Some(n) => Ok(n),
            None => compute_n_pad(self.horizon, self.k, self.rho.rho(), self.beta_target),
        }
    }

    /// Per-bin noise `σ² = (T−k+1)/(2ρ)`, or zero in noiseless mode.
    pub fn noise_scale(&self) -> Result<NoiseScale> {
        if self.noiseless {
            return Ok(NoiseScale::ZERO);
        }
        NoiseScale::from_f64(self.update_steps() as f64 / (2.0 * self.rho.rho()))
    }
}

fn check_bound_args(horizon: usize, k: usize, beta: f64) -> Result<f64> {
    if k == 0 || k > horizon {
        return Err(Error::InvalidParameter("window length must satisfy 1 <= k <= T"));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidParameter("beta must lie in (0, 1)"));
    }
    let steps = (horizon + 1 - k) as f64;
    Ok(libm::log(libm::exp2(k as f64) * steps / beta))
}

/// `⌈sqrt((T−k+1)/ρ · ln(2^k (T−k+1) / β_target))⌉`.
pub fn compute_n_pad(horizon: usize, k: usize, rho: f64, beta_target: f64) -> Result<u64> {
    // also rejects NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(rho > 0.0) {
        return Err(Error::InvalidParameter("rho must be positive to calibrate padding"));
    }
    let log_term = check_bound_args(horizon, k, beta_target)?;
    let steps = (horizon + 1 - k) as f64;
    Ok(libm::ceil(libm::sqrt(steps / rho * log_term)) as u64)
}

/// High-probability bound on `max_{s,t} |p_s^t − (C_s^t + n_pad)|`:
/// `(sqrt((T−k+1)/ρ) + 1/√2) · sqrt(ln(2^k (T−k+1) / β))`.
pub fn compute_error_bound(horizon: usize, k: usize, rho: f64, beta: f64) -> Result<f64> {
    let log_term = check_bound_args(horizon, k, beta)?;
    let steps = (horizon + 1 - k) as f64;
    let noise = if rho > 0.0 { libm::sqrt(steps / rho) } else { f64::INFINITY };
    Ok((noise + core::f64::consts::FRAC_1_SQRT_2) * libm::sqrt(log_term))
}

/// Relative-error bound for a bin holding fraction `c_frac` of the data:
/// `(2λ + 2^{k+1} λ · c_frac) / n` with `λ` from [`compute_error_bound`].
pub fn compute_relative_error_bound(
    horizon: usize,
    k: usize,
    rho: f64,
    beta: f64,
    n: usize,
    c_frac: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&c_frac) {
        return Err(Error::InvalidParameter("c_frac must lie in [0, 1]"));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("n must be positive"));
    }
    let lambda = compute_error_bound(horizon, k, rho, beta)?;
    Ok((2.0 * lambda + libm::exp2(k as f64 + 1.0) * lambda * c_frac) / n as f64)
}

/// Splits `prev_sum` records ending in `z` between the targets for `z0` and
/// `z1`, given noisy counts `c0, c1`.
///
/// `round_up_first` is the rounding term `b_z = +½`; it is only consulted
/// when the correction is a half-integer.
pub fn split_pair(prev_sum: i64, c0: i64, c1: i64, round_up_first: bool) -> (i64, i64) {
    let diff = prev_sum - (c0 + c1);
    if diff % 2 == 0 {
        let delta = diff / 2;
        (c0 + delta, c1 + delta)
    } else {
        let sign = if round_up_first { 1 } else { -1 };
        (c0 + (diff + sign) / 2, c1 + (diff - sign) / 2)
    }
}

/// Applies the consistency correction to a whole histogram.
///
/// Returns the new targets `p^t`; one fair coin is drawn per half-integer
/// correction, in increasing order of `z`.
pub fn consistency_correction<R: Rng + ?Sized>(
    prev: &SuffixHistogram,
    noisy: &SuffixHistogram,
    rng: &mut R,
) -> Result<SuffixHistogram> {
    let k = prev.k();
    if noisy.k() != k {
        return Err(Error::InvalidParameter("histograms have different window lengths"));
    }
    let half = 1usize << (k - 1);
    let (p, c) = (prev.counts(), noisy.counts());
    let mut next = vec![0i64; 1 << k];
    for z in 0..half {
        // p_{0z} + p_{1z}
        let prev_sum = p[z] + p[half + z];
        let (c0, c1) = (c[2 * z], c[2 * z + 1]);
        let round_up_first = if (prev_sum - c0 - c1) % 2 != 0 { rng.gen::<bool>() } else { false };
        let (p0, p1) = split_pair(prev_sum, c0, c1, round_up_first);
        next[2 * z] = p0;
        next[2 * z + 1] = p1;
    }
    SuffixHistogram::from_counts(k, next)
}

/// A window-synthesizer run in progress.
#[derive(Debug, Clone)]
pub struct WindowSynthesizer {
    cfg: WindowSynthConfig,
    n_pad: u64,
    scale: NoiseScale,
    t: usize,
    p: SuffixHistogram,
    history: Vec<SuffixHistogram>,
    store: SyntheticStore,
    codes: Vec<u32>,
    min_count: i64,
}

impl WindowSynthesizer {
    fn noisy_histogram<R: Rng + ?Sized>(
        &self,
        dataset: &LongitudinalDataset,
        t: usize,
        rng: &mut R,
    ) -> Result<SuffixHistogram> {
        let mut hist = true_suffix_histogram(dataset, self.cfg.k, t)?;
        for c in hist.counts_mut() {
            *c += self.n_pad as i64 + sample_discrete_gaussian(self.scale, rng);
        }
        Ok(hist)
    }

    /// First release, at round `k`.
    ///
    /// The `m = Σ_s Ĉ_s^k` synthetic records are laid out in lexicographic
    /// suffix order: the first `Ĉ_{0…0}^k` records carry `0…0`, and so on.
    pub fn init<R: Rng + ?Sized>(
        dataset: &LongitudinalDataset,
        cfg: WindowSynthConfig,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let k = cfg.k;
        if dataset.t_max() < k {
            return Err(Error::RoundOutOfRange { t: k, available: dataset.t_max() });
        }
        let mut synth = Self {
            n_pad: cfg.resolved_n_pad()?,
            scale: cfg.noise_scale()?,
            t: k,
            p: SuffixHistogram::zeros(k)?,
            history: Vec::new(),
            store: SyntheticStore::new(0),
            codes: Vec::new(),
            min_count: i64::MAX,
            cfg,
        };
        let noisy = synth.noisy_histogram(dataset, k, rng)?;
        if let Some((suffix, count)) = noisy.iter().find(|&(_, c)| c < 0) {
            return Err(Error::PaddingExhausted(PaddingFailure { t: k, suffix, count }));
        }
        let m = noisy.total() as usize;
        let mut codes = Vec::with_capacity(m);
        for (suffix, count) in noisy.iter() {
            codes.extend(core::iter::repeat_n(suffix.code(), count as usize));
        }
        let mut store = SyntheticStore::new(m);
        for j in 1..=k {
            let shift = k - j;
            store.push_column(codes.iter().map(|&c| ((c >> shift) & 1) as u8).collect())?;
        }
        synth.min_count = noisy.counts().iter().copied().min().unwrap_or(0);
        synth.store = store;
        synth.codes = codes;
        synth.history.push(noisy.clone());
        synth.p = noisy;
        Ok(synth)
    }

    /// Release for round `t = round() + 1`; returns the new column.
    pub fn step<R: Rng + ?Sized>(
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
        let k = self.cfg.k;
        let noisy = self.noisy_histogram(dataset, t, rng)?;
        let next = consistency_correction(&self.p, &noisy, rng)?;
        if let Some((suffix, count)) = next.iter().find(|&(_, c)| c < 0) {
            return Err(Error::PaddingExhausted(PaddingFailure { t, suffix, count }));
        }

        // group records by their last k-1 bits
        let overlap_mask = (1u32 << (k - 1)) - 1;
        let mut pools: Vec<Vec<usize>> = vec![Vec::new(); 1 << (k - 1)];
        for (i, &code) in self.codes.iter().enumerate() {
            pools[(code & overlap_mask) as usize].push(i);
        }
        let mut column = vec![0u8; self.store.m()];
        for (z, pool) in pools.iter_mut().enumerate() {
            let ones = next.counts()[2 * z + 1] as usize;
            debug_assert_eq!(pool.len() as i64, next.counts()[2 * z] + next.counts()[2 * z + 1]);
            let (chosen, _) = pool.partial_shuffle(rng, ones);
            for &i in chosen.iter() {
                column[i] = 1;
            }
        }
        let full_mask = ((1u64 << k) - 1) as u32;
        for (code, &bit) in self.codes.iter_mut().zip(&column) {
            *code = ((*code << 1) | u32::from(bit)) & full_mask;
        }
        self.store.push_column(column)?;
        self.min_count = self.min_count.min(next.counts().iter().copied().min().unwrap_or(0));
        self.history.push(next.clone());
        self.p = next;
        self.t = t;
        Ok(self.store.column(t))
    }

    /// Initializes and steps through every round up to the horizon.
    pub fn run<R: Rng + ?Sized>(
        dataset: &LongitudinalDataset,
        cfg: WindowSynthConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if dataset.t_max() < cfg.horizon {
            return Err(Error::RoundOutOfRange { t: cfg.horizon, available: dataset.t_max() });
        }
        let mut synth = Self::init(dataset, cfg, rng)?;
        for t in synth.cfg.k + 1..=synth.cfg.horizon {
            synth.step(dataset, t, rng)?;
        }
        Ok(synth)
    }

    pub fn config(&self) -> &WindowSynthConfig {
        &self.cfg
    }

    /// Latest released round.
    pub fn round(&self) -> usize {
        self.t
    }

    pub fn n_pad(&self) -> u64 {
        self.n_pad
    }

    pub fn noise_scale(&self) -> NoiseScale {
        self.scale
    }

    /// Synthetic population size `m`.
    pub fn population(&self) -> usize {
        self.store.m()
    }

    /// Current targets `p_s^t`.
    pub fn histogram(&self) -> &SuffixHistogram {
        &self.p
    }

    /// `p^t` for `t = k..=round()`, oldest first.
    pub fn history(&self) -> &[SuffixHistogram] {
        &self.history
    }

    /// `p^t` for a released round.
    pub fn histogram_at(&self, t: usize) -> Option<&SuffixHistogram> {
        t.checked_sub(self.cfg.k).and_then(|r| self.history.get(r))
    }

    /// Smallest bin count released so far; how much padding headroom was left.
    pub fn min_count(&self) -> i64 {
        self.min_count
    }

    pub fn store(&self) -> &SyntheticStore {
        &self.store
    }

    pub fn into_store(self) -> SyntheticStore {
        self.store
    }

    /// Debiased estimate of the real population, `m − 2^k · n_pad`.
    pub fn estimated_population(&self) -> i64 {
        self.store.m() as i64 - ((1i64 << self.cfg.k) * self.n_pad as i64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn rho(x: f64) -> PrivacyBudget {
        PrivacyBudget::new(x).unwrap()
    }

    #[test]
    fn n_pad_reference_value() {
        // ⌈sqrt(2000 · ln 8000)⌉
        let expected = (2000.0 * 8000f64.ln()).sqrt().ceil() as u64;
        assert_eq!(expected, 135);
        assert_eq!(compute_n_pad(12, 3, 0.005, 0.01).unwrap(), 135);
    }

    #[test]
    fn n_pad_tiny_when_budget_huge() {
        assert_eq!(compute_n_pad(4, 4, 1e9, 0.5).unwrap(), 1);
    }

    #[test]
    fn n_pad_monotone_in_horizon() {
        let mut last = 0;
        for horizon in 3..40 {
            let n = compute_n_pad(horizon, 3, 0.01, 0.05).unwrap();
            assert!(n >= last);
            last = n;
        }
        assert!(compute_n_pad(12, 3, 0.0, 0.05).is_err());
    }

    #[test]
    fn error_bound_reference_value() {
        let oracle = (2000f64.sqrt() + 0.5f64.sqrt()) * 1600f64.ln().sqrt();
        let got = compute_error_bound(12, 3, 0.005, 0.05).unwrap();
        assert!((got - oracle).abs() < 1e-9);
        assert!((got - 123.4).abs() < 0.05);
        assert!(compute_error_bound(12, 3, 0.005, 0.01).unwrap() > got);
        let limit = compute_error_bound(12, 3, 1e300, 0.05).unwrap();
        assert!((limit - 0.5f64.sqrt() * 1600f64.ln().sqrt()).abs() < 1e-9);
    }

    #[test]
    fn relative_bound_shape() {
        let lambda = compute_error_bound(12, 1, 0.01, 0.05).unwrap();
        let at0 = compute_relative_error_bound(12, 1, 0.01, 0.05, 1000, 0.0).unwrap();
        assert!((at0 - 2.0 * lambda / 1000.0).abs() < 1e-12);
        let at1 = compute_relative_error_bound(12, 1, 0.01, 0.05, 1000, 1.0).unwrap();
        assert!((at1 - 6.0 * lambda / 1000.0).abs() < 1e-12);
        assert!(compute_relative_error_bound(12, 1, 0.01, 0.05, 1000, 1.5).is_err());
    }

    #[test]
    fn split_pair_hand_example() {
        // p^{t−1}_{00} + p^{t−1}_{10} = 7, Ĉ_{00} = 4, Ĉ_{01} = 2, Δ = ½, b = +½
        assert_eq!(split_pair(7, 4, 2, true), (5, 2));
        assert_eq!(split_pair(7, 4, 2, false), (4, 3));
        assert_eq!(split_pair(8, 4, 2, true), (5, 3));
        assert_eq!(split_pair(2, 4, 2, false), (2, 0));
    }

    #[test]
    fn correction_preserves_overlap_sums() {
        let prev = SuffixHistogram::from_counts(2, vec![3, 2, 4, 1]).unwrap();
        let noisy = SuffixHistogram::from_counts(2, vec![4, 2, 5, -1]).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let next = consistency_correction(&prev, &noisy, &mut rng).unwrap();
        let c = next.counts();
        assert_eq!(c[0] + c[1], 3 + 4);
        assert_eq!(c[2] + c[3], 2 + 1);
    }

    fn small_dataset() -> LongitudinalDataset {
        LongitudinalDataset::from_rows(&[
            vec![1, 0, 1, 1, 0],
            vec![0, 0, 1, 0, 0],
            vec![1, 1, 1, 1, 1],
            vec![0, 1, 0, 1, 1],
        ])
        .unwrap()
    }

    #[test]
    fn noiseless_unpadded_matches_truth() {
        let ds = small_dataset();
        let cfg = WindowSynthConfig::new(5, 2, rho(1.0), 0.05).with_n_pad(0).noiseless();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let synth = WindowSynthesizer::run(&ds, cfg, &mut rng).unwrap();
        assert_eq!(synth.population(), 4);
        for t in 2..=5 {
            let truth = true_suffix_histogram(&ds, 2, t).unwrap();
            assert_eq!(synth.histogram_at(t).unwrap(), &truth);
            assert_eq!(true_suffix_histogram(synth.store(), 2, t).unwrap(), truth);
        }
    }

    #[test]
    fn noiseless_padding_adds_per_bin() {
        let ds = small_dataset();
        let cfg = WindowSynthConfig::new(5, 2, rho(1.0), 0.05).with_n_pad(2).noiseless();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let synth = WindowSynthesizer::init(&ds, cfg, &mut rng).unwrap();
        let truth = true_suffix_histogram(&ds, 2, 2).unwrap();
        assert_eq!(synth.population(), 4 + 8);
        for (s, c) in synth.histogram().iter() {
            assert_eq!(c, truth.get(s) + 2);
        }
        assert_eq!(synth.estimated_population(), 4);
        // lexicographic layout: the first block is 00
        assert_eq!(synth.store().row(0), vec![0, 0]);
        assert_eq!(synth.store().row(synth.population() - 1), vec![1, 1]);
    }

    #[test]
    fn noisy_run_is_consistent() {
        let rows: Vec<Vec<u8>> = (0..200u32)
            .map(|i| (0..8).map(|t| ((i * 7 + t * 3) % 5 < 2) as u8).collect())
            .collect();
        let ds = LongitudinalDataset::from_rows(&rows).unwrap();
        let cfg = WindowSynthConfig::new(8, 3, rho(1.0), 0.05);
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        let synth = WindowSynthesizer::run(&ds, cfg, &mut rng).unwrap();
        let m = synth.population() as i64;
        for w in synth.history().windows(2) {
            let (prev, next) = (w[0].counts(), w[1].counts());
            for z in 0..4 {
                assert_eq!(next[2 * z] + next[2 * z + 1], prev[z] + prev[4 + z]);
            }
            assert_eq!(w[1].total(), m);
        }
        for t in 3..=8 {
            let realized = true_suffix_histogram(synth.store(), 3, t).unwrap();
            assert_eq!(&realized, synth.histogram_at(t).unwrap());
        }
    }

    #[test]
    fn padding_exhaustion_reported() {
        // heavy noise, no padding: some bin goes negative almost surely
        let ds = small_dataset();
        let cfg = WindowSynthConfig::new(5, 2, rho(0.001), 0.05).with_n_pad(0);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        match WindowSynthesizer::run(&ds, cfg, &mut rng) {
            Err(Error::PaddingExhausted(f)) => {
                assert!(f.count < 0);
                assert!((2..=5).contains(&f.t));
            }
            other => panic!("expected padding failure, got {other:?}"),
        }
    }

    #[test]
    fn step_rejects_wrong_round() {
        let ds = small_dataset();
        let cfg = WindowSynthConfig::new(5, 2, rho(1.0), 0.05).with_n_pad(0).noiseless();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let mut synth = WindowSynthesizer::init(&ds, cfg, &mut rng).unwrap();
        assert_eq!(
            synth.step(&ds, 4, &mut rng).unwrap_err(),
            Error::OutOfOrderRound { expected: 3, found: 4 }
        );
    }

    #[test]
    fn config_validation() {
        assert!(WindowSynthConfig::new(3, 4, rho(1.0), 0.05).validate().is_err());
        assert!(WindowSynthConfig::new(3, 0, rho(1.0), 0.05).validate().is_err());
        assert!(WindowSynthConfig::new(3, 2, rho(1.0), 1.0).validate().is_err());
        assert!(WindowSynthConfig::new(3, 2, PrivacyBudget::ZERO, 0.5).validate().is_err());
        let cfg = WindowSynthConfig::new(12, 3, rho(0.005), 0.05);
        assert_eq!(cfg.noise_scale().unwrap(), NoiseScale::from_ratio(1000, 1).unwrap());
        assert!((cfg.per_step_rho().rho() - 0.0005).abs() < 1e-15);
    }
}
