//! Counting queries on real or synthetic panels, debiasing of padded
//! answers and the cumulative-through-window reduction.
//!
//! Every query is evaluated by exact integer counting; the division by the
//! population happens once at the end.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{
    check_round, hamming_weights, true_suffix_histogram, BitPanel, SuffixKey,
};
use crate::window::{compute_error_bound, compute_relative_error_bound};

/// Largest window enumerated by [`cumulative_from_window_oracle`].
pub const MAX_ORACLE_WINDOW: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub enum QuerySpec {
    /// `q_s^t`: the last `|s|` bits up to round `t` equal `s`.
    Window { suffix: SuffixKey, t: usize },
    /// `c_b^t`: Hamming weight over rounds `1..=t` is at least `b`.
    Cumulative { b: usize, t: usize },
    /// `Σ_s w_s q_s^t` over length-`k` suffixes.
    Linear { k: usize, t: usize, weights: Vec<(SuffixKey, f64)> },
}

impl QuerySpec {
    pub fn window(suffix: SuffixKey, t: usize) -> Result<Self> {
        if t < suffix.k() {
            return Err(Error::WindowTooLong { k: suffix.k(), t });
        }
        Ok(QuerySpec::Window { suffix, t })
    }

    pub fn cumulative(b: usize, t: usize) -> Result<Self> {
        if t == 0 {
            return Err(Error::InvalidParameter("rounds are 1-based"));
        }
        Ok(QuerySpec::Cumulative { b, t })
    }

    pub fn linear(k: usize, t: usize, weights: Vec<(SuffixKey, f64)>) -> Result<Self> {
        SuffixKey::new(k, 0)?;
        if t < k {
            return Err(Error::WindowTooLong { k, t });
        }
        if weights.iter().any(|(s, _)| s.k() != k) {
            return Err(Error::InvalidParameter("linear weights must share one window length"));
        }
        if weights.iter().any(|(_, w)| !w.is_finite()) {
            return Err(Error::InvalidParameter("linear weights must be finite"));
        }
        Ok(QuerySpec::Linear { k, t, weights })
    }

    pub fn round(&self) -> usize {
        match self {
            QuerySpec::Window { t, .. }
            | QuerySpec::Cumulative { t, .. }
            | QuerySpec::Linear { t, .. } => *t,
        }
    }

    /// Rounds of history the predicate looks at.
    pub fn span(&self) -> usize {
        match self {
            QuerySpec::Window { suffix, .. } => suffix.k(),
            QuerySpec::Cumulative { t, .. } => *t,
            QuerySpec::Linear { k, .. } => *k,
        }
    }
}

/// Which statistics a released panel is known to preserve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Support {
    /// Ground truth: everything.
    Unrestricted,
    /// Output of the window synthesizer with window `k`.
    Window { k: usize },
    /// Output of the cumulative synthesizer.
    Cumulative,
}

impl Support {
    /// Refuses queries the synthesizer gives no accuracy guarantee for.
    pub fn check(&self, q: &QuerySpec) -> Result<()> {
        match (*self, q) {
            (Support::Unrestricted, _) => Ok(()),
            (Support::Window { k }, q) if q.span() <= k => Ok(()),
            (Support::Window { k }, q) => {
                Err(Error::UnsupportedQuery { query_window: q.span(), synth_window: Some(k) })
            }
            (Support::Cumulative, QuerySpec::Cumulative { .. }) => Ok(()),
            (Support::Cumulative, q) => {
                Err(Error::UnsupportedQuery { query_window: q.span(), synth_window: None })
            }
        }
    }
}

fn check_query_round<P: BitPanel + ?Sized>(panel: &P, q: &QuerySpec) -> Result<()> {
    check_round(panel, q.round())?;
    if q.round() < q.span() {
        return Err(Error::WindowTooLong { k: q.span(), t: q.round() });
    }
    Ok(())
}

/// Number of rows satisfying a window or cumulative query.
pub fn count<P: BitPanel + ?Sized>(panel: &P, q: &QuerySpec) -> Result<u64> {
    check_query_round(panel, q)?;
    match q {
        QuerySpec::Window { suffix, t } => {
            let hist = true_suffix_histogram(panel, suffix.k(), *t)?;
            Ok(hist.get(*suffix) as u64)
        }
        QuerySpec::Cumulative { b, t } => {
            let weights = hamming_weights(panel, *t)?;
            Ok(weights.iter().filter(|&&w| w as usize >= *b).count() as u64)
        }
        QuerySpec::Linear { .. } => {
            Err(Error::InvalidParameter("linear queries have weighted counts"))
        }
    }
}

/// `Σ_i predicate(row i)`, weighted for linear queries.
pub fn weighted_count<P: BitPanel + ?Sized>(panel: &P, q: &QuerySpec) -> Result<f64> {
    match q {
        QuerySpec::Linear { k, t, weights } => {
            check_query_round(panel, q)?;
            let hist = true_suffix_histogram(panel, *k, *t)?;
            Ok(weights.iter().map(|&(s, w)| w * hist.get(s) as f64).sum())
        }
        _ => Ok(count(panel, q)? as f64),
    }
}

/// `(1/population)·Σ_i predicate(row i)`.
pub fn eval_query<P: BitPanel + ?Sized>(panel: &P, q: &QuerySpec) -> Result<f64> {
    if panel.population() == 0 {
        return Err(Error::InvalidParameter("panel has no rows"));
    }
    Ok(weighted_count(panel, q)? / panel.population() as f64)
}

/// Like [`eval_query`], but first refuses queries outside `support`.
pub fn eval_supported<P: BitPanel + ?Sized>(
    panel: &P,
    q: &QuerySpec,
    support: Support,
) -> Result<f64> {
    support.check(q)?;
    eval_query(panel, q)
}

/// How many padding records of a window-`k` release a query counts, in
/// units of `n_pad`.
///
/// A `j`-suffix covers `2^{k−j}` padded bins. A cumulative `c_b^t` with
/// `t ≤ k` is read off the first `t` of the `k` bins laid out at round
/// `k`, so it covers `2^{k−t}·Σ_{j≥b} C(t, j)` of them.
pub fn padding_weight(q: &QuerySpec, k: usize) -> Result<f64> {
    Support::Window { k }.check(q)?;
    Ok(uniform_padding_weight(q, k))
}

/// [`padding_weight`] without the support check. For queries spanning more
/// than `k` rounds this assumes padding spreads uniformly over the longer
/// patterns, which nothing guarantees.
pub fn uniform_padding_weight(q: &QuerySpec, k: usize) -> f64 {
    let free = |span: usize| libm::exp2(k as f64 - span as f64);
    match q {
        QuerySpec::Window { suffix, .. } => free(suffix.k()),
        QuerySpec::Cumulative { b, t } => {
            let mut binom = 1.0;
            let mut total = 0.0;
            for j in 0..=*t {
                if j >= *b {
                    total += binom;
                }
                binom = binom * (*t - j) as f64 / (j + 1) as f64;
            }
            free(*t) * total
        }
        QuerySpec::Linear { k: span, weights, .. } => {
            free(*span) * weights.iter().map(|&(_, w)| w).sum::<f64>()
        }
    }
}

/// `(raw − padding)/n`. Not clamped to `[0, 1]`.
pub fn debias_fraction(raw: f64, padding: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be positive"));
    }
    Ok((raw - padding) / n as f64)
}

/// Evaluates `c_b^t` as the sum of all length-`k` window fractions with
/// Hamming weight at least `b`, taking `x^r = 0` for `r ≤ 0`.
///
/// Requires `t ≤ k ≤ MAX_ORACLE_WINDOW`.
pub fn cumulative_from_window_oracle<P: BitPanel + ?Sized>(
    panel: &P,
    b: usize,
    t: usize,
    k: usize,
) -> Result<f64> {
    if k > MAX_ORACLE_WINDOW {
        return Err(Error::EnumerationTooLarge { k });
    }
    if k < t || k == 0 {
        return Err(Error::InvalidParameter("oracle window must cover rounds 1..=t"));
    }
    check_round(panel, t)?;
    let mut bins = vec![0u64; 1 << k];
    let mut codes = vec![0u32; panel.population()];
    for r in 1..=t {
        for (code, &bit) in codes.iter_mut().zip(panel.column(r)) {
            *code = (*code << 1) | u32::from(bit);
        }
    }
    for code in codes {
        bins[code as usize] += 1;
    }
    let hits: u64 = SuffixKey::all(k)?
        .filter(|s| s.weight() as usize >= b)
        .map(|s| bins[s.code() as usize])
        .sum();
    Ok(hits as f64 / panel.population() as f64)
}

/// Worst errors of one round of a window release.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundErrors {
    pub t: usize,
    /// `max_s |p_s^t − (C_s^t + n_pad)|`.
    pub additive: i64,
    /// `max_s |p_s^t/m − C_s^t/n|`.
    pub relative: f64,
    /// `max_s |(p_s^t − n_pad) − C_s^t| / n`.
    pub debiased: f64,
    /// `max_s` of the relative error divided by its per-bin bound.
    pub relative_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub rounds: Vec<RoundErrors>,
    pub max_additive: i64,
    pub max_relative: f64,
    pub max_debiased: f64,
    pub additive_bound: f64,
    /// `λ/n`, the bound on `max_debiased`.
    pub debiased_bound: f64,
    /// Largest relative error over its bin's bound; `≤ 1` means all bins
    /// met their bound.
    pub max_relative_ratio: f64,
}

impl ErrorReport {
    pub fn within_bounds(&self) -> bool {
        (self.max_additive as f64) <= self.additive_bound
            && self.max_debiased <= self.debiased_bound
            && self.max_relative_ratio <= 1.0
    }
}

/// Parameters a window release is judged against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowBoundParams {
    pub horizon: usize,
    pub k: usize,
    pub rho: f64,
    pub n_pad: u64,
    pub beta: f64,
}

/// Compares a window release against ground truth for `t = k..=T`.
pub fn max_error_report<P: BitPanel + ?Sized, Q: BitPanel + ?Sized>(
    truth: &P,
    synth: &Q,
    params: WindowBoundParams,
) -> Result<ErrorReport> {
    let WindowBoundParams { horizon, k, rho, n_pad, beta } = params;
    let n = truth.population();
    let m = synth.population();
    if n == 0 || m == 0 {
        return Err(Error::InvalidParameter("both panels need rows"));
    }
    let lambda = compute_error_bound(horizon, k, rho, beta)?;
    let pad = n_pad as i64;
    let mut rounds = Vec::with_capacity(horizon + 1 - k);
    for t in k..=horizon {
        let c = true_suffix_histogram(truth, k, t)?;
        let p = true_suffix_histogram(synth, k, t)?;
        let mut row = RoundErrors { t, additive: 0, relative: 0.0, debiased: 0.0, relative_ratio: 0.0 };
        for (&ps, &cs) in p.counts().iter().zip(c.counts()) {
            let miss = (ps - cs - pad).abs();
            row.additive = row.additive.max(miss);
            row.debiased = row.debiased.max(miss as f64 / n as f64);
            let rel = libm::fabs(ps as f64 / m as f64 - cs as f64 / n as f64);
            row.relative = row.relative.max(rel);
            let bound =
                compute_relative_error_bound(horizon, k, rho, beta, n, cs as f64 / n as f64)?;
            row.relative_ratio = row.relative_ratio.max(rel / bound);
        }
        rounds.push(row);
    }
    let fold = |f: fn(&RoundErrors) -> f64| rounds.iter().map(f).fold(0.0, f64::max);
    Ok(ErrorReport {
        max_additive: rounds.iter().map(|r| r.additive).max().unwrap_or(0),
        max_relative: fold(|r| r.relative),
        max_debiased: fold(|r| r.debiased),
        max_relative_ratio: fold(|r| r.relative_ratio),
        additive_bound: lambda,
        debiased_bound: lambda / n as f64,
        rounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LongitudinalDataset;

    fn key(s: &str) -> SuffixKey {
        s.parse().unwrap()
    }

    fn example() -> LongitudinalDataset {
        LongitudinalDataset::from_rows(&[vec![1, 1, 0], vec![0, 1, 1], vec![0, 0, 0]]).unwrap()
    }

    #[test]
    fn all_ones_window() {
        let ds = LongitudinalDataset::from_rows(&vec![vec![1; 3]; 4]).unwrap();
        let q = QuerySpec::window(key("111"), 3).unwrap();
        assert_eq!(eval_query(&ds, &q).unwrap(), 1.0);
    }

    #[test]
    fn cumulative_by_hand() {
        let ds = example();
        let q = QuerySpec::cumulative(2, 3).unwrap();
        assert_eq!(eval_query(&ds, &q).unwrap(), 2.0 / 3.0);
        assert_eq!(count(&ds, &QuerySpec::cumulative(0, 1).unwrap()).unwrap(), 3);
        assert_eq!(count(&ds, &QuerySpec::cumulative(3, 3).unwrap()).unwrap(), 0);
    }

    #[test]
    fn linear_matches_direct_count() {
        let ds = LongitudinalDataset::from_rows(&[
            vec![1, 1, 0, 1],
            vec![0, 1, 1, 1],
            vec![1, 0, 0, 0],
            vec![0, 1, 0, 1],
        ])
        .unwrap();
        let heavy: Vec<(SuffixKey, f64)> =
            SuffixKey::all(3).unwrap().filter(|s| s.weight() >= 2).map(|s| (s, 1.0)).collect();
        let q = QuerySpec::linear(3, 4, heavy).unwrap();
        let direct = ds
            .rows()
            .iter()
            .filter(|r| r[1..4].iter().map(|&b| b as u32).sum::<u32>() >= 2)
            .count();
        assert_eq!(weighted_count(&ds, &q).unwrap(), direct as f64);
        assert_eq!(direct, 3);
    }

    #[test]
    fn round_and_span_checks() {
        let ds = example();
        assert!(QuerySpec::window(key("101"), 2).is_err());
        let q = QuerySpec::Window { suffix: key("1"), t: 4 };
        assert!(matches!(eval_query(&ds, &q), Err(Error::RoundOutOfRange { .. })));
        assert!(QuerySpec::linear(2, 3, vec![(key("101"), 1.0)]).is_err());
        assert!(QuerySpec::linear(2, 3, vec![(key("10"), f64::NAN)]).is_err());
    }

    #[test]
    fn support_refusals() {
        let long = QuerySpec::window(key("1011"), 5).unwrap();
        let short = QuerySpec::window(key("11"), 5).unwrap();
        let cum_early = QuerySpec::cumulative(1, 3).unwrap();
        let cum_late = QuerySpec::cumulative(1, 5).unwrap();
        let w3 = Support::Window { k: 3 };
        assert_eq!(
            w3.check(&long),
            Err(Error::UnsupportedQuery { query_window: 4, synth_window: Some(3) })
        );
        assert!(w3.check(&short).is_ok() && w3.check(&cum_early).is_ok());
        assert!(w3.check(&cum_late).is_err());
        assert!(Support::Cumulative.check(&cum_late).is_ok());
        assert!(Support::Cumulative.check(&short).is_err());
        assert!(Support::Unrestricted.check(&long).is_ok());
    }

    #[test]
    fn padding_weights() {
        let q = |s: &str| QuerySpec::window(key(s), 5).unwrap();
        assert_eq!(padding_weight(&q("101"), 3).unwrap(), 1.0);
        assert_eq!(padding_weight(&q("1"), 3).unwrap(), 4.0);
        // weight ≥ 1 among the first 2 of 3 bits: 3 prefixes × 2 tails
        let c = QuerySpec::cumulative(1, 2).unwrap();
        assert_eq!(padding_weight(&c, 3).unwrap(), 6.0);
        let c = QuerySpec::cumulative(0, 3).unwrap();
        assert_eq!(padding_weight(&c, 3).unwrap(), 8.0);
        let lin = QuerySpec::linear(2, 3, vec![(key("10"), 1.0), (key("01"), 0.5)]).unwrap();
        assert_eq!(padding_weight(&lin, 3).unwrap(), 3.0);
        assert!(padding_weight(&q("1011"), 3).is_err());
        assert_eq!(uniform_padding_weight(&q("1011"), 3), 0.5);
    }

    #[test]
    fn debiasing() {
        assert!((debias_fraction(140.0, 135.0, 1000).unwrap() - 0.005).abs() < 1e-15);
        assert_eq!(debias_fraction(135.0, 135.0, 7).unwrap(), 0.0);
        assert!(debias_fraction(100.0, 135.0, 10).unwrap() < 0.0);
        assert!(debias_fraction(1.0, 0.0, 0).is_err());
    }

    #[test]
    fn oracle_matches_direct() {
        let ds = example();
        for t in 1..=3 {
            for b in 0..=t + 1 {
                let direct = eval_query(&ds, &QuerySpec::cumulative(b, t).unwrap()).unwrap();
                for k in t..=4 {
                    assert_eq!(cumulative_from_window_oracle(&ds, b, t, k).unwrap(), direct);
                }
            }
        }
        assert!(matches!(
            cumulative_from_window_oracle(&ds, 1, 1, 13),
            Err(Error::EnumerationTooLarge { k: 13 })
        ));
        assert!(cumulative_from_window_oracle(&ds, 1, 3, 2).is_err());
    }

    #[test]
    fn oracle_all_ones() {
        let ds = LongitudinalDataset::from_rows(&vec![vec![1; 4]; 3]).unwrap();
        assert_eq!(cumulative_from_window_oracle(&ds, 4, 4, 4).unwrap(), 1.0);
        assert_eq!(cumulative_from_window_oracle(&ds, 0, 4, 4).unwrap(), 1.0);
    }

    #[test]
    fn report_of_exact_release() {
        let ds = example();
        let params = WindowBoundParams { horizon: 3, k: 2, rho: 1.0, n_pad: 0, beta: 0.05 };
        let report = max_error_report(&ds, &ds, params).unwrap();
        assert_eq!(report.max_additive, 0);
        assert_eq!(report.max_relative, 0.0);
        assert_eq!(report.rounds.len(), 2);
        assert!(report.within_bounds());
    }

    #[test]
    fn report_measures_against_padded_truth() {
        let truth = LongitudinalDataset::from_rows(&[vec![1, 0], vec![0, 0]]).unwrap();
        // one padding record per 1-bit bin on top of truth
        let synth = LongitudinalDataset::from_rows(&[vec![1, 0], vec![0, 0], vec![0, 0], vec![1, 0]])
            .unwrap();
        let params = WindowBoundParams { horizon: 2, k: 1, rho: 1.0, n_pad: 1, beta: 0.05 };
        let report = max_error_report(&truth, &synth, params).unwrap();
        assert_eq!(report.rounds[0].additive, 0);
        assert_eq!(report.rounds[1].additive, 1);
        assert_eq!(report.max_additive, 1);
        assert!((report.max_debiased - 0.5).abs() < 1e-15);
        assert!(report.rounds.iter().all(|r| r.relative >= 0.0));
    }
}
