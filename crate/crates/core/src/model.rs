//! Longitudinal bit panels: the real dataset, its round updates, suffix
//! keys/histograms and the append-only synthetic store.
//!
//! Rounds are 1-indexed throughout. Data is stored column-major (one
//! `Vec<u8>` of length `n` per round) because both synthesizers consume
//! and emit one round at a time.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};

/// Largest supported window length. Histograms hold `2^k` bins.
pub const MAX_WINDOW: usize = 24;

/// Read access to an `individuals × rounds` bit matrix.
pub trait BitPanel {
    /// Number of individuals (rows).
    fn population(&self) -> usize;

    /// Number of rounds available.
    fn rounds(&self) -> usize;

    /// Column for round `t` (1-based). Panics when `t` is out of range.
    fn column(&self, t: usize) -> &[u8];

    fn bit(&self, i: usize, t: usize) -> u8 {
        self.column(t)[i]
    }

    /// Row `i` up to the latest round.
    fn row(&self, i: usize) -> Vec<u8> {
        (1..=self.rounds()).map(|t| self.bit(i, t)).collect()
    }
}

fn check_binary(bits: &[u8]) -> Result<()> {
    match bits.iter().position(|&b| b > 1) {
        Some(index) => Err(Error::NonBinary { index, value: bits[index] }),
        None => Ok(()),
    }
}

/// One round of reports from every individual.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundUpdate {
    pub t: usize,
    pub bits: Vec<u8>,
}

impl RoundUpdate {
    pub fn new(t: usize, bits: Vec<u8>) -> Self {
        Self { t, bits }
    }
}

/// Ground-truth longitudinal data: `n` individuals, `t_max` rounds so far.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LongitudinalDataset {
    n: usize,
    columns: Vec<Vec<u8>>,
}

impl LongitudinalDataset {
    /// Empty dataset of `n` individuals with no rounds.
    pub fn new(n: usize) -> Self {
        Self { n, columns: Vec::new() }
    }

    /// Builds a dataset from per-individual rows of equal length.
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let t_max = rows.first().map_or(0, Vec::len);
        let mut columns = vec![Vec::with_capacity(rows.len()); t_max];
        for row in rows {
            if row.len() != t_max {
                return Err(Error::LengthMismatch { expected: t_max, found: row.len() });
            }
            check_binary(row)?;
            for (col, &bit) in columns.iter_mut().zip(row) {
                col.push(bit);
            }
        }
        Ok(Self { n: rows.len(), columns })
    }

    /// Builds a dataset from per-round columns, each of length `n`.
    pub fn from_columns(n: usize, columns: Vec<Vec<u8>>) -> Result<Self> {
        let mut ds = Self::new(n);
        for (idx, bits) in columns.into_iter().enumerate() {
            ds.ingest_round(RoundUpdate::new(idx + 1, bits))?;
        }
        Ok(ds)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t_max(&self) -> usize {
        self.columns.len()
    }

    /// Appends round `t_max + 1`.
    pub fn ingest_round(&mut self, update: RoundUpdate) -> Result<()> {
        let expected = self.t_max() + 1;
        if update.t != expected {
            return Err(Error::OutOfOrderRound { expected, found: update.t });
        }
        if update.bits.len() != self.n {
            return Err(Error::LengthMismatch { expected: self.n, found: update.bits.len() });
        }
        check_binary(&update.bits)?;
        self.columns.push(update.bits);
        Ok(())
    }

    /// Consuming variant of [`ingest_round`](Self::ingest_round).
    pub fn with_round(mut self, update: RoundUpdate) -> Result<Self> {
        self.ingest_round(update)?;
        Ok(self)
    }

    pub fn rows(&self) -> Vec<Vec<u8>> {
        (0..self.n).map(|i| self.row(i)).collect()
    }

    /// Restriction to the first `t` rounds.
    pub fn prefix(&self, t: usize) -> Result<Self> {
        if t > self.t_max() {
            return Err(Error::RoundOutOfRange { t, available: self.t_max() });
        }
        Ok(Self { n: self.n, columns: self.columns[..t].to_vec() })
    }
}

impl BitPanel for LongitudinalDataset {
    fn population(&self) -> usize {
        self.n
    }

    fn rounds(&self) -> usize {
        self.columns.len()
    }

    fn column(&self, t: usize) -> &[u8] {
        &self.columns[t - 1]
    }
}

/// A `k`-bit string `s`, stored as an integer whose most significant of the
/// `k` bits is the oldest round of the window.
///
/// Numeric order of `code` coincides with lexicographic order of the string
/// with `'0' < '1'`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SuffixKey {
    k: u8,
    code: u32,
}

impl SuffixKey {
    pub fn new(k: usize, code: u32) -> Result<Self> {
        if k == 0 || k > MAX_WINDOW {
            return Err(Error::WindowUnsupported { k });
        }
        if u64::from(code) >= 1u64 << k {
            return Err(Error::InvalidParameter("suffix code does not fit in k bits"));
        }
        Ok(Self { k: k as u8, code })
    }

    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        check_binary(bits)?;
        let code = bits.iter().fold(0u32, |acc, &b| (acc << 1) | u32::from(b));
        Self::new(bits.len(), code)
    }

    pub fn k(&self) -> usize {
        usize::from(self.k)
    }

    pub fn code(&self) -> u32 {
        self.code
    }

    /// Bits oldest-first.
    pub fn bits(&self) -> Vec<u8> {
        (0..self.k()).rev().map(|j| ((self.code >> j) & 1) as u8).collect()
    }

    /// Hamming weight `|s|`.
    pub fn weight(&self) -> u32 {
        self.code.count_ones()
    }

    /// All `2^k` keys in lexicographic order.
    pub fn all(k: usize) -> Result<impl Iterator<Item = SuffixKey>> {
        SuffixKey::new(k, 0)?;
        Ok((0..(1u32 << k)).map(move |code| SuffixKey { k: k as u8, code }))
    }
}

impl fmt::Display for SuffixKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for j in (0..self.k()).rev() {
            f.write_str(if (self.code >> j) & 1 == 1 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for SuffixKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .bytes()
            .map(|c| match c {
                b'0' => Ok(0),
                b'1' => Ok(1),
                _ => Err(Error::InvalidParameter("suffix must consist of '0' and '1'")),
            })
            .collect::<Result<Vec<u8>>>()?;
        Self::from_bits(&bits)
    }
}

/// Counts over all `2^k` suffixes, zero bins stored explicitly.
///
/// Counts are signed so the same type can hold noisy histograms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuffixHistogram {
    k: usize,
    counts: Vec<i64>,
}

impl SuffixHistogram {
    pub fn zeros(k: usize) -> Result<Self> {
        SuffixKey::new(k, 0)?;
        Ok(Self { k, counts: vec![0; 1 << k] })
    }

    pub fn from_counts(k: usize, counts: Vec<i64>) -> Result<Self> {
        SuffixKey::new(k, 0)?;
        if counts.len() != 1 << k {
            return Err(Error::LengthMismatch { expected: 1 << k, found: counts.len() });
        }
        Ok(Self { k, counts })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, key: SuffixKey) -> i64 {
        debug_assert_eq!(key.k(), self.k);
        self.counts[key.code() as usize]
    }

    pub fn counts(&self) -> &[i64] {
        &self.counts
    }

    pub(crate) fn counts_mut(&mut self) -> &mut [i64] {
        &mut self.counts
    }

    pub fn total(&self) -> i64 {
        self.counts.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (SuffixKey, i64)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .map(|(code, &c)| (SuffixKey { k: self.k as u8, code: code as u32 }, c))
    }
}

/// Window codes of every row at round `t`, built column by column.
pub(crate) fn window_codes<P: BitPanel + ?Sized>(panel: &P, k: usize, t: usize) -> Vec<u32> {
    let mut codes = vec![0u32; panel.population()];
    for r in t + 1 - k..=t {
        for (code, &bit) in codes.iter_mut().zip(panel.column(r)) {
            *code = (*code << 1) | u32::from(bit);
        }
    }
    codes
}

pub(crate) fn check_round<P: BitPanel + ?Sized>(panel: &P, t: usize) -> Result<()> {
    if t == 0 || t > panel.rounds() {
        return Err(Error::RoundOutOfRange { t, available: panel.rounds() });
    }
    Ok(())
}

/// `C_s^t`: how many rows have `(x^{t-k+1}, …, x^t) = s`, for every `s`.
///
/// Works on any panel, so it also recomputes the histogram realized by a
/// synthetic store.
pub fn true_suffix_histogram<P: BitPanel + ?Sized>(
    panel: &P,
    k: usize,
    t: usize,
) -> Result<SuffixHistogram> {
    let mut hist = SuffixHistogram::zeros(k)?;
    check_round(panel, t)?;
    if t < k {
        return Err(Error::WindowTooLong { k, t });
    }
    for code in window_codes(panel, k, t) {
        hist.counts[code as usize] += 1;
    }
    Ok(hist)
}

/// Hamming weight of each row over rounds `1..=t` (`t = 0` gives zeros).
pub fn hamming_weights<P: BitPanel + ?Sized>(panel: &P, t: usize) -> Result<Vec<u32>> {
    if t > panel.rounds() {
        return Err(Error::RoundOutOfRange { t, available: panel.rounds() });
    }
    let mut weights = vec![0u32; panel.population()];
    for r in 1..=t {
        for (w, &bit) in weights.iter_mut().zip(panel.column(r)) {
            *w += u32::from(bit);
        }
    }
    Ok(weights)
}

/// `S_b^t = #{i : x_i^1 + … + x_i^t ≥ b}` for `b = 0..=t`.
///
/// Entries for `b > t` are zero and omitted.
pub fn true_cumulative_counts<P: BitPanel + ?Sized>(panel: &P, t: usize) -> Result<Vec<u64>> {
    check_round(panel, t)?;
    let mut exact = vec![0u64; t + 1];
    for w in hamming_weights(panel, t)? {
        exact[w as usize] += 1;
    }
    // suffix sums turn "weight exactly b" into "weight at least b"
    let mut acc = 0;
    for slot in exact.iter_mut().rev() {
        acc += *slot;
        *slot = acc;
    }
    Ok(exact)
}

/// Released synthetic records. Columns can only be appended; once round `t`
/// is out, column `t` never changes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticStore {
    m: usize,
    columns: Vec<Vec<u8>>,
}

impl SyntheticStore {
    pub fn new(m: usize) -> Self {
        Self { m, columns: Vec::new() }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn push_column(&mut self, bits: Vec<u8>) -> Result<()> {
        if bits.len() != self.m {
            return Err(Error::LengthMismatch { expected: self.m, found: bits.len() });
        }
        check_binary(&bits)?;
        self.columns.push(bits);
        Ok(())
    }

    pub fn columns(&self) -> &[Vec<u8>] {
        &self.columns
    }
}

impl BitPanel for SyntheticStore {
    fn population(&self) -> usize {
        self.m
    }

    fn rounds(&self) -> usize {
        self.columns.len()
    }

    fn column(&self, t: usize) -> &[u8] {
        &self.columns[t - 1]
    }
}
