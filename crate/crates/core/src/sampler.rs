//! Exact sampling from the discrete Gaussian `N_Z(0, σ²)`.
//!
//! Follows the rejection construction of Canonne, Kamath and Steinke
//! (2020): draw a discrete Laplace variate with integer scale
//! `t = ⌊σ⌋ + 1` and accept it with probability
//! `exp(-(|y| - σ²/t)² / 2σ²)`. Every Bernoulli draw compares a uniform
//! integer against an exact rational, so no floating point ever touches a
//! sample. `σ²` is kept as a rational `num/den`.

use num_bigint::{BigUint, RandBigInt};
use rand::Rng;

use crate::error::{Error, Result};

/// Grid used when a real-valued scale has no small exact denominator.
const GRID_DEN: u64 = 1 << 20;
/// Scales above this are rejected (σ ≈ 10^6).
const MAX_SIGMA2: f64 = (1u64 << 40) as f64;
/// Denominators above this take the big-integer path, so that `d·K` in the
/// unit Bernoulli loop cannot overflow a `u128` for any reachable `K`.
const FAST_PATH_MAX_DEN: u128 = 1 << 80;

/// Variance parameter `σ²` of the discrete Gaussian, as an exact rational.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseScale {
    num: u64,
    den: u64,
}

impl NoiseScale {
    /// `σ² = 0`: the sampler returns 0 deterministically.
    pub const ZERO: NoiseScale = NoiseScale { num: 0, den: 1 };

    pub fn from_ratio(num: u64, den: u64) -> Result<Self> {
        if den == 0 {
            return Err(Error::InvalidParameter("noise scale denominator is zero"));
        }
        if num as f64 / den as f64 > MAX_SIGMA2 {
            return Err(Error::ScaleTooLarge);
        }
        let g = gcd(num, den);
        Ok(Self { num: num / g, den: den / g })
    }

    /// Converts a real `σ²`.
    ///
    /// If a rational with denominator ≤ 2^20 is at least `sigma2` and within
    /// 1e-12 relative of it, that rational is used; otherwise `sigma2` is rounded
    /// up to the next multiple of 2^-20, so the noise never shrinks.
    pub fn from_f64(sigma2: f64) -> Result<Self> {
        if sigma2.is_nan() || sigma2 < 0.0 {
            return Err(Error::NegativeScale);
        }
        if sigma2 == 0.0 {
            return Ok(Self::ZERO);
        }
        if sigma2 > MAX_SIGMA2 {
            return Err(Error::ScaleTooLarge);
        }
        if let Some((num, den)) = small_rational(sigma2) {
            return Self::from_ratio(num, den);
        }
        let num = libm::ceil(sigma2 * GRID_DEN as f64) as u64;
        Self::from_ratio(num, GRID_DEN)
    }

    pub fn numer(&self) -> u64 {
        self.num
    }

    pub fn denom(&self) -> u64 {
        self.den
    }

    pub fn sigma2(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn is_zero(&self) -> bool {
        self.num == 0
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

/// Continued-fraction search for `p/q ≈ x` with `q ≤ GRID_DEN`.
fn small_rational(x: f64) -> Option<(u64, u64)> {
    let (mut p0, mut q0, mut p1, mut q1) = (0u64, 1u64, 1u64, 0u64);
    let mut rest = x;
    for _ in 0..64 {
        let a = libm::floor(rest);
        if a > u64::MAX as f64 / 2.0 {
            return None;
        }
        let a = a as u64;
        let p2 = a.checked_mul(p1)?.checked_add(p0)?;
        let q2 = a.checked_mul(q1)?.checked_add(q0)?;
        if q2 > GRID_DEN {
            return None;
        }
        let approx = p2 as f64 / q2 as f64;
        // only accept matches that do not shrink the noise
        if approx >= x && approx - x <= 1e-12 * x {
            return Some((p2, q2));
        }
        let frac = rest - a as f64;
        if frac <= 0.0 {
            return None;
        }
        rest = 1.0 / frac;
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
    }
    None
}

/// Bernoulli(n/d), `n ≤ d`.
fn bernoulli_ratio<R: Rng + ?Sized>(rng: &mut R, n: u128, d: u128) -> bool {
    rng.gen_range(0..d) < n
}

/// Bernoulli(exp(-n/d)) for `n ≤ d`; `None` if `d·K` overflows.
fn bernoulli_exp_unit<R: Rng + ?Sized>(rng: &mut R, n: u128, d: u128) -> Option<bool> {
    let mut k: u128 = 1;
    loop {
        if bernoulli_ratio(rng, n, d.checked_mul(k)?) {
            k += 1;
        } else {
            return Some(k % 2 == 1);
        }
    }
}

/// Bernoulli(exp(-n/d)) for any `n ≥ 0`.
fn bernoulli_exp<R: Rng + ?Sized>(rng: &mut R, mut n: u128, d: u128) -> Option<bool> {
    while n > d {
        if !bernoulli_exp_unit(rng, 1, 1)? {
            return Some(false);
        }
        n -= d;
    }
    bernoulli_exp_unit(rng, n, d)
}

fn bernoulli_exp_big<R: Rng + ?Sized>(rng: &mut R, mut n: BigUint, d: &BigUint) -> bool {
    while &n > d {
        if bernoulli_exp_unit(rng, 1, 1) != Some(true) {
            return false;
        }
        n -= d;
    }
    let mut k = BigUint::from(1u32);
    loop {
        let bound = d * &k;
        if rng.gen_biguint_below(&bound) < n {
            k += 1u32;
        } else {
            return k.bit(0);
        }
    }
}

/// Discrete Laplace with integer scale `t`: `Pr[X = x] ∝ exp(-|x|/t)`.
fn sample_discrete_laplace<R: Rng + ?Sized>(rng: &mut R, t: u64) -> i64 {
    let scale = u128::from(t);
    loop {
        let u = rng.gen_range(0..t);
        // u < t ≤ 2^21, never overflows
        if !bernoulli_exp(rng, u128::from(u), scale).expect("scale is below 2^21") {
            continue;
        }
        let mut v: u64 = 0;
        while bernoulli_exp_unit(rng, 1, 1) == Some(true) {
            v += 1;
        }
        let x = u + t * v;
        let negative = rng.next_u32() & 1 == 1;
        if negative && x == 0 {
            continue;
        }
        let x = x as i64;
        return if negative { -x } else { x };
    }
}

/// One draw from `N_Z(0, σ²)`. Returns 0 when `σ² = 0`.
pub fn sample_discrete_gaussian<R: Rng + ?Sized>(scale: NoiseScale, rng: &mut R) -> i64 {
    if scale.is_zero() {
        return 0;
    }
    let (num, den) = (u128::from(scale.num), u128::from(scale.den));
    let t = (scale.num / scale.den).isqrt() + 1;
    let t128 = u128::from(t);
    loop {
        let y = sample_discrete_laplace(rng, t);
        let mag = u128::from(y.unsigned_abs());
        // γ = (|y|·t·den − num)² / (2·num·den·t²)
        let exact = mag
            .checked_mul(t128)
            .and_then(|v| v.checked_mul(den))
            .map(|v| v.abs_diff(num))
            .and_then(|a| a.checked_mul(a))
            .zip((2 * num).checked_mul(den).and_then(|v| v.checked_mul(t128 * t128)))
            .filter(|&(_, d)| d <= FAST_PATH_MAX_DEN);
        let accept = match exact {
            Some((n, d)) => {
                bernoulli_exp(rng, n, d).expect("denominator leaves room for the K loop")
            }
            None => {
                let scaled = BigUint::from(mag) * t128 * den;
                let a = if scaled >= BigUint::from(num) {
                    scaled - num
                } else {
                    BigUint::from(num) - scaled
                };
                let d = BigUint::from(2u32) * num * den * t128 * t128;
                bernoulli_exp_big(rng, &a * &a, &d)
            }
        };
        if accept {
            return y;
        }
    }
}

/// Checked entry point mirroring the operation contract: `σ²` given as a
/// real, negative values rejected.
pub fn sample_discrete_gaussian_f64<R: Rng + ?Sized>(sigma2: f64, rng: &mut R) -> Result<i64> {
    Ok(sample_discrete_gaussian(NoiseScale::from_f64(sigma2)?, rng))
}
