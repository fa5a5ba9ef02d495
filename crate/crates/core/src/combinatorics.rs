//! Exact combinatorial coefficients and penalty polynomials.
//!
//! Stirling numbers and falling factorials are computed with arbitrary-width
//! integers and converted to `f64` only where they enter a moment formula.

use num_bigint::{BigInt, BigUint};
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest order accepted by [`stirling2`].
pub const MAX_STIRLING_ORDER: u32 = 64;

/// Stirling number of the second kind `S(m, r)`.
pub fn stirling2(m: u32, r: u32) -> Result<BigUint> {
    if m > MAX_STIRLING_ORDER {
        return Err(Error::ArgumentOutOfRange {
            what: "m",
            value: m as i64,
            min: 0,
            max: MAX_STIRLING_ORDER as i64,
        });
    }
    if r > m {
        return Err(Error::ArgumentOutOfRange {
            what: "r",
            value: r as i64,
            min: 0,
            max: m as i64,
        });
    }
    Ok(stirling2_row(m).swap_remove(r as usize))
}

/// `[S(m, 0), ..., S(m, m)]` via `S(m, r) = r S(m-1, r) + S(m-1, r-1)`.
fn stirling2_row(m: u32) -> Vec<BigUint> {
    let mut row = vec![BigUint::one()];
    for n in 1..=m as usize {
        let mut next = vec![BigUint::zero(); n + 1];
        for r in 1..=n {
            let keep = if r < n {
                &row[r] * BigUint::from(r)
            } else {
                BigUint::zero()
            };
            next[r] = keep + &row[r - 1];
        }
        row = next;
    }
    row
}

pub(crate) fn stirling2_f64(m: u32, r: u32) -> f64 {
    stirling2(m, r)
        .expect("stirling order within range")
        .to_f64()
        .expect("finite")
}

/// Falling factorial `t (t-1) ... (t-m+1)`; the empty product is 1.
pub fn falling_factorial(t: i64, m: u32) -> BigInt {
    (0..m as i64).fold(BigInt::one(), |acc, i| acc * BigInt::from(t - i))
}

pub(crate) fn falling_factorial_f64(t: i64, m: u32) -> f64 {
    falling_factorial(t, m).to_f64().expect("finite")
}

pub(crate) fn binomial_f64(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let num = falling_factorial(n as i64, k);
    let den = falling_factorial(k as i64, k);
    (num / den).to_f64().expect("finite")
}

pub(crate) fn factorial_f64(n: u32) -> f64 {
    falling_factorial(n as i64, n).to_f64().expect("finite")
}

/// Coefficients `c_0..c_{k+1}` with `sum_{t=1..T} t^k = sum_p c_p T^p`.
///
/// Built from `t^k = sum_r S(k, r) t^(r)` (falling powers) and
/// `sum_{t=1..T} t^(r) = (T+1)^(r+1) / (r+1)`, which holds for `r >= 1`;
/// for `r = 0` the right side counts the `t = 0` term and is one too large.
/// All arithmetic is done over integers scaled by `lcm(1..k+1)`.
pub fn faulhaber_coefficients(k: u32) -> Vec<f64> {
    let scale = (1..=(k as u64 + 1)).fold(1u64, lcm);
    let scale_big = BigInt::from(scale);
    let mut acc = vec![BigInt::zero(); k as usize + 2];
    let s_row = stirling2_row(k);
    for (r, s) in s_row.iter().enumerate() {
        if s.is_zero() {
            continue;
        }
        // (T + 1)^(r+1) = prod_{i=0..r} (T + 1 - i), expanded in powers of T.
        let mut poly = vec![BigInt::one()];
        for i in 0..=r as i64 {
            let c = BigInt::from(1 - i);
            let mut next = vec![BigInt::zero(); poly.len() + 1];
            for (p, a) in poly.iter().enumerate() {
                next[p + 1] += a;
                next[p] += a * &c;
            }
            poly = next;
        }
        let weight = BigInt::from(s.clone()) * (&scale_big / BigInt::from(r as u64 + 1));
        for (p, a) in poly.iter().enumerate() {
            acc[p] += a * &weight;
        }
        if r == 0 {
            acc[0] -= BigInt::from(s.clone()) * &scale_big;
        }
    }
    acc.iter()
        .map(|c| c.to_f64().expect("finite") / scale as f64)
        .collect()
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: u64, b: u64) -> u64 {
    a / gcd(a, b) * b
}

/// Largest penalty degree accepted by the closed-form penalty sums.
pub const MAX_PENALTY_DEGREE: usize = 8;

/// A per-slot penalty polynomial `f(t) = sum_k w_k t^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    /// Coefficients in ascending power order; trailing zeros are trimmed.
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        let mut coeffs = coeffs;
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidConfig(
                "penalty coefficients must be finite".into(),
            ));
        }
        while coeffs.len() > 1 && coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        if coeffs.len() > MAX_PENALTY_DEGREE + 1 {
            return Err(Error::ArgumentOutOfRange {
                what: "penalty degree",
                value: coeffs.len() as i64 - 1,
                min: 0,
                max: MAX_PENALTY_DEGREE as i64,
            });
        }
        Ok(Self { coeffs })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }
}
