//! Random instances and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use aoii::cycle::{CycleParameters, SmdpParameters};
use aoii::dr_dph::DualRegimeChain;
use nalgebra::{DMatrix, RowDVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Largest transient row sum produced by [`random_chain`].
pub const MAX_TRANSIENT_MASS: f64 = 0.97;

/// Random weights summing to `total`; roughly a third of the entries are
/// zeroed (at least one survives).
pub fn random_split<R: Rng>(rng: &mut R, n: usize, total: f64) -> Vec<f64> {
    let keep = rng.random_range(0..n);
    let mut w: Vec<f64> = (0..n)
        .map(|i| {
            if i != keep && rng.random::<f64>() < 0.3 {
                0.0
            } else {
                rng.random::<f64>() + 1e-3
            }
        })
        .collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x *= total / s);
    w
}

pub struct RandomChain {
    pub chain: DualRegimeChain,
    pub k1: usize,
    pub k2: usize,
    pub tau: u32,
}

/// `K1, K2 <= k_max`, `tau <= tau_max`, one to three absorbing states.
/// Every transient row keeps at most [`MAX_TRANSIENT_MASS`].
pub fn random_chain<R: Rng>(rng: &mut R, k_max: usize, tau_max: u32) -> RandomChain {
    let k1 = rng.random_range(1..=k_max);
    let k2 = rng.random_range(1..=k_max);
    let l = rng.random_range(1..=3);
    let tau = rng.random_range(1..=tau_max);
    let ipv1 = RowDVector::from_vec(random_split(rng, k1, 1.0));
    let mut blocks = |k: usize| {
        let mut a = DMatrix::zeros(k, k);
        let mut b = DMatrix::zeros(k, l);
        for r in 0..k {
            let stay = rng.random_range(0.2..MAX_TRANSIENT_MASS);
            for (c, v) in random_split(rng, k, stay).into_iter().enumerate() {
                a[(r, c)] = v;
            }
            for (c, v) in random_split(rng, l, 1.0 - stay).into_iter().enumerate() {
                b[(r, c)] = v;
            }
        }
        (a, b)
    };
    let (a1, b1) = blocks(k1);
    let (a2, b2) = blocks(k2);
    let mut theta = DMatrix::zeros(k1, k2);
    for r in 0..k1 {
        for (c, v) in random_split(rng, k2, 1.0).into_iter().enumerate() {
            theta[(r, c)] = v;
        }
    }
    let chain = DualRegimeChain::new(ipv1, tau, theta, a1, a2, b1, b2).expect("valid chain");
    RandomChain { chain, k1, k2, tau }
}

/// Forward propagation of the joint state distribution.
pub struct SeriesOracle {
    /// `pmf[t]` for `t = 0..=horizon` (`pmf[0] = 0`).
    pub pmf: Vec<f64>,
    /// Absorption mass per absorbing state, split by regime.
    pub sigma1: Vec<f64>,
    pub sigma2: Vec<f64>,
    /// Mass still transient after the last step.
    pub residual: f64,
}

/// Runs the chain slot by slot until the certified tail bound for the
/// `max_order` raw moment drops below `tail_tol`.
pub fn series_oracle(chain: &DualRegimeChain, max_order: i32, tail_tol: f64) -> SeriesOracle {
    let tau = chain.threshold() as usize;
    let a1 = chain.tpts1().matrix();
    let a2 = chain.tpts2().matrix();
    let (b1, b2) = (chain.apts1(), chain.apts2());
    let l = b1.ncols();
    let mut v1 = chain.ipv1().clone();
    let mut v2: Option<RowDVector<f64>> = None;
    let mut pmf = vec![0.0];
    let (mut sigma1, mut sigma2) = (vec![0.0; l], vec![0.0; l]);
    let r = MAX_TRANSIENT_MASS;
    let mut t = 0usize;
    loop {
        // Step from elapsed time t to t + 1.
        if t + 1 == tau {
            v2 = Some(&v1 * chain.btm());
        }
        let absorbed = match v2.as_mut() {
            None => {
                let out = &v1 * b1;
                v1 = &v1 * a1;
                for i in 0..l {
                    sigma1[i] += out[i];
                }
                out.sum()
            }
            Some(v) => {
                let out = &*v * b2;
                *v = &*v * a2;
                for i in 0..l {
                    sigma2[i] += out[i];
                }
                out.sum()
            }
        };
        t += 1;
        pmf.push(absorbed);
        if t > tau + 10 && t.is_multiple_of(32) {
            // P(T = s) <= r^(s-1), so the tail of sum s^m p(s) past t is
            // bounded by sum_{s > t} s^m r^(s-1).
            let mut bound = 0.0;
            let mut s = t + 1;
            loop {
                let term = (s as f64).powi(max_order) * r.powi(s as i32 - 1);
                bound += term;
                if term < 1e-30 && s > 2 * t {
                    break;
                }
                s += 1;
            }
            if bound < tail_tol {
                let residual = v2.map(|v| v.sum()).unwrap_or_else(|| v1.sum());
                return SeriesOracle {
                    pmf,
                    sigma1,
                    sigma2,
                    residual,
                };
            }
        }
    }
}

impl SeriesOracle {
    pub fn raw_moment(&self, m: i32) -> f64 {
        self.pmf
            .iter()
            .enumerate()
            .map(|(t, p)| (t as f64).powi(m) * p)
            .sum()
    }

    pub fn factorial_moment(&self, m: u32) -> f64 {
        self.pmf
            .iter()
            .enumerate()
            .map(|(t, p)| (0..m).map(|k| t as f64 - k as f64).product::<f64>() * p)
            .sum()
    }

    /// `E[sum_{s=1}^T f(s)]` with `f` given by ascending coefficients.
    pub fn penalty_sum(&self, coeffs: &[f64]) -> f64 {
        let f = |s: f64| coeffs.iter().rev().fold(0.0, |acc, c| acc * s + c);
        let mut cumulative = 0.0;
        let mut total = 0.0;
        for (t, p) in self.pmf.iter().enumerate().skip(1) {
            cumulative += f(t as f64);
            total += cumulative * p;
        }
        total
    }
}

/// Random SMDP tables with strictly positive transition rows, so every
/// policy is unichain.
pub fn random_params<R: Rng>(rng: &mut R, states: usize, tau_max: u32) -> SmdpParameters {
    let cells = (0..states * tau_max as usize)
        .map(|_| CycleParameters {
            age_cost: rng.random_range(0.0..20.0),
            tx_cost: rng.random_range(0.0..3.0),
            duration: rng.random_range(2.0..12.0),
            transition_row: {
                let w: Vec<f64> = (0..states).map(|_| rng.random::<f64>() + 0.01).collect();
                let s: f64 = w.iter().sum();
                w.iter().map(|x| x / s).collect()
            },
        })
        .collect();
    SmdpParameters::new(states, tau_max, cells).expect("valid table")
}

/// Stationary law of a row-stochastic matrix by power iteration on the
/// lazy chain `(I + P) / 2`.
pub fn power_stationary(p: &DMatrix<f64>) -> Vec<f64> {
    let n = p.nrows();
    let lazy = (DMatrix::identity(n, n) + p) * 0.5;
    let mut v = RowDVector::from_element(n, 1.0 / n as f64);
    for _ in 0..100_000 {
        let next = &v * &lazy;
        let diff = (&next - &v).abs().max();
        v = next;
        if diff < 1e-16 {
            break;
        }
    }
    let s = v.sum();
    v.iter().map(|x| x / s).collect()
}
