//! Dual-regime absorbing Markov chains and their absorption-time law.
//!
//! A dual-regime chain starts in regime 1 with IPV `beta1` and moves with
//! `[A1 | B1]` while the elapsed time is below the threshold `tau`. At
//! `t = tau - 1` any surviving mass is redistributed through the boundary
//! matrix `Theta` onto the regime-2 transient states, which then evolve with
//! `[A2 | B2]` until absorption into one of `L` absorbing states.
//!
//! The absorption time `T` has pmf
//!
//! ```text
//! P(T = t) = beta1 A1^(t-1) (1 - A1 1)        t < tau
//!          = beta2 A2^(t-tau) (1 - A2 1)      t >= tau,   beta2 = beta1 A1^(tau-1) Theta
//! ```

use nalgebra::{DMatrix, DVector, RowDVector};
use rand::Rng;

use crate::combinatorics::{
    binomial_f64, factorial_f64, falling_factorial_f64, faulhaber_coefficients, stirling2_f64,
    Polynomial,
};
use crate::error::{Error, Result};
use crate::rng::{row_samplers, Categorical};
use crate::stochastic::{
    validate_block_rows, validate_probability_vector, SubStochasticMatrix, PROB_TOL,
};

/// Largest moment order served by the closed forms.
pub const MAX_MOMENT_ORDER: u32 = 10;

/// Closed form used for the regime-2 part of the factorial moments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MomentFormula {
    /// `sum_r C(m,r) tau^(m-r) r! A2^r (I-A2)^-(r+1)` for every order, from
    /// expanding `(s + tau)^(m)` in falling powers of `s`.
    #[default]
    Unified,
    /// Same as `Unified` for `m <= tau`; for `m > tau` uses
    /// `A2^(m-tau) sum_r C(m,r) m^(m-r) r! A2^r (I-A2)^-(r+1)`, obtained by
    /// dropping the vanishing terms `s + tau < m` and re-indexing from
    /// `s = m - tau`. Kept as an independent second route.
    SplitBranch,
}

/// The 7-tuple `(beta1, tau, Theta, A1, A2, B1, B2)`.
#[derive(Debug, Clone)]
pub struct DualRegimeChain {
    ipv1: RowDVector<f64>,
    threshold: u32,
    btm: DMatrix<f64>,
    tpts1: SubStochasticMatrix,
    tpts2: SubStochasticMatrix,
    apts1: DMatrix<f64>,
    apts2: DMatrix<f64>,
    samplers: ChainSamplers,
}

#[derive(Debug, Clone)]
struct ChainSamplers {
    start: Categorical,
    boundary: Vec<Categorical>,
    regime1: Vec<Categorical>,
    regime2: Vec<Categorical>,
}

/// One simulated run of a [`DualRegimeChain`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DrDphSample {
    /// Slots until absorption, `T >= 1`.
    pub absorption_time: u64,
    /// Zero-based absorbing state index.
    pub absorbing_state: usize,
    /// Slots spent in regime 2.
    pub regime2_slots: u64,
}

impl DualRegimeChain {
    pub fn new(
        ipv1: RowDVector<f64>,
        threshold: u32,
        btm: DMatrix<f64>,
        tpts1: DMatrix<f64>,
        tpts2: DMatrix<f64>,
        apts1: DMatrix<f64>,
        apts2: DMatrix<f64>,
    ) -> Result<Self> {
        let k1 = tpts1.nrows();
        let k2 = tpts2.nrows();
        let l = apts1.ncols();
        if threshold == 0 {
            return Err(Error::ArgumentOutOfRange {
                what: "threshold",
                value: 0,
                min: 1,
                max: i64::MAX,
            });
        }
        if ipv1.len() != k1 || btm.shape() != (k1, k2) || apts2.ncols() != l || l == 0 {
            return Err(Error::DimensionMismatch(format!(
                "beta1 {}, Theta {:?}, A1 {:?}, A2 {:?}, B1 {:?}, B2 {:?}",
                ipv1.len(),
                btm.shape(),
                tpts1.shape(),
                tpts2.shape(),
                apts1.shape(),
                apts2.shape()
            )));
        }
        validate_probability_vector(&ipv1)?;
        validate_block_rows(&tpts1, &apts1)?;
        validate_block_rows(&tpts2, &apts2)?;
        validate_block_rows(&btm, &DMatrix::zeros(k1, 0))?;
        let tpts1 = SubStochasticMatrix::new(tpts1)?;
        let tpts2 = SubStochasticMatrix::new(tpts2)?;
        let samplers = ChainSamplers {
            start: Categorical::new(ipv1.iter().copied()),
            boundary: row_samplers(&btm, &DMatrix::zeros(k1, 0)),
            regime1: row_samplers(tpts1.matrix(), &apts1),
            regime2: row_samplers(tpts2.matrix(), &apts2),
        };
        Ok(Self {
            ipv1,
            threshold,
            btm,
            tpts1,
            tpts2,
            apts1,
            apts2,
            samplers,
        })
    }

    pub fn ipv1(&self) -> &RowDVector<f64> {
        &self.ipv1
    }
    pub fn threshold(&self) -> u32 {
        self.threshold
    }
    pub fn btm(&self) -> &DMatrix<f64> {
        &self.btm
    }
    pub fn tpts1(&self) -> &SubStochasticMatrix {
        &self.tpts1
    }
    pub fn tpts2(&self) -> &SubStochasticMatrix {
        &self.tpts2
    }
    pub fn apts1(&self) -> &DMatrix<f64> {
        &self.apts1
    }
    pub fn apts2(&self) -> &DMatrix<f64> {
        &self.apts2
    }
    /// Number of absorbing states `L`.
    pub fn absorbing_states(&self) -> usize {
        self.apts1.ncols()
    }

    /// `beta2 = beta1 A1^(tau-1) Theta`.
    pub fn regime2_ipv(&self) -> RowDVector<f64> {
        regime2_ipv(&self.ipv1, self.tpts1.matrix(), self.threshold, &self.btm)
    }

    /// Absorption-time distribution of this chain.
    pub fn distribution(&self) -> DrDphDistribution {
        DrDphDistribution {
            ipv1: self.ipv1.clone(),
            threshold: self.threshold,
            btm: self.btm.clone(),
            tpts1: self.tpts1.clone(),
            tpts2: self.tpts2.clone(),
            ipv2: self.regime2_ipv(),
        }
    }

    /// `(sigma1, sigma2)`: probability of absorbing into each state during
    /// regime 1 and regime 2 respectively.
    pub fn absorption_vectors(&self) -> Result<(RowDVector<f64>, RowDVector<f64>)> {
        let k1 = self.tpts1.dim();
        let a1 = self.tpts1.matrix();
        let n1 = self.tpts1.fundamental()?;
        let a1_pow = a1.pow(self.threshold - 1);
        let sigma1 = &self.ipv1 * (DMatrix::identity(k1, k1) - a1_pow) * n1 * &self.apts1;
        let n2 = self.tpts2.fundamental()?;
        let sigma2 = self.regime2_ipv() * n2 * &self.apts2;
        Ok((sigma1, sigma2))
    }

    /// Simulates the chain until absorption.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DrDphSample {
        let k1 = self.tpts1.dim();
        let k2 = self.tpts2.dim();
        let boundary = self.threshold as u64 - 1;
        let mut state = self.samplers.start.sample(rng);
        let mut t = 0u64;
        let mut in_regime2 = false;
        let mut regime2_slots = 0;
        loop {
            if !in_regime2 && t == boundary {
                state = self.samplers.boundary[state].sample(rng);
                in_regime2 = true;
            }
            let (row, k) = if in_regime2 {
                regime2_slots += 1;
                (&self.samplers.regime2[state], k2)
            } else {
                (&self.samplers.regime1[state], k1)
            };
            let next = row.sample(rng);
            t += 1;
            if next >= k {
                return DrDphSample {
                    absorption_time: t,
                    absorbing_state: next - k,
                    regime2_slots,
                };
            }
            state = next;
        }
    }
}

fn regime2_ipv(
    ipv1: &RowDVector<f64>,
    a1: &DMatrix<f64>,
    threshold: u32,
    btm: &DMatrix<f64>,
) -> RowDVector<f64> {
    let mut v = ipv1.clone();
    for _ in 1..threshold {
        v = &v * a1;
    }
    v * btm
}

/// The 5-tuple `(beta1, tau, Theta, A1, A2)` with cached `beta2`.
#[derive(Debug, Clone)]
pub struct DrDphDistribution {
    ipv1: RowDVector<f64>,
    threshold: u32,
    btm: DMatrix<f64>,
    tpts1: SubStochasticMatrix,
    tpts2: SubStochasticMatrix,
    ipv2: RowDVector<f64>,
}

impl DrDphDistribution {
    pub fn new(
        ipv1: RowDVector<f64>,
        threshold: u32,
        btm: DMatrix<f64>,
        tpts1: SubStochasticMatrix,
        tpts2: SubStochasticMatrix,
    ) -> Result<Self> {
        if threshold == 0 {
            return Err(Error::ArgumentOutOfRange {
                what: "threshold",
                value: 0,
                min: 1,
                max: i64::MAX,
            });
        }
        if ipv1.len() != tpts1.dim() || btm.shape() != (tpts1.dim(), tpts2.dim()) {
            return Err(Error::DimensionMismatch(
                "DR-DPH blocks do not conform".into(),
            ));
        }
        validate_probability_vector(&ipv1)?;
        validate_block_rows(&btm, &DMatrix::zeros(btm.nrows(), 0))?;
        let ipv2 = regime2_ipv(&ipv1, tpts1.matrix(), threshold, &btm);
        debug_assert!(check_regime2_mass(&ipv2));
        Ok(Self {
            ipv1,
            threshold,
            btm,
            tpts1,
            tpts2,
            ipv2,
        })
    }

    pub fn threshold(&self) -> u32 {
        self.threshold
    }

    pub fn ipv1(&self) -> &RowDVector<f64> {
        &self.ipv1
    }

    /// Cached `beta2`; equals `beta1 A1^(tau-1) Theta`.
    pub fn ipv2(&self) -> &RowDVector<f64> {
        &self.ipv2
    }

    pub fn btm(&self) -> &DMatrix<f64> {
        &self.btm
    }

    pub fn tpts1(&self) -> &SubStochasticMatrix {
        &self.tpts1
    }

    pub fn tpts2(&self) -> &SubStochasticMatrix {
        &self.tpts2
    }

    /// `P(T = t)`; zero for `t = 0`.
    pub fn pmf(&self, t: u64) -> f64 {
        if t == 0 {
            return 0.0;
        }
        let tau = self.threshold as u64;
        if t < tau {
            let mut v = self.ipv1.clone();
            for _ in 1..t {
                v = &v * self.tpts1.matrix();
            }
            (v * self.tpts1.exit_vector())[0]
        } else {
            let mut v = self.ipv2.clone();
            for _ in tau..t {
                v = &v * self.tpts2.matrix();
            }
            (v * self.tpts2.exit_vector())[0]
        }
    }

    /// `[P(T = 0), ..., P(T = t_max)]` in one pass.
    pub fn pmf_prefix(&self, t_max: u64) -> Vec<f64> {
        let tau = self.threshold as u64;
        let mut out = Vec::with_capacity(t_max as usize + 1);
        out.push(0.0);
        let exit1 = self.tpts1.exit_vector();
        let exit2 = self.tpts2.exit_vector();
        let mut v1 = self.ipv1.clone();
        let mut v2 = self.ipv2.clone();
        for t in 1..=t_max {
            if t < tau {
                out.push((&v1 * &exit1)[0]);
                v1 = &v1 * self.tpts1.matrix();
            } else {
                out.push((&v2 * &exit2)[0]);
                v2 = &v2 * self.tpts2.matrix();
            }
        }
        out
    }

    /// `P(T > t)`.
    pub fn survival(&self, t: u64) -> f64 {
        let tau = self.threshold as u64;
        if t < tau {
            let mut v = self.ipv1.clone();
            for _ in 0..t {
                v = &v * self.tpts1.matrix();
            }
            v.sum()
        } else {
            let mut v = self.ipv2.clone();
            for _ in 0..(t - tau + 1) {
                v = &v * self.tpts2.matrix();
            }
            v.sum()
        }
    }

    /// `E[T(T-1)...(T-m+1)]` for `1 <= m <= 10`.
    pub fn factorial_moment(&self, m: u32) -> Result<f64> {
        self.factorial_moment_with(m, MomentFormula::Unified)
    }

    pub fn factorial_moment_with(&self, m: u32, formula: MomentFormula) -> Result<f64> {
        check_order(m)?;
        Ok(self.factorial_moments(m, formula)?[m as usize])
    }

    /// `E[T^m] = sum_r S(m, r) E[T^(r)]` for `1 <= m <= 10`.
    pub fn ordinary_moment(&self, m: u32) -> Result<f64> {
        check_order(m)?;
        Ok(self.ordinary_moments(m)?[m as usize])
    }

    pub fn mean(&self) -> Result<f64> {
        self.ordinary_moment(1)
    }

    /// `E[sum_{t=1..T} f(t)]` as a combination of ordinary moments.
    pub fn expected_penalty_sum(&self, poly: &Polynomial) -> Result<f64> {
        let degree = poly.degree() as u32;
        let mu = self.ordinary_moments(degree + 1)?;
        let mut total = 0.0;
        for (k, w) in poly.coeffs().iter().enumerate() {
            if *w == 0.0 {
                continue;
            }
            let sum_of_powers: f64 = faulhaber_coefficients(k as u32)
                .iter()
                .enumerate()
                .map(|(p, c)| c * mu[p])
                .sum();
            total += w * sum_of_powers;
        }
        Ok(total)
    }

    /// `[mu(0), ..., mu(m)]` with `mu(0) = 1`.
    fn ordinary_moments(&self, m: u32) -> Result<Vec<f64>> {
        let nu = self.factorial_moments(m, MomentFormula::Unified)?;
        Ok((0..=m)
            .map(|p| (0..=p).map(|r| stirling2_f64(p, r) * nu[r as usize]).sum())
            .collect())
    }

    /// `[nu(0), ..., nu(m)]` with `nu(0) = 1`.
    fn factorial_moments(&self, m: u32, formula: MomentFormula) -> Result<Vec<f64>> {
        let tau = self.threshold;
        let mut nu = vec![0.0; m as usize + 1];

        // Regime 1: finite sum over t < tau.
        let a1 = self.tpts1.matrix();
        let exit1 = self.tpts1.exit_vector();
        let mut v = self.ipv1.clone();
        for t in 1..tau {
            let p = (&v * &exit1)[0];
            for (r, slot) in nu.iter_mut().enumerate() {
                *slot += falling_factorial_f64(t as i64, r as u32) * p;
            }
            v = &v * a1;
        }

        // Regime 2: T = tau + s with s ~ DPH(beta2, A2) shifted to start at 0,
        // and sum_{s>=0} s^(r) A^s = r! A^r (I-A)^-(r+1).
        let a2 = self.tpts2.matrix();
        let n2 = self.tpts2.fundamental()?;
        let exit2 = self.tpts2.exit_vector();
        let step = a2 * &n2;
        let mut series = Vec::with_capacity(m as usize + 1);
        let mut w: DVector<f64> = &n2 * &exit2;
        for _ in 0..=m {
            series.push((&self.ipv2 * &w)[0]);
            w = &step * w;
        }
        for (order, slot) in nu.iter_mut().enumerate() {
            let order = order as u32;
            let (base, shift) = match formula {
                MomentFormula::SplitBranch if order > tau => (order, order - tau),
                _ => (tau, 0),
            };
            let mut acc = 0.0;
            for r in 0..=order {
                let weight = binomial_f64(order, r)
                    * falling_factorial_f64(base as i64, order - r)
                    * factorial_f64(r);
                if weight == 0.0 {
                    continue;
                }
                let term = if shift == 0 {
                    series[r as usize]
                } else {
                    let tail = &n2.pow(r + 1) * a2.pow(r + shift) * &exit2;
                    (&self.ipv2 * tail)[0]
                };
                acc += weight * term;
            }
            *slot += acc;
        }
        nu[0] = 1.0;
        Ok(nu)
    }
}

fn check_order(m: u32) -> Result<()> {
    if m == 0 || m > MAX_MOMENT_ORDER {
        return Err(Error::ArgumentOutOfRange {
            what: "moment order",
            value: m as i64,
            min: 1,
            max: MAX_MOMENT_ORDER as i64,
        });
    }
    Ok(())
}

/// `beta2` must be a nonnegative vector with at most unit mass.
pub(crate) fn check_regime2_mass(ipv2: &RowDVector<f64>) -> bool {
    ipv2.iter().all(|x| *x >= -PROB_TOL) && ipv2.sum() <= 1.0 + PROB_TOL
}
