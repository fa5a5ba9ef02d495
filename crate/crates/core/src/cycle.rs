//! Per-cycle dual-regime chains and the SMDP parameter tables built on them.
//!
//! A cycle of type `j` starts when source and monitor synchronise at value
//! `j`. The in-sync dwell is geometric; the out-of-sync interval is the
//! absorption time of a dual-regime chain whose regime-1 states are the
//! source values `i != j` (no transmission yet) and whose regime-2 states are
//! pairs `(i, m)` of source value and channel phase (transmission in flight).
//! Absorbing state `E_i` means the next cycle is of type `i`.
//!
//! Transient states are enumerated by ascending source index, phase-major
//! within a source value in regime 2.

use std::io::Write;

use nalgebra::{DMatrix, RowDVector};
use serde::Serialize;

use crate::combinatorics::Polynomial;
use crate::dr_dph::{DrDphDistribution, DualRegimeChain};
use crate::error::{Error, Result};
use crate::linalg::{self, is_irreducible};
use crate::stochastic::{DphDistribution, StochasticMatrix};

/// Default action-space truncation.
pub const DEFAULT_TAU_MAX: u32 = 50;

/// Finite-DTMC source with one penalty polynomial per estimate value.
#[derive(Debug, Clone)]
pub struct SourceModel {
    q: StochasticMatrix,
    penalties: Vec<Polynomial>,
}

impl SourceModel {
    pub fn new(q: StochasticMatrix, penalties: Vec<Polynomial>) -> Result<Self> {
        let n = q.dim();
        if n < 2 {
            return Err(Error::DimensionMismatch(
                "source needs at least two states".into(),
            ));
        }
        if penalties.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} penalty polynomials for {n} states",
                penalties.len()
            )));
        }
        if !is_irreducible(q.matrix()) {
            return Err(Error::NotIrreducible);
        }
        if let Some(state) = (0..n).find(|&j| q.get(j, j) >= 1.0) {
            return Err(Error::DegenerateState { state });
        }
        for (state, f) in penalties.iter().enumerate() {
            if let Some(t) = (1..=1000).find(|&t| f.eval(t as f64) < 0.0) {
                return Err(Error::InvalidPenalty {
                    state,
                    reason: format!("f({t}) < 0"),
                });
            }
        }
        Ok(Self { q, penalties })
    }

    pub fn states(&self) -> usize {
        self.q.dim()
    }

    pub fn q(&self) -> &StochasticMatrix {
        &self.q
    }

    pub fn penalty(&self, j: usize) -> &Polynomial {
        &self.penalties[j]
    }

    pub fn penalties(&self) -> &[Polynomial] {
        &self.penalties
    }
}

/// Forward channel delay `DPH(gamma, G)`.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    dph: DphDistribution,
}

impl ChannelModel {
    pub fn new(dph: DphDistribution) -> Self {
        Self { dph }
    }

    pub fn from_parts(gamma: &[f64], g: &[Vec<f64>]) -> Result<Self> {
        Ok(Self::new(DphDistribution::from_parts(gamma, g)?))
    }

    pub fn dph(&self) -> &DphDistribution {
        &self.dph
    }

    pub fn phases(&self) -> usize {
        self.dph.phases()
    }

    pub fn gamma(&self) -> &RowDVector<f64> {
        self.dph.ipv()
    }

    pub fn g(&self) -> &DMatrix<f64> {
        self.dph.tpts().matrix()
    }

    /// Per-phase delivery probability `h = 1 - G 1`.
    pub fn h(&self) -> &nalgebra::DVector<f64> {
        self.dph.absorption()
    }
}

/// How a delivery from phase `m` of source value `i` is weighted in regime 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DeliveryAbsorption {
    /// `q_ii h_m`: the delivery survives only if the source holds its value.
    #[default]
    SourceHolds,
    /// `(1 - q_ii) h_m`. Rows of `[A2 | B2]` do not sum to one under this
    /// weighting, so chain construction rejects it.
    ComplementOfHold,
}

fn others(n: usize, j: usize) -> impl Iterator<Item = usize> + Clone {
    (0..n).filter(move |&i| i != j)
}

/// Regime-1 blocks `(beta1, A1, B1)` for cycle type `j`.
pub fn regime1_blocks(
    source: &SourceModel,
    j: usize,
) -> Result<(RowDVector<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let n = source.states();
    let q = source.q();
    let leave: f64 = others(n, j).map(|i| q.get(j, i)).sum();
    if leave <= 0.0 {
        return Err(Error::IsolatedState { state: j });
    }
    let idx: Vec<usize> = others(n, j).collect();
    let ipv = RowDVector::from_iterator(n - 1, idx.iter().map(|&i| q.get(j, i) / leave));
    let a1 = DMatrix::from_fn(n - 1, n - 1, |r, c| q.get(idx[r], idx[c]));
    let mut b1 = DMatrix::zeros(n - 1, n);
    for (r, &i) in idx.iter().enumerate() {
        b1[(r, j)] = q.get(i, j);
    }
    Ok((ipv, a1, b1))
}

/// Regime-2 blocks `(A2, B2)` for cycle type `j`.
pub fn regime2_blocks(
    source: &SourceModel,
    channel: &ChannelModel,
    j: usize,
    rule: DeliveryAbsorption,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = source.states();
    let m = channel.phases();
    let q = source.q();
    let g = channel.g();
    let gamma = channel.gamma();
    let h = channel.h();
    let idx: Vec<usize> = others(n, j).collect();
    let k2 = (n - 1) * m;
    let mut a2 = DMatrix::zeros(k2, k2);
    let mut b2 = DMatrix::zeros(k2, n);
    for (r, &i) in idx.iter().enumerate() {
        let qii = q.get(i, i);
        for phase in 0..m {
            let row = r * m + phase;
            for (c, &i2) in idx.iter().enumerate() {
                for next in 0..m {
                    let col = c * m + next;
                    a2[(row, col)] = if i2 == i {
                        qii * g[(phase, next)]
                    } else {
                        q.get(i, i2) * gamma[next]
                    };
                }
            }
            b2[(row, j)] = q.get(i, j);
            b2[(row, i)] = match rule {
                DeliveryAbsorption::SourceHolds => qii * h[phase],
                DeliveryAbsorption::ComplementOfHold => (1.0 - qii) * h[phase],
            };
        }
    }
    (a2, b2)
}

/// `Theta = I_(N-1) ⊗ gamma`.
pub fn boundary_matrix(channel: &ChannelModel, n: usize) -> DMatrix<f64> {
    let gamma = DMatrix::from_row_slice(1, channel.phases(), channel.gamma().as_slice());
    linalg::kron(&DMatrix::identity(n - 1, n - 1), &gamma)
}

/// The out-of-sync chain of a cycle of type `ev` under threshold `threshold`.
#[derive(Debug, Clone)]
pub struct CycleChain {
    ev: usize,
    threshold: u32,
    chain: DualRegimeChain,
    dist: DrDphDistribution,
}

pub fn build_cycle_chain(
    source: &SourceModel,
    channel: &ChannelModel,
    j: usize,
    threshold: u32,
) -> Result<CycleChain> {
    build_cycle_chain_with(source, channel, j, threshold, DeliveryAbsorption::SourceHolds)
}

pub fn build_cycle_chain_with(
    source: &SourceModel,
    channel: &ChannelModel,
    j: usize,
    threshold: u32,
    rule: DeliveryAbsorption,
) -> Result<CycleChain> {
    let n = source.states();
    if j >= n {
        return Err(Error::ArgumentOutOfRange {
            what: "embedded value",
            value: j as i64,
            min: 0,
            max: n as i64 - 1,
        });
    }
    let (ipv1, a1, b1) = regime1_blocks(source, j)?;
    let (a2, b2) = regime2_blocks(source, channel, j, rule);
    let btm = boundary_matrix(channel, n);
    let chain = DualRegimeChain::new(ipv1, threshold, btm, a1, a2, b1, b2)?;
    let dist = chain.distribution();
    Ok(CycleChain {
        ev: j,
        threshold,
        chain,
        dist,
    })
}

/// The four SMDP quantities of one `(j, tau)` cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleParameters {
    /// Expected penalty accumulated over the cycle.
    pub age_cost: f64,
    /// Expected number of transmitting slots.
    pub tx_cost: f64,
    /// Expected cycle length in slots.
    pub duration: f64,
    /// Next embedded value distribution.
    pub transition_row: Vec<f64>,
}

impl CycleChain {
    pub fn ev(&self) -> usize {
        self.ev
    }

    pub fn threshold(&self) -> u32 {
        self.threshold
    }

    pub fn chain(&self) -> &DualRegimeChain {
        &self.chain
    }

    pub fn distribution(&self) -> &DrDphDistribution {
        &self.dist
    }

    /// `a(E_j, tau) = E[sum_{t=1..T_j} f_j(t)]`.
    pub fn age_cost(&self, penalty: &Polynomial) -> Result<f64> {
        self.dist.expected_penalty_sum(penalty)
    }

    /// `d(E_j, tau) = 1 / (1 - q_jj) + E[T_j]`.
    pub fn duration(&self, source: &SourceModel) -> Result<f64> {
        let qjj = source.q().get(self.ev, self.ev);
        if qjj >= 1.0 {
            return Err(Error::DegenerateState { state: self.ev });
        }
        Ok(1.0 / (1.0 - qjj) + self.dist.mean()?)
    }

    /// `c(E_j, tau) = beta2 (I - A2)^-1 1`.
    pub fn transmission_cost(&self) -> Result<f64> {
        let n2 = self.chain.tpts2().fundamental()?;
        Ok((self.dist.ipv2() * n2).sum())
    }

    /// Next-EV probabilities: regime-2 absorption for `i != j`, complement
    /// for `i = j`.
    pub fn transition_row(&self) -> Result<Vec<f64>> {
        let n2 = self.chain.tpts2().fundamental()?;
        let absorbed = self.dist.ipv2() * n2 * self.chain.apts2();
        let mut row: Vec<f64> = absorbed.iter().copied().collect();
        row[self.ev] = 0.0;
        row[self.ev] = 1.0 - row.iter().sum::<f64>();
        Ok(row)
    }

    /// Next-EV probabilities as `sigma1 + sigma2`.
    pub fn transition_row_from_absorption(&self) -> Result<Vec<f64>> {
        let (s1, s2) = self.chain.absorption_vectors()?;
        Ok((s1 + s2).iter().copied().collect())
    }

    pub fn parameters(&self, source: &SourceModel) -> Result<CycleParameters> {
        Ok(CycleParameters {
            age_cost: self.age_cost(source.penalty(self.ev))?,
            tx_cost: self.transmission_cost()?,
            duration: self.duration(source)?,
            transition_row: self.transition_row()?,
        })
    }
}

/// Parameter tables over `j in 0..N`, `tau in 1..=tau_max`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmdpParameters {
    states: usize,
    tau_max: u32,
    cells: Vec<CycleParameters>,
}

impl SmdpParameters {
    /// `cells[j * tau_max + (tau - 1)]` holds the `(j, tau)` entry.
    pub fn new(states: usize, tau_max: u32, cells: Vec<CycleParameters>) -> Result<Self> {
        if states == 0 || tau_max == 0 || cells.len() != states * tau_max as usize {
            return Err(Error::DimensionMismatch(format!(
                "{} cells for {states} states and tau_max {tau_max}",
                cells.len()
            )));
        }
        for (k, cell) in cells.iter().enumerate() {
            let (j, tau) = (k / tau_max as usize, k % tau_max as usize + 1);
            let bad = |what: &str| {
                Error::InvalidConfig(format!("cell (j={}, tau={tau}): {what}", j + 1))
            };
            if cell.transition_row.len() != states {
                return Err(bad("transition row has wrong length"));
            }
            if cell.transition_row.iter().any(|p| !(*p >= -1e-12)) {
                return Err(bad("negative transition probability"));
            }
            let sum: f64 = cell.transition_row.iter().sum();
            if (sum - 1.0).abs() > 1e-10 {
                return Err(bad("transition row does not sum to one"));
            }
            if !(cell.age_cost >= 0.0) || !(cell.tx_cost >= 0.0) {
                return Err(bad("negative cost"));
            }
            if !(cell.duration >= 2.0 - 1e-12) || !cell.duration.is_finite() {
                return Err(bad("duration below two slots"));
            }
        }
        Ok(Self {
            states,
            tau_max,
            cells,
        })
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn tau_max(&self) -> u32 {
        self.tau_max
    }

    /// Entry for zero-based `j` and threshold `tau >= 1`.
    pub fn get(&self, j: usize, tau: u32) -> &CycleParameters {
        &self.cells[j * self.tau_max as usize + tau as usize - 1]
    }

    pub fn get_mut(&mut self, j: usize, tau: u32) -> &mut CycleParameters {
        &mut self.cells[j * self.tau_max as usize + tau as usize - 1]
    }

    /// `r = a + lambda c`.
    pub fn reward(&self, j: usize, tau: u32, lambda: f64) -> f64 {
        let c = self.get(j, tau);
        c.age_cost + lambda * c.tx_cost
    }

    /// CSV with columns `j, tau, age_cost, tx_cost, duration, rho_1..rho_N`
    /// (one-based `j`).
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![
            "j".to_string(),
            "tau".into(),
            "age_cost".into(),
            "tx_cost".into(),
            "duration".into(),
        ];
        header.extend((1..=self.states).map(|i| format!("rho_{i}")));
        w.write_record(&header)?;
        for j in 0..self.states {
            for tau in 1..=self.tau_max {
                let c = self.get(j, tau);
                let mut rec = vec![
                    (j + 1).to_string(),
                    tau.to_string(),
                    c.age_cost.to_string(),
                    c.tx_cost.to_string(),
                    c.duration.to_string(),
                ];
                rec.extend(c.transition_row.iter().map(f64::to_string));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Builds the full parameter table for thresholds `1..=tau_max`.
pub fn smdp_parameters(
    source: &SourceModel,
    channel: &ChannelModel,
    tau_max: u32,
) -> Result<SmdpParameters> {
    if tau_max == 0 {
        return Err(Error::ArgumentOutOfRange {
            what: "tau_max",
            value: 0,
            min: 1,
            max: i64::MAX,
        });
    }
    let n = source.states();
    let mut cells = Vec::with_capacity(n * tau_max as usize);
    for j in 0..n {
        for tau in 1..=tau_max {
            cells.push(build_cycle_chain(source, channel, j, tau)?.parameters(source)?);
        }
    }
    SmdpParameters::new(n, tau_max, cells)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario2() -> (SourceModel, ChannelModel) {
        let q = StochasticMatrix::from_rows(&[
            vec![0.60, 0.25, 0.15],
            vec![0.25, 0.55, 0.20],
            vec![0.20, 0.30, 0.50],
        ])
        .unwrap();
        let f = |c: Vec<f64>| Polynomial::new(c).unwrap();
        let source = SourceModel::new(
            q,
            vec![f(vec![0.5, 1.0]), f(vec![1.0, 0.5]), f(vec![0.25, 1.0 / 3.0])],
        )
        .unwrap();
        let channel =
            ChannelModel::from_parts(&[1.0, 0.0], &[vec![0.7, 0.2], vec![0.1, 0.6]]).unwrap();
        (source, channel)
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-14
    }

    #[test]
    fn regime1_blocks_scenario2() {
        let (s, _) = scenario2();
        let (b1, a1, bb1) = regime1_blocks(&s, 0).unwrap();
        assert!(close(b1[0], 0.625) && close(b1[1], 0.375));
        let expect = [0.55, 0.20, 0.30, 0.50];
        for (x, y) in a1.transpose().iter().zip(expect) {
            assert!(close(*x, y));
        }
        assert!(close(bb1[(0, 0)], 0.25) && close(bb1[(1, 0)], 0.20));
        assert_eq!(bb1.columns(1, 2).amax(), 0.0);
        for r in 0..2 {
            assert!(close(a1.row(r).sum() + bb1.row(r).sum(), 1.0));
        }
    }

    #[test]
    fn two_state_source_has_unit_ipv() {
        let q = StochasticMatrix::from_rows(&[vec![0.3, 0.7], vec![0.9, 0.1]]).unwrap();
        let one = Polynomial::new(vec![1.0]).unwrap();
        let s = SourceModel::new(q, vec![one.clone(), one]).unwrap();
        for j in 0..2 {
            assert_eq!(regime1_blocks(&s, j).unwrap().0[0], 1.0);
        }
    }

    #[test]
    fn regime2_blocks_scenario2() {
        let (s, c) = scenario2();
        let (a2, b2) = regime2_blocks(&s, &c, 0, DeliveryAbsorption::SourceHolds);
        // State (2,1) is row 0.
        assert!(close(b2[(0, 0)], 0.25));
        assert!(close(b2[(0, 1)], 0.055));
        assert_eq!(b2[(0, 2)], 0.0);
        for r in 0..4 {
            assert!((a2.row(r).sum() + b2.row(r).sum() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn regime2_blocks_geometric_channel() {
        let (s, _) = scenario2();
        let c = ChannelModel::from_parts(&[1.0], &[vec![0.2]]).unwrap();
        let (a2, b2) = regime2_blocks(&s, &c, 0, DeliveryAbsorption::SourceHolds);
        assert!(close(a2[(0, 0)], 0.2 * 0.55));
        assert!(close(b2[(0, 1)], 0.8 * 0.55));
        assert!(close(a2[(1, 1)], 0.2 * 0.50));
        assert!(close(b2[(1, 2)], 0.8 * 0.50));
    }

    #[test]
    fn complement_delivery_rule_fails_validation() {
        let (s, c) = scenario2();
        let r = build_cycle_chain_with(&s, &c, 0, 2, DeliveryAbsorption::ComplementOfHold);
        assert!(matches!(r, Err(Error::RowSumViolation { .. })));
    }

    #[test]
    fn boundary_matrix_examples() {
        let (_, c) = scenario2();
        let t = boundary_matrix(&c, 3);
        assert_eq!(
            t,
            DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0])
        );
        let geo = ChannelModel::from_parts(&[1.0], &[vec![0.2]]).unwrap();
        assert_eq!(boundary_matrix(&geo, 2), DMatrix::from_element(1, 1, 1.0));
    }

    #[test]
    fn cycle_chain_dimensions_and_regime2_ipv() {
        let (s, c) = scenario2();
        let cyc = build_cycle_chain(&s, &c, 0, 2).unwrap();
        let ch = cyc.chain();
        assert_eq!(ch.tpts1().dim(), 2);
        assert_eq!(ch.tpts2().dim(), 4);
        assert_eq!(ch.absorbing_states(), 3);
        let b2 = build_cycle_chain(&s, &c, 0, 1).unwrap().chain().regime2_ipv();
        let expect = [0.625, 0.0, 0.375, 0.0];
        for (x, y) in b2.iter().zip(expect) {
            assert!(close(*x, y));
        }
        // Regime 1 only reaches E_j.
        let (s1, _) = ch.absorption_vectors().unwrap();
        assert!(s1[0] > 0.0 && s1[1] == 0.0 && s1[2] == 0.0);
    }

    #[test]
    fn duration_in_sync_part() {
        let (s, c) = scenario2();
        let cyc = build_cycle_chain(&s, &c, 0, 1).unwrap();
        let d = cyc.duration(&s).unwrap();
        assert!((d - 2.5 - cyc.distribution().mean().unwrap()).abs() < 1e-12);
    }

    #[test]
    fn zero_dwell_gives_single_sync_slot() {
        let q = StochasticMatrix::from_rows(&[vec![0.0, 1.0], vec![0.5, 0.5]]).unwrap();
        let one = Polynomial::new(vec![1.0]).unwrap();
        let s = SourceModel::new(q, vec![one.clone(), one]).unwrap();
        let c = ChannelModel::from_parts(&[1.0], &[vec![0.2]]).unwrap();
        let cyc = build_cycle_chain(&s, &c, 0, 1).unwrap();
        let d = cyc.duration(&s).unwrap();
        assert!((d - 1.0 - cyc.distribution().mean().unwrap()).abs() < 1e-12);
    }

    #[test]
    fn transmission_cost_threshold_one_is_mean() {
        let (s, c) = scenario2();
        for j in 0..3 {
            let cyc = build_cycle_chain(&s, &c, j, 1).unwrap();
            let mean = cyc.distribution().mean().unwrap();
            assert!((cyc.transmission_cost().unwrap() - mean).abs() < 1e-10);
        }
    }

    #[test]
    fn transition_row_paths_agree() {
        let (s, c) = scenario2();
        for j in 0..3 {
            for tau in [1, 2, 3, 5, 17] {
                let cyc = build_cycle_chain(&s, &c, j, tau).unwrap();
                let a = cyc.transition_row().unwrap();
                let b = cyc.transition_row_from_absorption().unwrap();
                assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-10);
                for (x, y) in a.iter().zip(&b) {
                    assert!((x - y).abs() < 1e-10, "j={j} tau={tau}");
                }
            }
        }
    }

    #[test]
    fn large_threshold_limits() {
        let (s, c) = scenario2();
        let cyc = build_cycle_chain(&s, &c, 0, 200).unwrap();
        assert!(cyc.transition_row().unwrap()[0] > 0.99);
        assert!(cyc.transmission_cost().unwrap() < 1e-10);
    }

    #[test]
    fn age_cost_trivial_penalties() {
        let (s, c) = scenario2();
        let cyc = build_cycle_chain(&s, &c, 1, 3).unwrap();
        let zero = Polynomial::new(vec![0.0]).unwrap();
        let one = Polynomial::new(vec![1.0]).unwrap();
        assert_eq!(cyc.age_cost(&zero).unwrap(), 0.0);
        let mean = cyc.distribution().mean().unwrap();
        assert!((cyc.age_cost(&one).unwrap() - mean).abs() < 1e-12);
    }

    #[test]
    fn scenario2_tables_monotone() {
        let (s, c) = scenario2();
        let p = smdp_parameters(&s, &c, 20).unwrap();
        for j in 0..3 {
            for tau in 1..20 {
                let (x, y) = (p.get(j, tau), p.get(j, tau + 1));
                assert!(y.age_cost >= x.age_cost - 1e-12);
                assert!(y.tx_cost <= x.tx_cost + 1e-12);
            }
        }
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("j,tau,age_cost,tx_cost,duration,rho_1,rho_2,rho_3\n"));
        assert_eq!(text.lines().count(), 61);
    }

    #[test]
    fn source_validation() {
        let one = Polynomial::new(vec![1.0]).unwrap();
        let red = StochasticMatrix::from_rows(&[vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
        assert!(matches!(
            SourceModel::new(red, vec![one.clone(), one.clone()]),
            Err(Error::NotIrreducible)
        ));
        let q = StochasticMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let neg = Polynomial::new(vec![5.0, -1.0]).unwrap();
        assert!(matches!(
            SourceModel::new(q, vec![one, neg]),
            Err(Error::InvalidPenalty { state: 1, .. })
        ));
    }
}
