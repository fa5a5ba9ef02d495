//! Validated stochastic and sub-stochastic matrices and plain discrete
//! phase-type (DPH) distributions.

use nalgebra::{DMatrix, DVector, RowDVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{row_samplers, Categorical};

/// Tolerance for probability bookkeeping at validation time.
pub const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixMode {
    Stochastic,
    SubStochastic,
}

/// Checks entries and row sums of a square probability matrix.
///
/// In sub-stochastic mode the matrix must also be transient: `I - A` is
/// invertible and its inverse is entrywise nonnegative, which for a
/// nonnegative `A` is equivalent to a spectral radius below one.
pub fn validate_stochastic(m: &DMatrix<f64>, mode: MatrixMode) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    check_entries(m)?;
    let mut all_full = m.nrows() > 0;
    for (row, r) in m.row_iter().enumerate() {
        let sum: f64 = r.iter().sum();
        match mode {
            MatrixMode::Stochastic => {
                if (sum - 1.0).abs() > PROB_TOL {
                    return Err(Error::RowSumViolation { row, sum });
                }
            }
            MatrixMode::SubStochastic => {
                if sum > 1.0 + PROB_TOL {
                    return Err(Error::RowSumViolation { row, sum });
                }
                if sum < 1.0 - PROB_TOL {
                    all_full = false;
                }
            }
        }
    }
    if mode == MatrixMode::SubStochastic {
        if all_full {
            return Err(Error::NotStrictlySubstochastic {
                reason: "every row sums to one".into(),
            });
        }
        let n = linalg::fundamental(m, "I - A").map_err(|_| Error::NotStrictlySubstochastic {
            reason: "I - A is singular (a closed class never exits)".into(),
        })?;
        if n.iter().any(|x| *x < -1e-9) {
            return Err(Error::NotStrictlySubstochastic {
                reason: "spectral radius is not below one".into(),
            });
        }
    }
    Ok(())
}

fn check_entries(m: &DMatrix<f64>) -> Result<()> {
    for row in 0..m.nrows() {
        for col in 0..m.ncols() {
            let value = m[(row, col)];
            if !value.is_finite() {
                return Err(Error::NonFinite { row, col });
            }
            if value < 0.0 {
                return Err(Error::NegativeEntry { row, col, value });
            }
        }
    }
    Ok(())
}

/// Checks a nonnegative row vector summing to one.
pub(crate) fn validate_probability_vector(v: &RowDVector<f64>) -> Result<()> {
    if let Some((i, x)) = v.iter().enumerate().find(|(_, x)| !x.is_finite() || **x < 0.0) {
        return Err(Error::InvalidProbabilityVector {
            reason: format!("entry {i} = {x}"),
        });
    }
    let sum = v.sum();
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(Error::InvalidProbabilityVector {
            reason: format!("entries sum to {sum}"),
        });
    }
    Ok(())
}

/// Checks that `[left | right]` is row-stochastic.
pub(crate) fn validate_block_rows(left: &DMatrix<f64>, right: &DMatrix<f64>) -> Result<()> {
    if left.nrows() != right.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "blocks with {} and {} rows",
            left.nrows(),
            right.nrows()
        )));
    }
    check_entries(left)?;
    check_entries(right)?;
    for row in 0..left.nrows() {
        let sum = left.row(row).sum() + right.row(row).sum();
        if (sum - 1.0).abs() > PROB_TOL {
            return Err(Error::RowSumViolation { row, sum });
        }
    }
    Ok(())
}

/// A row-stochastic square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix(DMatrix<f64>);

impl StochasticMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        validate_stochastic(&m, MatrixMode::Stochastic)?;
        Ok(Self(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(matrix_from_rows(rows)?)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }
}

/// A transient (spectral radius < 1) sub-stochastic square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SubStochasticMatrix(DMatrix<f64>);

impl SubStochasticMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        validate_stochastic(&m, MatrixMode::SubStochastic)?;
        Ok(Self(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(matrix_from_rows(rows)?)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// `1 - A 1`.
    pub fn exit_vector(&self) -> DVector<f64> {
        linalg::exit_vector(&self.0)
    }

    /// `(I - A)^-1`.
    pub fn fundamental(&self) -> Result<DMatrix<f64>> {
        linalg::fundamental(&self.0, "I - A")
    }
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let cols = rows.first().map_or(0, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
        return Err(Error::DimensionMismatch(format!(
            "row {i} has {} entries, expected {cols}",
            r.len()
        )));
    }
    Ok(DMatrix::from_fn(n, cols, |i, j| rows[i][j]))
}

/// `DPH(beta, A)`: time to absorption of a chain started from `beta`.
#[derive(Debug, Clone)]
pub struct DphDistribution {
    ipv: RowDVector<f64>,
    tpts: SubStochasticMatrix,
    absorption: DVector<f64>,
    samplers: Vec<Categorical>,
    start: Categorical,
}

impl DphDistribution {
    pub fn new(ipv: RowDVector<f64>, tpts: SubStochasticMatrix) -> Result<Self> {
        if ipv.len() != tpts.dim() {
            return Err(Error::DimensionMismatch(format!(
                "IPV of length {} for {} phases",
                ipv.len(),
                tpts.dim()
            )));
        }
        validate_probability_vector(&ipv)?;
        let absorption = tpts.exit_vector().map(|x| x.clamp(0.0, 1.0));
        let samplers = row_samplers(
            tpts.matrix(),
            &DMatrix::from_column_slice(absorption.len(), 1, absorption.as_slice()),
        );
        let start = Categorical::new(ipv.iter().copied());
        Ok(Self {
            ipv,
            tpts,
            absorption,
            samplers,
            start,
        })
    }

    pub fn from_parts(ipv: &[f64], tpts: &[Vec<f64>]) -> Result<Self> {
        Self::new(
            linalg::row_from(ipv),
            SubStochasticMatrix::from_rows(tpts)?,
        )
    }

    pub fn ipv(&self) -> &RowDVector<f64> {
        &self.ipv
    }

    pub fn tpts(&self) -> &SubStochasticMatrix {
        &self.tpts
    }

    pub fn absorption(&self) -> &DVector<f64> {
        &self.absorption
    }

    pub fn phases(&self) -> usize {
        self.ipv.len()
    }

    /// `P(T = t) = beta A^(t-1) a` for `t >= 1`.
    pub fn pmf(&self, t: u64) -> f64 {
        if t == 0 {
            return 0.0;
        }
        let a = self.tpts.matrix();
        let mut v = self.ipv.clone();
        for _ in 1..t {
            v = &v * a;
        }
        (v * &self.absorption)[0]
    }

    /// `P(T > t) = beta A^t 1`.
    pub fn survival(&self, t: u64) -> f64 {
        let a = self.tpts.matrix();
        let mut v = self.ipv.clone();
        for _ in 0..t {
            v = &v * a;
        }
        v.sum()
    }

    /// `E[T] = beta (I - A)^-1 1`.
    pub fn mean(&self) -> Result<f64> {
        let n = self.tpts.fundamental()?;
        Ok((&self.ipv * n).sum())
    }

    /// `E[T(T-1)] = 2 beta A (I - A)^-2 1`.
    pub fn second_factorial_moment(&self) -> Result<f64> {
        let n = self.tpts.fundamental()?;
        Ok(2.0 * (&self.ipv * self.tpts.matrix() * &n * &n).sum())
    }

    /// Draws an absorption time by stepping through the phases.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let m = self.phases();
        let mut phase = self.start.sample(rng);
        let mut t = 1;
        loop {
            let next = self.samplers[phase].sample(rng);
            if next == m {
                return t;
            }
            phase = next;
            t += 1;
        }
    }

    /// Row samplers over `[A | a]` for slot-by-slot simulation.
    pub(crate) fn phase_samplers(&self) -> &[Categorical] {
        &self.samplers
    }

    pub(crate) fn start_sampler(&self) -> &Categorical {
        &self.start
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn scenario2_channel() -> DphDistribution {
        DphDistribution::from_parts(&[1.0, 0.0], &[vec![0.7, 0.2], vec![0.1, 0.6]]).unwrap()
    }

    #[test]
    fn validation_examples() {
        let ok = DMatrix::from_row_slice(2, 2, &[0.6, 0.4, 0.3, 0.7]);
        assert!(validate_stochastic(&ok, MatrixMode::Stochastic).is_ok());
        let g = DMatrix::from_row_slice(2, 2, &[0.7, 0.2, 0.1, 0.6]);
        assert!(validate_stochastic(&g, MatrixMode::SubStochastic).is_ok());
        let bad = DMatrix::from_row_slice(2, 2, &[0.5, 0.6, 0.3, 0.7]);
        assert!(matches!(
            validate_stochastic(&bad, MatrixMode::Stochastic),
            Err(Error::RowSumViolation { row: 0, .. })
        ));
    }

    #[test]
    fn validation_errors() {
        let neg = DMatrix::from_row_slice(2, 2, &[1.1, -0.1, 0.3, 0.7]);
        assert!(matches!(
            validate_stochastic(&neg, MatrixMode::Stochastic),
            Err(Error::NegativeEntry { row: 0, col: 1, .. })
        ));
        let full = DMatrix::from_row_slice(2, 2, &[0.6, 0.4, 0.3, 0.7]);
        assert!(matches!(
            validate_stochastic(&full, MatrixMode::SubStochastic),
            Err(Error::NotStrictlySubstochastic { .. })
        ));
        // Row 1 leaks, but state 0 is a closed class.
        let closed = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.2, 0.3]);
        assert!(matches!(
            validate_stochastic(&closed, MatrixMode::SubStochastic),
            Err(Error::NotStrictlySubstochastic { .. })
        ));
        let rect = DMatrix::from_row_slice(1, 2, &[0.5, 0.5]);
        assert!(matches!(
            validate_stochastic(&rect, MatrixMode::Stochastic),
            Err(Error::NotSquare { .. })
        ));
    }

    #[test]
    fn geometric_pmf() {
        let d = DphDistribution::from_parts(&[1.0], &[vec![0.2]]).unwrap();
        assert!((d.pmf(3) - 0.032).abs() < 1e-15);
        assert_eq!(d.pmf(0), 0.0);
    }

    #[test]
    fn scenario2_channel_first_slot() {
        let d = scenario2_channel();
        assert!((d.pmf(1) - 0.1).abs() < 1e-15);
        assert!((d.absorption()[0] - 0.1).abs() < 1e-15);
        assert!((d.absorption()[1] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn immediate_absorption_sample() {
        let d = DphDistribution::from_parts(&[1.0], &[vec![0.0]]).unwrap();
        let mut rng = stream(1, 0);
        assert!((0..1000).all(|_| d.sample(&mut rng) == 1));
    }

    #[test]
    fn geometric_sample_mean() {
        let d = DphDistribution::from_parts(&[1.0], &[vec![0.2]]).unwrap();
        let mut rng = stream(11, 0);
        let n = 1_000_000;
        let xs: Vec<f64> = (0..n).map(|_| d.sample(&mut rng) as f64).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        // Var of geometric(p) = (1 - p) / p^2.
        let se = (0.2f64 / 0.64).sqrt() / (n as f64).sqrt();
        assert!((mean - 1.25).abs() < 3.0 * se, "{mean}");
    }

    #[test]
    fn scenario2_channel_empirical_pmf() {
        let d = scenario2_channel();
        let mut rng = stream(5, 0);
        let n = 1_000_000usize;
        let mut counts = vec![0usize; 400];
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for _ in 0..n {
            let t = d.sample(&mut rng);
            sum += t as f64;
            sum2 += (t * t) as f64;
            if (t as usize) < counts.len() {
                counts[t as usize] += 1;
            }
        }
        let tv: f64 = 0.5
            * (1..counts.len())
                .map(|t| (counts[t] as f64 / n as f64 - d.pmf(t as u64)).abs())
                .sum::<f64>();
        assert!(tv < 0.005, "total variation {tv}");

        let mean = d.mean().unwrap();
        let m2 = d.second_factorial_moment().unwrap() + mean;
        let var = m2 - mean * mean;
        let emp_mean = sum / n as f64;
        assert!((emp_mean - mean).abs() < 3.0 * (var / n as f64).sqrt());
        // Second moment: standard error from the sample fourth moment is not
        // tracked; bound with the sample variance of T^2 via a second pass.
        let emp_m2 = sum2 / n as f64;
        let mut rng = stream(5, 0);
        let var_t2 = (0..n)
            .map(|_| {
                let t = d.sample(&mut rng) as f64;
                (t * t - emp_m2).powi(2)
            })
            .sum::<f64>()
            / (n - 1) as f64;
        assert!((emp_m2 - m2).abs() < 3.0 * (var_t2 / n as f64).sqrt());
    }

    fn random_dph() -> impl Strategy<Value = DphDistribution> {
        (1usize..6)
            .prop_flat_map(|m| {
                (
                    proptest::collection::vec(0.01f64..1.0, m),
                    proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, m), m),
                    proptest::collection::vec(0.3f64..0.95, m),
                )
            })
            .prop_map(|(ipv, rows, mass)| {
                let s: f64 = ipv.iter().sum();
                let ipv: Vec<f64> = ipv.iter().map(|x| x / s).collect();
                let rows: Vec<Vec<f64>> = rows
                    .iter()
                    .zip(&mass)
                    .map(|(r, m)| {
                        let s: f64 = r.iter().sum::<f64>().max(1e-9);
                        r.iter().map(|x| x / s * m).collect()
                    })
                    .collect();
                DphDistribution::from_parts(&ipv, &rows).unwrap()
            })
    }

    proptest! {
        #[test]
        fn pmf_partial_sums_match_survival(d in random_dph(), horizon in 1u64..200) {
            let partial: f64 = (1..=horizon).map(|t| d.pmf(t)).sum();
            prop_assert!((1.0 - partial - d.survival(horizon)).abs() < 1e-12);
        }

        #[test]
        fn kron_mixed_product(
            a in proptest::collection::vec(-1.0f64..1.0, 4),
            b in proptest::collection::vec(-1.0f64..1.0, 4),
            c in proptest::collection::vec(-1.0f64..1.0, 4),
            e in proptest::collection::vec(-1.0f64..1.0, 4),
            s in -2.0f64..2.0,
        ) {
            let [a, b, c, e] = [a, b, c, e].map(|v| DMatrix::from_row_slice(2, 2, &v));
            let lhs = linalg::kron(&a, &b) * linalg::kron(&c, &e);
            let rhs = linalg::kron(&(&a * &c), &(&b * &e));
            prop_assert!((lhs - rhs).amax() < 1e-12);
            // Bilinearity.
            let lhs = linalg::kron(&(&a * s + &c), &b);
            let rhs = linalg::kron(&a, &b) * s + linalg::kron(&c, &b);
            prop_assert!((lhs - rhs).amax() < 1e-12);
        }
    }
}
