//! Small dense linear-algebra helpers shared by the analytic modules.

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::error::{Error, Result};

/// Reciprocal condition number below which an inverse is rejected.
pub const MIN_RCOND: f64 = 1e-12;

pub(crate) fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Inverse by dense LU, rejected when `1 / (|A|_1 |A^-1|_1) < MIN_RCOND`.
pub fn inverse_checked(a: &DMatrix<f64>, context: &'static str) -> Result<DMatrix<f64>> {
    if a.nrows() == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let inv = a
        .clone()
        .lu()
        .try_inverse()
        .ok_or(Error::SingularMatrix(context))?;
    let rcond = 1.0 / (norm1(a) * norm1(&inv));
    if !rcond.is_finite() || rcond < MIN_RCOND || inv.iter().any(|x| !x.is_finite()) {
        return Err(Error::SingularMatrix(context));
    }
    Ok(inv)
}

/// Fundamental matrix `(I - A)^-1` of a transient block.
pub fn fundamental(a: &DMatrix<f64>, context: &'static str) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    inverse_checked(&(DMatrix::identity(n, n) - a), context)
}

/// Kronecker product, `(A ⊗ B)[i*r + k, j*s + l] = A[i, j] * B[k, l]`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

pub(crate) fn ones(n: usize) -> DVector<f64> {
    DVector::from_element(n, 1.0)
}

/// `1 - A 1`.
pub(crate) fn exit_vector(a: &DMatrix<f64>) -> DVector<f64> {
    ones(a.nrows()) - a * ones(a.ncols())
}

pub(crate) fn row_from(v: &[f64]) -> RowDVector<f64> {
    RowDVector::from_row_slice(v)
}

/// Stationary distribution of an irreducible stochastic matrix.
pub fn stationary_distribution(p: &DMatrix<f64>) -> Result<RowDVector<f64>> {
    let n = p.nrows();
    // Solve pi (I - P) = 0 with the last balance equation replaced by pi 1 = 1.
    let mut sys = (DMatrix::identity(n, n) - p).transpose();
    for c in 0..n {
        sys[(n - 1, c)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let pi = sys
        .lu()
        .solve(&rhs)
        .ok_or(Error::SingularMatrix("stationary distribution"))?;
    Ok(pi.transpose())
}

/// Reachability closure: true when every state reaches every other state
/// through strictly positive entries.
pub fn is_irreducible(p: &DMatrix<f64>) -> bool {
    let n = p.nrows();
    if n == 0 {
        return false;
    }
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for v in 0..n {
                let w = if forward { p[(u, v)] } else { p[(v, u)] };
                if w > 0.0 && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}
