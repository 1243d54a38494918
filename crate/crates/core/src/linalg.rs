//! Dense linear algebra helpers on top of nalgebra.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance for declaring a design column aliased.
pub const ALIAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct WlsFit {
    /// Coefficients for the kept columns, in input order.
    pub coef: Vec<f64>,
    /// Input indices of the kept columns.
    pub kept: Vec<usize>,
    /// Input indices of columns dropped as linear combinations of earlier ones.
    pub aliased: Vec<usize>,
}

impl WlsFit {
    /// Coefficient of input column `j`, `None` if it was aliased.
    pub fn coef_of(&self, j: usize) -> Option<f64> {
        self.kept.iter().position(|&k| k == j).map(|p| self.coef[p])
    }
}

/// Columns of `x` that are not in the span of earlier columns under the
/// `w`-weighted inner product, found by modified Gram-Schmidt.
pub fn independent_columns(x: &DMatrix<f64>, w: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let (n, p) = x.shape();
    let sw: Vec<f64> = w.iter().map(|&v| libm::sqrt(v)).collect();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let (mut kept, mut aliased) = (Vec::new(), Vec::new());
    for j in 0..p {
        let mut v = DVector::from_fn(n, |i, _| x[(i, j)] * sw[i]);
        let norm0 = v.norm();
        for q in &basis {
            let d = q.dot(&v);
            v.axpy(-d, q, 1.0);
        }
        // second pass for numerical orthogonality
        for q in &basis {
            let d = q.dot(&v);
            v.axpy(-d, q, 1.0);
        }
        let norm = v.norm();
        if norm0 > 0.0 && norm > ALIAS_TOL * norm0 {
            basis.push(v / norm);
            kept.push(j);
        } else {
            aliased.push(j);
        }
    }
    (kept, aliased)
}

/// Weighted least squares of `y` on `x` with weights `w`, dropping aliased
/// columns in input order.
pub fn wls(x: &DMatrix<f64>, y: &[f64], w: &[f64]) -> Result<WlsFit> {
    let (n, _) = x.shape();
    if y.len() != n || w.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "wls: {n} rows, {} outcomes, {} weights",
            y.len(),
            w.len()
        )));
    }
    let (kept, aliased) = independent_columns(x, w);
    let k = kept.len();
    let mut xtx = DMatrix::<f64>::zeros(k, k);
    let mut xty = DVector::<f64>::zeros(k);
    for i in 0..n {
        if w[i] == 0.0 {
            continue;
        }
        for (a, &ja) in kept.iter().enumerate() {
            let xa = w[i] * x[(i, ja)];
            if xa == 0.0 {
                continue;
            }
            xty[a] += xa * y[i];
            for (b, &jb) in kept.iter().enumerate().skip(a) {
                xtx[(a, b)] += xa * x[(i, jb)];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            xtx[(a, b)] = xtx[(b, a)];
        }
    }
    let coef = solve(xtx, xty)?;
    Ok(WlsFit {
        coef: coef.iter().copied().collect(),
        kept,
        aliased,
    })
}

/// Solve a square system by LU with partial pivoting, failing on numerical singularity.
pub fn solve(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>> {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(libm::fabs(*v)));
    let lu = a.lu();
    check_pivots(lu.u().diagonal().iter().copied(), scale)?;
    lu.solve(&b)
        .ok_or_else(|| Error::SingularSystem("linear system is singular".into()))
}

/// Solve `a^T u = b`.
pub fn solve_transpose(a: &DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>> {
    solve(a.transpose(), b)
}

fn check_pivots(pivots: impl Iterator<Item = f64>, scale: f64) -> Result<()> {
    let tol = scale * 1e-13;
    for (k, p) in pivots.enumerate() {
        if !(libm::fabs(p) > tol) {
            return Err(Error::SingularSystem(format!("zero pivot at position {k}")));
        }
    }
    Ok(())
}

/// Symmetric positive-semidefinite projection: negative eigenvalues set to zero.
/// Returns the projected matrix, a factor `L` with `L L^T` equal to it, and
/// whether any eigenvalue was clipped.
pub fn psd_factor(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>, bool) {
    let n = a.nrows();
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut clipped = false;
    let scale = eig
        .eigenvalues
        .iter()
        .fold(0.0f64, |m, v| m.max(libm::fabs(*v)));
    let root: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&v| {
            if v < 0.0 {
                if v < -1e-12 * scale {
                    clipped = true;
                }
                0.0
            } else {
                libm::sqrt(v)
            }
        })
        .collect();
    let mut factor = eig.eigenvectors.clone();
    for j in 0..n {
        for i in 0..n {
            factor[(i, j)] *= root[j];
        }
    }
    let projected = &factor * factor.transpose();
    (projected, factor, clipped)
}
