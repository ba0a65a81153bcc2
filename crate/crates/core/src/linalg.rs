//! Thin helpers over nalgebra's symmetric/Hermitian eigensolver.

use nalgebra::{ComplexField, DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance for accepting a matrix as symmetric/Hermitian.
pub const SYMMETRY_TOL: f64 = 1e-8;

fn max_abs<T: ComplexField<RealField = f64>>(a: &DMatrix<T>) -> f64 {
    a.iter().map(|x| x.clone().modulus()).fold(0.0, f64::max)
}

/// Returns (A + Aᴴ)/2 after checking that A is square and Hermitian within
/// tolerance.
pub fn hermitian_part<T: ComplexField<RealField = f64>>(
    a: &DMatrix<T>,
    name: &str,
) -> Result<DMatrix<T>> {
    if a.nrows() != a.ncols() {
        return Err(Error::invalid(format!(
            "{name} must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|x| !x.clone().modulus().is_finite()) {
        return Err(Error::invalid(format!("{name} has non-finite entries")));
    }
    let adj = a.adjoint();
    let skew = max_abs(&(a - &adj));
    if skew > SYMMETRY_TOL * (1.0 + max_abs(a)) {
        return Err(Error::invalid(format!(
            "{name} is not symmetric/Hermitian (max asymmetry {skew:.3e})"
        )));
    }
    Ok((a + adj).scale(0.5))
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted in
/// descending order; column j of the returned matrix pairs with value j.
pub fn eigh_desc<T: ComplexField<RealField = f64>>(a: &DMatrix<T>) -> (Vec<f64>, DMatrix<T>) {
    let n = a.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let eig = a.clone().symmetric_eigen();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, idx[c])].clone());
    (values, vectors)
}

/// Factor a PSD matrix as Σ = B·Bᴴ with B of full column rank r.
///
/// Eigenvalues at or below `tol·λ_max` are clipped to zero; a clearly
/// negative eigenvalue is rejected.
pub fn factor_psd<T: ComplexField<RealField = f64>>(
    sigma: &DMatrix<T>,
    tol: f64,
    name: &str,
) -> Result<(DMatrix<T>, usize)> {
    let s = hermitian_part(sigma, name)?;
    let (vals, vecs) = eigh_desc(&s);
    let n = s.nrows();
    let top = vals.first().copied().unwrap_or(0.0).max(0.0);
    let scale = max_abs(&s);
    if let Some(&low) = vals.last() {
        if low < -SYMMETRY_TOL * (1.0 + scale) {
            return Err(Error::invalid(format!(
                "{name} is not positive semidefinite (eigenvalue {low:.3e})"
            )));
        }
    }
    let r = vals.iter().filter(|&&v| v > tol * top && v > 0.0).count();
    let b = DMatrix::from_fn(n, r, |i, j| {
        vecs[(i, j)].clone() * T::from_real(vals[j].sqrt())
    });
    Ok((b, r))
}

/// Symmetric square root of a PSD matrix together with its eigen-data.
pub fn sqrt_psd(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let (vals, vecs) = eigh_desc(sigma);
    let d = DVector::from_iterator(vals.len(), vals.iter().map(|v| v.max(0.0).sqrt()));
    &vecs * DMatrix::from_diagonal(&d) * vecs.transpose()
}

/// Frobenius-norm helper for real matrices.
pub fn norm_max(a: &DMatrix<f64>) -> f64 {
    max_abs(a)
}
