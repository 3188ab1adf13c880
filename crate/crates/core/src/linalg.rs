//! Thin wrappers over faer for the dense complex algebra used everywhere else.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Mat, MatRef, Side};

use crate::error::{Error, Result};

pub type C64 = faer::c64;
pub type CMat = Mat<C64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Pivot ratio below which an LU factorisation is treated as singular.
const SINGULAR_PIVOT_RATIO: f64 = 1e-14;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> CMat {
    Mat::from_fn(n, n, |i, j| if i == j { ONE } else { ZERO })
}

pub fn zeros(rows: usize, cols: usize) -> CMat {
    Mat::zeros(rows, cols)
}

pub fn diag_real(values: &[f64]) -> CMat {
    let n = values.len();
    Mat::from_fn(n, n, |i, j| if i == j { c(values[i], 0.0) } else { ZERO })
}

pub fn frobenius(a: MatRef<'_, C64>) -> f64 {
    let mut acc = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            acc += a[(i, j)].norm_sqr();
        }
    }
    acc.sqrt()
}

/// ‖a − b‖_F / ‖b‖_F, falling back to the absolute difference when b vanishes.
pub fn rel_diff(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> f64 {
    let diff = frobenius((a.to_owned() - b).as_ref());
    let scale = frobenius(b);
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// ‖a − a†‖_F relative to ‖a‖_F (zero for the zero matrix).
pub fn hermitian_residual(a: MatRef<'_, C64>) -> f64 {
    let scale = frobenius(a);
    if scale == 0.0 {
        return 0.0;
    }
    frobenius((a.to_owned() - a.adjoint()).as_ref()) / scale
}

fn checked_lu(a: MatRef<'_, C64>, context: &str) -> Result<faer::linalg::solvers::PartialPivLu<C64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::singular(format!("{context} (non-square)")));
    }
    let lu = a.partial_piv_lu();
    let u = lu.U();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0_f64;
    for i in 0..u.nrows() {
        let p = u[(i, i)].norm();
        if !p.is_finite() {
            return Err(Error::singular(context));
        }
        lo = lo.min(p);
        hi = hi.max(p);
    }
    if u.nrows() > 0 && (hi == 0.0 || lo <= SINGULAR_PIVOT_RATIO * hi) {
        return Err(Error::singular(context));
    }
    Ok(lu)
}

pub fn inverse(a: MatRef<'_, C64>, context: &str) -> Result<CMat> {
    Ok(checked_lu(a, context)?.inverse())
}

/// Solves `a x = b`.
pub fn solve(a: MatRef<'_, C64>, b: MatRef<'_, C64>, context: &str) -> Result<CMat> {
    let lu = checked_lu(a, context)?;
    let mut x = b.to_owned();
    lu.solve_in_place(x.as_mut());
    Ok(x)
}

pub struct Svd {
    pub u: CMat,
    pub s: Vec<f64>,
    pub v: CMat,
}

/// Full SVD `a = u · diag(s) · v†`, singular values descending.
pub fn svd(a: MatRef<'_, C64>) -> Result<Svd> {
    let dec = a.svd().map_err(|_| Error::Svd)?;
    let s = dec.S().column_vector().iter().map(|x| x.re).collect();
    Ok(Svd {
        u: dec.U().to_owned(),
        s,
        v: dec.V().to_owned(),
    })
}

pub fn singular_values(a: MatRef<'_, C64>) -> Result<Vec<f64>> {
    a.singular_values().map_err(|_| Error::Svd)
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
pub fn eigh(a: MatRef<'_, C64>) -> Result<(Vec<f64>, CMat)> {
    let dec = a.self_adjoint_eigen(Side::Lower).map_err(|_| Error::Eigen)?;
    let vals = dec.S().column_vector().iter().map(|x| x.re).collect();
    Ok((vals, dec.U().to_owned()))
}

pub fn eigenvalues(a: MatRef<'_, C64>) -> Result<Vec<C64>> {
    a.eigenvalues().map_err(|_| Error::Eigen)
}

/// Conjugate (not transpose) of every entry.
pub fn conj(a: MatRef<'_, C64>) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)].conj())
}

/// Frobenius inner product ⟨a, b⟩ = Σ conj(a) b.
pub fn inner(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> C64 {
    let mut acc = ZERO;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            acc += a[(i, j)].conj() * b[(i, j)];
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_of_diagonal() {
        let a = diag_real(&[2.0, 4.0, -0.5]);
        let inv = inverse(a.as_ref(), "test").unwrap();
        assert!(rel_diff(inv.as_ref(), diag_real(&[0.5, 0.25, -2.0]).as_ref()) < 1e-15);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let a = Mat::from_fn(2, 2, |_, _| ONE);
        assert!(matches!(inverse(a.as_ref(), "ones"), Err(Error::Singular { .. })));
    }

    #[test]
    fn svd_reconstructs() {
        let a = Mat::from_fn(4, 3, |i, j| c((i * 3 + j) as f64, (i as f64) - (j as f64) * 0.5));
        let d = svd(a.as_ref()).unwrap();
        let s = Mat::from_fn(4, 3, |i, j| if i == j { c(d.s[i], 0.0) } else { ZERO });
        let back = &d.u * &s * d.v.adjoint();
        assert!(rel_diff(back.as_ref(), a.as_ref()) < 1e-13);
        assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
    }
}
