//! Small dense linear-algebra helpers shared by the state and tomography code.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Symplectic form `[[0, I], [-I, 0]]` in xxpp ordering.
pub fn symplectic_form(modes: usize) -> DMatrix<f64> {
    let n = 2 * modes;
    let mut j = DMatrix::zeros(n, n);
    for i in 0..modes {
        j[(i, modes + i)] = 1.0;
        j[(modes + i, i)] = -1.0;
    }
    j
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Smallest eigenvalue of the Hermitian matrix `V + iJ`.
pub fn min_eig_with_form(v: &DMatrix<f64>, j: &DMatrix<f64>) -> f64 {
    let h = DMatrix::from_fn(v.nrows(), v.ncols(), |r, c| Complex64::new(v[(r, c)], j[(r, c)]));
    h.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn min_symmetric_eig(v: &DMatrix<f64>) -> f64 {
    v.clone().symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push(m[(r, c)]);
        }
    }
    out
}

pub fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, data)
}

/// Side length of a square matrix stored row-major, if `len` is a perfect square.
pub fn square_side(len: usize) -> Option<usize> {
    let side = (len as f64).sqrt().round() as usize;
    (side * side == len).then_some(side)
}

pub fn quadratic_form(m: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(m * x))
}

/// Complex matrix product computed with real kernels, `(a_re + i a_im)(b_re + i b_im)`.
pub fn complex_mul(
    a_re: &DMatrix<f64>,
    a_im: &DMatrix<f64>,
    b_re: &DMatrix<f64>,
    b_im: &DMatrix<f64>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let re = a_re * b_re - a_im * b_im;
    let im = a_re * b_im + a_im * b_re;
    (re, im)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symplectic_form_is_antisymmetric_and_squares_to_minus_identity() {
        let j = symplectic_form(3);
        assert_eq!(&j + j.transpose(), DMatrix::zeros(6, 6));
        assert_eq!(&j * &j, -DMatrix::<f64>::identity(6, 6));
    }

    #[test]
    fn vacuum_saturates_uncertainty() {
        let v = DMatrix::<f64>::identity(2, 2);
        let lam = min_eig_with_form(&v, &symplectic_form(1));
        assert!(lam.abs() < 1e-12);
    }

    #[test]
    fn complex_product_matches_native() {
        let a = DMatrix::from_fn(3, 3, |r, c| Complex64::new(r as f64 + 0.5, c as f64 - 1.0));
        let b = DMatrix::from_fn(3, 3, |r, c| Complex64::new((r * c) as f64, 1.0 - r as f64));
        let want = &a * &b;
        let (re, im) = complex_mul(&a.map(|z| z.re), &a.map(|z| z.im), &b.map(|z| z.re), &b.map(|z| z.im));
        for r in 0..3 {
            for c in 0..3 {
                assert!((want[(r, c)].re - re[(r, c)]).abs() < 1e-12);
                assert!((want[(r, c)].im - im[(r, c)]).abs() < 1e-12);
            }
        }
    }
}
