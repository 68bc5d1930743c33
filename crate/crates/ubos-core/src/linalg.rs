//! Small linear-algebra helpers for Hermitian matrices.
//!
//! Complex Hermitian eigenproblems are solved through the real symmetric
//! embedding [[A, -B], [B, A]] of H = A + iB, which doubles every eigenvalue
//! and lets nalgebra's real `SymmetricEigen` do the work.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest elementwise deviation from Hermiticity, max |H[i][j] - conj(H[j][i])|.
pub fn hermitian_deviation(h: &DMatrix<Complex64>) -> f64 {
    let n = h.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((h[(i, j)] - h[(j, i)].conj()).norm());
        }
    }
    dev
}

/// Check Hermiticity against an absolute tolerance scaled by the matrix norm.
pub fn require_hermitian(h: &DMatrix<Complex64>, rel_tol: f64) -> Result<()> {
    let scale = h.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    let dev = hermitian_deviation(h);
    if dev > rel_tol * scale {
        return Err(Error::NotHermitian { deviation: dev });
    }
    Ok(())
}

fn real_embedding(h: &DMatrix<Complex64>) -> DMatrix<f64> {
    let k = h.nrows();
    DMatrix::from_fn(2 * k, 2 * k, |i, j| {
        let (bi, ii) = (i / k, i % k);
        let (bj, jj) = (j / k, j % k);
        let z = h[(ii, jj)];
        match (bi, bj) {
            (0, 0) | (1, 1) => z.re,
            (0, 1) => -z.im,
            _ => z.im,
        }
    })
}

/// Full eigendecomposition of a Hermitian matrix.
///
/// Returns eigenvalues in ascending order and a matrix whose columns are the
/// corresponding orthonormal eigenvectors.
pub fn hermitian_eigen(h: &DMatrix<Complex64>) -> (Vec<f64>, DMatrix<Complex64>) {
    let k = h.nrows();
    assert_eq!(k, h.ncols(), "matrix must be square");
    debug_assert!(hermitian_deviation(h) <= 1e-8 * (1.0 + h.norm()));

    let eig = nalgebra::SymmetricEigen::new(real_embedding(h));
    let mut order: Vec<usize> = (0..2 * k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    // Each eigenvalue of H appears twice in the embedding; collect k complex
    // eigenvectors, discarding duplicates inside (near-)degenerate clusters.
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v.abs())).max(1.0);
    let cluster_tol = 1e-7 * scale;
    let mut values: Vec<f64> = Vec::with_capacity(k);
    let mut vectors: Vec<DVector<Complex64>> = Vec::with_capacity(k);

    for &idx in &order {
        if values.len() == k {
            break;
        }
        let lambda = eig.eigenvalues[idx];
        let col = eig.eigenvectors.column(idx);
        let mut z = DVector::from_fn(k, |i, _| Complex64::new(col[i], col[k + i]));
        for (v, &lv) in vectors.iter().zip(values.iter()) {
            if (lambda - lv).abs() <= cluster_tol {
                let proj: Complex64 = v.iter().zip(z.iter()).map(|(a, b)| a.conj() * b).sum();
                z -= v * proj;
            }
        }
        let norm = z.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-6 {
            z /= Complex64::new(norm, 0.0);
            values.push(lambda);
            vectors.push(z);
        }
    }
    assert_eq!(values.len(), k, "failed to extract a full eigenbasis");

    let mut vecmat = DMatrix::zeros(k, k);
    for (j, v) in vectors.iter().enumerate() {
        vecmat.set_column(j, v);
    }
    (values, vecmat)
}

/// Smallest eigenvalue and an associated eigenvector of a Hermitian matrix.
pub fn hermitian_smallest(h: &DMatrix<Complex64>) -> (f64, DVector<Complex64>) {
    let (values, vectors) = hermitian_eigen(h);
    (values[0], vectors.column(0).into())
}

/// Numerical rank of a real matrix: singular values above `rel_tol` times the
/// largest singular value.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let svd = m.clone().svd(false, false);
    let max = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    if max == 0.0 {
        return 0;
    }
    svd.singular_values.iter().filter(|&&s| s > rel_tol * max).count()
}

/// Minimum-norm least-squares solution of `A x = b` for a real system.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>, rel_tol: f64) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    svd.solve(b, rel_tol * svd.singular_values.max()).expect("svd solve")
}
