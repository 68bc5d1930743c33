//! Dense-matrix utilities.
//!
//! These build full 2^n × 2^n operators entry by entry, independently of the
//! masked statevector kernels, so they double as brute-force reference
//! implementations in tests. Everything here is meant for small n.

use nalgebra::{DMatrix, Matrix2, Matrix4};
use num_complex::Complex64;
use rand::Rng;

use crate::state::StateVector;

/// Embed a 4×4 operator acting on the ordered qubit pair `(a, b)` into the
/// full 2^n-dimensional space.
pub fn embed_two_qubit(m: &Matrix4<Complex64>, qubits: (usize, usize), n: usize) -> DMatrix<Complex64> {
    let dim = 1usize << n;
    let pa = n - 1 - qubits.0;
    let pb = n - 1 - qubits.1;
    let rest_mask = !((1usize << pa) | (1usize << pb)) & (dim - 1);
    DMatrix::from_fn(dim, dim, |i, j| {
        if i & rest_mask != j & rest_mask {
            return Complex64::ZERO;
        }
        let ri = 2 * ((i >> pa) & 1) + ((i >> pb) & 1);
        let rj = 2 * ((j >> pa) & 1) + ((j >> pb) & 1);
        m[(ri, rj)]
    })
}

/// Kronecker product over single-qubit factors in qubit order 0..n-1.
pub fn kron_qubits(factors: &[Matrix2<Complex64>]) -> DMatrix<Complex64> {
    let mut out = DMatrix::identity(1, 1);
    for f in factors {
        let fd = DMatrix::from_fn(2, 2, |i, j| f[(i, j)]);
        out = out.kronecker(&fd);
    }
    out
}

/// Matrix–vector product against a statevector.
pub fn apply_matrix(m: &DMatrix<Complex64>, psi: &StateVector) -> StateVector {
    assert_eq!(m.ncols(), psi.dim(), "matrix/state dimension mismatch");
    let amps = (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                .map(|j| m[(i, j)] * psi.amplitudes()[j])
                .sum()
        })
        .collect();
    StateVector::from_amplitudes(amps).expect("dimension is a power of two")
}

/// Haar-ish random 4×4 unitary from Gram–Schmidt on a random complex matrix.
pub fn random_unitary4(rng: &mut impl Rng) -> Matrix4<Complex64> {
    loop {
        let raw = Matrix4::from_fn(|_, _| {
            Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        if let Some(u) = gram_schmidt4(&raw) {
            return u;
        }
    }
}

fn gram_schmidt4(m: &Matrix4<Complex64>) -> Option<Matrix4<Complex64>> {
    let mut cols: Vec<nalgebra::Vector4<Complex64>> = (0..4).map(|j| m.column(j).into()).collect();
    for j in 0..4 {
        for k in 0..j {
            let proj: Complex64 = cols[k].iter().zip(cols[j].iter()).map(|(a, b)| a.conj() * b).sum();
            let prev = cols[k];
            cols[j] -= prev * proj;
        }
        let norm = cols[j].iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-8 {
            return None;
        }
        cols[j] /= Complex64::new(norm, 0.0);
    }
    Some(Matrix4::from_columns(&cols))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_unitary_is_unitary() {
        let mut rng = crate::rng::stream(3, &[]);
        for _ in 0..20 {
            let u = random_unitary4(&mut rng);
            let prod = u.adjoint() * u;
            let dev = (prod - Matrix4::identity())
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            assert!(dev < 1e-12, "deviation {dev}");
        }
    }

    #[test]
    fn embed_on_pair_matches_kron_for_adjacent_pair() {
        let mut rng = crate::rng::stream(4, &[]);
        let a = Matrix2::from_fn(|_, _| Complex64::new(rng.gen::<f64>(), rng.gen::<f64>()));
        let b = Matrix2::from_fn(|_, _| Complex64::new(rng.gen::<f64>(), rng.gen::<f64>()));
        let m = a.kronecker(&b);
        // On qubits (0,1) of a 2-qubit system the embedding is the matrix itself.
        let full = embed_two_qubit(&m, (0, 1), 2);
        for i in 0..4 {
            for j in 0..4 {
                assert!((full[(i, j)] - m[(i, j)]).norm() < 1e-15);
            }
        }
        // Reversed pair transposes the roles of the qubits: equals kron(b, a).
        let swapped = embed_two_qubit(&m, (1, 0), 2);
        let ba = b.kronecker(&a);
        for i in 0..4 {
            for j in 0..4 {
                assert!((swapped[(i, j)] - ba[(i, j)]).norm() < 1e-15);
            }
        }
    }
}
