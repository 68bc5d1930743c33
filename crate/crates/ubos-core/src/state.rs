//! Dense statevector over n qubits and the two-qubit gate kernel.
//!
//! Amplitude indices are read as bitstrings |q0 q1 … q(n-1)⟩ with qubit 0 in
//! the most significant position, so `kron(op_q0, op_q1, …)` over qubit order
//! acts directly on the amplitude array.

use nalgebra::Matrix4;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense state of `n_qubits` qubits: 2^n complex amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// The computational basis state |0…0⟩.
    pub fn zero_state(n_qubits: usize) -> Self {
        assert!(n_qubits >= 1, "state needs at least one qubit");
        let mut amps = vec![Complex64::ZERO; 1 << n_qubits];
        amps[0] = Complex64::ONE;
        Self { n_qubits, amps }
    }

    /// Basis state |index⟩.
    pub fn basis_state(n_qubits: usize, index: usize) -> Self {
        let mut amps = vec![Complex64::ZERO; 1 << n_qubits];
        amps[index] = Complex64::ONE;
        Self { n_qubits, amps }
    }

    /// Build from raw amplitudes; the length must be a power of two.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let len = amps.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::Invalid(format!(
                "amplitude count {len} is not a power of two >= 2"
            )));
        }
        Ok(Self {
            n_qubits: len.trailing_zeros() as usize,
            amps,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    /// Bit position of `qubit` inside an amplitude index.
    #[inline]
    pub fn bit(&self, qubit: usize) -> usize {
        self.n_qubits - 1 - qubit
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        assert!(n > 0.0, "cannot normalize the zero vector");
        let inv = Complex64::new(1.0 / n, 0.0);
        Self {
            n_qubits: self.n_qubits,
            amps: self.amps.iter().map(|a| a * inv).collect(),
        }
    }

    /// Componentwise `self + c · other`.
    pub fn add_scaled(&self, c: Complex64, other: &Self) -> Result<Self> {
        check_dims("add_scaled", self, other)?;
        let amps = self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a + c * b)
            .collect();
        Ok(Self {
            n_qubits: self.n_qubits,
            amps,
        })
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self {
            n_qubits: self.n_qubits,
            amps: self.amps.iter().map(|a| a * c).collect(),
        }
    }

    /// Apply a 4×4 matrix to the ordered qubit pair `(a, b)` in place.
    ///
    /// Row/column index of the matrix is `2·(bit of a) + (bit of b)`. The
    /// matrix does not have to be unitary; derivative states substitute
    /// non-unitary basis operators through the same kernel.
    pub fn apply_two_qubit(&mut self, m: &Matrix4<Complex64>, qubits: (usize, usize)) -> Result<()> {
        let (qa, qb) = qubits;
        if qa == qb {
            return Err(Error::Invalid(format!("gate qubits must differ, got ({qa}, {qb})")));
        }
        for q in [qa, qb] {
            if q >= self.n_qubits {
                return Err(Error::QubitOutOfRange {
                    qubit: q,
                    n_qubits: self.n_qubits,
                });
            }
        }
        let pa = self.bit(qa);
        let pb = self.bit(qb);
        let (hi, lo) = if pa > pb { (pa, pb) } else { (pb, pa) };
        let sa = 1usize << pa;
        let sb = 1usize << pb;

        let lo_mask = (1usize << lo) - 1;
        let mid_mask = ((1usize << (hi - 1)) - 1) & !lo_mask;

        let quads = self.amps.len() >> 2;
        for k in 0..quads {
            // Spread k over the index bits that are not pa/pb.
            let base = (k & lo_mask) | ((k & mid_mask) << 1) | ((k >> (hi - 1)) << (hi + 1));
            let i00 = base;
            let i01 = base | sb;
            let i10 = base | sa;
            let i11 = base | sa | sb;
            let a0 = self.amps[i00];
            let a1 = self.amps[i01];
            let a2 = self.amps[i10];
            let a3 = self.amps[i11];
            self.amps[i00] = m[(0, 0)] * a0 + m[(0, 1)] * a1 + m[(0, 2)] * a2 + m[(0, 3)] * a3;
            self.amps[i01] = m[(1, 0)] * a0 + m[(1, 1)] * a1 + m[(1, 2)] * a2 + m[(1, 3)] * a3;
            self.amps[i10] = m[(2, 0)] * a0 + m[(2, 1)] * a1 + m[(2, 2)] * a2 + m[(2, 3)] * a3;
            self.amps[i11] = m[(3, 0)] * a0 + m[(3, 1)] * a1 + m[(3, 2)] * a2 + m[(3, 3)] * a3;
        }
        Ok(())
    }

    /// Apply a 2×2 matrix to a single qubit in place.
    pub fn apply_one_qubit(
        &mut self,
        m: &nalgebra::Matrix2<Complex64>,
        qubit: usize,
    ) -> Result<()> {
        if qubit >= self.n_qubits {
            return Err(Error::QubitOutOfRange {
                qubit,
                n_qubits: self.n_qubits,
            });
        }
        let p = self.bit(qubit);
        let s = 1usize << p;
        let lo_mask = s - 1;
        let halves = self.amps.len() >> 1;
        for k in 0..halves {
            let base = (k & lo_mask) | ((k & !lo_mask) << 1);
            let i0 = base;
            let i1 = base | s;
            let a0 = self.amps[i0];
            let a1 = self.amps[i1];
            self.amps[i0] = m[(0, 0)] * a0 + m[(0, 1)] * a1;
            self.amps[i1] = m[(1, 0)] * a0 + m[(1, 1)] * a1;
        }
        Ok(())
    }
}

fn check_dims(context: &'static str, a: &StateVector, b: &StateVector) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            context,
            left: a.dim(),
            right: b.dim(),
        });
    }
    Ok(())
}

/// Inner product ⟨a|b⟩.
pub fn inner(a: &StateVector, b: &StateVector) -> Result<Complex64> {
    check_dims("inner product", a, b)?;
    Ok(a.amps
        .iter()
        .zip(&b.amps)
        .map(|(x, y)| x.conj() * y)
        .sum())
}

/// Fidelity |⟨a|b⟩|² between two normalized states.
pub fn fidelity(a: &StateVector, b: &StateVector) -> Result<f64> {
    Ok(inner(a, b)?.norm_sqr())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense;
    use nalgebra::Matrix4;
    use proptest::prelude::*;
    use rand::Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_state(n: usize, rng: &mut impl Rng) -> StateVector {
        let amps: Vec<Complex64> = (0..1usize << n)
            .map(|_| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect();
        StateVector::from_amplitudes(amps).unwrap().normalized()
    }

    fn random_matrix4(rng: &mut impl Rng) -> Matrix4<Complex64> {
        Matrix4::from_fn(|_, _| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
    }

    #[test]
    fn identity_leaves_state_unchanged() {
        let mut rng = crate::rng::stream(1, &[]);
        let psi = random_state(3, &mut rng);
        let mut out = psi.clone();
        out.apply_two_qubit(&Matrix4::identity(), (0, 2)).unwrap();
        for (a, b) in psi.amplitudes().iter().zip(out.amplitudes()) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn xx_flips_both_qubits() {
        // X⊗X on (0,1) of |00⟩ is |11⟩.
        let x = nalgebra::Matrix2::new(
            Complex64::ZERO,
            Complex64::ONE,
            Complex64::ONE,
            Complex64::ZERO,
        );
        let xx = x.kronecker(&x);
        let mut psi = StateVector::zero_state(2);
        psi.apply_two_qubit(&xx, (0, 1)).unwrap();
        assert!((psi.amplitudes()[3] - Complex64::ONE).norm() < 1e-15);
        assert!(psi.amplitudes()[..3].iter().all(|a| a.norm() < 1e-15));
    }

    #[test]
    fn agrees_with_dense_embedding() {
        let mut rng = crate::rng::stream(2, &[]);
        for _ in 0..50 {
            let n = rng.gen_range(2..=4usize);
            let qa = rng.gen_range(0..n);
            let mut qb = rng.gen_range(0..n);
            while qb == qa {
                qb = rng.gen_range(0..n);
            }
            let m = random_matrix4(&mut rng);
            let psi = random_state(n, &mut rng);

            let mut fast = psi.clone();
            fast.apply_two_qubit(&m, (qa, qb)).unwrap();

            let full = dense::embed_two_qubit(&m, (qa, qb), n);
            let slow = dense::apply_matrix(&full, &psi);
            for (a, b) in fast.amplitudes().iter().zip(slow.amplitudes()) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn one_qubit_kernel_agrees_with_two_qubit() {
        let mut rng = crate::rng::stream(9, &[]);
        let m2 = nalgebra::Matrix2::from_fn(|_, _| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        let psi = random_state(3, &mut rng);
        for q in 0..3 {
            let mut a = psi.clone();
            a.apply_one_qubit(&m2, q).unwrap();
            let other = (q + 1) % 3;
            let mut b = psi.clone();
            b.apply_two_qubit(&m2.kronecker(&nalgebra::Matrix2::identity()), (q, other))
                .unwrap();
            for (x, y) in a.amplitudes().iter().zip(b.amplitudes()) {
                assert!((x - y).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn fidelity_examples() {
        let zero = StateVector::zero_state(1);
        let one = StateVector::basis_state(1, 1);
        let plus = StateVector::from_amplitudes(vec![
            c(std::f64::consts::FRAC_1_SQRT_2, 0.0),
            c(std::f64::consts::FRAC_1_SQRT_2, 0.0),
        ])
        .unwrap();
        assert!((fidelity(&zero, &zero).unwrap() - 1.0).abs() < 1e-15);
        assert!(fidelity(&zero, &one).unwrap() < 1e-15);
        assert!((fidelity(&zero, &plus).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut psi = StateVector::zero_state(2);
        assert!(psi.apply_two_qubit(&Matrix4::identity(), (0, 0)).is_err());
        assert!(psi.apply_two_qubit(&Matrix4::identity(), (0, 5)).is_err());
        let phi = StateVector::zero_state(3);
        assert!(inner(&psi, &phi).is_err());
        assert!(StateVector::from_amplitudes(vec![Complex64::ONE; 3]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn unitary_preserves_norm(seed in 0u64..1000) {
            let mut rng = crate::rng::stream(seed, &[7]);
            let n = rng.gen_range(2..=5usize);
            let psi = random_state(n, &mut rng);
            let u = dense::random_unitary4(&mut rng);
            let qa = rng.gen_range(0..n);
            let qb = (qa + 1 + rng.gen_range(0..n - 1)) % n;
            let mut out = psi.clone();
            out.apply_two_qubit(&u, (qa, qb)).unwrap();
            prop_assert!((out.norm() - 1.0).abs() < 1e-12);
        }
    }
}
