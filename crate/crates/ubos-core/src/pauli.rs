//! Pauli strings, operator sums, the XXZ chain and an exact ground-state solver.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::state::{inner, StateVector};

/// Single-qubit Pauli operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn from_index(idx: usize) -> Pauli {
        Pauli::ALL[idx]
    }

    pub fn index(self) -> usize {
        match self {
            Pauli::I => 0,
            Pauli::X => 1,
            Pauli::Y => 2,
            Pauli::Z => 3,
        }
    }

    pub fn to_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    pub fn from_char(c: char) -> Result<Pauli> {
        match c {
            'I' => Ok(Pauli::I),
            'X' => Ok(Pauli::X),
            'Y' => Ok(Pauli::Y),
            'Z' => Ok(Pauli::Z),
            other => Err(Error::Parse(format!("unknown Pauli symbol '{other}'"))),
        }
    }

    pub fn matrix(self) -> Matrix2<Complex64> {
        let o = Complex64::ZERO;
        let l = Complex64::ONE;
        let i = Complex64::I;
        match self {
            Pauli::I => Matrix2::new(l, o, o, l),
            Pauli::X => Matrix2::new(o, l, l, o),
            Pauli::Y => Matrix2::new(o, -i, i, o),
            Pauli::Z => Matrix2::new(l, o, o, -l),
        }
    }
}

/// Product of two single-qubit Paulis: a·b = phase · result.
pub fn pauli_product_single(a: Pauli, b: Pauli) -> (Complex64, Pauli) {
    use Pauli::*;
    let one = Complex64::ONE;
    let i = Complex64::I;
    match (a, b) {
        (I, p) => (one, p),
        (p, I) => (one, p),
        (X, X) | (Y, Y) | (Z, Z) => (one, I),
        (X, Y) => (i, Z),
        (Y, X) => (-i, Z),
        (Y, Z) => (i, X),
        (Z, Y) => (-i, X),
        (Z, X) => (i, Y),
        (X, Z) => (-i, Y),
    }
}

/// Tensor product of single-qubit Paulis over all qubits.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PauliString {
    ops: Vec<Pauli>,
}

impl PauliString {
    pub fn new(ops: Vec<Pauli>) -> Self {
        assert!(!ops.is_empty(), "a Pauli string needs at least one qubit");
        Self { ops }
    }

    pub fn identity(n_qubits: usize) -> Self {
        Self::new(vec![Pauli::I; n_qubits])
    }

    /// Identity everywhere except `pauli` on `qubit`.
    pub fn single(n_qubits: usize, qubit: usize, pauli: Pauli) -> Self {
        let mut ops = vec![Pauli::I; n_qubits];
        ops[qubit] = pauli;
        Self::new(ops)
    }

    /// Identity everywhere except the given (qubit, Pauli) assignments.
    pub fn with_ops(n_qubits: usize, assignments: &[(usize, Pauli)]) -> Self {
        let mut ops = vec![Pauli::I; n_qubits];
        for &(q, p) in assignments {
            ops[q] = p;
        }
        Self::new(ops)
    }

    pub fn n_qubits(&self) -> usize {
        self.ops.len()
    }

    pub fn ops(&self) -> &[Pauli] {
        &self.ops
    }

    pub fn op(&self, qubit: usize) -> Pauli {
        self.ops[qubit]
    }

    pub fn is_identity(&self) -> bool {
        self.ops.iter().all(|&p| p == Pauli::I)
    }

    /// Dense 2^n × 2^n matrix via Kronecker products (reference path).
    pub fn matrix(&self) -> DMatrix<Complex64> {
        let factors: Vec<Matrix2<Complex64>> = self.ops.iter().map(|p| p.matrix()).collect();
        crate::dense::kron_qubits(&factors)
    }

    /// Apply the string to a state: P|ψ⟩.
    ///
    /// A Pauli string permutes basis states with a phase, so this is a single
    /// O(2^n) pass.
    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        if self.n_qubits() != psi.n_qubits() {
            return Err(Error::DimensionMismatch {
                context: "Pauli string applied to state",
                left: self.n_qubits(),
                right: psi.n_qubits(),
            });
        }
        let masks = StringMasks::new(self, psi.n_qubits());
        let mut out = vec![Complex64::ZERO; psi.dim()];
        masks.accumulate(Complex64::ONE, psi.amplitudes(), &mut out);
        StateVector::from_amplitudes(out)
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.ops {
            write!(f, "{}", p.to_char())?;
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.is_empty() {
            return Err(Error::Parse("empty Pauli string".into()));
        }
        let ops = s.chars().map(Pauli::from_char).collect::<Result<Vec<_>>>()?;
        Ok(Self::new(ops))
    }
}

/// Precomputed bit masks for applying one Pauli string.
struct StringMasks {
    flip: usize,
    sign_mask: usize,
    base_phase: Complex64,
}

impl StringMasks {
    fn new(string: &PauliString, n_qubits: usize) -> Self {
        let mut flip = 0usize;
        let mut sign_mask = 0usize;
        let mut n_y = 0u32;
        for q in 0..n_qubits {
            let bit = 1usize << (n_qubits - 1 - q);
            match string.op(q) {
                Pauli::I => {}
                Pauli::X => flip |= bit,
                Pauli::Y => {
                    flip |= bit;
                    sign_mask |= bit;
                    n_y += 1;
                }
                Pauli::Z => sign_mask |= bit,
            }
        }
        const PHASES: [Complex64; 4] = [
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(0.0, -1.0),
        ];
        Self {
            flip,
            sign_mask,
            base_phase: PHASES[(n_y % 4) as usize],
        }
    }

    /// out[i ^ flip] += scale · phase(i) · amps[i]
    fn accumulate(&self, scale: Complex64, amps: &[Complex64], out: &mut [Complex64]) {
        let c = scale * self.base_phase;
        for (i, &a) in amps.iter().enumerate() {
            let signed = if ((i & self.sign_mask).count_ones() & 1) == 1 {
                -c
            } else {
                c
            };
            out[i ^ self.flip] += signed * a;
        }
    }
}

/// Matrix product of two Pauli strings: a·b = phase · result, |phase| = 1.
pub fn pauli_product(a: &PauliString, b: &PauliString) -> Result<(Complex64, PauliString)> {
    if a.n_qubits() != b.n_qubits() {
        return Err(Error::DimensionMismatch {
            context: "Pauli string product",
            left: a.n_qubits(),
            right: b.n_qubits(),
        });
    }
    let mut phase = Complex64::ONE;
    let mut ops = Vec::with_capacity(a.n_qubits());
    for (&pa, &pb) in a.ops.iter().zip(&b.ops) {
        let (ph, p) = pauli_product_single(pa, pb);
        phase *= ph;
        ops.push(p);
    }
    Ok((phase, PauliString::new(ops)))
}

/// One weighted term of an operator sum.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliTerm {
    pub coefficient: f64,
    pub string: PauliString,
}

/// Hermitian operator as a real-weighted sum of Pauli strings.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliSumOperator {
    n_qubits: usize,
    terms: Vec<PauliTerm>,
}

/// Chain boundary condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Open,
    Periodic,
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Boundary::Open => write!(f, "open"),
            Boundary::Periodic => write!(f, "periodic"),
        }
    }
}

impl FromStr for Boundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "open" => Ok(Boundary::Open),
            "periodic" => Ok(Boundary::Periodic),
            other => Err(Error::Parse(format!("unknown boundary '{other}'"))),
        }
    }
}

/// Number of qubits above which [`PauliSumOperator::ground_state`] refuses to run.
pub const GROUND_STATE_CAP: usize = 16;

impl PauliSumOperator {
    pub fn new(n_qubits: usize, terms: Vec<PauliTerm>) -> Result<Self> {
        if n_qubits == 0 {
            return Err(Error::Invalid("operator needs at least one qubit".into()));
        }
        for t in &terms {
            if t.string.n_qubits() != n_qubits {
                return Err(Error::DimensionMismatch {
                    context: "operator term width",
                    left: t.string.n_qubits(),
                    right: n_qubits,
                });
            }
            if !t.coefficient.is_finite() {
                return Err(Error::Invalid("non-finite coefficient".into()));
            }
        }
        Ok(Self { n_qubits, terms })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn terms(&self) -> &[PauliTerm] {
        &self.terms
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    /// Apply the operator: H|ψ⟩ (not normalized).
    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        if self.n_qubits != psi.n_qubits() {
            return Err(Error::DimensionMismatch {
                context: "operator applied to state",
                left: self.n_qubits,
                right: psi.n_qubits(),
            });
        }
        let mut out = vec![Complex64::ZERO; psi.dim()];
        for term in &self.terms {
            let masks = StringMasks::new(&term.string, self.n_qubits);
            masks.accumulate(
                Complex64::new(term.coefficient, 0.0),
                psi.amplitudes(),
                &mut out,
            );
        }
        StateVector::from_amplitudes(out)
    }

    /// Real energy ⟨ψ|H|ψ⟩ of a normalized state.
    pub fn energy(&self, psi: &StateVector) -> Result<f64> {
        Ok(transition_element(psi, self, psi)?.re)
    }

    /// Dense matrix (reference path, small n only).
    pub fn to_matrix(&self) -> DMatrix<Complex64> {
        let dim = 1usize << self.n_qubits;
        let mut out = DMatrix::zeros(dim, dim);
        for term in &self.terms {
            out += term.string.matrix().scale(term.coefficient);
        }
        out
    }

    /// Ground-state energy and eigenvector.
    ///
    /// Shift-and-power iteration on (λI - H) with λ = Σ|coefficients|; if the
    /// iteration stalls the operator is diagonalized densely for n ≤ 10.
    pub fn ground_state(&self) -> Result<(f64, StateVector)> {
        if self.n_qubits > GROUND_STATE_CAP {
            return Err(Error::GroundStateCap {
                n_qubits: self.n_qubits,
                cap: GROUND_STATE_CAP,
            });
        }
        if self.terms.is_empty() {
            return Err(Error::Invalid("operator has no terms".into()));
        }
        let shift: f64 = self.terms.iter().map(|t| t.coefficient.abs()).sum();
        let residual_tol = 1e-7 * (1.0 + shift);
        const MAX_ITERS: usize = 200_000;

        for attempt in 0..2u64 {
            let mut rng = crate::rng::stream(0x6702, &[self.n_qubits as u64, attempt]);
            let amps: Vec<Complex64> = (0..1usize << self.n_qubits)
                .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
                .collect();
            let mut v = StateVector::from_amplitudes(amps)?.normalized();
            let mut iter = 0usize;
            while iter < MAX_ITERS {
                for _ in 0..10 {
                    let hv = self.apply(&v)?;
                    // v <- normalize(shift·v - H v)
                    v = v
                        .scale(Complex64::new(shift, 0.0))
                        .add_scaled(Complex64::new(-1.0, 0.0), &hv)?
                        .normalized();
                    iter += 1;
                }
                let hv = self.apply(&v)?;
                let energy = inner(&v, &hv)?.re;
                let res = hv.add_scaled(Complex64::new(-energy, 0.0), &v)?.norm();
                if res < residual_tol {
                    return Ok((energy, v));
                }
            }
        }

        if self.n_qubits <= 10 {
            let (vals, vecs) = linalg::hermitian_eigen(&self.to_matrix());
            let ground = StateVector::from_amplitudes(vecs.column(0).iter().cloned().collect())?;
            return Ok((vals[0], ground));
        }
        Err(Error::NoConvergence(format!(
            "power iteration stalled after {MAX_ITERS} iterations on {} qubits",
            self.n_qubits
        )))
    }
}

impl fmt::Display for PauliSumOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.terms {
            writeln!(f, "{} {}", t.coefficient, t.string)?;
        }
        Ok(())
    }
}

impl FromStr for PauliSumOperator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut terms = Vec::new();
        let mut n_qubits = None;
        for (lineno, line) in s.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (coeff, string) = match (parts.next(), parts.next(), parts.next()) {
                (Some(c), Some(p), None) => (c, p),
                _ => {
                    return Err(Error::Parse(format!(
                        "line {}: expected '<coefficient> <string>'",
                        lineno + 1
                    )))
                }
            };
            let coefficient: f64 = coeff
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: bad coefficient: {e}", lineno + 1)))?;
            let string: PauliString = string.parse()?;
            if let Some(n) = n_qubits {
                if string.n_qubits() != n {
                    return Err(Error::Parse(format!(
                        "line {}: string width {} differs from {}",
                        lineno + 1,
                        string.n_qubits(),
                        n
                    )));
                }
            } else {
                n_qubits = Some(string.n_qubits());
            }
            terms.push(PauliTerm { coefficient, string });
        }
        let n_qubits = n_qubits.ok_or_else(|| Error::Parse("no terms".into()))?;
        PauliSumOperator::new(n_qubits, terms)
    }
}

/// 1D XXZ Heisenberg chain: Σ Zⱼ + Σ ZⱼZⱼ₊₁ + Σ (XⱼXⱼ₊₁ + YⱼYⱼ₊₁).
///
/// Field terms come first, then per bond one ZZ, one XX and one YY term, all
/// with coefficient 1. A periodic chain of n ≥ 3 sites closes the ring with
/// the (n-1, 0) bond; two periodic sites keep a single bond.
pub fn build_xxz(n_sites: usize, boundary: Boundary) -> Result<PauliSumOperator> {
    if n_sites == 0 {
        return Err(Error::Invalid("XXZ chain needs at least one site".into()));
    }
    let mut terms = Vec::new();
    for j in 0..n_sites {
        terms.push(PauliTerm {
            coefficient: 1.0,
            string: PauliString::single(n_sites, j, Pauli::Z),
        });
    }
    let bonds: Vec<(usize, usize)> = match boundary {
        Boundary::Open => (0..n_sites.saturating_sub(1)).map(|j| (j, j + 1)).collect(),
        Boundary::Periodic if n_sites >= 3 => (0..n_sites).map(|j| (j, (j + 1) % n_sites)).collect(),
        Boundary::Periodic => (0..n_sites.saturating_sub(1)).map(|j| (j, j + 1)).collect(),
    };
    for (a, b) in bonds {
        for p in [Pauli::Z, Pauli::X, Pauli::Y] {
            terms.push(PauliTerm {
                coefficient: 1.0,
                string: PauliString::with_ops(n_sites, &[(a, p), (b, p)]),
            });
        }
    }
    PauliSumOperator::new(n_sites, terms)
}

/// Exact transition element ⟨φ|H|ψ⟩.
pub fn transition_element(
    phi: &StateVector,
    op: &PauliSumOperator,
    psi: &StateVector,
) -> Result<Complex64> {
    inner(phi, &op.apply(psi)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_state(n: usize, rng: &mut impl Rng) -> StateVector {
        let amps: Vec<Complex64> = (0..1usize << n)
            .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect();
        StateVector::from_amplitudes(amps).unwrap().normalized()
    }

    fn all_strings(n: usize) -> Vec<PauliString> {
        let count = 4usize.pow(n as u32);
        (0..count)
            .map(|mut code| {
                let mut ops = Vec::with_capacity(n);
                for _ in 0..n {
                    ops.push(Pauli::from_index(code % 4));
                    code /= 4;
                }
                PauliString::new(ops)
            })
            .collect()
    }

    #[test]
    fn product_table_examples() {
        let x: PauliString = "X".parse().unwrap();
        let y: PauliString = "Y".parse().unwrap();
        let (phase, r) = pauli_product(&x, &x).unwrap();
        assert_eq!(r, "I".parse().unwrap());
        assert!((phase - Complex64::ONE).norm() < 1e-15);
        let (phase, r) = pauli_product(&x, &y).unwrap();
        assert_eq!(r, "Z".parse().unwrap());
        assert!((phase - Complex64::I).norm() < 1e-15);
    }

    #[test]
    fn product_matches_dense_for_all_pairs_up_to_three_qubits() {
        for n in 1..=3usize {
            let strings = all_strings(n);
            for a in &strings {
                for b in &strings {
                    let (phase, r) = pauli_product(a, b).unwrap();
                    assert!((phase.norm() - 1.0).abs() < 1e-15);
                    let lhs = a.matrix() * b.matrix();
                    let rhs = r.matrix() * phase;
                    assert!((lhs - rhs).iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-14);
                }
            }
        }
    }

    #[test]
    fn product_rejects_mismatched_lengths() {
        let a: PauliString = "XY".parse().unwrap();
        let b: PauliString = "X".parse().unwrap();
        assert!(pauli_product(&a, &b).is_err());
    }

    #[test]
    fn xxz_term_structure() {
        let h1 = build_xxz(1, Boundary::Open).unwrap();
        assert_eq!(h1.n_terms(), 1);
        assert_eq!(h1.terms()[0].string, "Z".parse().unwrap());

        let h2 = build_xxz(2, Boundary::Open).unwrap();
        let strings: Vec<String> = h2.terms().iter().map(|t| t.string.to_string()).collect();
        assert_eq!(strings, vec!["ZI", "IZ", "ZZ", "XX", "YY"]);
        assert!(h2.terms().iter().all(|t| t.coefficient == 1.0));

        let h3 = build_xxz(3, Boundary::Periodic).unwrap();
        assert_eq!(h3.n_terms(), 3 + 9);

        for n in 2..=8 {
            assert_eq!(build_xxz(n, Boundary::Open).unwrap().n_terms(), 4 * n - 3);
        }
        assert!(build_xxz(0, Boundary::Open).is_err());
    }

    #[test]
    fn apply_operator_examples() {
        let z0 = PauliSumOperator::new(
            1,
            vec![PauliTerm {
                coefficient: 1.0,
                string: "Z".parse().unwrap(),
            }],
        )
        .unwrap();
        let zero = StateVector::zero_state(1);
        let out = z0.apply(&zero).unwrap();
        assert!((out.amplitudes()[0] - Complex64::ONE).norm() < 1e-15);

        let x0 = PauliSumOperator::new(
            1,
            vec![PauliTerm {
                coefficient: 1.0,
                string: "X".parse().unwrap(),
            }],
        )
        .unwrap();
        let out = x0.apply(&zero).unwrap();
        assert!((out.amplitudes()[1] - Complex64::ONE).norm() < 1e-15);
    }

    #[test]
    fn apply_matches_dense_matvec() {
        let mut rng = crate::rng::stream(21, &[]);
        for n in 2..=4usize {
            let h = build_xxz(n, Boundary::Open).unwrap();
            let psi = random_state(n, &mut rng);
            let fast = h.apply(&psi).unwrap();
            let slow = dense::apply_matrix(&h.to_matrix(), &psi);
            for (a, b) in fast.amplitudes().iter().zip(slow.amplitudes()) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn apply_is_linear() {
        let mut rng = crate::rng::stream(22, &[]);
        let h = build_xxz(3, Boundary::Open).unwrap();
        let psi = random_state(3, &mut rng);
        let phi = random_state(3, &mut rng);
        let a = Complex64::new(0.3, -1.1);
        let b = Complex64::new(-0.7, 0.2);
        let combo = psi.scale(a).add_scaled(b, &phi).unwrap();
        let lhs = h.apply(&combo).unwrap();
        let rhs = h
            .apply(&psi)
            .unwrap()
            .scale(a)
            .add_scaled(b, &h.apply(&phi).unwrap())
            .unwrap();
        for (x, y) in lhs.amplitudes().iter().zip(rhs.amplitudes()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn ground_state_of_two_site_xxz_is_minus_three() {
        let h = build_xxz(2, Boundary::Open).unwrap();
        let (e, psi) = h.ground_state().unwrap();
        assert!((e - (-3.0)).abs() < 1e-8);
        assert!((psi.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn ground_state_of_single_z() {
        let h: PauliSumOperator = "1 Z".parse().unwrap();
        let (e, psi) = h.ground_state().unwrap();
        assert!((e - (-1.0)).abs() < 1e-9);
        assert!((psi.amplitudes()[1].norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn ground_state_matches_dense_diagonalization_at_eight_sites() {
        let h = build_xxz(8, Boundary::Open).unwrap();
        let (e, _) = h.ground_state().unwrap();
        let (vals, _) = linalg::hermitian_eigen(&h.to_matrix());
        assert!((e - vals[0]).abs() < 1e-8, "power {e} vs dense {}", vals[0]);
    }

    #[test]
    fn ground_energy_is_a_lower_bound() {
        let mut rng = crate::rng::stream(23, &[]);
        let h = build_xxz(4, Boundary::Open).unwrap();
        let (e0, _) = h.ground_state().unwrap();
        for _ in 0..100 {
            let psi = random_state(4, &mut rng);
            assert!(h.energy(&psi).unwrap() >= e0 - 1e-10);
        }
    }

    #[test]
    fn ground_state_rejects_oversized_systems() {
        let h = build_xxz(17, Boundary::Open).unwrap();
        assert!(matches!(
            h.ground_state(),
            Err(Error::GroundStateCap { .. })
        ));
    }

    #[test]
    fn transition_element_examples() {
        let z0: PauliSumOperator = "1 Z".parse().unwrap();
        let zero = StateVector::zero_state(1);
        let one = StateVector::basis_state(1, 1);
        // eigenstate
        assert!((transition_element(&zero, &z0, &zero).unwrap() - Complex64::ONE).norm() < 1e-15);
        // orthogonal under a diagonal operator
        assert!(transition_element(&zero, &z0, &one).unwrap().norm() < 1e-15);
    }

    #[test]
    fn transition_matches_dense_sandwich_and_is_conjugate_symmetric() {
        let mut rng = crate::rng::stream(24, &[]);
        let h = build_xxz(3, Boundary::Open).unwrap();
        let hm = h.to_matrix();
        for _ in 0..20 {
            let phi = random_state(3, &mut rng);
            let psi = random_state(3, &mut rng);
            let fast = transition_element(&phi, &h, &psi).unwrap();
            let slow = crate::state::inner(&phi, &dense::apply_matrix(&hm, &psi)).unwrap();
            assert!((fast - slow).norm() < 1e-12);
            let swapped = transition_element(&psi, &h, &phi).unwrap();
            assert!((fast - swapped.conj()).norm() < 1e-12);
        }
    }

    #[test]
    fn text_round_trip() {
        let h = build_xxz(3, Boundary::Open).unwrap();
        let text = h.to_string();
        assert!(text.starts_with("1 ZII\n"));
        let parsed: PauliSumOperator = text.parse().unwrap();
        assert_eq!(parsed, h);
        let s: PauliString = "IXZY".parse().unwrap();
        assert_eq!(s.to_string(), "IXZY");
        assert!("IQ".parse::<PauliString>().is_err());
        assert!("nonsense line".parse::<PauliSumOperator>().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn product_agrees_with_dense_on_random_two_qubit_pairs(a_code in 0usize..16, b_code in 0usize..16) {
            let decode = |code: usize| {
                PauliString::new(vec![Pauli::from_index(code / 4), Pauli::from_index(code % 4)])
            };
            let a = decode(a_code);
            let b = decode(b_code);
            let (phase, r) = pauli_product(&a, &b).unwrap();
            let lhs = a.matrix() * b.matrix();
            let rhs = r.matrix() * phase;
            prop_assert!((lhs - rhs).iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-14);
        }
    }
}
