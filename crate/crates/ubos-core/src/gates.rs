//! Parameterized gate manifolds and their operator-basis expansions.
//!
//! Every family maps a real parameter vector to a unitary U(θ) together with
//! an operator basis {E_a} spanning the family's manifold, so that
//! U(θ) = Σ_a t_a(θ) E_a. The coefficient vector t and its analytic gradient
//! dt/dθ are what the block optimizer consumes.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, Matrix2, Matrix4};
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::pauli::Pauli;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// U3(θ, λ, φ): generic single-qubit rotation up to a phase.
pub fn u3_matrix(theta: f64, lambda: f64, phi: f64) -> Matrix2<Complex64> {
    let (s, co) = (0.5 * theta).sin_cos();
    let el = Complex64::from_polar(1.0, lambda);
    let ep = Complex64::from_polar(1.0, phi);
    Matrix2::new(c(co, 0.0), -el * s, ep * s, el * ep * co)
}

/// Partial derivatives of [`u3_matrix`] with respect to (θ, λ, φ).
fn u3_derivatives(theta: f64, lambda: f64, phi: f64) -> [Matrix2<Complex64>; 3] {
    let (s, co) = (0.5 * theta).sin_cos();
    let el = Complex64::from_polar(1.0, lambda);
    let ep = Complex64::from_polar(1.0, phi);
    let i = Complex64::I;
    let zero = Complex64::ZERO;
    let d_theta = Matrix2::new(
        c(-0.5 * s, 0.0),
        -el * (0.5 * co),
        ep * (0.5 * co),
        el * ep * (-0.5 * s),
    );
    let d_lambda = Matrix2::new(zero, -i * el * s, zero, i * el * ep * co);
    let d_phi = Matrix2::new(zero, zero, i * ep * s, i * el * ep * co);
    [d_theta, d_lambda, d_phi]
}

/// fSim(θ, φ): excitation-preserving two-qubit gate with a swap angle θ and
/// a conditional phase φ. The central block is cos θ · I − i sin θ · X.
pub fn fsim_matrix(theta: f64, phi: f64) -> Matrix4<Complex64> {
    let (s, co) = theta.sin_cos();
    let mut m = Matrix4::identity();
    m[(1, 1)] = c(co, 0.0);
    m[(1, 2)] = c(0.0, -s);
    m[(2, 1)] = c(0.0, -s);
    m[(2, 2)] = c(co, 0.0);
    m[(3, 3)] = Complex64::from_polar(1.0, -phi);
    m
}

fn fsim_derivatives(theta: f64, phi: f64) -> [Matrix4<Complex64>; 2] {
    let (s, co) = theta.sin_cos();
    let mut d_theta = Matrix4::zeros();
    d_theta[(1, 1)] = c(-s, 0.0);
    d_theta[(1, 2)] = c(0.0, -co);
    d_theta[(2, 1)] = c(0.0, -co);
    d_theta[(2, 2)] = c(-s, 0.0);
    let mut d_phi = Matrix4::zeros();
    d_phi[(3, 3)] = -Complex64::I * Complex64::from_polar(1.0, -phi);
    [d_theta, d_phi]
}

/// CU3(θ, λ, φ): U3 on the second qubit controlled by the first.
pub fn cu3_matrix(theta: f64, lambda: f64, phi: f64) -> Matrix4<Complex64> {
    let u = u3_matrix(theta, lambda, phi);
    let mut m = Matrix4::identity();
    for r in 0..2 {
        for col in 0..2 {
            m[(2 + r, 2 + col)] = u[(r, col)];
        }
    }
    m
}

/// KAK parameters of a generic two-qubit unitary: four U3 factors and the
/// entangling core exp(-i k·(XX, YY, ZZ)).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KakParams {
    pub a0: [f64; 3],
    pub a1: [f64; 3],
    pub b0: [f64; 3],
    pub b1: [f64; 3],
    pub k: [f64; 3],
}

impl KakParams {
    pub fn from_slice(params: &[f64]) -> Result<Self> {
        if params.len() != 15 {
            return Err(Error::ParamCount {
                family: "generic SU(4)",
                expected: 15,
                got: params.len(),
            });
        }
        let grab = |i: usize| [params[i], params[i + 1], params[i + 2]];
        Ok(Self {
            a0: grab(0),
            a1: grab(3),
            b0: grab(6),
            b1: grab(9),
            k: grab(12),
        })
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(15);
        for block in [self.a0, self.a1, self.b0, self.b1, self.k] {
            out.extend_from_slice(&block);
        }
        out
    }
}

fn pauli_kron(a: Pauli, b: Pauli) -> Matrix4<Complex64> {
    a.matrix().kronecker(&b.matrix())
}

/// exp(-i (kx XX + ky YY + kz ZZ)); the three generators commute, so this is
/// the product of three closed-form factors cos(k) I - i sin(k) ΣΣ.
fn kak_core(k: [f64; 3]) -> Matrix4<Complex64> {
    let mut out = Matrix4::identity();
    for (angle, pauli) in k.iter().zip([Pauli::X, Pauli::Y, Pauli::Z]) {
        let (s, co) = angle.sin_cos();
        let factor = Matrix4::identity() * c(co, 0.0) + pauli_kron(pauli, pauli) * c(0.0, -s);
        out *= factor;
    }
    out
}

/// Unitary of the KAK parameterization: (A0⊗A1) · exp(-i k·Σ) · (B0⊗B1).
pub fn kak_unitary(p: &KakParams) -> Matrix4<Complex64> {
    let a = u3_matrix(p.a0[0], p.a0[1], p.a0[2]).kronecker(&u3_matrix(p.a1[0], p.a1[1], p.a1[2]));
    let b = u3_matrix(p.b0[0], p.b0[1], p.b0[2]).kronecker(&u3_matrix(p.b1[0], p.b1[1], p.b1[2]));
    a * kak_core(p.k) * b
}

fn kak_derivatives(p: &KakParams) -> [Matrix4<Complex64>; 15] {
    let a0 = u3_matrix(p.a0[0], p.a0[1], p.a0[2]);
    let a1 = u3_matrix(p.a1[0], p.a1[1], p.a1[2]);
    let b0 = u3_matrix(p.b0[0], p.b0[1], p.b0[2]);
    let b1 = u3_matrix(p.b1[0], p.b1[1], p.b1[2]);
    let da0 = u3_derivatives(p.a0[0], p.a0[1], p.a0[2]);
    let da1 = u3_derivatives(p.a1[0], p.a1[1], p.a1[2]);
    let db0 = u3_derivatives(p.b0[0], p.b0[1], p.b0[2]);
    let db1 = u3_derivatives(p.b1[0], p.b1[1], p.b1[2]);
    let core = kak_core(p.k);
    let a = a0.kronecker(&a1);
    let b = b0.kronecker(&b1);
    let ce_b = core * b;
    let a_ce = a * core;

    let mut out = [Matrix4::zeros(); 15];
    for i in 0..3 {
        out[i] = da0[i].kronecker(&a1) * ce_b;
        out[3 + i] = a0.kronecker(&da1[i]) * ce_b;
        out[6 + i] = a_ce * db0[i].kronecker(&b1);
        out[9 + i] = a_ce * b0.kronecker(&db1[i]);
    }
    for (i, pauli) in [Pauli::X, Pauli::Y, Pauli::Z].into_iter().enumerate() {
        // d/dk exp(-i k Σ) = -i Σ · exp(-i k Σ), and Σ commutes with the core.
        out[12 + i] = a * (pauli_kron(pauli, pauli) * c(0.0, -1.0)) * core * b;
    }
    out
}

/// An ordered operator basis {E_a} with measurement bookkeeping attached.
#[derive(Debug, Clone)]
pub struct OperatorBasis {
    elements: Vec<DMatrix<Complex64>>,
    labels: Vec<String>,
    /// Pauli pair labels when every element is a two-qubit Pauli string.
    pauli_pairs: Option<Vec<(Pauli, Pauli)>>,
    unique_h_elements: usize,
}

impl OperatorBasis {
    pub fn new(elements: Vec<DMatrix<Complex64>>, labels: Vec<String>) -> Self {
        assert_eq!(elements.len(), labels.len());
        assert!(!elements.is_empty(), "basis cannot be empty");
        let dim = elements[0].nrows();
        assert!(elements.iter().all(|e| e.nrows() == dim && e.ncols() == dim));
        let k = elements.len();
        Self {
            elements,
            labels,
            pauli_pairs: None,
            unique_h_elements: k * (k + 1) / 2,
        }
    }

    fn with_pairs(mut self, pairs: Vec<(Pauli, Pauli)>) -> Self {
        self.pauli_pairs = Some(pairs);
        self
    }

    fn with_accounting(mut self, unique: usize) -> Self {
        self.unique_h_elements = unique;
        self
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Matrix dimension of each element.
    pub fn dim(&self) -> usize {
        self.elements[0].nrows()
    }

    pub fn elements(&self) -> &[DMatrix<Complex64>] {
        &self.elements
    }

    pub fn element(&self, idx: usize) -> &DMatrix<Complex64> {
        &self.elements[idx]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Pauli pair identities of the elements, when the basis is a set of
    /// two-qubit Pauli strings.
    pub fn pauli_pairs(&self) -> Option<&[(Pauli, Pauli)]> {
        self.pauli_pairs.as_deref()
    }

    /// Number of distinct measurement settings needed for H̃ in this basis
    /// (diagonal entries are real, off-diagonal complex).
    pub fn unique_h_elements(&self) -> usize {
        self.unique_h_elements
    }

    /// Express a matrix in this basis by solving the Gram system.
    pub fn project(&self, m: &DMatrix<Complex64>) -> Result<Vec<Complex64>> {
        BasisProjector::new(self)?.project(m)
    }
}

fn pair_basis(pairs: &[(Pauli, Pauli)]) -> OperatorBasis {
    let elements: Vec<DMatrix<Complex64>> = pairs
        .iter()
        .map(|&(a, b)| {
            let m = pauli_kron(a, b);
            DMatrix::from_fn(4, 4, |i, j| m[(i, j)])
        })
        .collect();
    let labels = pairs
        .iter()
        .map(|&(a, b)| format!("{}{}", a.to_char(), b.to_char()))
        .collect();
    OperatorBasis::new(elements, labels).with_pairs(pairs.to_vec())
}

fn dmatrix4(m: &Matrix4<Complex64>) -> DMatrix<Complex64> {
    DMatrix::from_fn(4, 4, |i, j| m[(i, j)])
}

/// Cached Gram factorization for repeated projections onto one basis.
pub struct BasisProjector {
    dim: usize,
    len: usize,
    /// Non-zero entries (row, col, conj(value)) of each element, for traces.
    sparse: Vec<Vec<(usize, usize, Complex64)>>,
    gram_lu: nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>,
    elements: Vec<DMatrix<Complex64>>,
}

impl BasisProjector {
    pub fn new(basis: &OperatorBasis) -> Result<Self> {
        let k = basis.len();
        let dim = basis.dim();
        let mut gram = DMatrix::zeros(k, k);
        for a in 0..k {
            for b in 0..k {
                gram[(a, b)] = (basis.element(a).adjoint() * basis.element(b)).trace();
            }
        }
        let gram_lu = gram.lu();
        if !gram_lu.is_invertible() {
            return Err(Error::Invalid(
                "operator basis is not linearly independent".into(),
            ));
        }
        let sparse = basis
            .elements()
            .iter()
            .map(|e| {
                let mut entries = Vec::new();
                for i in 0..dim {
                    for j in 0..dim {
                        let v = e[(i, j)];
                        if v.norm() > 1e-14 {
                            entries.push((i, j, v.conj()));
                        }
                    }
                }
                entries
            })
            .collect();
        Ok(Self {
            dim,
            len: k,
            sparse,
            gram_lu,
            elements: basis.elements().to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn solve(&self, traces: nalgebra::DVector<Complex64>) -> Vec<Complex64> {
        let sol = self.gram_lu.solve(&traces).expect("gram system is invertible");
        sol.iter().cloned().collect()
    }

    /// Coefficients for a 4×4 matrix; no span check.
    pub fn project4(&self, m: &Matrix4<Complex64>) -> Vec<Complex64> {
        debug_assert_eq!(self.dim, 4);
        let traces = nalgebra::DVector::from_fn(self.len, |a, _| {
            self.sparse[a]
                .iter()
                .map(|&(i, j, conj_v)| conj_v * m[(i, j)])
                .sum()
        });
        self.solve(traces)
    }

    /// Coefficients for a general matrix; no span check.
    pub fn project_dyn(&self, m: &DMatrix<Complex64>) -> Vec<Complex64> {
        debug_assert_eq!(self.dim, m.nrows());
        let traces = nalgebra::DVector::from_fn(self.len, |a, _| {
            self.sparse[a]
                .iter()
                .map(|&(i, j, conj_v)| conj_v * m[(i, j)])
                .sum()
        });
        self.solve(traces)
    }

    /// Coefficients with a residual check that the basis spans the matrix.
    pub fn project(&self, m: &DMatrix<Complex64>) -> Result<Vec<Complex64>> {
        let t = self.project_dyn(m);
        let mut residual = m.clone();
        for (coeff, e) in t.iter().zip(&self.elements) {
            residual -= e * *coeff;
        }
        let dev = residual.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
        if dev > 1e-9 * scale {
            return Err(Error::BasisDoesNotSpan { residual: dev });
        }
        Ok(t)
    }
}

/// Coefficient vector t of a gate expanded in its operator basis.
#[derive(Debug, Clone, PartialEq)]
pub struct TCoefficients {
    pub t: Vec<Complex64>,
}

impl TCoefficients {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Σ |t_a|²; equals 1 for an orthogonal Pauli basis of a unitary.
    pub fn norm_sqr(&self) -> f64 {
        self.t.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// One constituent of a multi-gate subspace block: an fSim gate whose θ may
/// be pinned to a fixed value (leaving only φ free).
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGate {
    pub fixed_theta: Option<f64>,
}

/// A tensor product of fSim gates optimized jointly in a small subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSpec {
    pub gates: Vec<BlockGate>,
}

impl BlockSpec {
    pub fn n_qubits(&self) -> usize {
        2 * self.gates.len()
    }

    fn param_count(&self) -> usize {
        self.gates
            .iter()
            .map(|g| if g.fixed_theta.is_some() { 1 } else { 2 })
            .sum()
    }
}

/// A parameterized gate family.
#[derive(Debug, Clone, PartialEq)]
pub enum GateFamily {
    /// Full SU(4) via the KAK parameterization; 15 parameters, 16-Pauli basis.
    GenericSu4,
    /// Single-qubit U3; 3 parameters, 4-Pauli basis.
    U3,
    /// Controlled U3; 3 parameters. Pauli basis of 8 strings, or the reduced
    /// 5-operator basis.
    Cu3 { reduced: bool },
    /// fSim; 2 parameters. Pauli basis of 8 strings, or the reduced
    /// 4-operator basis.
    FSim { reduced: bool },
    /// Independent U3 on each qubit of a pair; 6 parameters, 16-Pauli basis.
    U3xU3,
    /// Tensor product of fSim gates optimized in a joint subspace.
    Block(BlockSpec),
}

impl GateFamily {
    pub fn name(&self) -> &'static str {
        match self {
            GateFamily::GenericSu4 => "generic",
            GateFamily::U3 => "u3",
            GateFamily::Cu3 { reduced: false } => "cu3",
            GateFamily::Cu3 { reduced: true } => "cu3-reduced",
            GateFamily::FSim { reduced: false } => "fsim",
            GateFamily::FSim { reduced: true } => "fsim-reduced",
            GateFamily::U3xU3 => "u3xu3",
            GateFamily::Block(_) => "block",
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            GateFamily::GenericSu4 => 15,
            GateFamily::U3 => 3,
            GateFamily::Cu3 { .. } => 3,
            GateFamily::FSim { .. } => 2,
            GateFamily::U3xU3 => 6,
            GateFamily::Block(spec) => spec.param_count(),
        }
    }

    pub fn n_qubits(&self) -> usize {
        match self {
            GateFamily::U3 => 1,
            GateFamily::Block(spec) => spec.n_qubits(),
            _ => 2,
        }
    }

    pub fn matrix_dim(&self) -> usize {
        1 << self.n_qubits()
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::ParamCount {
                family: self.name(),
                expected: self.param_count(),
                got: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Invalid("non-finite gate parameter".into()));
        }
        Ok(())
    }

    /// The 4×4 unitary of a two-qubit family.
    pub fn unitary4(&self, params: &[f64]) -> Result<Matrix4<Complex64>> {
        self.check_params(params)?;
        match self {
            GateFamily::GenericSu4 => Ok(kak_unitary(&KakParams::from_slice(params)?)),
            GateFamily::Cu3 { .. } => Ok(cu3_matrix(params[0], params[1], params[2])),
            GateFamily::FSim { .. } => Ok(fsim_matrix(params[0], params[1])),
            GateFamily::U3xU3 => {
                let a = u3_matrix(params[0], params[1], params[2]);
                let b = u3_matrix(params[3], params[4], params[5]);
                Ok(a.kronecker(&b))
            }
            _ => Err(Error::Invalid(format!(
                "{} is not a two-qubit gate family",
                self.name()
            ))),
        }
    }

    /// The gate unitary at the given parameters, at the family's dimension.
    pub fn unitary(&self, params: &[f64]) -> Result<DMatrix<Complex64>> {
        self.check_params(params)?;
        match self {
            GateFamily::U3 => {
                let m = u3_matrix(params[0], params[1], params[2]);
                Ok(DMatrix::from_fn(2, 2, |i, j| m[(i, j)]))
            }
            GateFamily::Block(spec) => {
                let mut out = DMatrix::identity(1, 1);
                let mut cursor = 0;
                for gate in &spec.gates {
                    let (theta, phi) = match gate.fixed_theta {
                        Some(t) => {
                            let phi = params[cursor];
                            cursor += 1;
                            (t, phi)
                        }
                        None => {
                            let pair = (params[cursor], params[cursor + 1]);
                            cursor += 2;
                            pair
                        }
                    };
                    out = out.kronecker(&dmatrix4(&fsim_matrix(theta, phi)));
                }
                Ok(out)
            }
            _ => Ok(dmatrix4(&self.unitary4(params)?)),
        }
    }

    /// The family's operator basis.
    pub fn basis(&self) -> OperatorBasis {
        use Pauli::*;
        match self {
            GateFamily::GenericSu4 | GateFamily::U3xU3 => {
                let pairs: Vec<(Pauli, Pauli)> = Pauli::ALL
                    .iter()
                    .flat_map(|&a| Pauli::ALL.iter().map(move |&b| (a, b)))
                    .collect();
                pair_basis(&pairs).with_accounting(136)
            }
            GateFamily::U3 => {
                let elements = Pauli::ALL
                    .iter()
                    .map(|p| {
                        let m = p.matrix();
                        DMatrix::from_fn(2, 2, |i, j| m[(i, j)])
                    })
                    .collect();
                let labels = Pauli::ALL.iter().map(|p| p.to_char().to_string()).collect();
                OperatorBasis::new(elements, labels).with_accounting(10)
            }
            GateFamily::Cu3 { reduced: false } => {
                let pairs = vec![
                    (I, I),
                    (I, X),
                    (I, Y),
                    (I, Z),
                    (Z, I),
                    (Z, X),
                    (Z, Y),
                    (Z, Z),
                ];
                pair_basis(&pairs).with_accounting(40)
            }
            GateFamily::Cu3 { reduced: true } => cu3_reduced_basis(),
            GateFamily::FSim { reduced: false } => {
                let pairs = vec![
                    (I, I),
                    (I, Z),
                    (X, X),
                    (X, Y),
                    (Y, X),
                    (Y, Y),
                    (Z, I),
                    (Z, Z),
                ];
                pair_basis(&pairs).with_accounting(40)
            }
            GateFamily::FSim { reduced: true } => fsim_reduced_basis(),
            GateFamily::Block(spec) => block_subspace_basis(spec).expect("validated spec"),
        }
    }

    /// Coefficients t with Σ t_a E_a = U(params), by Gram projection.
    pub fn coefficients(&self, params: &[f64]) -> Result<TCoefficients> {
        let basis = self.basis();
        let u = self.unitary(params)?;
        Ok(TCoefficients {
            t: basis.project(&u)?,
        })
    }

    /// Analytic Jacobian dt/dθ as a (basis length × param count) matrix.
    pub fn coefficient_gradients(&self, params: &[f64]) -> Result<DMatrix<Complex64>> {
        self.check_params(params)?;
        let basis = self.basis();
        let projector = BasisProjector::new(&basis)?;
        let derivs = self.unitary_derivatives(params)?;
        let k = basis.len();
        let mut out = DMatrix::zeros(k, self.param_count());
        for (i, d) in derivs.iter().enumerate() {
            let col = projector.project_dyn(d);
            for a in 0..k {
                out[(a, i)] = col[a];
            }
        }
        Ok(out)
    }

    /// dU/dθ_i for every parameter, at the family's dimension.
    pub fn unitary_derivatives(&self, params: &[f64]) -> Result<Vec<DMatrix<Complex64>>> {
        self.check_params(params)?;
        match self {
            GateFamily::GenericSu4 => {
                let p = KakParams::from_slice(params)?;
                Ok(kak_derivatives(&p).iter().map(dmatrix4).collect())
            }
            GateFamily::U3 => Ok(u3_derivatives(params[0], params[1], params[2])
                .iter()
                .map(|m| DMatrix::from_fn(2, 2, |i, j| m[(i, j)]))
                .collect()),
            GateFamily::Cu3 { .. } => {
                let dus = u3_derivatives(params[0], params[1], params[2]);
                Ok(dus
                    .iter()
                    .map(|du| {
                        let mut m = Matrix4::zeros();
                        for r in 0..2 {
                            for col in 0..2 {
                                m[(2 + r, 2 + col)] = du[(r, col)];
                            }
                        }
                        dmatrix4(&m)
                    })
                    .collect())
            }
            GateFamily::FSim { .. } => Ok(fsim_derivatives(params[0], params[1])
                .iter()
                .map(dmatrix4)
                .collect()),
            GateFamily::U3xU3 => {
                let a = u3_matrix(params[0], params[1], params[2]);
                let b = u3_matrix(params[3], params[4], params[5]);
                let da = u3_derivatives(params[0], params[1], params[2]);
                let db = u3_derivatives(params[3], params[4], params[5]);
                let mut out = Vec::with_capacity(6);
                for d in da {
                    out.push(dmatrix4(&d.kronecker(&b)));
                }
                for d in db {
                    out.push(dmatrix4(&a.kronecker(&d)));
                }
                Ok(out)
            }
            GateFamily::Block(spec) => {
                // Product rule over the tensor factors.
                let mut factors = Vec::new();
                let mut free: Vec<(usize, usize)> = Vec::new(); // (gate idx, which angle)
                let mut cursor = 0;
                for (gi, gate) in spec.gates.iter().enumerate() {
                    let (theta, phi) = match gate.fixed_theta {
                        Some(t) => {
                            let phi = params[cursor];
                            free.push((gi, 1));
                            cursor += 1;
                            (t, phi)
                        }
                        None => {
                            let pair = (params[cursor], params[cursor + 1]);
                            free.push((gi, 0));
                            free.push((gi, 1));
                            cursor += 2;
                            pair
                        }
                    };
                    factors.push((theta, phi));
                }
                let mats: Vec<DMatrix<Complex64>> = factors
                    .iter()
                    .map(|&(t, p)| dmatrix4(&fsim_matrix(t, p)))
                    .collect();
                let mut out = Vec::with_capacity(free.len());
                for &(gi, which) in &free {
                    let d4 = fsim_derivatives(factors[gi].0, factors[gi].1)[which];
                    let mut acc = DMatrix::identity(1, 1);
                    for (idx, m) in mats.iter().enumerate() {
                        if idx == gi {
                            acc = acc.kronecker(&dmatrix4(&d4));
                        } else {
                            acc = acc.kronecker(m);
                        }
                    }
                    out.push(acc);
                }
                Ok(out)
            }
        }
    }

    /// Measurement settings needed for the family's H̃.
    pub fn unique_h_elements(&self) -> usize {
        self.basis().unique_h_elements()
    }

    /// A uniform draw from [0, π) for every parameter.
    pub fn random_params(&self, rng: &mut impl Rng) -> Vec<f64> {
        (0..self.param_count())
            .map(|_| rng.gen::<f64>() * std::f64::consts::PI)
            .collect()
    }

    /// Parameters that make the gate the identity.
    pub fn identity_params(&self) -> Vec<f64> {
        vec![0.0; self.param_count()]
    }
}

impl fmt::Display for GateFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

impl FromStr for GateFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "generic" | "su4" => Ok(GateFamily::GenericSu4),
            "u3" => Ok(GateFamily::U3),
            "cu3" => Ok(GateFamily::Cu3 { reduced: false }),
            "cu3-reduced" => Ok(GateFamily::Cu3 { reduced: true }),
            "fsim" => Ok(GateFamily::FSim { reduced: false }),
            "fsim-reduced" => Ok(GateFamily::FSim { reduced: true }),
            "u3xu3" => Ok(GateFamily::U3xU3),
            other => Err(Error::Parse(format!("unknown gate family '{other}'"))),
        }
    }
}

fn cu3_reduced_basis() -> OperatorBasis {
    let zero = Complex64::ZERO;
    let one = Complex64::ONE;
    let mut r2 = Matrix4::identity();
    r2[(2, 2)] = zero;
    r2[(3, 3)] = zero;
    r2[(2, 3)] = one;
    r2[(3, 2)] = one;
    let mut r3 = Matrix4::identity();
    r3[(2, 2)] = zero;
    r3[(3, 3)] = zero;
    r3[(2, 3)] = -one;
    r3[(3, 2)] = one;
    let mut r1 = Matrix4::identity();
    r1[(3, 3)] = -one;
    let mut r4 = Matrix4::identity();
    r4[(2, 2)] = -one;
    r4[(3, 3)] = -one;
    let elements = vec![
        dmatrix4(&Matrix4::identity()),
        dmatrix4(&r1),
        dmatrix4(&r2),
        dmatrix4(&r3),
        dmatrix4(&r4),
    ];
    let labels = (0..5).map(|i| format!("R{i}")).collect();
    OperatorBasis::new(elements, labels).with_accounting(15)
}

fn fsim_reduced_basis() -> OperatorBasis {
    let elements = vec![
        dmatrix4(&fsim_matrix(0.0, 0.0)),
        dmatrix4(&fsim_matrix(0.0, std::f64::consts::PI)),
        dmatrix4(&fsim_matrix(std::f64::consts::PI, 0.0)),
        dmatrix4(&fsim_matrix(std::f64::consts::FRAC_PI_2, 0.0)),
    ];
    let labels = (0..4).map(|i| format!("R{i}")).collect();
    OperatorBasis::new(elements, labels).with_accounting(10)
}

/// Anchors spanning the sub-manifold of one block constituent.
fn block_gate_anchors(gate: &BlockGate) -> (Vec<DMatrix<Complex64>>, Vec<String>) {
    match gate.fixed_theta {
        Some(theta) => {
            // fSim(θ̄, φ) = ((1+e^{-iφ})/2)·A + ((1-e^{-iφ})/2)·B with A and B
            // the φ = 0 and φ = π anchors.
            let a = dmatrix4(&fsim_matrix(theta, 0.0));
            let b = dmatrix4(&fsim_matrix(theta, std::f64::consts::PI));
            (vec![a, b], vec!["A".into(), "B".into()])
        }
        None => {
            let basis = GateFamily::FSim { reduced: true }.basis();
            (
                basis.elements().to_vec(),
                basis.labels().to_vec(),
            )
        }
    }
}

/// Tensor-product basis for a multi-gate subspace block.
pub fn block_subspace_basis(spec: &BlockSpec) -> Result<OperatorBasis> {
    if spec.gates.is_empty() {
        return Err(Error::Invalid("block spec has no constituent gates".into()));
    }
    let mut elements = vec![DMatrix::identity(1, 1)];
    let mut labels = vec![String::new()];
    for gate in &spec.gates {
        let (anchors, anchor_labels) = block_gate_anchors(gate);
        let mut next_elements = Vec::with_capacity(elements.len() * anchors.len());
        let mut next_labels = Vec::with_capacity(labels.len() * anchors.len());
        for (e, l) in elements.iter().zip(&labels) {
            for (a, al) in anchors.iter().zip(&anchor_labels) {
                next_elements.push(e.kronecker(a));
                next_labels.push(if l.is_empty() {
                    al.clone()
                } else {
                    format!("{l}⊗{al}")
                });
            }
        }
        elements = next_elements;
        labels = next_labels;
    }
    Ok(OperatorBasis::new(elements, labels))
}

/// The pair of scalar weights splitting fSim(θ̄, φ) over its φ = 0 / φ = π
/// anchors: (1 ± e^{-iφ})/2.
pub fn fsim_phase_split(phi: f64) -> (Complex64, Complex64) {
    let e = Complex64::from_polar(1.0, -phi);
    ((Complex64::ONE + e) * 0.5, (Complex64::ONE - e) * 0.5)
}

/// Anything that maps a real parameter vector to basis coefficients.
///
/// The effective-Hamiltonian reconstruction and rank probes only need the
/// coefficient functions, so they accept any manifold, not just [`GateFamily`].
pub trait GateManifold {
    fn param_count(&self) -> usize;
    fn coefficient_count(&self) -> usize;
    fn coefficients_at(&self, params: &[f64]) -> Vec<Complex64>;
}

impl GateManifold for GateFamily {
    fn param_count(&self) -> usize {
        GateFamily::param_count(self)
    }

    fn coefficient_count(&self) -> usize {
        self.basis().len()
    }

    fn coefficients_at(&self, params: &[f64]) -> Vec<Complex64> {
        self.coefficients(params).expect("valid params").t
    }
}

/// Single-qubit rotation exp(-i θ/2 σ) about a fixed axis, expanded over the
/// four single-qubit Paulis: t_I = cos(θ/2), t_axis = -i sin(θ/2).
#[derive(Debug, Clone, Copy)]
pub struct RotationGate {
    pub axis: Pauli,
}

impl GateManifold for RotationGate {
    fn param_count(&self) -> usize {
        1
    }

    fn coefficient_count(&self) -> usize {
        4
    }

    fn coefficients_at(&self, params: &[f64]) -> Vec<Complex64> {
        let (s, co) = (0.5 * params[0]).sin_cos();
        let mut t = vec![Complex64::ZERO; 4];
        t[0] = c(co, 0.0);
        t[self.axis.index()] = c(0.0, -s);
        t
    }
}
