//! The per-gate effective Hamiltonian H̃, the overlap matrix S̃, measurement
//! noise models, expectation-value accounting, and reconstruction of the
//! energy functional from energy samples.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Binomial, Distribution, Normal};

use crate::circuit::{Circuit, ParamSet};
use crate::error::{Error, Result};
use crate::gates::{GateManifold, OperatorBasis};
use crate::linalg;
use crate::pauli::{pauli_product, PauliString, PauliSumOperator};
use crate::rng::stream;
use crate::state::{inner, StateVector};

/// Expectation-value accounting: total = epochs × H̃-measurements × operators.
///
/// An epoch is one gate update for the block optimizer and one all-gate step
/// for gradient descent. The factors must stay uniform over a counter's life,
/// which keeps the product formula exact; use separate counters for flows
/// with different per-epoch costs (e.g. S̃ estimation).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvCounter {
    n_epochs: u64,
    n_h_meas: u64,
    n_operators: u64,
}

impl EvCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_epoch(&mut self, h_meas: u64, operators: u64) {
        if self.n_epochs == 0 {
            self.n_h_meas = h_meas;
            self.n_operators = operators;
        } else {
            assert_eq!(
                (self.n_h_meas, self.n_operators),
                (h_meas, operators),
                "EvCounter factors must stay uniform within one counter"
            );
        }
        self.n_epochs += 1;
    }

    pub fn n_epochs(&self) -> u64 {
        self.n_epochs
    }

    pub fn n_h_meas(&self) -> u64 {
        self.n_h_meas
    }

    pub fn n_operators(&self) -> u64 {
        self.n_operators
    }

    pub fn total(&self) -> u64 {
        self.n_epochs * self.n_h_meas * self.n_operators
    }
}

/// Measurement noise model for matrix elements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseMode {
    Exact,
    /// Independent N(0, σ) on every real component of every element.
    Gaussian { sigma: f64 },
    /// Each bounded component estimated from `samples` binary outcomes.
    Shots { samples: u64 },
}

/// Noise model plus the seed from which all draws are derived.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub mode: NoiseMode,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn exact() -> Self {
        Self {
            mode: NoiseMode::Exact,
            seed: 0,
        }
    }

    pub fn gaussian(sigma: f64, seed: u64) -> Self {
        Self {
            mode: NoiseMode::Gaussian { sigma },
            seed,
        }
    }

    pub fn shots(samples: u64, seed: u64) -> Self {
        Self {
            mode: NoiseMode::Shots { samples },
            seed,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.mode, NoiseMode::Exact)
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

impl std::fmt::Display for NoiseMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NoiseMode::Exact => write!(f, "exact"),
            NoiseMode::Gaussian { sigma } => write!(f, "gaussian:{sigma}"),
            NoiseMode::Shots { samples } => write!(f, "shots:{samples}"),
        }
    }
}

impl std::str::FromStr for NoiseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "exact" {
            return Ok(NoiseMode::Exact);
        }
        if let Some(sigma) = s.strip_prefix("gaussian:") {
            let sigma: f64 = sigma
                .parse()
                .map_err(|e| Error::Parse(format!("bad gaussian width: {e}")))?;
            if !(sigma >= 0.0) {
                return Err(Error::Parse("gaussian width must be >= 0".into()));
            }
            return Ok(NoiseMode::Gaussian { sigma });
        }
        if let Some(samples) = s.strip_prefix("shots:") {
            let samples: u64 = samples
                .parse()
                .map_err(|e| Error::Parse(format!("bad shot count: {e}")))?;
            if samples == 0 {
                return Err(Error::Parse("shot count must be >= 1".into()));
            }
            return Ok(NoiseMode::Shots { samples });
        }
        Err(Error::Parse(format!(
            "unknown noise mode '{s}' (expected exact, gaussian:<sigma> or shots:<count>)"
        )))
    }
}

/// The k×k Hermitian effective Hamiltonian of one gate slot.
#[derive(Debug, Clone)]
pub struct EffectiveHamiltonian {
    matrix: DMatrix<Complex64>,
    labels: Vec<String>,
    slot: usize,
}

impl EffectiveHamiltonian {
    pub fn new(matrix: DMatrix<Complex64>, labels: Vec<String>, slot: usize) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                context: "effective Hamiltonian shape",
                left: matrix.nrows(),
                right: labels.len(),
            });
        }
        linalg::require_hermitian(&matrix, 1e-10)?;
        Ok(Self {
            matrix,
            labels,
            slot,
        })
    }

    pub fn k(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn slot(&self) -> usize {
        self.slot
    }

    /// Row-major text dump, entries as "re,im" pairs.
    pub fn dump_text(&self) -> String {
        let mut out = String::new();
        for i in 0..self.k() {
            let row: Vec<String> = (0..self.k())
                .map(|j| format!("{},{}", self.matrix[(i, j)].re, self.matrix[(i, j)].im))
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Quadratic form Re(t† M t).
pub fn quadratic_form(matrix: &DMatrix<Complex64>, t: &[Complex64]) -> f64 {
    let k = matrix.nrows();
    debug_assert_eq!(k, t.len());
    let mut acc = Complex64::ZERO;
    for a in 0..k {
        let mut row = Complex64::ZERO;
        for b in 0..k {
            row += matrix[(a, b)] * t[b];
        }
        acc += t[a].conj() * row;
    }
    acc.re
}

/// H̃[a][b] = ⟨ψ_j^a| H |ψ_j^b⟩ over a slot's operator basis, with the chosen
/// noise model applied per unique element.
///
/// Noise draws are keyed by (seed, epoch, slot, element, term), so results do
/// not depend on evaluation order and repeat runs reproduce bit-identically.
pub fn build_h_tilde(
    circuit: &Circuit,
    params: &ParamSet,
    j: usize,
    hamiltonian: &PauliSumOperator,
    basis: &OperatorBasis,
    noise: &NoiseSpec,
    counter: &mut EvCounter,
) -> Result<EffectiveHamiltonian> {
    if hamiltonian.n_qubits() != circuit.n_qubits() {
        return Err(Error::DimensionMismatch {
            context: "Hamiltonian width vs circuit",
            left: hamiltonian.n_qubits(),
            right: circuit.n_qubits(),
        });
    }
    let epoch = counter.n_epochs();
    let states = circuit.derivative_states(params, j, basis)?;
    let k = basis.len();
    let mut matrix = DMatrix::zeros(k, k);
    let slot_tag = j as u64;

    match noise.mode {
        NoiseMode::Exact | NoiseMode::Gaussian { .. } => {
            for b in 0..k {
                let hb = hamiltonian.apply(&states[b])?;
                for a in 0..=b {
                    let mut z = inner(&states[a], &hb)?;
                    if a == b {
                        z = Complex64::new(z.re, 0.0);
                    }
                    matrix[(a, b)] = z;
                }
            }
            if let NoiseMode::Gaussian { sigma } = noise.mode {
                for b in 0..k {
                    for a in 0..=b {
                        let mut rng = stream(noise.seed, &[epoch, slot_tag, a as u64, b as u64]);
                        let normal = Normal::new(0.0, sigma)
                            .map_err(|e| Error::Invalid(format!("bad noise width: {e}")))?;
                        let dre: f64 = normal.sample(&mut rng);
                        let dim: f64 = if a == b { 0.0 } else { normal.sample(&mut rng) };
                        matrix[(a, b)] += Complex64::new(dre, dim);
                    }
                }
            }
        }
        NoiseMode::Shots { samples } => {
            for b in 0..k {
                for (ti, term) in hamiltonian.terms().iter().enumerate() {
                    let w = term.string.apply(&states[b])?;
                    for a in 0..=b {
                        let z = inner(&states[a], &w)?;
                        let mut rng = stream(
                            noise.seed,
                            &[epoch, slot_tag, a as u64, b as u64, ti as u64],
                        );
                        let re = shot_estimate(z.re, samples, &mut rng)?;
                        let im = if a == b {
                            0.0
                        } else {
                            shot_estimate(z.im, samples, &mut rng)?
                        };
                        matrix[(a, b)] += Complex64::new(re, im) * term.coefficient;
                    }
                }
            }
        }
    }

    for b in 0..k {
        for a in 0..b {
            matrix[(b, a)] = matrix[(a, b)].conj();
        }
    }
    counter.record_epoch(
        basis.unique_h_elements() as u64,
        hamiltonian.n_terms() as u64,
    );
    EffectiveHamiltonian::new(matrix, basis.labels().to_vec(), j)
}

/// Overlap matrix S̃[a][b] = ⟨ψ_j^a|ψ_j^b⟩.
///
/// The gates after slot j cancel, so S̃ only depends on the state in front of
/// the slot. For a Pauli-string basis every entry reduces, via the Pauli
/// product table, to one of the 16 pair-Pauli expectation values of that
/// state; a general basis is evaluated as a Gram matrix directly.
pub fn build_s_tilde(
    circuit: &Circuit,
    params: &ParamSet,
    j: usize,
    basis: &OperatorBasis,
    counter: &mut EvCounter,
) -> Result<DMatrix<Complex64>> {
    if basis.dim() != 4 {
        return Err(Error::DimensionMismatch {
            context: "overlap basis on a two-qubit slot",
            left: basis.dim(),
            right: 4,
        });
    }
    let prefix = circuit.state_before(params, j)?;
    let (qa, qb) = circuit.slot(j).qubits;
    let n = circuit.n_qubits();
    let k = basis.len();
    let mut s = DMatrix::zeros(k, k);

    if let Some(pairs) = basis.pauli_pairs() {
        let mut evs = [Complex64::ZERO; 16];
        for (idx, ev) in evs.iter_mut().enumerate() {
            let string = PauliString::with_ops(
                n,
                &[
                    (qa, crate::pauli::Pauli::from_index(idx / 4)),
                    (qb, crate::pauli::Pauli::from_index(idx % 4)),
                ],
            );
            *ev = inner(&prefix, &string.apply(&prefix)?)?;
        }
        for a in 0..k {
            for b in 0..k {
                let left = PauliString::new(vec![pairs[a].0, pairs[a].1]);
                let right = PauliString::new(vec![pairs[b].0, pairs[b].1]);
                let (phase, product) = pauli_product(&left, &right)?;
                let idx = 4 * product.op(0).index() + product.op(1).index();
                s[(a, b)] = phase * evs[idx];
            }
        }
    } else {
        let states: Vec<StateVector> = basis
            .elements()
            .iter()
            .map(|e| {
                let m = nalgebra::Matrix4::from_fn(|r, c| e[(r, c)]);
                let mut psi = prefix.clone();
                psi.apply_two_qubit(&m, (qa, qb))?;
                Ok(psi)
            })
            .collect::<Result<_>>()?;
        for a in 0..k {
            for b in a..k {
                let z = inner(&states[a], &states[b])?;
                s[(a, b)] = z;
                s[(b, a)] = z.conj();
            }
        }
    }
    counter.record_epoch(16, 1);
    Ok(s)
}

/// Add symmetric Gaussian noise of width σ to every unique element, drawing
/// sequentially from `rng`: the diagonal gets one real draw, each strict
/// upper element a real and an imaginary draw; the lower triangle mirrors.
pub fn add_gaussian_noise(
    h: &EffectiveHamiltonian,
    sigma: f64,
    rng: &mut impl Rng,
) -> Result<EffectiveHamiltonian> {
    if !(sigma >= 0.0) {
        return Err(Error::Invalid("noise width must be >= 0".into()));
    }
    let normal =
        Normal::new(0.0, sigma).map_err(|e| Error::Invalid(format!("bad noise width: {e}")))?;
    let k = h.k();
    let mut matrix = h.matrix().clone();
    for a in 0..k {
        for b in a..k {
            if a == b {
                matrix[(a, a)] += Complex64::new(normal.sample(rng), 0.0);
            } else {
                let z = Complex64::new(normal.sample(rng), normal.sample(rng));
                matrix[(a, b)] += z;
                matrix[(b, a)] = matrix[(a, b)].conj();
            }
        }
    }
    EffectiveHamiltonian::new(matrix, h.labels().to_vec(), h.slot())
}

/// Unbiased bounded-outcome estimator of a value v ∈ [-1, 1] from `samples`
/// binary measurements: 2·Binomial(s, (1+v)/2)/s − 1.
pub fn shot_estimate(true_value: f64, samples: u64, rng: &mut impl Rng) -> Result<f64> {
    if samples == 0 {
        return Err(Error::Invalid("shot count must be >= 1".into()));
    }
    if true_value.abs() > 1.0 + 1e-6 {
        return Err(Error::Invalid(format!(
            "measured component {true_value} lies outside [-1, 1]"
        )));
    }
    let p = ((1.0 + true_value.clamp(-1.0, 1.0)) / 2.0).clamp(0.0, 1.0);
    let dist =
        Binomial::new(samples, p).map_err(|e| Error::Invalid(format!("bad binomial: {e}")))?;
    let k = dist.sample(rng);
    Ok(2.0 * (k as f64) / (samples as f64) - 1.0)
}

fn coefficient_products(t: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
    let k = t.len();
    let mut re = Vec::with_capacity(k * (k + 1) / 2);
    let mut im = Vec::with_capacity(k * (k - 1) / 2);
    for a in 0..k {
        for b in a..k {
            let prod = t[a] * t[b].conj();
            re.push(prod.re);
            if a != b {
                im.push(prod.im);
            }
        }
    }
    (re, im)
}

const RANK_PROBE_SEED: u64 = 0x5261_6e6b;

/// Numerical rank of the coefficient-product function set
/// {Re(t_a t_b*)} ∪ {Im(t_a t_b*)} sampled at random parameter points.
///
/// This bounds how many independent linear equations energy samples can give
/// about H̃. Singular values above 1e-8 of the largest are counted.
pub fn rank_of_t(manifold: &dyn GateManifold, n_probe_points: usize, seed: u64) -> Result<usize> {
    let k = manifold.coefficient_count();
    let n_funcs = k * k;
    if n_probe_points < 2 * n_funcs {
        return Err(Error::Invalid(format!(
            "rank probe needs at least {} points for {} functions, got {n_probe_points}",
            2 * n_funcs,
            n_funcs
        )));
    }
    let mut rng = stream(seed, &[RANK_PROBE_SEED]);
    let mut m = DMatrix::zeros(n_funcs, n_probe_points);
    for p in 0..n_probe_points {
        let params: Vec<f64> = (0..manifold.param_count())
            .map(|_| rng.gen::<f64>() * std::f64::consts::PI)
            .collect();
        let t = manifold.coefficients_at(&params);
        let (re, im) = coefficient_products(&t);
        for (row, v) in re.iter().chain(im.iter()).enumerate() {
            m[(row, p)] = *v;
        }
    }
    Ok(linalg::numerical_rank(&m, 1e-8))
}

/// Default probe count for [`rank_of_t`]: three points per candidate function.
pub fn default_rank_probes(manifold: &dyn GateManifold) -> usize {
    3 * manifold.coefficient_count() * manifold.coefficient_count()
}

/// Least-squares solve for an H̃-compatible Hermitian matrix from energy
/// samples E(θ) = t(θ)† H̃ t(θ).
///
/// When the function set is rank deficient the minimum-norm solution is
/// returned; it still reproduces the energy functional everywhere even though
/// individual entries of H̃ are not pinned down.
pub fn reconstruct_from_energies(
    manifold: &dyn GateManifold,
    samples: &[(Vec<f64>, f64)],
) -> Result<DMatrix<Complex64>> {
    let k = manifold.coefficient_count();
    let n_unknowns = k * k;
    if samples.is_empty() {
        return Err(Error::Invalid("no energy samples".into()));
    }
    let rows = samples.len();
    let mut design = DMatrix::zeros(rows, n_unknowns);
    let mut rhs = DVector::zeros(rows);
    let n_re = k * (k + 1) / 2;
    for (r, (params, energy)) in samples.iter().enumerate() {
        let t = manifold.coefficients_at(params);
        let (re, im) = coefficient_products(&t);
        let mut col = 0;
        let mut idx = 0;
        for a in 0..k {
            for b in a..k {
                design[(r, col)] = if a == b { re[idx] } else { 2.0 * re[idx] };
                col += 1;
                idx += 1;
            }
        }
        for v in &im {
            design[(r, col)] = 2.0 * v;
            col += 1;
        }
        rhs[r] = *energy;
    }

    let achievable = rank_of_t(manifold, default_rank_probes(manifold), RANK_PROBE_SEED)?;
    let got = linalg::numerical_rank(&design, 1e-8);
    if got < achievable {
        return Err(Error::RankDeficient {
            got,
            need: achievable,
        });
    }

    let x = linalg::lstsq(&design, &rhs, 1e-10);
    let mut matrix = DMatrix::zeros(k, k);
    let mut idx = 0;
    for a in 0..k {
        for b in a..k {
            matrix[(a, b)] += Complex64::new(x[idx], 0.0);
            if a != b {
                matrix[(b, a)] += Complex64::new(x[idx], 0.0);
            }
            idx += 1;
        }
    }
    let _ = n_re;
    for a in 0..k {
        for b in (a + 1)..k {
            matrix[(a, b)] += Complex64::new(0.0, x[idx]);
            matrix[(b, a)] += Complex64::new(0.0, -x[idx]);
            idx += 1;
        }
    }
    Ok(matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::Circuit;
    use crate::gates::{GateFamily, RotationGate};
    use crate::pauli::{build_xxz, transition_element, Boundary, Pauli};
    use crate::rng::stream;

    fn random_params(circuit: &Circuit, seed: u64) -> ParamSet {
        let mut rng = stream(seed, &[1]);
        circuit
            .slots()
            .iter()
            .map(|s| s.family.random_params(&mut rng))
            .collect()
    }

    #[test]
    fn counter_tracks_the_product_formula() {
        let mut c = EvCounter::new();
        c.record_epoch(136, 29);
        c.record_epoch(136, 29);
        assert_eq!(c.n_epochs(), 2);
        assert_eq!(c.total(), 2 * 136 * 29);
    }

    #[test]
    #[should_panic(expected = "uniform")]
    fn counter_rejects_mixed_factors() {
        let mut c = EvCounter::new();
        c.record_epoch(136, 29);
        c.record_epoch(16, 29);
    }

    #[test]
    fn h_tilde_counts_unique_elements_per_term() {
        let circuit = Circuit::brick(4, 2, &GateFamily::GenericSu4).unwrap();
        let params = random_params(&circuit, 3);
        let h = build_xxz(4, Boundary::Open).unwrap();
        let basis = GateFamily::GenericSu4.basis();
        let mut counter = EvCounter::new();
        let ht = build_h_tilde(
            &circuit,
            &params,
            0,
            &h,
            &basis,
            &NoiseSpec::exact(),
            &mut counter,
        )
        .unwrap();
        assert_eq!(ht.k(), 16);
        assert_eq!(counter.total(), 136 * h.n_terms() as u64);

        let fam = GateFamily::FSim { reduced: true };
        let circuit = Circuit::brick(4, 2, &fam).unwrap();
        let params = random_params(&circuit, 4);
        let basis = fam.basis();
        let mut counter = EvCounter::new();
        let ht = build_h_tilde(
            &circuit,
            &params,
            1,
            &h,
            &basis,
            &NoiseSpec::exact(),
            &mut counter,
        )
        .unwrap();
        assert_eq!(ht.k(), 4);
        assert_eq!(counter.total(), 10 * h.n_terms() as u64);
    }

    #[test]
    fn h_tilde_diagonal_for_a_single_gate_and_field_hamiltonian() {
        // One gate on |00⟩ with H = Z on qubit 0: the identity substitution
        // gives +1, the X-on-qubit-0 substitution flips the spin to give -1.
        let circuit = Circuit::brick(2, 1, &GateFamily::GenericSu4).unwrap();
        let params = random_params(&circuit, 5);
        let h: PauliSumOperator = "1 ZI".parse().unwrap();
        let basis = GateFamily::GenericSu4.basis();
        let mut counter = EvCounter::new();
        let ht = build_h_tilde(
            &circuit,
            &params,
            0,
            &h,
            &basis,
            &NoiseSpec::exact(),
            &mut counter,
        )
        .unwrap();
        let index_of = |label: &str| ht.labels().iter().position(|l| l == label).unwrap();
        let ii = index_of("II");
        let xi = index_of("XI");
        assert!((ht.matrix()[(ii, ii)].re - 1.0).abs() < 1e-12);
        assert!((ht.matrix()[(xi, xi)].re - (-1.0)).abs() < 1e-12);
    }

    #[test]
    fn quadratic_form_reproduces_the_circuit_energy() {
        // The central identity: t† H̃ t equals ⟨ψ|H|ψ⟩ exactly.
        let families = [
            GateFamily::GenericSu4,
            GateFamily::FSim { reduced: false },
            GateFamily::FSim { reduced: true },
            GateFamily::Cu3 { reduced: false },
            GateFamily::Cu3 { reduced: true },
            GateFamily::U3xU3,
        ];
        for (fi, fam) in families.iter().enumerate() {
            let circuit = Circuit::brick(4, 2, fam).unwrap();
            let h = build_xxz(4, Boundary::Open).unwrap();
            let basis = fam.basis();
            for seed in 0..4u64 {
                let params = random_params(&circuit, 100 * fi as u64 + seed);
                let j = (seed as usize) % circuit.n_slots();
                let mut counter = EvCounter::new();
                let ht = build_h_tilde(
                    &circuit,
                    &params,
                    j,
                    &h,
                    &basis,
                    &NoiseSpec::exact(),
                    &mut counter,
                )
                .unwrap();
                let t = fam.coefficients(&params[j]).unwrap();
                let from_h_tilde = quadratic_form(ht.matrix(), &t.t);
                let psi = circuit.run(&params).unwrap();
                let direct = transition_element(&psi, &h, &psi).unwrap().re;
                assert!(
                    (from_h_tilde - direct).abs() < 1e-10,
                    "{}: {from_h_tilde} vs {direct}",
                    fam.name()
                );
            }
        }
    }

    #[test]
    fn s_tilde_pauli_route_matches_the_gram_route() {
        let fam = GateFamily::GenericSu4;
        let circuit = Circuit::brick(4, 3, &fam).unwrap();
        let params = random_params(&circuit, 7);
        let basis = fam.basis();
        // Same elements with the Pauli tagging stripped: forces the Gram path.
        let generic = OperatorBasis::new(basis.elements().to_vec(), basis.labels().to_vec());
        for j in [0, 3, circuit.n_slots() - 1] {
            let mut c1 = EvCounter::new();
            let mut c2 = EvCounter::new();
            let fast = build_s_tilde(&circuit, &params, j, &basis, &mut c1).unwrap();
            let slow = build_s_tilde(&circuit, &params, j, &generic, &mut c2).unwrap();
            assert!((&fast - &slow).iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-12);
            assert_eq!(c1.total(), 16);
            // diagonal entries are 1 for a Pauli basis
            for a in 0..16 {
                assert!((fast[(a, a)] - Complex64::ONE).norm() < 1e-12);
            }
            // positive semidefinite
            let (vals, _) = crate::linalg::hermitian_eigen(&fast);
            assert!(vals[0] > -1e-10);
        }
    }

    #[test]
    fn s_tilde_of_a_single_gate_circuit_is_the_vacuum_pauli_gram() {
        let fam = GateFamily::GenericSu4;
        let circuit = Circuit::brick(2, 1, &fam).unwrap();
        let params = random_params(&circuit, 8);
        let basis = fam.basis();
        let mut counter = EvCounter::new();
        let s = build_s_tilde(&circuit, &params, 0, &basis, &mut counter).unwrap();
        let zero = StateVector::zero_state(2);
        for a in 0..16 {
            for b in 0..16 {
                let pa = PauliString::new(vec![
                    Pauli::from_index(a / 4),
                    Pauli::from_index(a % 4),
                ]);
                let pb = PauliString::new(vec![
                    Pauli::from_index(b / 4),
                    Pauli::from_index(b % 4),
                ]);
                let direct = inner(&pa.apply(&zero).unwrap(), &pb.apply(&zero).unwrap()).unwrap();
                assert!((s[(a, b)] - direct).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn gaussian_noise_is_symmetric_and_sized_correctly() {
        let k = 4;
        let matrix = DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                Complex64::new(1.0 + i as f64, 0.0)
            } else if i < j {
                Complex64::new(0.3, -0.2)
            } else {
                Complex64::new(0.3, 0.2)
            }
        });
        let labels = (0..k).map(|i| format!("E{i}")).collect::<Vec<_>>();
        let h = EffectiveHamiltonian::new(matrix, labels, 0).unwrap();

        let mut rng = stream(50, &[]);
        let same = add_gaussian_noise(&h, 0.0, &mut rng).unwrap();
        assert!((same.matrix() - h.matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-15);

        let sigma = 0.05;
        let draws = 10_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..draws {
            let noisy = add_gaussian_noise(&h, sigma, &mut rng).unwrap();
            assert!(crate::linalg::hermitian_deviation(noisy.matrix()) == 0.0);
            let delta = noisy.matrix()[(0, 1)].re - h.matrix()[(0, 1)].re;
            sum += delta;
            sum_sq += delta * delta;
        }
        let var = sum_sq / draws as f64 - (sum / draws as f64).powi(2);
        let std = var.sqrt();
        assert!(
            (std - sigma).abs() < 0.05 * sigma,
            "sample std {std} vs {sigma}"
        );
    }

    #[test]
    fn shot_estimate_statistics() {
        let mut rng = stream(51, &[]);
        // deterministic at the boundary
        for _ in 0..100 {
            assert_eq!(shot_estimate(1.0, 7, &mut rng).unwrap(), 1.0);
        }
        // unbiased with variance (1 - v²)/s
        let (v, s) = (0.3, 100);
        let reps = 10_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..reps {
            let est = shot_estimate(v, s, &mut rng).unwrap();
            sum += est;
            sum_sq += est * est;
        }
        let mean = sum / reps as f64;
        let var = sum_sq / reps as f64 - mean * mean;
        let expected_var = (1.0 - v * v) / s as f64;
        let se = (expected_var / reps as f64).sqrt();
        assert!((mean - v).abs() < 3.0 * se, "mean {mean}");
        assert!((var - expected_var).abs() < 0.1 * expected_var, "var {var}");

        assert!(shot_estimate(1.5, 10, &mut rng).is_err());
        assert!(shot_estimate(0.0, 0, &mut rng).is_err());
    }

    #[test]
    fn shot_mode_h_tilde_is_hermitian_and_converges_with_samples() {
        let fam = GateFamily::GenericSu4;
        let circuit = Circuit::brick(3, 2, &fam).unwrap();
        let params = random_params(&circuit, 9);
        let h = build_xxz(3, Boundary::Open).unwrap();
        let basis = fam.basis();
        let mut counter = EvCounter::new();
        let exact = build_h_tilde(
            &circuit,
            &params,
            0,
            &h,
            &basis,
            &NoiseSpec::exact(),
            &mut counter,
        )
        .unwrap();
        let mut counter = EvCounter::new();
        let noisy = build_h_tilde(
            &circuit,
            &params,
            0,
            &h,
            &basis,
            &NoiseSpec::shots(100_000, 13),
            &mut counter,
        )
        .unwrap();
        assert_eq!(crate::linalg::hermitian_deviation(noisy.matrix()), 0.0);
        let dev = (noisy.matrix() - exact.matrix())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        // per-element std ~ sqrt(terms)/sqrt(100k) ~ 0.01
        assert!(dev < 0.1, "deviation {dev}");
        assert!(dev > 0.0);
    }

    #[test]
    fn noise_is_reproducible_for_a_fixed_seed() {
        let fam = GateFamily::GenericSu4;
        let circuit = Circuit::brick(3, 2, &fam).unwrap();
        let params = random_params(&circuit, 10);
        let h = build_xxz(3, Boundary::Open).unwrap();
        let basis = fam.basis();
        let spec = NoiseSpec::gaussian(0.01, 77);
        let mut c1 = EvCounter::new();
        let a = build_h_tilde(&circuit, &params, 1, &h, &basis, &spec, &mut c1).unwrap();
        let mut c2 = EvCounter::new();
        let b = build_h_tilde(&circuit, &params, 1, &h, &basis, &spec, &mut c2).unwrap();
        assert_eq!(a.matrix(), b.matrix());
        // same seed but later epoch draws differently
        let c = build_h_tilde(&circuit, &params, 1, &h, &basis, &spec, &mut c1).unwrap();
        assert_ne!(a.matrix(), c.matrix());
    }

    #[test]
    fn rank_of_rotation_gate_is_three() {
        let rot = RotationGate { axis: Pauli::X };
        let rank = rank_of_t(&rot, default_rank_probes(&rot), 1).unwrap();
        assert_eq!(rank, 3);
    }

    #[test]
    fn rank_of_reduced_fsim_is_bounded_by_dimension() {
        let fam = GateFamily::FSim { reduced: true };
        let rank = rank_of_t(&fam, default_rank_probes(&fam), 1).unwrap();
        assert!(rank <= 16, "rank {rank}");
    }

    #[test]
    fn rank_probe_rejects_too_few_points() {
        let rot = RotationGate { axis: Pauli::Z };
        assert!(rank_of_t(&rot, 5, 1).is_err());
    }

    #[test]
    fn reconstruction_predicts_held_out_energies() {
        let fam = GateFamily::GenericSu4;
        let mut rng = stream(52, &[]);
        // forward-generate energies from a random Hermitian matrix
        let raw = DMatrix::from_fn(16, 16, |_, _| {
            Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let h_true = (&raw + raw.adjoint()).scale(0.5);
        let sample_at = |rng: &mut rand_chacha::ChaCha8Rng| {
            let params: Vec<f64> = (0..15)
                .map(|_| rng.gen::<f64>() * std::f64::consts::PI)
                .collect();
            let t = fam.coefficients(&params).unwrap();
            let e = quadratic_form(&h_true, &t.t);
            (params, e)
        };
        let samples: Vec<(Vec<f64>, f64)> = (0..300).map(|_| sample_at(&mut rng)).collect();
        let rec = reconstruct_from_energies(&fam, &samples).unwrap();
        for _ in 0..50 {
            let (params, e) = sample_at(&mut rng);
            let t = fam.coefficients(&params).unwrap();
            let pred = quadratic_form(&rec, &t.t);
            assert!((pred - e).abs() < 1e-8, "predicted {pred}, actual {e}");
        }
    }

    #[test]
    fn reconstruction_of_a_constant_functional_is_constant() {
        let fam = GateFamily::FSim { reduced: true };
        let mut rng = stream(53, &[]);
        let c0 = 2.5;
        let samples: Vec<(Vec<f64>, f64)> = (0..80)
            .map(|_| {
                let params: Vec<f64> = (0..2)
                    .map(|_| rng.gen::<f64>() * std::f64::consts::PI)
                    .collect();
                (params, c0)
            })
            .collect();
        let rec = reconstruct_from_energies(&fam, &samples).unwrap();
        for _ in 0..20 {
            let params: Vec<f64> = (0..2)
                .map(|_| rng.gen::<f64>() * std::f64::consts::PI)
                .collect();
            let t = fam.coefficients(&params).unwrap();
            assert!((quadratic_form(&rec, &t.t) - c0).abs() < 1e-8);
        }
    }

    #[test]
    fn reconstruction_tolerates_small_noise_when_overdetermined() {
        let fam = GateFamily::FSim { reduced: true };
        let mut rng = stream(54, &[]);
        let raw = DMatrix::from_fn(4, 4, |_, _| {
            Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let h_true = (&raw + raw.adjoint()).scale(0.5);
        let rank = rank_of_t(&fam, default_rank_probes(&fam), 1).unwrap();
        let n_samples = 5 * rank;
        let normal = Normal::new(0.0, 1e-3).unwrap();
        let mut sample_at = |noise: bool, rng: &mut rand_chacha::ChaCha8Rng| {
            let params: Vec<f64> = (0..2)
                .map(|_| rng.gen::<f64>() * std::f64::consts::PI)
                .collect();
            let t = fam.coefficients(&params).unwrap();
            let mut e = quadratic_form(&h_true, &t.t);
            if noise {
                e += normal.sample(rng);
            }
            (params, e)
        };
        let samples: Vec<(Vec<f64>, f64)> =
            (0..n_samples).map(|_| sample_at(true, &mut rng)).collect();
        let rec = reconstruct_from_energies(&fam, &samples).unwrap();
        let mut sq = 0.0;
        let held_out = 50;
        for _ in 0..held_out {
            let (params, e) = sample_at(false, &mut rng);
            let t = fam.coefficients(&params).unwrap();
            sq += (quadratic_form(&rec, &t.t) - e).powi(2);
        }
        let rms = (sq / held_out as f64).sqrt();
        assert!(rms <= 5e-3, "held-out RMS {rms}");
    }

    #[test]
    fn reconstruction_rejects_rank_deficient_sample_sets() {
        let fam = GateFamily::FSim { reduced: true };
        let mut rng = stream(55, &[]);
        // all samples at the same point: rank 1
        let params: Vec<f64> = (0..2)
            .map(|_| rng.gen::<f64>() * std::f64::consts::PI)
            .collect();
        let samples: Vec<(Vec<f64>, f64)> = (0..40).map(|_| (params.clone(), 1.0)).collect();
        assert!(matches!(
            reconstruct_from_energies(&fam, &samples),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn noise_mode_parsing() {
        assert_eq!("exact".parse::<NoiseMode>().unwrap(), NoiseMode::Exact);
        assert_eq!(
            "gaussian:0.01".parse::<NoiseMode>().unwrap(),
            NoiseMode::Gaussian { sigma: 0.01 }
        );
        assert_eq!(
            "shots:100".parse::<NoiseMode>().unwrap(),
            NoiseMode::Shots { samples: 100 }
        );
        assert!("shots:0".parse::<NoiseMode>().is_err());
        assert!("loud".parse::<NoiseMode>().is_err());
        for mode in ["exact", "gaussian:0.001", "shots:128"] {
            assert_eq!(mode.parse::<NoiseMode>().unwrap().to_string(), mode);
        }
    }

    #[test]
    fn dump_text_is_row_major_re_im() {
        let matrix = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(1.0, 0.0),
                Complex64::new(0.5, -0.25),
                Complex64::new(0.5, 0.25),
                Complex64::new(2.0, 0.0),
            ],
        );
        let h = EffectiveHamiltonian::new(matrix, vec!["a".into(), "b".into()], 3).unwrap();
        let text = h.dump_text();
        assert_eq!(text, "1,0 0.5,-0.25\n0.5,0.25 2,0\n");
    }
}
