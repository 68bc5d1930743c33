//! Full optimization drivers: UBOS sweeps, a gradient-descent baseline,
//! TUBOS imaginary-time stepping, and barren-plateau statistics.

use num_complex::Complex64;
use rand::seq::SliceRandom;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::circuit::{Circuit, ParamSet};
use crate::effective::{
    build_h_tilde, shot_estimate, EvCounter, NoiseMode, NoiseSpec,
};
use crate::error::{Error, Result};
use crate::gates::OperatorBasis;
use crate::optimize::{maximize_overlap, minimize_gate, OptimizerConfig};
use crate::pauli::PauliSumOperator;
use crate::rng::{derive_seed, stream};
use crate::state::{fidelity, inner, StateVector};

const SHUFFLE_TAG: u64 = 0x7368_7566;

/// Configuration of a UBOS optimization run.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub max_sweeps: usize,
    /// Stop when the sweep-over-sweep energy change drops below this.
    pub energy_tolerance: f64,
    /// Reshuffle the gate update order every sweep.
    pub shuffle_order: bool,
    pub noise: NoiseSpec,
    pub optimizer: OptimizerConfig,
    pub record_fidelity: bool,
    /// Drives the sweep shuffle; optimizer and noise draws key off their own
    /// seeds.
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            max_sweeps: 50,
            energy_tolerance: 1e-8,
            shuffle_order: true,
            noise: NoiseSpec::exact(),
            optimizer: OptimizerConfig::default(),
            record_fidelity: false,
            seed: 0,
        }
    }
}

/// One recorded point of an optimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateRow {
    pub update: u64,
    pub cumulative_evs: u64,
    pub energy: f64,
    pub fidelity: Option<f64>,
}

/// Energies, costs and final parameters of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub rows: Vec<UpdateRow>,
    pub final_params: ParamSet,
    pub converged: bool,
}

impl RunRecord {
    pub fn final_energy(&self) -> f64 {
        self.rows.last().expect("runs record at least one row").energy
    }

    /// First cumulative expectation-value count at which the energy reaches
    /// `target` or below.
    pub fn first_crossing(&self, target: f64) -> Option<u64> {
        self.rows
            .iter()
            .find(|r| r.energy <= target)
            .map(|r| r.cumulative_evs)
    }
}

/// Uniform [0, π) initial parameters for every slot.
pub fn random_init(circuit: &Circuit, seed: u64) -> ParamSet {
    let mut rng = stream(seed, &[0x696e_6974]);
    circuit
        .slots()
        .iter()
        .map(|s| s.family.random_params(&mut rng))
        .collect()
}


/// Outcome of one gate update inside a sweep.
#[derive(Debug, Clone)]
pub struct GateUpdate {
    pub slot: usize,
    /// Exact circuit energy after committing the update.
    pub energy: f64,
    pub fidelity: Option<f64>,
    pub cumulative_evs: u64,
}

/// One UBOS sweep: every slot updated once in (optionally shuffled) order.
/// Each update builds H̃ under the configured noise model, minimizes the gate
/// energy warm-started at the current parameters, and commits the winner.
pub fn ubos_sweep(
    circuit: &Circuit,
    params: &mut ParamSet,
    hamiltonian: &PauliSumOperator,
    cfg: &SweepConfig,
    counter: &mut EvCounter,
    sweep_index: u64,
    ground: Option<&StateVector>,
) -> Result<Vec<GateUpdate>> {
    circuit.check_params(params)?;
    let k_gates = circuit.n_slots();
    let mut order: Vec<usize> = (0..k_gates).collect();
    if cfg.shuffle_order {
        let mut rng = stream(cfg.seed, &[SHUFFLE_TAG, sweep_index]);
        order.shuffle(&mut rng);
    }
    let bases: Vec<OperatorBasis> = circuit.slots().iter().map(|s| s.family.basis()).collect();
    let mut updates = Vec::with_capacity(k_gates);
    for &j in &order {
        let h_tilde = build_h_tilde(
            circuit,
            params,
            j,
            hamiltonian,
            &bases[j],
            &cfg.noise,
            counter,
        )?;
        let opt_cfg = cfg
            .optimizer
            .with_seed(derive_seed(cfg.optimizer.seed, &[sweep_index, j as u64]));
        let result = minimize_gate(&h_tilde, &circuit.slot(j).family, &params[j], &opt_cfg)?;
        params[j] = result.params;
        let psi = circuit.run(params)?;
        let energy = hamiltonian.energy(&psi)?;
        let fid = ground.map(|g| fidelity(&psi, g)).transpose()?;
        updates.push(GateUpdate {
            slot: j,
            energy,
            fidelity: fid,
            cumulative_evs: counter.total(),
        });
    }
    Ok(updates)
}

const PLATEAU_WINDOW: usize = 5;

/// UBOS optimization until the per-sweep energy change drops below the
/// tolerance or the sweep budget runs out; noisy runs also stop once the best
/// energy has not improved for five sweeps.
pub fn run_vqe(
    circuit: &Circuit,
    init_params: &ParamSet,
    hamiltonian: &PauliSumOperator,
    cfg: &SweepConfig,
) -> Result<RunRecord> {
    circuit.check_params(init_params)?;
    let ground = if cfg.record_fidelity {
        Some(hamiltonian.ground_state()?.1)
    } else {
        None
    };
    let mut params = init_params.clone();
    let mut counter = EvCounter::new();
    let psi0 = circuit.run(&params)?;
    let mut rows = vec![UpdateRow {
        update: 0,
        cumulative_evs: 0,
        energy: hamiltonian.energy(&psi0)?,
        fidelity: ground
            .as_ref()
            .map(|g| fidelity(&psi0, g))
            .transpose()?,
    }];
    let mut prev_energy = rows[0].energy;
    let mut best_energy = prev_energy;
    let mut stale_sweeps = 0usize;
    let mut update_index = 0u64;
    let mut converged = false;

    for sweep in 0..cfg.max_sweeps {
        let updates = ubos_sweep(
            circuit,
            &mut params,
            hamiltonian,
            cfg,
            &mut counter,
            sweep as u64,
            ground.as_ref(),
        )?;
        for u in &updates {
            update_index += 1;
            rows.push(UpdateRow {
                update: update_index,
                cumulative_evs: u.cumulative_evs,
                energy: u.energy,
                fidelity: u.fidelity,
            });
        }
        let sweep_end = rows.last().expect("sweep recorded rows").energy;
        if (prev_energy - sweep_end).abs() < cfg.energy_tolerance {
            converged = true;
            break;
        }
        prev_energy = sweep_end;
        if !cfg.noise.is_exact() {
            let sweep_best = updates
                .iter()
                .map(|u| u.energy)
                .fold(f64::INFINITY, f64::min);
            if sweep_best < best_energy - 1e-12 {
                best_energy = sweep_best;
                stale_sweeps = 0;
            } else {
                stale_sweeps += 1;
                if stale_sweeps >= PLATEAU_WINDOW {
                    break;
                }
            }
        }
    }
    Ok(RunRecord {
        rows,
        final_params: params,
        converged,
    })
}

/// Configuration of the gradient-descent baseline.
#[derive(Debug, Clone)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub max_steps: usize,
    pub energy_tolerance: f64,
    pub noise: NoiseSpec,
    pub record_fidelity: bool,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            max_steps: 2000,
            energy_tolerance: 1e-8,
            noise: NoiseSpec::exact(),
            record_fidelity: false,
        }
    }
}

/// Per-gate transition elements g_j^a = ⟨Ψ|H|ψ_j^a⟩ for every slot at once.
///
/// One forward pass stores the prefix states, one backward pass drags
/// (suffix)†H|Ψ⟩ through the adjoint gates, so the whole set costs O(K)
/// gate applications instead of O(K²).
fn transition_elements(
    circuit: &Circuit,
    params: &ParamSet,
    hamiltonian: &PauliSumOperator,
    bases: &[OperatorBasis],
    noise: &NoiseSpec,
    epoch: u64,
) -> Result<Vec<Vec<Complex64>>> {
    circuit.check_params(params)?;
    let k_gates = circuit.n_slots();
    let mut prefixes = Vec::with_capacity(k_gates + 1);
    let mut psi = StateVector::zero_state(circuit.n_qubits());
    prefixes.push(psi.clone());
    for (slot, p) in circuit.slots().iter().zip(params) {
        psi.apply_two_qubit(&slot.family.unitary4(p)?, slot.qubits)?;
        prefixes.push(psi.clone());
    }
    let psi = prefixes[k_gates].clone();

    let element = |chi: &StateVector, j: usize, a: usize| -> Result<Complex64> {
        let e = &bases[j].elements()[a];
        let m = nalgebra::Matrix4::from_fn(|r, c| e[(r, c)]);
        let mut w = prefixes[j].clone();
        w.apply_two_qubit(&m, circuit.slot(j).qubits)?;
        inner(chi, &w)
    };

    let mut out: Vec<Vec<Complex64>> = vec![Vec::new(); k_gates];
    match noise.mode {
        NoiseMode::Exact | NoiseMode::Gaussian { .. } => {
            let mut chi = hamiltonian.apply(&psi)?;
            for j in (0..k_gates).rev() {
                let k = bases[j].len();
                let mut row = Vec::with_capacity(k);
                for a in 0..k {
                    let mut z = element(&chi, j, a)?;
                    if let NoiseMode::Gaussian { sigma } = noise.mode {
                        let mut rng = stream(noise.seed, &[epoch, j as u64, a as u64]);
                        let normal = Normal::new(0.0, sigma)
                            .map_err(|e| Error::Invalid(format!("bad noise width: {e}")))?;
                        z += Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
                    }
                    row.push(z);
                }
                out[j] = row;
                let slot = circuit.slot(j);
                let u = slot.family.unitary4(&params[j])?;
                chi.apply_two_qubit(&u.adjoint(), slot.qubits)?;
            }
        }
        NoiseMode::Shots { samples } => {
            // one adjoint-propagated state per Hamiltonian term
            let mut chis: Vec<StateVector> = hamiltonian
                .terms()
                .iter()
                .map(|t| t.string.apply(&psi))
                .collect::<Result<_>>()?;
            for j in (0..k_gates).rev() {
                let k = bases[j].len();
                let mut row = vec![Complex64::ZERO; k];
                for (ti, term) in hamiltonian.terms().iter().enumerate() {
                    for (a, item) in row.iter_mut().enumerate() {
                        let z = element(&chis[ti], j, a)?;
                        let mut rng = stream(
                            noise.seed,
                            &[epoch, j as u64, a as u64, ti as u64],
                        );
                        let re = shot_estimate(z.re, samples, &mut rng)?;
                        let im = shot_estimate(z.im, samples, &mut rng)?;
                        *item += Complex64::new(re, im) * term.coefficient;
                    }
                }
                out[j] = row;
                let slot = circuit.slot(j);
                let u = slot.family.unitary4(&params[j])?.adjoint();
                for chi in &mut chis {
                    chi.apply_two_qubit(&u, slot.qubits)?;
                }
            }
        }
    }
    Ok(out)
}

/// Energy gradient per slot parameter: dE/dθ_i = 2 Re(Σ_a dt_a/dθ_i · g_j^a).
pub fn sgd_gradients(
    circuit: &Circuit,
    params: &ParamSet,
    hamiltonian: &PauliSumOperator,
    noise: &NoiseSpec,
    epoch: u64,
) -> Result<Vec<Vec<f64>>> {
    let bases: Vec<OperatorBasis> = circuit.slots().iter().map(|s| s.family.basis()).collect();
    let elements = transition_elements(circuit, params, hamiltonian, &bases, noise, epoch)?;
    let mut grads = Vec::with_capacity(circuit.n_slots());
    for (j, slot) in circuit.slots().iter().enumerate() {
        let dt = slot.family.coefficient_gradients(&params[j])?;
        let g = &elements[j];
        let grad: Vec<f64> = (0..slot.family.param_count())
            .map(|i| {
                let s: Complex64 = (0..g.len()).map(|a| dt[(a, i)] * g[a]).sum();
                2.0 * s.re
            })
            .collect();
        grads.push(grad);
    }
    Ok(grads)
}

/// One simultaneous gradient step on all gates. The epoch for the counter and
/// noise keys is the counter's current epoch count.
pub fn sgd_step(
    circuit: &Circuit,
    params: &mut ParamSet,
    hamiltonian: &PauliSumOperator,
    learning_rate: f64,
    noise: &NoiseSpec,
    counter: &mut EvCounter,
) -> Result<()> {
    let epoch = counter.n_epochs();
    let grads = sgd_gradients(circuit, params, hamiltonian, noise, epoch)?;
    for (p, g) in params.iter_mut().zip(&grads) {
        for (pi, gi) in p.iter_mut().zip(g) {
            *pi -= learning_rate * gi;
        }
    }
    let meas_per_step: u64 = circuit
        .slots()
        .iter()
        .map(|s| s.family.basis().len() as u64)
        .sum();
    counter.record_epoch(meas_per_step, hamiltonian.n_terms() as u64);
    Ok(())
}

/// Gradient-descent baseline: simultaneous updates of all gates from
/// gradients evaluated at the pre-step parameters.
pub fn run_sgd(
    circuit: &Circuit,
    init_params: &ParamSet,
    hamiltonian: &PauliSumOperator,
    cfg: &SgdConfig,
) -> Result<RunRecord> {
    circuit.check_params(init_params)?;
    let ground = if cfg.record_fidelity {
        Some(hamiltonian.ground_state()?.1)
    } else {
        None
    };
    let mut params = init_params.clone();
    let mut counter = EvCounter::new();
    let psi0 = circuit.run(&params)?;
    let mut rows = vec![UpdateRow {
        update: 0,
        cumulative_evs: 0,
        energy: hamiltonian.energy(&psi0)?,
        fidelity: ground
            .as_ref()
            .map(|g| fidelity(&psi0, g))
            .transpose()?,
    }];
    let mut prev = rows[0].energy;
    let mut converged = false;
    for step in 0..cfg.max_steps {
        sgd_step(
            circuit,
            &mut params,
            hamiltonian,
            cfg.learning_rate,
            &cfg.noise,
            &mut counter,
        )?;
        let psi = circuit.run(&params)?;
        let energy = hamiltonian.energy(&psi)?;
        rows.push(UpdateRow {
            update: step as u64 + 1,
            cumulative_evs: counter.total(),
            energy,
            fidelity: ground.as_ref().map(|g| fidelity(&psi, g)).transpose()?,
        });
        if (prev - energy).abs() < cfg.energy_tolerance {
            converged = true;
            break;
        }
        prev = energy;
    }
    Ok(RunRecord {
        rows,
        final_params: params,
        converged,
    })
}

/// Configuration of a TUBOS / TSGD time-evolution run.
#[derive(Debug, Clone)]
pub struct TimeEvoConfig {
    /// β/n: the strength of one linear imaginary-time factor (1 - β/n·H).
    pub beta_over_n: f64,
    pub n_steps: usize,
    /// Sweeps over all gates within one time step.
    pub r: usize,
    pub noise: NoiseSpec,
    pub optimizer: OptimizerConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TubosRow {
    pub step: u64,
    pub cumulative_evs: u64,
    /// Energy of the variational state after the step.
    pub energy: f64,
    /// Fidelity against the normalized per-step target (1 - β/n·H)|Ψ_prev⟩.
    pub target_fidelity: f64,
    /// Energy of the exact reference trajectory, the repeated application of
    /// (1 - β/n·H) to the initial variational state.
    pub reference_energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TubosRecord {
    pub rows: Vec<TubosRow>,
    pub final_params: ParamSet,
}

impl TubosRecord {
    pub fn final_energy(&self) -> f64 {
        self.rows.last().expect("at least one step").energy
    }
}

fn time_evo_target(
    hamiltonian: &PauliSumOperator,
    beta_over_n: f64,
    psi: &StateVector,
) -> Result<StateVector> {
    let h_psi = hamiltonian.apply(psi)?;
    psi.add_scaled(Complex64::new(-beta_over_n, 0.0), &h_psi)
}

/// Overlap components v_a = ⟨ψ_j^a(current)|(1 - β/n·H)|Ψ_prev⟩ for slot j.
fn overlap_components(
    circuit: &Circuit,
    params: &ParamSet,
    j: usize,
    basis: &OperatorBasis,
    chi: &StateVector,
    shots_context: Option<(&PauliSumOperator, &StateVector, f64, u64)>,
    noise: &NoiseSpec,
    epoch: u64,
) -> Result<Vec<Complex64>> {
    let states = circuit.derivative_states(params, j, basis)?;
    match noise.mode {
        NoiseMode::Exact => states.iter().map(|s| inner(s, chi)).collect(),
        NoiseMode::Gaussian { sigma } => {
            let normal = Normal::new(0.0, sigma)
                .map_err(|e| Error::Invalid(format!("bad noise width: {e}")))?;
            states
                .iter()
                .enumerate()
                .map(|(a, s)| {
                    let mut z = inner(s, chi)?;
                    let mut rng = stream(noise.seed, &[epoch, j as u64, a as u64]);
                    z += Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
                    Ok(z)
                })
                .collect()
        }
        NoiseMode::Shots { samples } => {
            let (hamiltonian, psi_prev, beta_over_n, _) = shots_context
                .ok_or_else(|| Error::Invalid("shot noise needs the Hamiltonian context".into()))?;
            states
                .iter()
                .enumerate()
                .map(|(a, s)| {
                    let mut rng = stream(noise.seed, &[epoch, j as u64, a as u64]);
                    let z0 = inner(s, psi_prev)?;
                    let mut v = Complex64::new(
                        shot_estimate(z0.re, samples, &mut rng)?,
                        shot_estimate(z0.im, samples, &mut rng)?,
                    );
                    for term in hamiltonian.terms() {
                        let w = term.string.apply(psi_prev)?;
                        let zt = inner(s, &w)?;
                        let est = Complex64::new(
                            shot_estimate(zt.re, samples, &mut rng)?,
                            shot_estimate(zt.im, samples, &mut rng)?,
                        );
                        v -= est * (beta_over_n * term.coefficient);
                    }
                    Ok(v)
                })
                .collect()
        }
    }
}

/// One TUBOS time step: starting from the previous parameters, sweep the
/// gates `r` times, replacing each gate by the overlap maximizer against the
/// fixed target (1 - β/n·H)|Ψ_prev⟩.
pub fn tubos_step(
    circuit: &Circuit,
    prev_params: &ParamSet,
    hamiltonian: &PauliSumOperator,
    cfg: &TimeEvoConfig,
    counter: &mut EvCounter,
    step_index: u64,
) -> Result<ParamSet> {
    circuit.check_params(prev_params)?;
    let psi_prev = circuit.run(prev_params)?;
    let chi = time_evo_target(hamiltonian, cfg.beta_over_n, &psi_prev)?;
    let bases: Vec<OperatorBasis> = circuit.slots().iter().map(|s| s.family.basis()).collect();
    let mut params = prev_params.clone();
    let n_ops = hamiltonian.n_terms() as u64 + 1;
    for sweep in 0..cfg.r {
        for j in 0..circuit.n_slots() {
            let epoch = counter.n_epochs();
            let v = overlap_components(
                circuit,
                &params,
                j,
                &bases[j],
                &chi,
                Some((hamiltonian, &psi_prev, cfg.beta_over_n, epoch)),
                &cfg.noise,
                epoch,
            )?;
            counter.record_epoch(bases[j].len() as u64, n_ops);
            let opt_cfg = cfg.optimizer.with_seed(derive_seed(
                cfg.optimizer.seed,
                &[step_index, sweep as u64, j as u64],
            ));
            let result = maximize_overlap(&v, &circuit.slot(j).family, &params[j], &opt_cfg)?;
            params[j] = result.params;
        }
    }
    Ok(params)
}

/// One TSGD time step: `r` sweeps of simultaneous fixed-step ascent on
/// |⟨Ψ(θ)|(1 - β/n·H)|Ψ_prev⟩|, using the same measured components as TUBOS.
pub fn tsgd_step(
    circuit: &Circuit,
    prev_params: &ParamSet,
    hamiltonian: &PauliSumOperator,
    cfg: &TimeEvoConfig,
    learning_rate: f64,
    counter: &mut EvCounter,
) -> Result<ParamSet> {
    circuit.check_params(prev_params)?;
    let psi_prev = circuit.run(prev_params)?;
    let chi = time_evo_target(hamiltonian, cfg.beta_over_n, &psi_prev)?;
    let bases: Vec<OperatorBasis> = circuit.slots().iter().map(|s| s.family.basis()).collect();
    let mut params = prev_params.clone();
    let n_ops = hamiltonian.n_terms() as u64 + 1;
    for _sweep in 0..cfg.r {
        let mut grads = Vec::with_capacity(circuit.n_slots());
        for j in 0..circuit.n_slots() {
            let epoch = counter.n_epochs();
            let v = overlap_components(
                circuit,
                &params,
                j,
                &bases[j],
                &chi,
                Some((hamiltonian, &psi_prev, cfg.beta_over_n, epoch)),
                &cfg.noise,
                epoch,
            )?;
            counter.record_epoch(bases[j].len() as u64, n_ops);
            let slot = circuit.slot(j);
            let t = slot.family.coefficients(&params[j])?;
            let f: Complex64 = t.t.iter().zip(&v).map(|(ti, vi)| ti.conj() * vi).sum();
            let dt = slot.family.coefficient_gradients(&params[j])?;
            let grad: Vec<f64> = if f.norm() < 1e-14 {
                vec![0.0; slot.family.param_count()]
            } else {
                (0..slot.family.param_count())
                    .map(|i| {
                        let s: Complex64 =
                            (0..v.len()).map(|a| dt[(a, i)].conj() * v[a]).sum();
                        (f.conj() * s).re / f.norm()
                    })
                    .collect()
            };
            grads.push(grad);
        }
        for (p, g) in params.iter_mut().zip(&grads) {
            for (pi, gi) in p.iter_mut().zip(g) {
                *pi += learning_rate * gi;
            }
        }
    }
    Ok(params)
}

/// Which per-step update rule a time-evolution run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeEvoMethod {
    Tubos,
    /// Fixed-step gradient ascent with the given learning rate.
    Tsgd(u64),
}

/// Imaginary-time evolution: n_steps sequential steps, each tracked against
/// the exact normalized per-step target; the exact reference trajectory
/// (repeated application of (1 - β/n·H) to the initial state) is recorded
/// alongside.
pub fn run_time_evolution(
    circuit: &Circuit,
    init_params: &ParamSet,
    hamiltonian: &PauliSumOperator,
    cfg: &TimeEvoConfig,
    method: TimeEvoMethod,
) -> Result<TubosRecord> {
    circuit.check_params(init_params)?;
    if cfg.beta_over_n < 0.0 {
        return Err(Error::Invalid("beta/n must be >= 0".into()));
    }
    const TSGD_LR: f64 = 0.05;
    let mut params = init_params.clone();
    let mut counter = EvCounter::new();
    let mut reference = circuit.run(&params)?;
    let mut rows = Vec::with_capacity(cfg.n_steps);
    for step in 0..cfg.n_steps {
        let psi_prev = circuit.run(&params)?;
        let target = time_evo_target(hamiltonian, cfg.beta_over_n, &psi_prev)?.normalized();
        params = match method {
            TimeEvoMethod::Tubos => {
                tubos_step(circuit, &params, hamiltonian, cfg, &mut counter, step as u64)?
            }
            TimeEvoMethod::Tsgd(_) => {
                tsgd_step(circuit, &params, hamiltonian, cfg, TSGD_LR, &mut counter)?
            }
        };
        let psi = circuit.run(&params)?;
        reference = time_evo_target(hamiltonian, cfg.beta_over_n, &reference)?.normalized();
        rows.push(TubosRow {
            step: step as u64 + 1,
            cumulative_evs: counter.total(),
            energy: hamiltonian.energy(&psi)?,
            target_fidelity: fidelity(&psi, &target)?,
            reference_energy: hamiltonian.energy(&reference)?,
        });
    }
    Ok(TubosRecord {
        rows,
        final_params: params,
    })
}

pub fn run_tubos(
    circuit: &Circuit,
    init_params: &ParamSet,
    hamiltonian: &PauliSumOperator,
    cfg: &TimeEvoConfig,
) -> Result<TubosRecord> {
    run_time_evolution(circuit, init_params, hamiltonian, cfg, TimeEvoMethod::Tubos)
}

/// Barren-plateau statistics configuration.
#[derive(Debug, Clone)]
pub struct BarrenConfig {
    pub site_list: Vec<usize>,
    pub layers: usize,
    pub n_ansatze: usize,
    /// Gaussian widths applied to matrix elements / gradient components.
    pub noise_levels: Vec<f64>,
    pub optimizer: OptimizerConfig,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for BarrenConfig {
    fn default() -> Self {
        Self {
            site_list: vec![4, 8, 12],
            layers: 7,
            n_ansatze: 100,
            noise_levels: vec![1e-3, 1e-2, 1e-1],
            optimizer: OptimizerConfig::default(),
            learning_rate: 0.05,
            seed: 0,
        }
    }
}

/// Per-size statistics of the barren-plateau experiment.
#[derive(Debug, Clone)]
pub struct BarrenRow {
    pub n_sites: usize,
    /// Middle-gate slot used for all statistics.
    pub slot: usize,
    /// Variance of each gradient component over the random ansatze.
    pub grad_variance: Vec<f64>,
    pub grad_mean_abs: Vec<f64>,
    /// Mean energy change of a single exact UBOS step on the middle gate.
    pub ubos_delta_exact: f64,
    /// Mean energy change per Gaussian noise level.
    pub ubos_delta_noisy: Vec<f64>,
    pub sgd_delta_exact: f64,
    pub sgd_delta_noisy: Vec<f64>,
}

struct AnsatzOutcome {
    gradient: Vec<f64>,
    ubos_delta: f64,
    ubos_delta_noisy: Vec<f64>,
    sgd_delta: f64,
    sgd_delta_noisy: Vec<f64>,
}

fn barren_one_ansatz(
    circuit: &Circuit,
    hamiltonian: &PauliSumOperator,
    mid: usize,
    cfg: &BarrenConfig,
    n_sites: usize,
    ansatz: u64,
) -> Result<AnsatzOutcome> {
    let fam = circuit.slot(mid).family.clone();
    let basis = fam.basis();
    let params = random_init(circuit, derive_seed(cfg.seed, &[n_sites as u64, ansatz]));
    let psi = circuit.run(&params)?;
    let e0 = hamiltonian.energy(&psi)?;

    // gradient of the middle gate from its transition elements
    let h_psi = hamiltonian.apply(&psi)?;
    let states = circuit.derivative_states(&params, mid, &basis)?;
    let g: Vec<Complex64> = states
        .iter()
        .map(|s| inner(&h_psi, s))
        .collect::<Result<_>>()?;
    let dt = fam.coefficient_gradients(&params[mid])?;
    let gradient: Vec<f64> = (0..fam.param_count())
        .map(|i| {
            let s: Complex64 = (0..g.len()).map(|a| dt[(a, i)] * g[a]).sum();
            2.0 * s.re
        })
        .collect();

    let exact_energy_with = |gate_params: &[f64]| -> Result<f64> {
        let mut p = params.clone();
        p[mid] = gate_params.to_vec();
        hamiltonian.energy(&circuit.run(&p)?)
    };

    // single UBOS step, exact and per noise level
    let opt_seed = derive_seed(cfg.seed, &[n_sites as u64, ansatz, 1]);
    let mut counter = EvCounter::new();
    let h_exact = build_h_tilde(
        circuit,
        &params,
        mid,
        hamiltonian,
        &basis,
        &NoiseSpec::exact(),
        &mut counter,
    )?;
    let res = minimize_gate(
        &h_exact,
        &fam,
        &params[mid],
        &cfg.optimizer.with_seed(opt_seed),
    )?;
    let ubos_delta = exact_energy_with(&res.params)? - e0;

    let mut ubos_delta_noisy = Vec::with_capacity(cfg.noise_levels.len());
    for (si, &sigma) in cfg.noise_levels.iter().enumerate() {
        let noise = NoiseSpec::gaussian(
            sigma,
            derive_seed(cfg.seed, &[n_sites as u64, ansatz, 2, si as u64]),
        );
        let mut counter = EvCounter::new();
        let h_noisy = build_h_tilde(circuit, &params, mid, hamiltonian, &basis, &noise, &mut counter)?;
        let res = minimize_gate(
            &h_noisy,
            &fam,
            &params[mid],
            &cfg.optimizer.with_seed(derive_seed(opt_seed, &[si as u64])),
        )?;
        ubos_delta_noisy.push(exact_energy_with(&res.params)? - e0);
    }

    // single-gate gradient step, exact and with noisy elements
    let step_from = |elements: &[Complex64]| -> Result<f64> {
        let grad: Vec<f64> = (0..fam.param_count())
            .map(|i| {
                let s: Complex64 = (0..elements.len()).map(|a| dt[(a, i)] * elements[a]).sum();
                2.0 * s.re
            })
            .collect();
        let stepped: Vec<f64> = params[mid]
            .iter()
            .zip(&grad)
            .map(|(p, gi)| p - cfg.learning_rate * gi)
            .collect();
        exact_energy_with(&stepped)
    };
    let sgd_delta = step_from(&g)? - e0;
    let mut sgd_delta_noisy = Vec::with_capacity(cfg.noise_levels.len());
    for (si, &sigma) in cfg.noise_levels.iter().enumerate() {
        let normal =
            Normal::new(0.0, sigma).map_err(|e| Error::Invalid(format!("bad width: {e}")))?;
        let noisy: Vec<Complex64> = g
            .iter()
            .enumerate()
            .map(|(a, z)| {
                let mut rng = stream(
                    cfg.seed,
                    &[0x6772, n_sites as u64, ansatz, si as u64, a as u64],
                );
                z + Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng))
            })
            .collect();
        sgd_delta_noisy.push(step_from(&noisy)? - e0);
    }

    Ok(AnsatzOutcome {
        gradient,
        ubos_delta,
        ubos_delta_noisy,
        sgd_delta,
        sgd_delta_noisy,
    })
}

/// Gradient variance and single-step energy changes at a middle gate, over
/// random ansatze, for each system size.
pub fn barren_plateau_experiment(
    cfg: &BarrenConfig,
    boundary: crate::pauli::Boundary,
) -> Result<Vec<BarrenRow>> {
    let mut rows = Vec::with_capacity(cfg.site_list.len());
    for &n_sites in &cfg.site_list {
        let fam = crate::gates::GateFamily::GenericSu4;
        let circuit = Circuit::brick(n_sites, cfg.layers, &fam)?;
        let hamiltonian = crate::pauli::build_xxz(n_sites, boundary)?;
        let mid = circuit.n_slots() / 2;
        let outcomes: Vec<AnsatzOutcome> = (0..cfg.n_ansatze as u64)
            .into_par_iter()
            .map(|ansatz| barren_one_ansatz(&circuit, &hamiltonian, mid, cfg, n_sites, ansatz))
            .collect::<Result<_>>()?;

        let p = fam.param_count();
        let n = outcomes.len() as f64;
        let mut grad_variance = vec![0.0; p];
        let mut grad_mean_abs = vec![0.0; p];
        for i in 0..p {
            let mean = outcomes.iter().map(|o| o.gradient[i]).sum::<f64>() / n;
            grad_variance[i] = outcomes
                .iter()
                .map(|o| (o.gradient[i] - mean).powi(2))
                .sum::<f64>()
                / n;
            grad_mean_abs[i] = outcomes.iter().map(|o| o.gradient[i].abs()).sum::<f64>() / n;
        }
        let mean_of = |f: &dyn Fn(&AnsatzOutcome) -> f64| -> f64 {
            outcomes.iter().map(|o| f(o)).sum::<f64>() / n
        };
        let ubos_delta_exact = mean_of(&|o| o.ubos_delta);
        let sgd_delta_exact = mean_of(&|o| o.sgd_delta);
        let mut ubos_delta_noisy = Vec::new();
        let mut sgd_delta_noisy = Vec::new();
        for si in 0..cfg.noise_levels.len() {
            ubos_delta_noisy.push(mean_of(&|o| o.ubos_delta_noisy[si]));
            sgd_delta_noisy.push(mean_of(&|o| o.sgd_delta_noisy[si]));
        }
        rows.push(BarrenRow {
            n_sites,
            slot: mid,
            grad_variance,
            grad_mean_abs,
            ubos_delta_exact,
            ubos_delta_noisy,
            sgd_delta_exact,
            sgd_delta_noisy,
        });
    }
    Ok(rows)
}
