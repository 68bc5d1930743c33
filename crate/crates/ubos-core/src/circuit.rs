//! Brick-pattern circuits of two-qubit gates, derivative states and runs.

use nalgebra::Matrix4;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::gates::{GateFamily, OperatorBasis};
use crate::state::StateVector;

/// One gate position in the circuit.
#[derive(Debug, Clone)]
pub struct GateSlot {
    pub index: usize,
    pub qubits: (usize, usize),
    pub family: GateFamily,
}

/// A fixed layout of two-qubit gates applied in slot order to |0…0⟩.
#[derive(Debug, Clone)]
pub struct Circuit {
    n_qubits: usize,
    layers: usize,
    slots: Vec<GateSlot>,
}

/// Per-slot parameter vectors for a circuit.
pub type ParamSet = Vec<Vec<f64>>;

impl Circuit {
    /// Brick layout: even layers pair (0,1), (2,3), …; odd layers pair
    /// (1,2), (3,4), …. No wraparound, so odd layers on short chains may be
    /// empty.
    pub fn brick(n_qubits: usize, layers: usize, family: &GateFamily) -> Result<Self> {
        if n_qubits < 2 {
            return Err(Error::Invalid(format!(
                "brick circuit needs at least 2 qubits, got {n_qubits}"
            )));
        }
        if layers < 1 {
            return Err(Error::Invalid("brick circuit needs at least one layer".into()));
        }
        if family.n_qubits() != 2 {
            return Err(Error::Invalid(format!(
                "brick circuit slots take two-qubit families, not {}",
                family.name()
            )));
        }
        let mut slots = Vec::new();
        for layer in 0..layers {
            let first = layer % 2;
            let mut a = first;
            while a + 1 < n_qubits {
                slots.push(GateSlot {
                    index: slots.len(),
                    qubits: (a, a + 1),
                    family: family.clone(),
                });
                a += 2;
            }
        }
        Ok(Self {
            n_qubits,
            layers,
            slots,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn slots(&self) -> &[GateSlot] {
        &self.slots
    }

    pub fn slot(&self, j: usize) -> &GateSlot {
        &self.slots[j]
    }

    /// Number of gates K.
    pub fn n_slots(&self) -> usize {
        self.slots.len()
    }

    pub fn check_params(&self, params: &ParamSet) -> Result<()> {
        if params.len() != self.slots.len() {
            return Err(Error::DimensionMismatch {
                context: "parameter vectors per slot",
                left: params.len(),
                right: self.slots.len(),
            });
        }
        for (slot, p) in self.slots.iter().zip(params) {
            if p.len() != slot.family.param_count() {
                return Err(Error::ParamCount {
                    family: slot.family.name(),
                    expected: slot.family.param_count(),
                    got: p.len(),
                });
            }
        }
        Ok(())
    }

    fn check_slot(&self, j: usize) -> Result<()> {
        if j >= self.slots.len() {
            return Err(Error::Invalid(format!(
                "slot {j} out of range for {} gates",
                self.slots.len()
            )));
        }
        Ok(())
    }

    /// |ψ⟩ from applying all slots in index order to |0…0⟩.
    pub fn run(&self, params: &ParamSet) -> Result<StateVector> {
        self.check_params(params)?;
        let mut psi = StateVector::zero_state(self.n_qubits);
        for (slot, p) in self.slots.iter().zip(params) {
            psi.apply_two_qubit(&slot.family.unitary4(p)?, slot.qubits)?;
        }
        Ok(psi)
    }

    /// State after slots 0..j (exclusive).
    pub fn state_before(&self, params: &ParamSet, j: usize) -> Result<StateVector> {
        self.check_params(params)?;
        self.check_slot(j)?;
        let mut psi = StateVector::zero_state(self.n_qubits);
        for (slot, p) in self.slots.iter().zip(params).take(j) {
            psi.apply_two_qubit(&slot.family.unitary4(p)?, slot.qubits)?;
        }
        Ok(psi)
    }

    /// Apply slots j+1.. to a state.
    pub fn apply_after(&self, params: &ParamSet, j: usize, mut psi: StateVector) -> Result<StateVector> {
        for (slot, p) in self.slots.iter().zip(params).skip(j + 1) {
            psi.apply_two_qubit(&slot.family.unitary4(p)?, slot.qubits)?;
        }
        Ok(psi)
    }

    /// |ψ_j^a⟩: the circuit state with slot j's unitary replaced by an
    /// arbitrary 4×4 operator. Generally not normalized.
    pub fn derivative_state(
        &self,
        params: &ParamSet,
        j: usize,
        basis_op: &Matrix4<Complex64>,
    ) -> Result<StateVector> {
        let mut psi = self.state_before(params, j)?;
        psi.apply_two_qubit(basis_op, self.slots[j].qubits)?;
        self.apply_after(params, j, psi)
    }

    /// All derivative states of slot j over an operator basis, sharing one
    /// prefix evaluation.
    pub fn derivative_states(
        &self,
        params: &ParamSet,
        j: usize,
        basis: &OperatorBasis,
    ) -> Result<Vec<StateVector>> {
        if basis.dim() != 4 {
            return Err(Error::DimensionMismatch {
                context: "derivative basis on a two-qubit slot",
                left: basis.dim(),
                right: 4,
            });
        }
        let prefix = self.state_before(params, j)?;
        let qubits = self.slots[j].qubits;
        basis
            .elements()
            .iter()
            .map(|e| {
                let m = Matrix4::from_fn(|r, c| e[(r, c)]);
                let mut psi = prefix.clone();
                psi.apply_two_qubit(&m, qubits)?;
                self.apply_after(params, j, psi)
            })
            .collect()
    }
}
