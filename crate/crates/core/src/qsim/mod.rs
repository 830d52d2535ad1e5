//! Exact small-scale quantum circuit simulation.
//!
//! Statevector evolution under the gate set {H, X, Y, Z, Ry, CNOT},
//! density-matrix evolution under single-qubit Kraus channels, and Z-basis
//! expectation values (exact or shot-sampled).
//!
//! Convention, fixed project-wide: qubit 0 is the leftmost label in ket
//! notation and the most significant bit of the basis index. CNOT applied
//! to |10⟩ (index 2) therefore yields |11⟩ (index 3).
//!
//! Gates are applied by strided amplitude updates over the target-qubit
//! bit; the full 2^Q x 2^Q unitary is never materialized.

mod density;

pub use density::{apply_channel, make_noise_channel, DensityMatrix, NoiseChannel, NoiseKind};

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

/// Complex zero/one shorthands used throughout the module.
pub(crate) const C_ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const C_ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Error, PartialEq)]
pub enum QsimError {
    #[error("qubit index {qubit} out of range for {num_qubits} qubit(s)")]
    QubitOutOfRange { qubit: usize, num_qubits: usize },
    #[error("gate {0} requires an angle")]
    ThetaMissing(&'static str),
    #[error("gate {0} does not take an angle")]
    ThetaUnexpected(&'static str),
    #[error("gate {kind} expects {expected} target(s), got {got}")]
    WrongTargetCount {
        kind: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("gate targets must be distinct")]
    DuplicateTargets,
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("shot count must be at least 1")]
    ZeroShots,
    #[error("amplitude vector length {0} is not a power of two")]
    BadAmplitudeLength(usize),
    #[error("state norm {0} deviates from 1 beyond tolerance")]
    NotNormalized(f64),
}

// ---------------------------------------------------------------------------
// Gates
// ---------------------------------------------------------------------------

/// Gate selector used by [`make_gate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateKind {
    H,
    X,
    Y,
    Z,
    Ry,
    Cnot,
}

impl GateKind {
    fn name(self) -> &'static str {
        match self {
            GateKind::H => "H",
            GateKind::X => "X",
            GateKind::Y => "Y",
            GateKind::Z => "Z",
            GateKind::Ry => "Ry",
            GateKind::Cnot => "CNOT",
        }
    }
}

/// A validated gate instance bound to its target qubit(s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateOp {
    H { target: usize },
    X { target: usize },
    Y { target: usize },
    Z { target: usize },
    Ry { theta: f64, target: usize },
    Cnot { control: usize, target: usize },
}

/// Build a gate, validating arity and the angle argument.
pub fn make_gate(kind: GateKind, theta: Option<f64>, targets: &[usize]) -> Result<GateOp, QsimError> {
    let expect_targets = |n: usize| -> Result<(), QsimError> {
        if targets.len() != n {
            return Err(QsimError::WrongTargetCount {
                kind: kind.name(),
                expected: n,
                got: targets.len(),
            });
        }
        Ok(())
    };
    if kind != GateKind::Ry && theta.is_some() {
        return Err(QsimError::ThetaUnexpected(kind.name()));
    }
    match kind {
        GateKind::H => {
            expect_targets(1)?;
            Ok(GateOp::H { target: targets[0] })
        }
        GateKind::X => {
            expect_targets(1)?;
            Ok(GateOp::X { target: targets[0] })
        }
        GateKind::Y => {
            expect_targets(1)?;
            Ok(GateOp::Y { target: targets[0] })
        }
        GateKind::Z => {
            expect_targets(1)?;
            Ok(GateOp::Z { target: targets[0] })
        }
        GateKind::Ry => {
            expect_targets(1)?;
            let theta = theta.ok_or(QsimError::ThetaMissing("Ry"))?;
            Ok(GateOp::Ry {
                theta,
                target: targets[0],
            })
        }
        GateKind::Cnot => {
            expect_targets(2)?;
            if targets[0] == targets[1] {
                return Err(QsimError::DuplicateTargets);
            }
            Ok(GateOp::Cnot {
                control: targets[0],
                target: targets[1],
            })
        }
    }
}

/// 2x2 matrix of a single-qubit gate, row-major.
pub fn single_qubit_matrix(gate: &GateOp) -> Option<[[Complex64; 2]; 2]> {
    let i = Complex64::i();
    match *gate {
        GateOp::H { .. } => {
            let s = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
            Some([[s, s], [s, -s]])
        }
        GateOp::X { .. } => Some([[C_ZERO, C_ONE], [C_ONE, C_ZERO]]),
        GateOp::Y { .. } => Some([[C_ZERO, -i], [i, C_ZERO]]),
        GateOp::Z { .. } => Some([[C_ONE, C_ZERO], [C_ZERO, -C_ONE]]),
        GateOp::Ry { theta, .. } => {
            let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
            Some([
                [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
                [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
            ])
        }
        GateOp::Cnot { .. } => None,
    }
}

/// Full matrix of the gate on its own qubit space (2x2, or 4x4 for CNOT
/// with the control as the more significant bit), row-major.
pub fn gate_matrix(gate: &GateOp) -> Vec<Complex64> {
    match single_qubit_matrix(gate) {
        Some(m) => vec![m[0][0], m[0][1], m[1][0], m[1][1]],
        None => {
            let mut m = vec![C_ZERO; 16];
            m[0] = C_ONE; // |00> -> |00>
            m[5] = C_ONE; // |01> -> |01>
            m[11] = C_ONE; // |10> -> |11>
            m[14] = C_ONE; // |11> -> |10>
            m
        }
    }
}

// ---------------------------------------------------------------------------
// StateVector
// ---------------------------------------------------------------------------

/// Pure quantum state of `num_qubits` qubits: 2^Q complex amplitudes over
/// the computational basis.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// |0...0⟩ on `num_qubits` qubits.
    pub fn zero_state(num_qubits: usize) -> Self {
        assert!(num_qubits >= 1, "at least one qubit");
        let mut amplitudes = vec![C_ZERO; 1 << num_qubits];
        amplitudes[0] = C_ONE;
        StateVector {
            num_qubits,
            amplitudes,
        }
    }

    /// Computational basis state |index⟩.
    pub fn basis_state(num_qubits: usize, index: usize) -> Self {
        assert!(index < 1 << num_qubits, "basis index in range");
        let mut amplitudes = vec![C_ZERO; 1 << num_qubits];
        amplitudes[index] = C_ONE;
        StateVector {
            num_qubits,
            amplitudes,
        }
    }

    /// Wrap an amplitude vector; must have power-of-two length and unit norm
    /// within 1e-10.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self, QsimError> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(QsimError::BadAmplitudeLength(len));
        }
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(QsimError::NotNormalized(norm));
        }
        Ok(StateVector {
            num_qubits: len.trailing_zeros() as usize,
            amplitudes,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Bit mask selecting `qubit` inside a basis index (qubit 0 = MSB).
    fn qubit_mask(&self, qubit: usize) -> Result<usize, QsimError> {
        if qubit >= self.num_qubits {
            return Err(QsimError::QubitOutOfRange {
                qubit,
                num_qubits: self.num_qubits,
            });
        }
        Ok(1 << (self.num_qubits - 1 - qubit))
    }

    /// Apply a gate in place.
    pub fn apply_mut(&mut self, gate: &GateOp) -> Result<(), QsimError> {
        match *gate {
            GateOp::Cnot { control, target } => {
                let cmask = self.qubit_mask(control)?;
                let tmask = self.qubit_mask(target)?;
                for i in 0..self.amplitudes.len() {
                    if i & cmask != 0 && i & tmask == 0 {
                        self.amplitudes.swap(i, i | tmask);
                    }
                }
                Ok(())
            }
            _ => {
                let target = match *gate {
                    GateOp::H { target }
                    | GateOp::X { target }
                    | GateOp::Y { target }
                    | GateOp::Z { target }
                    | GateOp::Ry { target, .. } => target,
                    GateOp::Cnot { .. } => unreachable!(),
                };
                let mask = self.qubit_mask(target)?;
                let m = single_qubit_matrix(gate).expect("single-qubit gate");
                for i in 0..self.amplitudes.len() {
                    if i & mask == 0 {
                        let j = i | mask;
                        let a = self.amplitudes[i];
                        let b = self.amplitudes[j];
                        self.amplitudes[i] = m[0][0] * a + m[0][1] * b;
                        self.amplitudes[j] = m[1][0] * a + m[1][1] * b;
                    }
                }
                Ok(())
            }
        }
    }

    /// Probability of reading 0 on `qubit`.
    pub fn prob_zero(&self, qubit: usize) -> Result<f64, QsimError> {
        let mask = self.qubit_mask(qubit)?;
        Ok(self
            .amplitudes
            .iter()
            .enumerate()
            .filter(|(i, _)| i & mask == 0)
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }
}

/// Apply a gate to a state, returning the evolved state.
pub fn apply_gate(state: &StateVector, gate: &GateOp) -> Result<StateVector, QsimError> {
    let mut next = state.clone();
    next.apply_mut(gate)?;
    Ok(next)
}

// ---------------------------------------------------------------------------
// Z-basis readout
// ---------------------------------------------------------------------------

/// Anything a Z-basis expectation can be read from.
pub trait ZReadout {
    fn num_qubits(&self) -> usize;
    fn prob_zero(&self, qubit: usize) -> Result<f64, QsimError>;
}

impl ZReadout for StateVector {
    fn num_qubits(&self) -> usize {
        self.num_qubits
    }
    fn prob_zero(&self, qubit: usize) -> Result<f64, QsimError> {
        StateVector::prob_zero(self, qubit)
    }
}

/// Exact ⟨Z⟩ = P(0) − P(1) on `qubit`, in [−1, 1].
pub fn expectation_z<S: ZReadout>(state: &S, qubit: usize) -> Result<f64, QsimError> {
    let p0 = state.prob_zero(qubit)?;
    Ok(2.0 * p0 - 1.0)
}

/// Shot-sampled ⟨Z⟩: the mean of `shots` i.i.d. ±1 draws with
/// P(+1) = P(qubit = 0). Deterministic given `rng_seed`.
pub fn sample_expectation_z<S: ZReadout>(
    state: &S,
    qubit: usize,
    shots: usize,
    rng_seed: u64,
) -> Result<f64, QsimError> {
    if shots == 0 {
        return Err(QsimError::ZeroShots);
    }
    let p0 = state.prob_zero(qubit)?;
    let mut rng = crate::rng::stream_rng(rng_seed, "shots", qubit as u64);
    let mut sum = 0i64;
    for _ in 0..shots {
        sum += if rng.gen::<f64>() < p0 { 1 } else { -1 };
    }
    Ok(sum as f64 / shots as f64)
}

/// ρ = |ψ⟩⟨ψ|.
pub fn to_density(state: &StateVector) -> DensityMatrix {
    DensityMatrix::from_pure(state)
}
