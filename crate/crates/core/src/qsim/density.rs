//! Density-matrix evolution and Kraus noise channels.
//!
//! The noisy path evolves ρ exactly: unitaries act as UρU†, channels as
//! Φ(ρ) = Σ_i K_i ρ K_i† with the single-qubit Kraus operators lifted to
//! the full space by strided index updates (cost 4^Q per operation).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{single_qubit_matrix, GateOp, QsimError, StateVector, ZReadout, C_ONE, C_ZERO};

/// Mixed state of `num_qubits` qubits: a 2^Q x 2^Q complex matrix,
/// row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    num_qubits: usize,
    dim: usize,
    rho: Vec<Complex64>,
}

impl DensityMatrix {
    /// ρ = |ψ⟩⟨ψ|.
    pub fn from_pure(state: &StateVector) -> Self {
        let amps = state.amplitudes();
        let dim = amps.len();
        let mut rho = vec![C_ZERO; dim * dim];
        for (i, &ai) in amps.iter().enumerate() {
            for (j, &aj) in amps.iter().enumerate() {
                rho[i * dim + j] = ai * aj.conj();
            }
        }
        DensityMatrix {
            num_qubits: state.num_qubits(),
            dim,
            rho,
        }
    }

    /// Maximally mixed state I/2^Q.
    pub fn maximally_mixed(num_qubits: usize) -> Self {
        let dim = 1 << num_qubits;
        let mut rho = vec![C_ZERO; dim * dim];
        let p = Complex64::new(1.0 / dim as f64, 0.0);
        for i in 0..dim {
            rho[i * dim + i] = p;
        }
        DensityMatrix {
            num_qubits,
            dim,
            rho,
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.rho[row * self.dim + col]
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.rho[i * self.dim + i]).sum()
    }

    /// max |ρ − ρ†| entry, for invariant checks.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in 0..self.dim {
                let d = (self.entry(i, j) - self.entry(j, i).conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    fn qubit_mask(&self, qubit: usize) -> Result<usize, QsimError> {
        if qubit >= self.num_qubits {
            return Err(QsimError::QubitOutOfRange {
                qubit,
                num_qubits: self.num_qubits,
            });
        }
        Ok(1 << (self.num_qubits - 1 - qubit))
    }

    /// ρ ← (A ⊗ I) ρ for a single-qubit operator A on `qubit` (not
    /// necessarily unitary).
    fn left_apply_1q(&mut self, a: &[[Complex64; 2]; 2], mask: usize) {
        for col in 0..self.dim {
            for row in 0..self.dim {
                if row & mask == 0 {
                    let r1 = row | mask;
                    let x = self.rho[row * self.dim + col];
                    let y = self.rho[r1 * self.dim + col];
                    self.rho[row * self.dim + col] = a[0][0] * x + a[0][1] * y;
                    self.rho[r1 * self.dim + col] = a[1][0] * x + a[1][1] * y;
                }
            }
        }
    }

    /// ρ ← ρ (A ⊗ I)† for a single-qubit operator A on `qubit`.
    fn right_apply_dagger_1q(&mut self, a: &[[Complex64; 2]; 2], mask: usize) {
        for row in 0..self.dim {
            for col in 0..self.dim {
                if col & mask == 0 {
                    let c1 = col | mask;
                    let x = self.rho[row * self.dim + col];
                    let y = self.rho[row * self.dim + c1];
                    self.rho[row * self.dim + col] = x * a[0][0].conj() + y * a[0][1].conj();
                    self.rho[row * self.dim + c1] = x * a[1][0].conj() + y * a[1][1].conj();
                }
            }
        }
    }

    /// CNOT permutation applied to rows (left) and columns (right).
    fn apply_cnot(&mut self, cmask: usize, tmask: usize) {
        // rows: ρ ← U ρ
        for row in 0..self.dim {
            if row & cmask != 0 && row & tmask == 0 {
                let r1 = row | tmask;
                for col in 0..self.dim {
                    self.rho.swap(row * self.dim + col, r1 * self.dim + col);
                }
            }
        }
        // columns: ρ ← ρ U† (U is a real symmetric permutation)
        for col in 0..self.dim {
            if col & cmask != 0 && col & tmask == 0 {
                let c1 = col | tmask;
                for row in 0..self.dim {
                    self.rho.swap(row * self.dim + col, row * self.dim + c1);
                }
            }
        }
    }

    /// ρ ← U ρ U† in place.
    pub fn apply_gate_mut(&mut self, gate: &GateOp) -> Result<(), QsimError> {
        match *gate {
            GateOp::Cnot { control, target } => {
                let cmask = self.qubit_mask(control)?;
                let tmask = self.qubit_mask(target)?;
                self.apply_cnot(cmask, tmask);
                Ok(())
            }
            GateOp::H { target }
            | GateOp::X { target }
            | GateOp::Y { target }
            | GateOp::Z { target }
            | GateOp::Ry { target, .. } => {
                let mask = self.qubit_mask(target)?;
                let m = single_qubit_matrix(gate).expect("single-qubit gate");
                self.left_apply_1q(&m, mask);
                self.right_apply_dagger_1q(&m, mask);
                Ok(())
            }
        }
    }

    /// Probability of reading 0 on `qubit` (diagonal marginal).
    pub fn prob_zero(&self, qubit: usize) -> Result<f64, QsimError> {
        let mask = self.qubit_mask(qubit)?;
        Ok((0..self.dim)
            .filter(|i| i & mask == 0)
            .map(|i| self.rho[i * self.dim + i].re)
            .sum())
    }
}

impl ZReadout for DensityMatrix {
    fn num_qubits(&self) -> usize {
        self.num_qubits
    }
    fn prob_zero(&self, qubit: usize) -> Result<f64, QsimError> {
        DensityMatrix::prob_zero(self, qubit)
    }
}

// ---------------------------------------------------------------------------
// Noise channels
// ---------------------------------------------------------------------------

/// Supported single-qubit error channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    BitFlip,
    PhaseFlip,
    Depolarizing,
}

impl std::fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NoiseKind::BitFlip => write!(f, "bit_flip"),
            NoiseKind::PhaseFlip => write!(f, "phase_flip"),
            NoiseKind::Depolarizing => write!(f, "depolarizing"),
        }
    }
}

impl std::str::FromStr for NoiseKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bit_flip" | "bitflip" | "bit-flip" => Ok(NoiseKind::BitFlip),
            "phase_flip" | "phaseflip" | "phase-flip" => Ok(NoiseKind::PhaseFlip),
            "depolarizing" | "depolarising" => Ok(NoiseKind::Depolarizing),
            other => Err(format!("unknown noise channel '{other}'")),
        }
    }
}

/// A single-qubit channel as its Kraus operator list, with
/// Σ K_i† K_i = I guaranteed at construction.
#[derive(Debug, Clone)]
pub struct NoiseChannel {
    pub kind: NoiseKind,
    pub p: f64,
    kraus: Vec<[[Complex64; 2]; 2]>,
}

impl NoiseChannel {
    pub fn kraus(&self) -> &[[[Complex64; 2]; 2]] {
        &self.kraus
    }

    /// max |Σ K_i† K_i − I| entry.
    pub fn completeness_defect(&self) -> f64 {
        let mut sum = [[C_ZERO; 2]; 2];
        for k in &self.kraus {
            // (K† K)[a][b] = Σ_c conj(K[c][a]) K[c][b]
            for a in 0..2 {
                for b in 0..2 {
                    for c in 0..2 {
                        sum[a][b] += k[c][a].conj() * k[c][b];
                    }
                }
            }
        }
        let mut worst = 0.0f64;
        for a in 0..2 {
            for b in 0..2 {
                let expect = if a == b { C_ONE } else { C_ZERO };
                worst = worst.max((sum[a][b] - expect).norm());
            }
        }
        worst
    }
}

fn scaled(m: [[Complex64; 2]; 2], s: f64) -> [[Complex64; 2]; 2] {
    let s = Complex64::new(s, 0.0);
    [[m[0][0] * s, m[0][1] * s], [m[1][0] * s, m[1][1] * s]]
}

/// Build a noise channel from its kind and error probability.
pub fn make_noise_channel(kind: NoiseKind, p: f64) -> Result<NoiseChannel, QsimError> {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return Err(QsimError::InvalidProbability(p));
    }
    let i2 = [[C_ONE, C_ZERO], [C_ZERO, C_ONE]];
    let x = [[C_ZERO, C_ONE], [C_ONE, C_ZERO]];
    let y = [
        [C_ZERO, -Complex64::i()],
        [Complex64::i(), C_ZERO],
    ];
    let z = [[C_ONE, C_ZERO], [C_ZERO, -C_ONE]];
    let kraus = match kind {
        NoiseKind::BitFlip => {
            if p == 0.0 {
                vec![i2]
            } else {
                vec![scaled(i2, (1.0 - p).sqrt()), scaled(x, p.sqrt())]
            }
        }
        NoiseKind::PhaseFlip => {
            if p == 0.0 {
                vec![i2]
            } else {
                vec![scaled(i2, (1.0 - p).sqrt()), scaled(z, p.sqrt())]
            }
        }
        NoiseKind::Depolarizing => {
            if p == 0.0 {
                vec![i2]
            } else {
                let e = (p / 3.0).sqrt();
                vec![
                    scaled(i2, (1.0 - p).sqrt()),
                    scaled(x, e),
                    scaled(y, e),
                    scaled(z, e),
                ]
            }
        }
    };
    Ok(NoiseChannel { kind, p, kraus })
}

/// Φ(ρ) = Σ_i K_i ρ K_i† with the channel acting on `qubit`.
pub fn apply_channel(
    rho: &DensityMatrix,
    channel: &NoiseChannel,
    qubit: usize,
) -> Result<DensityMatrix, QsimError> {
    let mask = rho.qubit_mask(qubit)?;
    let mut out = DensityMatrix {
        num_qubits: rho.num_qubits,
        dim: rho.dim,
        rho: vec![C_ZERO; rho.rho.len()],
    };
    for k in &rho_channel_terms(rho, channel, mask) {
        for (o, t) in out.rho.iter_mut().zip(k.iter()) {
            *o += t;
        }
    }
    Ok(out)
}

fn rho_channel_terms(
    rho: &DensityMatrix,
    channel: &NoiseChannel,
    mask: usize,
) -> Vec<Vec<Complex64>> {
    channel
        .kraus
        .iter()
        .map(|k| {
            let mut term = rho.clone();
            term.left_apply_1q(k, mask);
            term.right_apply_dagger_1q(k, mask);
            term.rho
        })
        .collect()
}
