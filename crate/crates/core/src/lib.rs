//! Hybrid quantum-classical neural networks for multiuser MISO downlink
//! beamforming.
//!
//! The crate is organised around the data flow of the problem:
//!
//! * [`qsim`] — exact small-scale quantum circuit simulation (statevector,
//!   density matrix, Kraus noise channels, Z-basis expectations).
//! * [`qlayers`] — quantum network building blocks: data embeddings, the
//!   parameterized circuit, the quanvolution filter and parameter-shift
//!   gradients.
//! * [`nn`] — a minimal classical stack: tensors, conv/batchnorm/dense
//!   layers with hand-written backward passes, and Adam.
//! * [`beamforming`] — channel generation, SINR and sum rate, the
//!   power-vector beam recovery, and the WMMSE baseline.
//! * [`models`] — the four predictor architectures, parameter accounting
//!   and checkpoint I/O.
//! * [`trainer`] — the unsupervised training loop, evaluation normalized
//!   against WMMSE, noisy-circuit evaluation and diagnostics.
//!
//! Batch-level operations run data-parallel when the `parallel` feature is
//! enabled (the default); gradient and metric reductions are fixed-order in
//! both builds, so results are identical.

pub mod beamforming;
mod exec;
pub mod models;
pub mod nn;
pub mod qlayers;
pub mod qsim;
pub mod rng;
pub mod trainer;
