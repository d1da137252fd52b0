//! Exact density-matrix simulation of pseudopure state preparation in
//! small dipolar-coupled spin-1/2 clusters.
//!
//! The preparation sequence excites multiple-quantum coherence with the
//! double-quantum effective Hamiltonian, keeps only the highest-order
//! coherence, reverses the evolution, dephases off-diagonal terms and
//! partially saturates the populations so that only the all-up state keeps
//! its excess. Linear-response stick spectra identify each state.

pub mod error;
pub mod evolution;
pub mod hamiltonians;
pub mod mq;
pub mod nonunitary;
pub mod par;
pub mod pipeline;
pub mod spectrum;
pub mod spin;

pub use error::{Error, Result};
pub use evolution::{diagonalize, evolve, sweep, EigenSystem, Observable, Propagator, SweepTable};
pub use hamiltonians::{
    dq_hamiltonian, hexagon_couplings, homq_excitable, negated, secular_dipolar_hamiltonian,
};
pub use mq::{decompose, filter_order, mq_intensity, phase_cycle_decompose, MqDecomposition};
pub use nonunitary::{
    build_transition_graph, crush, saturate, SaturationMode, SaturationParams, TransitionGraph,
};
pub use par::ExecMode;
pub use pipeline::{
    locate_maximum, run_pipeline, FrequencyConvention, PipelineConfig, PipelineReport, PipelineRun,
};
pub use spectrum::{broaden, count_peaks, linear_response, merge_peaks, StickSpectrum};
pub use spin::{
    build_basis, collective_op, homq_coherence_state, single_spin_op, thermal_state, DensityMatrix,
    Operator, SpinOpKind, SpinSystem, ZeemanBasis,
};
