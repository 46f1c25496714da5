//! Simulator and analysis toolkit for photon-echo pulse sequences in
//! inhomogeneously broadened two/three-level atomic ensembles, with
//! dynamic echo control through far-detuned (Stark) phase pulses and a
//! resonant control flop to an auxiliary ground state.
//!
//! The crate is organized around five pieces:
//!
//! - [`ensemble`]: Gaussian inhomogeneous line discretized into weighted
//!   detuning groups.
//! - [`sequence`]: pulse programs, the canonical presets, and the
//!   line-oriented text format.
//! - [`dynamics`]: density-matrix propagation (exact piecewise unitary or
//!   RK4) through a sequence, per group and ensemble-summed.
//! - [`analysis`]: echo detection/classification, the cos(phi) efficiency
//!   sweeps, and an independent analytic phase-tracking oracle.
//! - [`csvio`] / [`manifest`] / [`svg`]: reproducible run outputs.

pub mod analysis;
pub mod csvio;
pub mod dynamics;
pub mod ensemble;
pub mod manifest;
pub mod sequence;
pub mod svg;
pub mod trace;

pub use analysis::{
    compare, detect_echo, efficiency_sweep, oracle_predict, sweep_2d, EchoCharacter, EchoReport,
};
pub use dynamics::{
    frame_at, propagate_ensemble, propagate_group, step, DecayRates, Method, PropagationConfig,
};
pub use ensemble::{build_ensemble, resonant_only, AtomGroup, Ensemble, EnsembleSpec};
pub use sequence::{
    parse_sequence, preset, pulse_area, serialize_sequence, stark_phase, validate, Channel, Preset,
    Pulse, PulseSequence,
};
pub use trace::TraceSet;
