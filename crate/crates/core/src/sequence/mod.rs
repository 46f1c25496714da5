//! Timed pulse programs: the pulse/sequence model, validation, the canonical
//! presets, and the rotation-angle / Stark-phase conventions used everywhere
//! else in the crate.
//!
//! Conventions. A pulse of Rabi frequency `rabi` (MHz) enters the
//! rotating-frame Hamiltonian as an off-diagonal coupling `2π·rabi` rad/μs,
//! so a resonant square pulse rotates the Bloch vector by
//! `2·(2π·rabi)·duration` — that is [`pulse_area`]. A detuned pulse on the
//! probe channel shifts that channel's diagonal by `2π·detune` rad/μs for its
//! duration; the coherence phase it imprints is the dressed-state splitting
//! times the duration, `2π·sqrt(detune² + (2·rabi)²)·duration` — that is
//! [`stark_phase`]. A pure frequency-shift pulse (`rabi = 0`) imprints
//! exactly `2π·detune·duration` with no population transfer.

mod text;

pub use text::{parse_sequence, serialize_sequence, ParseError};

use crate::ensemble::EnsembleSpec;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SequenceError {
    #[error("stark phase is undefined for control-channel pulse '{0}'")]
    StarkPhaseOnControl(String),
    #[error("pulse '{0}' is not a Stark pulse (zero detuning)")]
    NotAStarkPulse(String),
    #[error("unknown preset '{0}'")]
    UnknownPreset(String),
}

/// Which coupling a pulse drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    /// Ground |1> to excited |2>.
    Probe,
    /// Auxiliary ground |3> to excited |2>.
    Control,
}

impl std::fmt::Display for Channel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Channel::Probe => write!(f, "probe"),
            Channel::Control => write!(f, "control"),
        }
    }
}

/// A timed square pulse. Active on the half-open interval
/// `[t_on, t_on + duration)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub name: String,
    pub channel: Channel,
    /// Arrival time, μs.
    pub t_on: f64,
    /// Duration, μs.
    pub duration: f64,
    /// Rabi frequency, MHz (linear).
    pub rabi_mhz: f64,
    /// Detuning added to the atom detuning on this channel, MHz (signed).
    pub detune_mhz: f64,
}

impl Pulse {
    pub fn t_off(&self) -> f64 {
        self.t_on + self.duration
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_on && t < self.t_off()
    }
}

/// A validated pulse program plus its grid and ensemble parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub pulses: Vec<Pulse>,
    /// Output grid step, μs.
    pub dt: f64,
    /// End of the simulated window, μs.
    pub t_end: f64,
    pub ensemble: EnsembleSpec,
}

/// One validation failure; `validate` returns all of them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationCode {
    Overlap,
    OutOfRange,
    BadEnsemble,
    BadGrid,
    BadPulse,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

/// Check every sequence invariant; an empty list means the sequence is valid.
pub fn validate(seq: &PulseSequence) -> Vec<Violation> {
    let mut out = Vec::new();
    if !(seq.dt > 0.0) || !(seq.t_end > 0.0) {
        out.push(Violation {
            code: ViolationCode::BadGrid,
            message: format!("dt and end must be positive (dt={}, end={})", seq.dt, seq.t_end),
        });
    } else if seq.t_end / seq.dt > 1e7 {
        out.push(Violation {
            code: ViolationCode::BadGrid,
            message: format!("grid too fine: end/dt = {:.3e} exceeds 1e7", seq.t_end / seq.dt),
        });
    }
    if let Err(e) = seq.ensemble.validate() {
        out.push(Violation { code: ViolationCode::BadEnsemble, message: e.to_string() });
    }
    for p in &seq.pulses {
        if !(p.duration > 0.0) || p.rabi_mhz < 0.0 || p.t_on < 0.0 {
            out.push(Violation {
                code: ViolationCode::BadPulse,
                message: format!(
                    "pulse '{}' needs duration > 0, rabi >= 0, at >= 0",
                    p.name
                ),
            });
        }
        if p.t_off() > seq.t_end {
            out.push(Violation {
                code: ViolationCode::OutOfRange,
                message: format!(
                    "pulse '{}' ends at {} us, after end = {} us",
                    p.name,
                    p.t_off(),
                    seq.t_end
                ),
            });
        }
    }
    for ch in [Channel::Probe, Channel::Control] {
        let mut on_ch: Vec<&Pulse> = seq.pulses.iter().filter(|p| p.channel == ch).collect();
        on_ch.sort_by(|a, b| a.t_on.total_cmp(&b.t_on));
        for w in on_ch.windows(2) {
            if w[1].t_on < w[0].t_off() {
                out.push(Violation {
                    code: ViolationCode::Overlap,
                    message: format!(
                        "pulses '{}' and '{}' overlap on the {} channel",
                        w[0].name, w[1].name, ch
                    ),
                });
            }
        }
    }
    out
}

/// Resonant rotation angle of a square pulse, rad: `2·(2π·rabi)·duration`.
///
/// A 5 MHz, 0.1 μs pulse is a full 2π rotation under this convention.
pub fn pulse_area(p: &Pulse) -> f64 {
    2.0 * TAU * p.rabi_mhz * p.duration
}

/// Phase imprinted on the probe coherence by a detuned probe pulse, rad.
///
/// This is the dressed-state splitting times the duration,
/// `2π·sqrt(detune² + (2·rabi)²)·duration`, which is what piecewise-constant
/// propagation of the rotating-frame Hamiltonian imprints on `rho_12` of a
/// resonant atom (exactly, for `rabi = 0`; to O((2·rabi/detune)²) otherwise).
pub fn stark_phase(p: &Pulse) -> Result<f64, SequenceError> {
    if p.channel == Channel::Control {
        return Err(SequenceError::StarkPhaseOnControl(p.name.clone()));
    }
    if p.detune_mhz == 0.0 {
        return Err(SequenceError::NotAStarkPulse(p.name.clone()));
    }
    let splitting_mhz = (p.detune_mhz.powi(2) + (2.0 * p.rabi_mhz).powi(2)).sqrt();
    Ok(TAU * splitting_mhz * p.duration)
}

/// The named pulse programs reproduced by the toolkit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Preset {
    /// Bare double rephasing: data + two rephasing pulses.
    FigS1a,
    /// Double rephasing with one Stark pulse (phase π/2) before the first
    /// rephasing pulse: erases the first echo.
    Fig1b,
    /// Unbalanced Stark pair: second Stark pulse after the first echo.
    Fig3a,
    /// Balanced Stark pair: second Stark pulse before the first echo.
    Fig3b,
    /// Unbalanced Stark pair plus a 2π control pulse after the second
    /// rephasing pulse: the emissive-echo protocol.
    Fig4a,
    /// Resonant Rabi flopping demo.
    FigS2Resonant,
    /// Detuned Rabi flopping demo; the parameter is the ratio of detuning to
    /// (rotation-rate) Rabi frequency.
    FigS2Detuned(f64),
}

pub const PRESET_NAMES: &[&str] = &[
    "figS1a",
    "fig1b",
    "fig3a",
    "fig3b",
    "fig4a",
    "figS2_resonant",
    "figS2_detuned",
];

impl Preset {
    pub fn from_name(name: &str) -> Result<Self, SequenceError> {
        match name.to_ascii_lowercase().as_str() {
            "figs1a" => Ok(Preset::FigS1a),
            "fig1b" => Ok(Preset::Fig1b),
            "fig3a" => Ok(Preset::Fig3a),
            "fig3b" => Ok(Preset::Fig3b),
            "fig4a" => Ok(Preset::Fig4a),
            "figs2_resonant" => Ok(Preset::FigS2Resonant),
            "figs2_detuned" => Ok(Preset::FigS2Detuned(3.0f64.sqrt())),
            other => Err(SequenceError::UnknownPreset(other.to_string())),
        }
    }
}

fn probe(name: &str, t_on: f64, duration: f64, rabi: f64, detune: f64) -> Pulse {
    Pulse {
        name: name.to_string(),
        channel: Channel::Probe,
        t_on,
        duration,
        rabi_mhz: rabi,
        detune_mhz: detune,
    }
}

// Echo-preset pulse parameters.
//
// Arrival times follow the reference sequences (data at 1 μs, Stark at 3 μs,
// rephasing at 7 and 17 μs, control at 17.1 μs). The data/rephasing pulses
// are kept short (0.01 μs) so the finite-pulse timing bias
// tan(ω τ)/(2ω) stays below the grid step and both echoes land on
// 2·t_R1 − t_D and 2·t_R2 − t_e1 within one sample; areas are the canonical
// π/2 (data) and π (rephasing). Stark pulses are pure frequency shifts
// (rabi = 0, detuning 2.5 MHz, 0.1 μs), imprinting exactly π/2 with no
// population transfer. The control pulse is a 2π rotation on the control
// channel (2.5 MHz, 0.2 μs).
const DATA_DUR: f64 = 0.01;
const DATA_RABI: f64 = 12.5; // area pi/2
const REPHASE_DUR: f64 = 0.01;
const REPHASE_RABI: f64 = 25.0; // area pi
const STARK_DUR: f64 = 0.1;
const STARK_DETUNE: f64 = 2.5; // phase pi/2 over 0.1 us

fn echo_skeleton() -> Vec<Pulse> {
    vec![
        probe("D", 1.0, DATA_DUR, DATA_RABI, 0.0),
        probe("R1", 7.0, REPHASE_DUR, REPHASE_RABI, 0.0),
        probe("R2", 17.0, REPHASE_DUR, REPHASE_RABI, 0.0),
    ]
}

/// Build one of the named sequences.
pub fn preset(which: Preset) -> PulseSequence {
    let ensemble = EnsembleSpec::new(850.0, 10.0, 201);
    let mut seq = PulseSequence { pulses: Vec::new(), dt: 0.01, t_end: 25.0, ensemble };
    match which {
        Preset::FigS1a => {
            seq.pulses = echo_skeleton();
        }
        Preset::Fig1b => {
            seq.pulses = echo_skeleton();
            seq.pulses.push(probe("AC", 3.0, STARK_DUR, 0.0, STARK_DETUNE));
        }
        Preset::Fig3a | Preset::Fig3b => {
            seq.pulses = echo_skeleton();
            seq.pulses.push(probe("AC1", 3.0, STARK_DUR, 0.0, STARK_DETUNE));
            let t_ac2 = if which == Preset::Fig3a { 15.0 } else { 10.0 };
            seq.pulses.push(probe("AC2", t_ac2, STARK_DUR, 0.0, STARK_DETUNE));
        }
        Preset::Fig4a => {
            seq.pulses = echo_skeleton();
            seq.pulses.push(probe("AC1", 3.0, STARK_DUR, 0.0, STARK_DETUNE));
            seq.pulses.push(probe("AC2", 15.0, STARK_DUR, 0.0, STARK_DETUNE));
            seq.pulses.push(Pulse {
                name: "C".to_string(),
                channel: Channel::Control,
                t_on: 17.1,
                duration: 0.2,
                rabi_mhz: 2.5, // area 2pi
                detune_mhz: 0.0,
            });
        }
        Preset::FigS2Resonant => {
            seq.dt = 0.002;
            seq.t_end = 2.0;
            seq.pulses = vec![probe("D", 1.0, 0.2, 5.0, 0.0)];
        }
        Preset::FigS2Detuned(ratio) => {
            seq.dt = 0.002;
            seq.t_end = 2.0;
            // ratio relates the detuning to the rotation-rate Rabi
            // frequency 2·rabi, matching the dressed-splitting convention.
            let rabi = 1.25;
            seq.pulses = vec![probe("AC", 1.0, 0.2, rabi, ratio * 2.0 * rabi)];
        }
    }
    seq.pulses.sort_by(|a, b| a.t_on.total_cmp(&b.t_on));
    seq
}
