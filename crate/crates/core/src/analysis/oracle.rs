//! Analytic phase-tracking oracle.
//!
//! Tracks the detuning phase factor `e^{+/- i delta_j t}` of a symmetric
//! atom pair through the pulse sequence symbolically: a rephasing pulse
//! conjugates the accumulated factor (and swaps the real/imaginary coherence
//! marker), a Stark pulse adds a fixed phase to every group, and an odd-2pi
//! control flop flips the coherence sign. Echo times follow from the
//! conjugation bookkeeping alone: the first echo at `2 t_R1 - t_D`, the
//! second at `2 t_R2 - t_e1`. This never touches the numerical propagator,
//! so it serves as an independent check on the simulation.

use super::{AnalysisError, EchoCharacter};
use crate::sequence::{pulse_area, stark_phase, Channel, Pulse, PulseSequence};
use serde::Serialize;
use std::f64::consts::{PI, TAU};

/// Which coherence quadrature holds the rephased signal at the echo time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrature {
    /// Radiating: the echo appears on Im rho_12.
    Imaginary,
    /// Silenced: the coherence is parked on Re rho_12.
    Real,
}

#[derive(Debug, Clone, Serialize)]
pub struct PredictedEcho {
    pub name: String,
    /// Predicted peak time, us.
    pub time: f64,
    pub quadrature: Quadrature,
    pub character: EchoCharacter,
    /// Net Stark phase carried by every group's coherence at the echo, rad.
    pub net_phase: f64,
}

/// One per-pulse record of the transformation applied to the tracked
/// coherence.
#[derive(Debug, Clone, Serialize)]
pub struct LedgerEntry {
    pub pulse: String,
    pub t_on: f64,
    pub action: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct OraclePrediction {
    pub echoes: Vec<PredictedEcho>,
    pub ledger: Vec<LedgerEntry>,
    /// True when a Stark pair cancels before the first echo, so the sequence
    /// behaves like the bare skeleton.
    pub balanced: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PulseClass {
    Data,
    Rephase,
    Identity,
    /// Phase added to every group's coherence by the simulation,
    /// `-sign(detune) * stark_phase`, rad.
    Stark(f64),
    ControlInvert,
    ControlIdentity,
}

const AREA_TOL: f64 = 0.1 * PI; // 10% of a pi rotation

fn classify(p: &Pulse) -> Result<PulseClass, AnalysisError> {
    let area = pulse_area(p);
    match p.channel {
        Channel::Control => {
            let turns = area / TAU;
            let n = turns.round();
            if (turns - n).abs() * TAU > AREA_TOL || n < 0.0 {
                return Err(AnalysisError::Unclassifiable { pulse: p.name.clone(), area });
            }
            if (n as i64) % 2 == 1 {
                Ok(PulseClass::ControlInvert)
            } else {
                Ok(PulseClass::ControlIdentity)
            }
        }
        Channel::Probe if p.detune_mhz != 0.0 => {
            Ok(PulseClass::Stark(-p.detune_mhz.signum() * stark_phase(p)?))
        }
        Channel::Probe => {
            let residue = area.rem_euclid(TAU);
            if residue <= AREA_TOL || TAU - residue <= AREA_TOL {
                Ok(PulseClass::Identity)
            } else if (residue - PI / 2.0).abs() <= AREA_TOL {
                Ok(PulseClass::Data)
            } else if (residue - PI).abs() <= AREA_TOL {
                Ok(PulseClass::Rephase)
            } else {
                Err(AnalysisError::Unclassifiable { pulse: p.name.clone(), area })
            }
        }
    }
}

/// Data/rephasing timing skeleton of a classifiable sequence.
pub(crate) struct Skeleton {
    pub data_time: f64,
    pub rephase_times: Vec<f64>,
}

pub(crate) fn classify_skeleton(seq: &PulseSequence) -> Result<Skeleton, AnalysisError> {
    let mut pulses: Vec<&Pulse> = seq.pulses.iter().collect();
    pulses.sort_by(|a, b| a.t_on.total_cmp(&b.t_on));
    let mut data_time = None;
    let mut rephase_times = Vec::new();
    for p in &pulses {
        match classify(p)? {
            PulseClass::Data => {
                if data_time.is_some() {
                    return Err(AnalysisError::BadStructure(format!(
                        "more than one data pulse (second is '{}')",
                        p.name
                    )));
                }
                data_time = Some(p.t_on);
            }
            PulseClass::Rephase => rephase_times.push(p.t_on),
            _ => {}
        }
    }
    let data_time = data_time.ok_or(AnalysisError::NoDataPulse)?;
    if rephase_times.iter().any(|&t| t < data_time) {
        return Err(AnalysisError::BadStructure(
            "rephasing pulse arrives before the data pulse".into(),
        ));
    }
    Ok(Skeleton { data_time, rephase_times })
}

/// Net Stark phase carried at time `t_echo` and the number of control
/// inversions applied before it.
fn state_at_echo(classified: &[(f64, PulseClass)], t_echo: f64) -> (f64, u32) {
    let mut phase = 0.0;
    let mut flips = 0u32;
    for &(t, class) in classified {
        if t >= t_echo {
            break;
        }
        match class {
            PulseClass::Stark(phi) => {
                let conjugations =
                    classified.iter().filter(|(tr, c)| *c == PulseClass::Rephase && *tr > t && *tr < t_echo).count();
                phase += phi * if conjugations % 2 == 1 { -1.0 } else { 1.0 };
            }
            PulseClass::ControlInvert => flips += 1,
            _ => {}
        }
    }
    (phase, flips)
}

const SILENT_COS: f64 = 0.25;
const RADIATE_COS: f64 = 0.75;

fn echo_prediction(
    name: &str,
    time: f64,
    bare_character: EchoCharacter,
    net_phase: f64,
    flips: u32,
) -> Result<PredictedEcho, AnalysisError> {
    let c = net_phase.cos();
    let (quadrature, character) = if c.abs() <= SILENT_COS {
        (Quadrature::Real, EchoCharacter::Silent)
    } else if c.abs() >= RADIATE_COS {
        let sign = c.signum() * if flips % 2 == 1 { -1.0 } else { 1.0 };
        let character = match (bare_character, sign > 0.0) {
            (EchoCharacter::Emissive, true) => EchoCharacter::Emissive,
            (EchoCharacter::Emissive, false) => EchoCharacter::Absorptive,
            (EchoCharacter::Absorptive, true) => EchoCharacter::Absorptive,
            (EchoCharacter::Absorptive, false) => EchoCharacter::Emissive,
            (EchoCharacter::Silent, _) => EchoCharacter::Silent,
        };
        (Quadrature::Imaginary, character)
    } else {
        return Err(AnalysisError::AmbiguousStarkPhase(c.abs()));
    };
    Ok(PredictedEcho { name: name.to_string(), time, quadrature, character, net_phase })
}

fn ledger_entry(p: &Pulse, class: PulseClass) -> LedgerEntry {
    let action = match class {
        PulseClass::Data => "creates the tracked coherence on the imaginary quadrature".to_string(),
        PulseClass::Rephase => {
            "conjugates the accumulated phase (e^{+i d t} <-> e^{-i d t}) and swaps the r/i marker"
                .to_string()
        }
        PulseClass::Identity => "full-cycle probe rotation: identity".to_string(),
        PulseClass::Stark(phi) => {
            format!("adds {phi:+.4} rad to every group's coherence phase")
        }
        PulseClass::ControlInvert => "inverts the coherence sign (odd-2pi control flop)".to_string(),
        PulseClass::ControlIdentity => "even-2pi control flop: identity".to_string(),
    };
    LedgerEntry { pulse: p.name.clone(), t_on: p.t_on, action }
}

/// Predict echo times, quadratures, and characters from the phase ledger
/// alone.
pub fn oracle_predict(seq: &PulseSequence) -> Result<OraclePrediction, AnalysisError> {
    let mut pulses: Vec<&Pulse> = seq.pulses.iter().collect();
    pulses.sort_by(|a, b| a.t_on.total_cmp(&b.t_on));

    let mut classified = Vec::with_capacity(pulses.len());
    let mut ledger = Vec::with_capacity(pulses.len());
    let mut data_times = Vec::new();
    let mut rephase_times = Vec::new();
    for p in &pulses {
        let class = classify(p)?;
        ledger.push(ledger_entry(p, class));
        classified.push((p.t_on, class));
        match class {
            PulseClass::Data => data_times.push(p.t_on),
            PulseClass::Rephase => rephase_times.push(p.t_on),
            _ => {}
        }
    }
    if data_times.len() > 1 {
        return Err(AnalysisError::BadStructure("more than one data pulse".into()));
    }
    if rephase_times.len() > 2 {
        return Err(AnalysisError::BadStructure(format!(
            "{} rephasing pulses; at most two are supported",
            rephase_times.len()
        )));
    }
    if let (Some(&t_d), Some(&t_r)) = (data_times.first(), rephase_times.first()) {
        if t_r < t_d {
            return Err(AnalysisError::BadStructure(
                "rephasing pulse arrives before the data pulse".into(),
            ));
        }
    }

    let mut echoes = Vec::new();
    let mut balanced = false;
    if let (Some(&t_d), Some(&t_r1)) = (data_times.first(), rephase_times.first()) {
        let t_e1 = 2.0 * t_r1 - t_d;
        let (phase, flips) = state_at_echo(&classified, t_e1);
        echoes.push(echo_prediction("e1", t_e1, EchoCharacter::Emissive, phase, flips)?);
        let stark_count = classified
            .iter()
            .filter(|(t, c)| matches!(c, PulseClass::Stark(_)) && *t < t_e1)
            .count();
        balanced = stark_count >= 2 && phase.cos() > 0.97;

        if let Some(&t_r2) = rephase_times.get(1) {
            let t_e2 = 2.0 * t_r2 - t_e1;
            let (phase, flips) = state_at_echo(&classified, t_e2);
            echoes.push(echo_prediction("e2", t_e2, EchoCharacter::Absorptive, phase, flips)?);
        }
    }
    Ok(OraclePrediction { echoes, ledger, balanced })
}
