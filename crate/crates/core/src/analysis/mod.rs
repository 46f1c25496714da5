//! Echo detection and classification, the echo-efficiency sweeps, and the
//! analytic phase-tracking oracle cross-check.

mod oracle;

pub use oracle::{oracle_predict, LedgerEntry, OraclePrediction, PredictedEcho, Quadrature};

use crate::dynamics::{propagate_ensemble, DynamicsError};
use crate::ensemble::{build_ensemble, resonant_only};
use crate::sequence::{stark_phase, Channel, PulseSequence, SequenceError};
use crate::trace::TraceSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("window [{lo}, {hi}] us is not inside the trace grid [0, {t_end}] us")]
    WindowOutsideGrid { lo: f64, hi: f64, t_end: f64 },
    #[error("window [{lo}, {hi}] us overlaps pulse '{pulse}'")]
    WindowOverlapsPulse { pulse: String, lo: f64, hi: f64 },
    #[error("sequence has no resonant probe (data) pulse")]
    NoDataPulse,
    #[error("expected exactly one Stark pulse before the first rephasing pulse, found none")]
    NoStarkPulseBeforeRephase,
    #[error("expected exactly one Stark pulse before the first rephasing pulse, found {0}")]
    MultipleStarkPulsesBeforeRephase(usize),
    #[error("pulse '{pulse}' is unclassifiable: area {area:.4} rad is not near pi/2, pi, or a 2pi multiple")]
    Unclassifiable { pulse: String, area: f64 },
    #[error("net Stark phase is ambiguous for prediction: |cos| = {0:.3} is neither near 0 nor near 1")]
    AmbiguousStarkPhase(f64),
    #[error("unsupported pulse structure: {0}")]
    BadStructure(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Sequence(#[from] SequenceError),
}

/// Sign of an echo's radiating quadrature relative to the coherence created
/// by the data pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EchoCharacter {
    /// Opposite imaginary sign to the post-data coherence: radiates.
    Emissive,
    /// Same imaginary sign as the post-data coherence.
    Absorptive,
    /// Radiating quadrature below the silence threshold.
    Silent,
}

impl std::fmt::Display for EchoCharacter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EchoCharacter::Emissive => write!(f, "emissive"),
            EchoCharacter::Absorptive => write!(f, "absorptive"),
            EchoCharacter::Silent => write!(f, "silent"),
        }
    }
}

/// A detected (or absent) echo in one search window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EchoReport {
    /// Time of the peak |Im rho_12| in the window, us.
    pub echo_time: f64,
    /// Peak |Im rho_12| of the macroscopic trace in the window.
    pub amplitude: f64,
    pub character: EchoCharacter,
    /// Sign of the macroscopic Im rho_12 just after the data pulse.
    pub reference_sign: f64,
    /// 5% of the same-window peak of the bare (Stark- and control-free)
    /// counterpart run.
    pub silence_threshold: f64,
    pub window: (f64, f64),
}

/// The sequence with every Stark (detuned probe) and control pulse removed:
/// the bare data/rephasing skeleton used as the silence reference.
pub fn bare_counterpart(seq: &PulseSequence) -> PulseSequence {
    let mut bare = seq.clone();
    bare.pulses.retain(|p| p.channel == Channel::Probe && p.detune_mhz == 0.0);
    bare
}

/// Run the bare counterpart of the sequence behind `traces` with identical
/// ensemble, decay, and grid settings.
pub fn bare_counterpart_traces(traces: &TraceSet) -> Result<TraceSet, DynamicsError> {
    let bare = bare_counterpart(&traces.sequence);
    propagate_ensemble(&bare, &traces.ensemble, &traces.gamma, &traces.config)
}

fn window_indices(
    traces: &TraceSet,
    center: f64,
    halfwidth: f64,
) -> Result<(usize, usize), AnalysisError> {
    let (lo, hi) = (center - halfwidth, center + halfwidth);
    let t_end = *traces.times.last().unwrap_or(&0.0);
    if lo < -1e-9 || hi > t_end + 1e-9 || halfwidth <= 0.0 {
        return Err(AnalysisError::WindowOutsideGrid { lo, hi, t_end });
    }
    for p in &traces.sequence.pulses {
        if p.t_on < hi && p.t_off() > lo {
            return Err(AnalysisError::WindowOverlapsPulse { pulse: p.name.clone(), lo, hi });
        }
    }
    Ok((traces.index_of(lo), traces.index_of(hi)))
}

/// Signed Im rho_12 at the in-window peak of |Im rho_12|.
fn peak_im(traces: &TraceSet, i0: usize, i1: usize) -> (usize, f64) {
    let mut best = i0;
    let mut best_abs = -1.0;
    for k in i0..=i1 {
        let v = traces.im12(k).abs();
        if v > best_abs {
            best_abs = v;
            best = k;
        }
    }
    (best, traces.im12(best))
}

/// Sign of the macroscopic Im rho_12 sampled 0.05 us after the data pulse.
pub fn reference_sign(traces: &TraceSet) -> Result<f64, AnalysisError> {
    let data = traces
        .sequence
        .pulses
        .iter()
        .filter(|p| p.channel == Channel::Probe && p.detune_mhz == 0.0)
        .min_by(|a, b| a.t_on.total_cmp(&b.t_on))
        .ok_or(AnalysisError::NoDataPulse)?;
    let k = traces.index_of(data.t_off() + 0.05);
    let v = traces.im12(k);
    Ok(if v >= 0.0 { 1.0 } else { -1.0 })
}

/// Locate and classify an echo with an explicitly supplied silence threshold.
pub fn detect_echo_with_threshold(
    traces: &TraceSet,
    window_center: f64,
    window_halfwidth: f64,
    silence_threshold: f64,
) -> Result<EchoReport, AnalysisError> {
    let (i0, i1) = window_indices(traces, window_center, window_halfwidth)?;
    let reference = reference_sign(traces)?;
    let (k, im) = peak_im(traces, i0, i1);
    let amplitude = im.abs();
    let character = if amplitude < silence_threshold {
        EchoCharacter::Silent
    } else if im.signum() == -reference {
        EchoCharacter::Emissive
    } else {
        EchoCharacter::Absorptive
    };
    Ok(EchoReport {
        echo_time: traces.times[k],
        amplitude,
        character,
        reference_sign: reference,
        silence_threshold,
        window: (window_center - window_halfwidth, window_center + window_halfwidth),
    })
}

/// Locate and classify an echo in a pulse-free window.
///
/// The silence threshold is computed, not hard-coded: 5% of the same-window
/// peak in a rerun of the bare counterpart sequence with identical ensemble
/// and grid settings.
pub fn detect_echo(
    traces: &TraceSet,
    window_center: f64,
    window_halfwidth: f64,
) -> Result<EchoReport, AnalysisError> {
    let bare = bare_counterpart_traces(traces)?;
    let (i0, i1) = window_indices(&bare, window_center, window_halfwidth)?;
    let (_, bare_peak) = peak_im(&bare, i0, i1);
    let threshold = 0.05 * bare_peak.abs();
    detect_echo_with_threshold(traces, window_center, window_halfwidth, threshold)
}

/// Shrink a desired half-width so the window avoids every pulse interval and
/// stays inside the grid.
pub fn clip_window(seq: &PulseSequence, center: f64, desired_halfwidth: f64) -> f64 {
    let mut h = desired_halfwidth.min(center).min(seq.t_end - center);
    for p in &seq.pulses {
        if p.t_off() <= center {
            h = h.min(center - p.t_off());
        } else if p.t_on >= center {
            h = h.min(p.t_on - center);
        } else {
            return 0.0; // center inside a pulse
        }
    }
    h.max(0.0)
}

/// One row of the efficiency sweep.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SweepRow {
    pub phi_rad: f64,
    /// Signed echo amplitude: Im rho_12 at the in-window |Im| peak, oriented
    /// so the bare (emissive) echo is positive.
    pub amplitude: f64,
    /// amplitude squared.
    pub intensity: f64,
    /// Same quantity for the single-resonant-group (homogeneous) reference.
    pub amplitude_homogeneous: f64,
}

/// Stark-pulse handle used by the sweeps: the single Stark pulse arriving
/// before the first rephasing pulse, plus the e1 window of the base sequence.
struct SweepBase {
    stark_index: usize,
    phase_rate: f64,
    e1_center: f64,
    halfwidth: f64,
}

fn sweep_base(seq: &PulseSequence) -> Result<SweepBase, AnalysisError> {
    let skeleton = oracle::classify_skeleton(seq)?;
    let first_rephase = skeleton
        .rephase_times
        .first()
        .copied()
        .ok_or_else(|| AnalysisError::BadStructure("sweep base has no rephasing pulse".into()))?;
    let starks: Vec<usize> = seq
        .pulses
        .iter()
        .enumerate()
        .filter(|(_, p)| {
            p.channel == Channel::Probe && p.detune_mhz != 0.0 && p.t_on < first_rephase
        })
        .map(|(i, _)| i)
        .collect();
    let stark_index = match starks.len() {
        0 => return Err(AnalysisError::NoStarkPulseBeforeRephase),
        1 => starks[0],
        n => return Err(AnalysisError::MultipleStarkPulsesBeforeRephase(n)),
    };
    let p = &seq.pulses[stark_index];
    let phase_rate = stark_phase(p)? / p.duration;
    let e1_center = 2.0 * first_rephase - skeleton.data_time;
    let halfwidth = clip_window(seq, e1_center, 1.0);
    Ok(SweepBase { stark_index, phase_rate, e1_center, halfwidth })
}

/// Base sequence with the swept Stark pulse scaled to phase `phi` (at fixed
/// generalized Rabi frequency) and its detuning offset by `offset_mhz`.
fn sweep_cell_sequence(
    seq: &PulseSequence,
    base: &SweepBase,
    phi: f64,
    offset_mhz: f64,
) -> PulseSequence {
    let mut cell = seq.clone();
    let duration = phi / base.phase_rate;
    if duration < 1e-12 {
        cell.pulses.remove(base.stark_index);
    } else {
        let p = &mut cell.pulses[base.stark_index];
        p.duration = duration;
        p.detune_mhz += offset_mhz;
    }
    cell
}

fn signed_e1_amplitude(traces: &TraceSet, base: &SweepBase) -> Result<f64, AnalysisError> {
    let (i0, i1) = window_indices(traces, base.e1_center, base.halfwidth)?;
    let reference = reference_sign(traces)?;
    let (_, im) = peak_im(traces, i0, i1);
    Ok(-reference * im)
}

/// Echo amplitude versus Stark phase, realized by scaling the Stark pulse's
/// duration at fixed generalized Rabi frequency. Each row also carries the
/// single-resonant-group reference amplitude.
pub fn efficiency_sweep(
    seq: &PulseSequence,
    phis: &[f64],
) -> Result<Vec<SweepRow>, AnalysisError> {
    let base = sweep_base(seq)?;
    let ensemble = build_ensemble(&seq.ensemble).map_err(|e| {
        AnalysisError::BadStructure(format!("bad ensemble spec: {e}"))
    })?;
    let homogeneous = resonant_only(&ensemble);
    let config = crate::dynamics::PropagationConfig::from_sequence(seq);
    let gamma = crate::dynamics::DecayRates::none();

    let mut rows = Vec::with_capacity(phis.len());
    for &phi in phis {
        let cell = sweep_cell_sequence(seq, &base, phi, 0.0);
        if let Some(v) = crate::sequence::validate(&cell).first() {
            return Err(AnalysisError::BadStructure(format!(
                "sweep cell at phi={phi} is invalid: {v}"
            )));
        }
        let full = propagate_ensemble(&cell, &ensemble, &gamma, &config)?;
        let homog = propagate_ensemble(&cell, &homogeneous, &gamma, &config)?;
        let amplitude = signed_e1_amplitude(&full, &base)?;
        let amplitude_homogeneous = signed_e1_amplitude(&homog, &base)?;
        rows.push(SweepRow {
            phi_rad: phi,
            amplitude,
            intensity: amplitude * amplitude,
            amplitude_homogeneous,
        });
    }
    Ok(rows)
}

/// 2D sweep output: `amplitude[offset_index][phi_index]`.
#[derive(Debug, Clone, Serialize)]
pub struct Sweep2d {
    pub phis_rad: Vec<f64>,
    pub offsets_mhz: Vec<f64>,
    pub amplitude: Vec<Vec<f64>>,
}

/// Echo amplitude over a (Stark phase, detuning offset) grid.
pub fn sweep_2d(
    seq: &PulseSequence,
    phis: &[f64],
    offsets_mhz: &[f64],
) -> Result<Sweep2d, AnalysisError> {
    let base = sweep_base(seq)?;
    let ensemble = build_ensemble(&seq.ensemble).map_err(|e| {
        AnalysisError::BadStructure(format!("bad ensemble spec: {e}"))
    })?;
    let config = crate::dynamics::PropagationConfig::from_sequence(seq);
    let gamma = crate::dynamics::DecayRates::none();

    let mut amplitude = Vec::with_capacity(offsets_mhz.len());
    for &off in offsets_mhz {
        let mut row = Vec::with_capacity(phis.len());
        for &phi in phis {
            let cell = sweep_cell_sequence(seq, &base, phi, off);
            if let Some(v) = crate::sequence::validate(&cell).first() {
                return Err(AnalysisError::BadStructure(format!(
                    "sweep cell at phi={phi}, offset={off} is invalid: {v}"
                )));
            }
            let full = propagate_ensemble(&cell, &ensemble, &gamma, &config)?;
            row.push(signed_e1_amplitude(&full, &base)?);
        }
        amplitude.push(row);
    }
    Ok(Sweep2d { phis_rad: phis.to_vec(), offsets_mhz: offsets_mhz.to_vec(), amplitude })
}

/// Outcome of checking one predicted echo against the simulation.
#[derive(Debug, Clone, Serialize)]
pub struct EchoCheck {
    pub name: String,
    pub predicted_time: f64,
    pub predicted_character: EchoCharacter,
    pub detected_time: f64,
    pub detected_character: EchoCharacter,
    pub detected_amplitude: f64,
    pub time_ok: bool,
    pub character_ok: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub checks: Vec<EchoCheck>,
    pub note: Option<String>,
    pub pass: bool,
}

/// Check every oracle-predicted echo against the simulated trace: peak time
/// within one grid step, character equal.
pub fn compare(traces: &TraceSet, prediction: &OraclePrediction) -> Result<CompareReport, AnalysisError> {
    let dt = traces.config.dt;
    let bare = bare_counterpart_traces(traces)?;
    let mut checks = Vec::new();
    for echo in &prediction.echoes {
        let halfwidth = clip_window(&traces.sequence, echo.time, 1.0);
        let (i0, i1) = window_indices(&bare, echo.time, halfwidth)?;
        let (_, bare_peak) = peak_im(&bare, i0, i1);
        let threshold = 0.05 * bare_peak.abs();
        let report = detect_echo_with_threshold(traces, echo.time, halfwidth, threshold)?;
        let character_ok = report.character == echo.character;
        let time_ok = if echo.character == EchoCharacter::Silent {
            true // no meaningful peak time for an erased echo
        } else {
            (report.echo_time - echo.time).abs() <= dt + 1e-9
        };
        checks.push(EchoCheck {
            name: echo.name.clone(),
            predicted_time: echo.time,
            predicted_character: echo.character,
            detected_time: report.echo_time,
            detected_character: report.character,
            detected_amplitude: report.amplitude,
            time_ok,
            character_ok,
            pass: time_ok && character_ok,
        });
    }
    let pass = checks.iter().all(|c| c.pass);
    let note = prediction.balanced.then(|| "balanced: matches bare".to_string());
    Ok(CompareReport { checks, note, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{propagate_ensemble, DecayRates, PropagationConfig};
    use crate::ensemble::{build_ensemble, EnsembleSpec};
    use crate::sequence::{preset, Preset};
    use approx::assert_abs_diff_eq;

    /// A coarse (fast) variant of a preset for unit tests.
    fn coarse(p: Preset) -> TraceSet {
        let mut seq = preset(p);
        seq.ensemble = EnsembleSpec::new(850.0, 50.0, 41);
        let ens = build_ensemble(&seq.ensemble).unwrap();
        let config = PropagationConfig::from_sequence(&seq);
        propagate_ensemble(&seq, &ens, &DecayRates::none(), &config).unwrap()
    }

    #[test]
    fn bare_double_rephasing_echotimes_and_characters() {
        let traces = coarse(Preset::FigS1a);
        let e1 = detect_echo(&traces, 13.0, 1.0).unwrap();
        assert_eq!(e1.character, EchoCharacter::Emissive);
        assert!((e1.echo_time - 13.0).abs() <= 0.01 + 1e-9);
        let e2 = detect_echo(&traces, 21.0, 1.0).unwrap();
        assert_eq!(e2.character, EchoCharacter::Absorptive);
        assert!((e2.echo_time - 21.0).abs() <= 0.01 + 1e-9);
    }

    #[test]
    fn quarter_turn_stark_pulse_silences_first_echo() {
        let traces = coarse(Preset::Fig1b);
        let e1 = detect_echo(&traces, 13.0, 1.0).unwrap();
        assert_eq!(e1.character, EchoCharacter::Silent);
    }

    #[test]
    fn window_errors() {
        let traces = coarse(Preset::FigS1a);
        assert!(matches!(
            detect_echo(&traces, 24.9, 1.0),
            Err(AnalysisError::WindowOutsideGrid { .. })
        ));
        assert!(matches!(
            detect_echo(&traces, 7.3, 1.0),
            Err(AnalysisError::WindowOverlapsPulse { .. })
        ));
    }

    #[test]
    fn clip_window_avoids_pulses() {
        let seq = preset(Preset::FigS1a);
        let h = clip_window(&seq, 13.0, 1.0);
        assert_abs_diff_eq!(h, 1.0, epsilon = 1e-12);
        let h = clip_window(&seq, 13.0, 10.0);
        assert!(h <= 13.0 - 7.01 + 1e-12);
        assert_eq!(clip_window(&seq, 7.005, 1.0), 0.0);
    }

    #[test]
    fn sweep_requires_exactly_one_stark_pulse_before_rephase() {
        let s1 = preset(Preset::FigS1a);
        assert!(matches!(
            efficiency_sweep(&s1, &[0.5]),
            Err(AnalysisError::NoStarkPulseBeforeRephase)
        ));
        let mut two = preset(Preset::Fig1b);
        let mut extra = two.pulses.iter().find(|p| p.name == "AC").unwrap().clone();
        extra.name = "AC9".into();
        extra.t_on = 4.5;
        two.pulses.push(extra);
        assert!(matches!(
            efficiency_sweep(&two, &[0.5]),
            Err(AnalysisError::MultipleStarkPulsesBeforeRephase(2))
        ));
    }

    #[test]
    fn sweep_2d_zero_offset_row_matches_1d_sweep() {
        let mut seq = preset(Preset::Fig1b);
        seq.ensemble = EnsembleSpec::new(850.0, 200.0, 11);
        let phis = [0.7, std::f64::consts::FRAC_PI_2];
        let rows = efficiency_sweep(&seq, &phis).unwrap();
        let grid = sweep_2d(&seq, &phis, &[0.0, 0.5]).unwrap();
        assert_eq!(grid.amplitude.len(), 2);
        assert_eq!(grid.amplitude[0].len(), 2);
        for (k, row) in rows.iter().enumerate() {
            assert_abs_diff_eq!(grid.amplitude[0][k], row.amplitude, epsilon = 1e-12);
        }
    }
}
