//! Python extension module exposing the main simulator types and operations.
//!
//! Build with `cargo build -p starkecho-py --release`; the cdylib in
//! `target/release/` imports as `_starkecho` (see `python/smoke_test.py`).

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use starkecho::analysis::{
    bare_counterpart_traces, detect_echo_with_threshold, efficiency_sweep, oracle_predict,
};
use starkecho::dynamics::{propagate_ensemble, DecayRates, Method, PropagationConfig};
use starkecho::ensemble::{build_ensemble, resonant_only, EnsembleSpec};
use starkecho::sequence::{
    parse_sequence, preset, pulse_area, serialize_sequence, stark_phase, validate, Channel,
    Preset, Pulse, PulseSequence,
};
use starkecho::trace::TraceSet;

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn load_sequence(source: &str) -> PyResult<PulseSequence> {
    if let Ok(p) = Preset::from_name(source) {
        return Ok(preset(p));
    }
    parse_sequence(source).map_err(value_err)
}

fn parse_method(method: &str) -> PyResult<Method> {
    match method {
        "exact" => Ok(Method::ExactPiecewise),
        "rk4" => Ok(Method::Rk4),
        other => Err(PyValueError::new_err(format!("unknown method '{other}'"))),
    }
}

/// Canonical text of a named preset sequence.
#[pyfunction]
fn preset_text(name: &str) -> PyResult<String> {
    Ok(serialize_sequence(&preset(Preset::from_name(name).map_err(value_err)?)))
}

/// Validation violations of a pulse program (empty list = valid).
#[pyfunction]
fn validate_text(text: &str) -> PyResult<Vec<String>> {
    match parse_sequence(text) {
        Ok(seq) => Ok(validate(&seq).iter().map(|v| v.to_string()).collect()),
        Err(e) => Ok(vec![e.to_string()]),
    }
}

/// Resonant rotation angle (rad) of a square pulse: 2 * (2*pi*rabi) * dur.
#[pyfunction]
fn area(rabi_mhz: f64, duration_us: f64) -> f64 {
    pulse_area(&Pulse {
        name: "p".into(),
        channel: Channel::Probe,
        t_on: 0.0,
        duration: duration_us,
        rabi_mhz,
        detune_mhz: 0.0,
    })
}

/// Phase (rad) a detuned probe pulse imprints on the coherence.
#[pyfunction]
fn phase(rabi_mhz: f64, detune_mhz: f64, duration_us: f64) -> PyResult<f64> {
    stark_phase(&Pulse {
        name: "p".into(),
        channel: Channel::Probe,
        t_on: 0.0,
        duration: duration_us,
        rabi_mhz,
        detune_mhz,
    })
    .map_err(value_err)
}

/// Weighted detuning groups of a Gaussian line:
/// `(deltas_khz, weights, raw_coverage)`.
#[pyfunction]
fn ensemble_groups(
    fwhm_khz: f64,
    spacing_khz: f64,
    group_count: usize,
) -> PyResult<(Vec<f64>, Vec<f64>, f64)> {
    let ens = build_ensemble(&EnsembleSpec::new(fwhm_khz, spacing_khz, group_count))
        .map_err(value_err)?;
    Ok((
        ens.groups.iter().map(|g| g.delta_khz).collect(),
        ens.groups.iter().map(|g| g.weight).collect(),
        ens.raw_coverage,
    ))
}

fn echoes_list<'py>(py: Python<'py>, traces: &TraceSet) -> PyResult<Bound<'py, PyList>> {
    let out = PyList::empty(py);
    let prediction = match oracle_predict(&traces.sequence) {
        Ok(p) => p,
        Err(_) => return Ok(out),
    };
    if prediction.echoes.is_empty() {
        return Ok(out);
    }
    let bare = bare_counterpart_traces(traces).map_err(value_err)?;
    for echo in &prediction.echoes {
        let halfwidth = starkecho::analysis::clip_window(&traces.sequence, echo.time, 1.0);
        if halfwidth < 2.0 * traces.config.dt {
            continue;
        }
        let bare_peak = detect_echo_with_threshold(&bare, echo.time, halfwidth, 0.0)
            .map_err(value_err)?
            .amplitude;
        let report = detect_echo_with_threshold(traces, echo.time, halfwidth, 0.05 * bare_peak)
            .map_err(value_err)?;
        let d = PyDict::new(py);
        d.set_item("name", &echo.name)?;
        d.set_item("predicted_time_us", echo.time)?;
        d.set_item("predicted_character", format!("{}", echo.character))?;
        d.set_item("time_us", report.echo_time)?;
        d.set_item("amplitude", report.amplitude)?;
        d.set_item("character", format!("{}", report.character))?;
        d.set_item("silence_threshold", report.silence_threshold)?;
        out.append(d)?;
    }
    Ok(out)
}

/// Simulate a sequence (preset name or pulse-program text) and return the
/// macroscopic trace plus detected echoes as a dict.
#[pyfunction]
#[pyo3(signature = (source, method = "exact", homogeneous = false))]
fn run(py: Python<'_>, source: &str, method: &str, homogeneous: bool) -> PyResult<Py<PyDict>> {
    let seq = load_sequence(source)?;
    let mut ens = build_ensemble(&seq.ensemble).map_err(value_err)?;
    if homogeneous {
        ens = resonant_only(&ens);
    }
    let mut config = PropagationConfig::from_sequence(&seq);
    config.method = parse_method(method)?;
    let traces =
        propagate_ensemble(&seq, &ens, &DecayRates::none(), &config).map_err(value_err)?;

    let d = PyDict::new(py);
    d.set_item("times_us", &traces.times)?;
    let col = |f: &dyn Fn(usize) -> f64| -> Vec<f64> { (0..traces.len()).map(f).collect() };
    d.set_item("re12", col(&|k| traces.re12(k)))?;
    d.set_item("im12", col(&|k| traces.im12(k)))?;
    d.set_item("p11", col(&|k| traces.sample(k).p11))?;
    d.set_item("p22", col(&|k| traces.sample(k).p22))?;
    d.set_item("p33", col(&|k| traces.sample(k).p33))?;
    d.set_item("echoes", echoes_list(py, &traces)?)?;
    Ok(d.into())
}

/// Analytic phase-ledger prediction for a sequence as a dict.
#[pyfunction]
fn oracle(py: Python<'_>, source: &str) -> PyResult<Py<PyDict>> {
    let seq = load_sequence(source)?;
    let prediction = oracle_predict(&seq).map_err(value_err)?;
    let d = PyDict::new(py);
    let echoes = PyList::empty(py);
    for e in &prediction.echoes {
        let item = PyDict::new(py);
        item.set_item("name", &e.name)?;
        item.set_item("time_us", e.time)?;
        item.set_item("character", format!("{}", e.character))?;
        item.set_item("quadrature", format!("{:?}", e.quadrature).to_lowercase())?;
        item.set_item("net_phase_rad", e.net_phase)?;
        echoes.append(item)?;
    }
    d.set_item("echoes", echoes)?;
    let ledger = PyList::empty(py);
    for entry in &prediction.ledger {
        ledger.append((entry.pulse.clone(), entry.t_on, entry.action.clone()))?;
    }
    d.set_item("ledger", ledger)?;
    d.set_item("balanced", prediction.balanced)?;
    Ok(d.into())
}

/// Echo amplitude vs Stark phase; rows of
/// `(phi_rad, amplitude, intensity, amplitude_homogeneous)`.
#[pyfunction]
fn sweep(source: &str, phis: Vec<f64>) -> PyResult<Vec<(f64, f64, f64, f64)>> {
    let seq = load_sequence(source)?;
    let rows = efficiency_sweep(&seq, &phis).map_err(value_err)?;
    Ok(rows
        .iter()
        .map(|r| (r.phi_rad, r.amplitude, r.intensity, r.amplitude_homogeneous))
        .collect())
}

#[pymodule]
fn _starkecho(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(preset_text, m)?)?;
    m.add_function(wrap_pyfunction!(validate_text, m)?)?;
    m.add_function(wrap_pyfunction!(area, m)?)?;
    m.add_function(wrap_pyfunction!(phase, m)?)?;
    m.add_function(wrap_pyfunction!(ensemble_groups, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(oracle, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    Ok(())
}
