//! Liouville-von Neumann propagation of one atom group's 3x3 density matrix
//! through a pulse sequence.
//!
//! The rotating-frame Hamiltonian at any instant is real symmetric,
//!
//! ```text
//!     | delta1  omega1    0    |
//! H = | omega1  delta2  omega2 |      (rad/us; hbar absorbed)
//!     |   0     omega2    0    |
//! ```
//!
//! over the basis (|1> ground, |2> excited, |3> auxiliary ground), and the
//! equation of motion is `drho/dt = -i [H, rho] - (gamma rho + rho gamma)/2`
//! with a nonnegative decay matrix `gamma`.
//!
//! Pulses are square, so H is piecewise constant; the default integrator
//! diagonalizes H on each constant segment and applies the exact unitary,
//! while the RK4 path handles nonzero decay and doubles as a cross-check.
//! Steps never straddle a pulse edge: the output grid is subdivided at every
//! edge before stepping.

use crate::ensemble::{AtomGroup, Ensemble};
use crate::sequence::{validate, Channel, PulseSequence};
use crate::trace::{GroupCoherence, TraceSet};
use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use thiserror::Error;

pub type DensityMatrix = Matrix3<C64>;

/// All population in the ground state |1>.
pub fn ground_state() -> DensityMatrix {
    let mut m = DensityMatrix::zeros();
    m[(0, 0)] = C64::new(1.0, 0.0);
    m
}

/// Project back onto the Hermitian subspace (the integrators preserve
/// Hermiticity up to rounding; this keeps it exact).
pub fn hermitize(rho: &mut DensityMatrix) {
    let adj = rho.adjoint();
    *rho = (*rho + adj) * C64::new(0.5, 0.0);
}

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("step size must be positive, got {0}")]
    NonPositiveDt(f64),
    #[error("grid must satisfy dt > 0, t_end > 0 and t_end/dt <= 1e7 (dt={dt}, t_end={t_end})")]
    BadGrid { dt: f64, t_end: f64 },
    #[error("exact_piecewise requires zero decay; use the rk4 method for nonzero gamma")]
    DecayRequiresRk4,
    #[error("invalid sequence: {0}")]
    InvalidSequence(String),
}

/// Integrator choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Exact unitary per constant-H segment via eigendecomposition of the
    /// real-symmetric Hamiltonian. Requires zero decay.
    ExactPiecewise,
    /// Classical fourth-order Runge-Kutta on the full equation of motion,
    /// internally subdivided so the local truncation error stays small.
    Rk4,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::ExactPiecewise => write!(f, "exact"),
            Method::Rk4 => write!(f, "rk4"),
        }
    }
}

/// Whether the control-channel detuning carries the group's inhomogeneous
/// detuning or stays at zero while a control pulse is on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlDetuning {
    /// delta2 = 0 always: the control flop is exact for every group and the
    /// probe-coherence clock keeps running through the control pulse.
    Zero,
    /// delta2 = 2*pi*delta_j while a control pulse is active (shared excited
    /// state carries the inhomogeneity on both transitions).
    GroupDelta,
}

/// 3x3 nonnegative decay-rate matrix, 1/us. Default: no decay.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayRates(pub Matrix3<f64>);

impl Default for DecayRates {
    fn default() -> Self {
        DecayRates(Matrix3::zeros())
    }
}

impl DecayRates {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }
}

/// Grid and integrator configuration for a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationConfig {
    /// Output/step grid, us.
    pub dt: f64,
    /// End of the simulated window, us.
    pub t_end: f64,
    pub method: Method,
    pub control_detuning: ControlDetuning,
    /// Retain per-group rho_12 series in the trace set.
    pub keep_per_group: bool,
    /// Propagate groups on the thread pool. The macroscopic reduction is
    /// performed in ascending-detuning order either way, so results are
    /// bitwise identical.
    pub parallel: bool,
}

impl PropagationConfig {
    pub fn from_sequence(seq: &PulseSequence) -> Self {
        Self {
            dt: seq.dt,
            t_end: seq.t_end,
            method: Method::ExactPiecewise,
            control_detuning: ControlDetuning::Zero,
            keep_per_group: false,
            parallel: true,
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.dt > 0.0) || !(self.t_end > 0.0) || self.t_end / self.dt > 1e7 {
            return Err(DynamicsError::BadGrid { dt: self.dt, t_end: self.t_end });
        }
        Ok(())
    }

    fn n_steps(&self) -> usize {
        let frames = self.t_end / self.dt;
        let rounded = frames.round();
        if (frames - rounded).abs() < 1e-6 {
            rounded as usize
        } else {
            frames.floor() as usize
        }
    }
}

/// Instantaneous Hamiltonian parameters, rad/us.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamiltonianFrame {
    pub omega1: f64,
    pub omega2: f64,
    pub delta1: f64,
    pub delta2: f64,
}

impl HamiltonianFrame {
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.delta1,
            self.omega1,
            0.0,
            self.omega1,
            self.delta2,
            self.omega2,
            0.0,
            self.omega2,
            0.0,
        )
    }

}

/// The frame seen by `group` at time `t` (default control-detuning
/// convention). Gaps return the free-evolution frame.
pub fn frame_at(t: f64, seq: &PulseSequence, group: &AtomGroup) -> HamiltonianFrame {
    frame_at_with(t, seq, group, ControlDetuning::Zero)
}

/// As [`frame_at`] with an explicit control-detuning convention.
pub fn frame_at_with(
    t: f64,
    seq: &PulseSequence,
    group: &AtomGroup,
    control: ControlDetuning,
) -> HamiltonianFrame {
    let delta_mhz = group.delta_khz / 1000.0;
    let mut frame = HamiltonianFrame {
        omega1: 0.0,
        omega2: 0.0,
        delta1: TAU * delta_mhz,
        delta2: 0.0,
    };
    for p in seq.pulses.iter().filter(|p| p.contains(t)) {
        match p.channel {
            Channel::Probe => {
                frame.omega1 = TAU * p.rabi_mhz;
                frame.delta1 = TAU * (delta_mhz + p.detune_mhz);
            }
            Channel::Control => {
                frame.omega2 = TAU * p.rabi_mhz;
                if control == ControlDetuning::GroupDelta {
                    frame.delta2 = TAU * delta_mhz;
                }
            }
        }
    }
    frame
}

/// Eigendecomposition of a constant real-symmetric H, reused for every step
/// inside one segment.
struct ExactSegment {
    vecs: Matrix3<f64>,
    vals: Vector3<f64>,
    cached: Option<(f64, Matrix3<C64>, Matrix3<C64>)>,
}

impl ExactSegment {
    fn new(h: &Matrix3<f64>) -> Self {
        let eig = h.symmetric_eigen();
        Self { vecs: eig.eigenvectors, vals: eig.eigenvalues, cached: None }
    }

    fn propagator(&self, tau: f64) -> Matrix3<C64> {
        let mut u = Matrix3::<C64>::zeros();
        for k in 0..3 {
            let phase = C64::from_polar(1.0, -self.vals[k] * tau);
            for i in 0..3 {
                for j in 0..3 {
                    u[(i, j)] += phase * self.vecs[(i, k)] * self.vecs[(j, k)];
                }
            }
        }
        u
    }

    fn advance(&mut self, rho: &mut DensityMatrix, tau: f64) {
        let (u, u_adj) = match &self.cached {
            Some((len, u, ua)) if (*len - tau).abs() < 1e-15 => (*u, *ua),
            _ => {
                let u = self.propagator(tau);
                let ua = u.adjoint();
                self.cached = Some((tau, u, ua));
                (u, ua)
            }
        };
        *rho = u * *rho * u_adj;
        hermitize(rho);
    }
}

fn complexify(m: &Matrix3<f64>) -> Matrix3<C64> {
    m.map(|x| C64::new(x, 0.0))
}

fn lvn_derivative(rho: &DensityMatrix, h: &Matrix3<C64>, gamma: &Matrix3<C64>) -> DensityMatrix {
    let comm = h * rho - rho * h;
    let damp = gamma * rho + rho * gamma;
    comm * C64::new(0.0, -1.0) - damp * C64::new(0.5, 0.0)
}

fn rk4_single(rho: &DensityMatrix, h: &Matrix3<C64>, gamma: &Matrix3<C64>, dt: f64) -> DensityMatrix {
    let half = C64::new(dt / 2.0, 0.0);
    let full = C64::new(dt, 0.0);
    let k1 = lvn_derivative(rho, h, gamma);
    let k2 = lvn_derivative(&(rho + k1 * half), h, gamma);
    let k3 = lvn_derivative(&(rho + k2 * half), h, gamma);
    let k4 = lvn_derivative(&(rho + k3 * full), h, gamma);
    rho + (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4) * C64::new(dt / 6.0, 0.0)
}

/// Crude bound on the dynamics rate (rad/us) used to pick RK4 substeps.
fn rate_bound(h: &Matrix3<f64>, gamma: &Matrix3<f64>) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..3 {
        let mut row = 0.0;
        for j in 0..3 {
            row += h[(i, j)].abs() + gamma[(i, j)].abs();
        }
        m = m.max(row);
    }
    2.0 * m
}

/// Advance `rho` by one step of `dt` under a constant frame.
///
/// `ExactPiecewise` applies `U rho U^dagger` with `U = exp(-i H dt)` and
/// requires zero decay; `Rk4` takes a single classical fourth-order step of
/// the full equation of motion. Both re-symmetrize the result.
pub fn step(
    rho: &DensityMatrix,
    frame: &HamiltonianFrame,
    gamma: &DecayRates,
    dt: f64,
    method: Method,
) -> Result<DensityMatrix, DynamicsError> {
    if !(dt > 0.0) {
        return Err(DynamicsError::NonPositiveDt(dt));
    }
    let mut next = *rho;
    match method {
        Method::ExactPiecewise => {
            if !gamma.is_zero() {
                return Err(DynamicsError::DecayRequiresRk4);
            }
            ExactSegment::new(&frame.matrix()).advance(&mut next, dt);
        }
        Method::Rk4 => {
            next = rk4_single(rho, &complexify(&frame.matrix()), &complexify(&gamma.0), dt);
            hermitize(&mut next);
        }
    }
    Ok(next)
}

/// Full density-matrix time series of one atom group on the output grid.
#[derive(Debug, Clone)]
pub struct GroupTrace {
    pub group: AtomGroup,
    pub times: Vec<f64>,
    pub rho: Vec<DensityMatrix>,
}

const EDGE_TOL: f64 = 1e-9;

fn edge_times(seq: &PulseSequence, t_end: f64) -> Vec<f64> {
    let mut edges = vec![0.0, t_end];
    for p in &seq.pulses {
        for e in [p.t_on, p.t_off()] {
            if e > EDGE_TOL && e < t_end - EDGE_TOL {
                edges.push(e);
            }
        }
    }
    edges.sort_by(f64::total_cmp);
    edges.dedup_by(|a, b| (*a - *b).abs() < EDGE_TOL);
    edges
}

struct Stepper<'a> {
    seq: &'a PulseSequence,
    group: AtomGroup,
    gamma_c: Matrix3<C64>,
    method: Method,
    control: ControlDetuning,
    // state for the current constant-H segment
    seg_frame: Option<HamiltonianFrame>,
    exact: Option<ExactSegment>,
    h_c: Matrix3<C64>,
    rate: f64,
}

impl<'a> Stepper<'a> {
    fn new(
        seq: &'a PulseSequence,
        group: AtomGroup,
        gamma: &DecayRates,
        method: Method,
        control: ControlDetuning,
    ) -> Self {
        Self {
            seq,
            group,
            gamma_c: complexify(&gamma.0),
            method,
            control,
            seg_frame: None,
            exact: None,
            h_c: Matrix3::zeros(),
            rate: 0.0,
        }
    }

    fn enter_segment(&mut self, t: f64, gamma: &DecayRates) {
        let frame = frame_at_with(t, self.seq, &self.group, self.control);
        if self.seg_frame == Some(frame) {
            return;
        }
        let h = frame.matrix();
        match self.method {
            Method::ExactPiecewise => self.exact = Some(ExactSegment::new(&h)),
            Method::Rk4 => {
                self.h_c = complexify(&h);
                self.rate = rate_bound(&h, &gamma.0);
            }
        }
        self.seg_frame = Some(frame);
    }

    fn advance(&mut self, rho: &mut DensityMatrix, tau: f64) {
        match self.method {
            Method::ExactPiecewise => self.exact.as_mut().unwrap().advance(rho, tau),
            Method::Rk4 => {
                // subdivide so the local truncation error stays well below
                // the cross-validation tolerance
                let n = ((self.rate * tau / 0.1).ceil() as usize).max(1);
                let h = tau / n as f64;
                for _ in 0..n {
                    *rho = rk4_single(rho, &self.h_c, &self.gamma_c, h);
                }
                hermitize(rho);
            }
        }
    }

}

/// Propagate one atom group from the ground state through the sequence.
///
/// The returned series is sampled on the `config.dt` grid; integration steps
/// are split internally at every pulse edge so each step sees a constant
/// frame. Deterministic for fixed inputs.
pub fn propagate_group(
    seq: &PulseSequence,
    group: &AtomGroup,
    gamma: &DecayRates,
    config: &PropagationConfig,
) -> Result<GroupTrace, DynamicsError> {
    config.validate()?;
    if config.method == Method::ExactPiecewise && !gamma.is_zero() {
        return Err(DynamicsError::DecayRequiresRk4);
    }
    let violations = validate(seq);
    if let Some(v) = violations.first() {
        return Err(DynamicsError::InvalidSequence(v.to_string()));
    }

    let n_steps = config.n_steps();
    let edges = edge_times(seq, config.t_end);
    let mut stepper = Stepper::new(seq, *group, gamma, config.method, config.control_detuning);

    let mut rho = ground_state();
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut out = Vec::with_capacity(n_steps + 1);
    times.push(0.0);
    out.push(rho);

    let mut edge_idx = 0usize;
    for k in 0..n_steps {
        let t0 = k as f64 * config.dt;
        let t1 = (k + 1) as f64 * config.dt;
        let mut a = t0;
        loop {
            while edge_idx + 1 < edges.len() && edges[edge_idx + 1] <= a + EDGE_TOL {
                edge_idx += 1;
            }
            let next_edge = edges.get(edge_idx + 1).copied().unwrap_or(f64::INFINITY);
            let b = next_edge.min(t1);
            if b - a > EDGE_TOL {
                stepper.enter_segment(a, gamma);
                stepper.advance(&mut rho, b - a);
            }
            if t1 - b <= EDGE_TOL {
                break;
            }
            a = b;
        }
        times.push(t1);
        out.push(rho);
    }
    Ok(GroupTrace { group: *group, times, rho: out })
}

/// Propagate every group and reduce the weighted macroscopic trace.
///
/// Groups may be propagated in parallel; the reduction always runs in
/// ascending-detuning order so the output is bitwise deterministic.
pub fn propagate_ensemble(
    seq: &PulseSequence,
    ensemble: &Ensemble,
    gamma: &DecayRates,
    config: &PropagationConfig,
) -> Result<TraceSet, DynamicsError> {
    config.validate()?;
    let run = |g: &AtomGroup| propagate_group(seq, g, gamma, config);
    let traces: Vec<GroupTrace> = if config.parallel {
        ensemble.groups.par_iter().map(run).collect::<Result<_, _>>()?
    } else {
        ensemble.groups.iter().map(run).collect::<Result<_, _>>()?
    };

    let times = traces.first().map(|t| t.times.clone()).unwrap_or_default();
    let n = times.len();
    let mut macroscopic = vec![DensityMatrix::zeros(); n];
    for trace in &traces {
        let w = C64::new(trace.group.weight, 0.0);
        for (acc, rho) in macroscopic.iter_mut().zip(&trace.rho) {
            *acc += rho * w;
        }
    }
    let per_group = config.keep_per_group.then(|| {
        traces
            .iter()
            .map(|t| GroupCoherence {
                delta_khz: t.group.delta_khz,
                weight: t.group.weight,
                rho12: t.rho.iter().map(|r| r[(0, 1)]).collect(),
            })
            .collect()
    });

    Ok(TraceSet {
        times,
        macroscopic,
        per_group,
        sequence: seq.clone(),
        ensemble: ensemble.clone(),
        config: *config,
        gamma: gamma.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{build_ensemble, resonant_only, EnsembleSpec};
    use crate::sequence::{preset, Preset, Pulse, PulseSequence};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn free_frame(delta1: f64) -> HamiltonianFrame {
        HamiltonianFrame { omega1: 0.0, omega2: 0.0, delta1, delta2: 0.0 }
    }

    #[test]
    fn zero_frame_is_identity() {
        let rho = ground_state();
        for method in [Method::ExactPiecewise, Method::Rk4] {
            let next = step(&rho, &free_frame(0.0), &DecayRates::none(), 0.37, method).unwrap();
            assert!((next - rho).iter().all(|z| z.norm() < 1e-14));
        }
    }

    #[test]
    fn full_rotation_returns_to_ground() {
        // 2*omega1*dt = 2*pi: one full Rabi cycle in a single exact step
        let omega1 = TAU * 5.0;
        let dt = PI / omega1;
        let frame = HamiltonianFrame { omega1, omega2: 0.0, delta1: 0.0, delta2: 0.0 };
        let next = step(&ground_state(), &frame, &DecayRates::none(), dt, Method::ExactPiecewise)
            .unwrap();
        assert!((next[(0, 0)].re - 1.0).abs() < 1e-9);
        assert!(next[(1, 1)].norm() < 1e-9);
    }

    #[test]
    fn detuned_rabi_matches_closed_form() {
        // H = [[d, w], [w, 0]]: rho22(t) = 4w^2/(d^2+4w^2) sin^2(E t),
        // E = sqrt(d^2/4 + w^2). Ratio d = 2*sqrt(3)*w gives max 1/4.
        let omega1 = TAU * 1.25;
        let delta1 = 2.0 * 3.0f64.sqrt() * omega1;
        let frame = HamiltonianFrame { omega1, omega2: 0.0, delta1, delta2: 0.0 };
        let e = (delta1 * delta1 / 4.0 + omega1 * omega1).sqrt();
        let amp = 4.0 * omega1 * omega1 / (delta1 * delta1 + 4.0 * omega1 * omega1);
        assert_abs_diff_eq!(amp, 0.25, epsilon = 1e-12);

        let dt = 0.002;
        let mut rho = ground_state();
        let mut max_p22: f64 = 0.0;
        for k in 1..=200 {
            rho = step(&rho, &frame, &DecayRates::none(), dt, Method::ExactPiecewise).unwrap();
            let expected = amp * (e * k as f64 * dt).sin().powi(2);
            assert_abs_diff_eq!(rho[(1, 1)].re, expected, epsilon = 1e-9);
            max_p22 = max_p22.max(rho[(1, 1)].re);
        }
        assert_abs_diff_eq!(max_p22, 0.25, epsilon = 1e-3);
    }

    #[test]
    fn step_rejects_bad_dt_and_decay_with_exact() {
        let frame = free_frame(1.0);
        assert!(matches!(
            step(&ground_state(), &frame, &DecayRates::none(), 0.0, Method::Rk4),
            Err(DynamicsError::NonPositiveDt(_))
        ));
        let mut g = Matrix3::zeros();
        g[(1, 1)] = 0.5;
        assert!(matches!(
            step(&ground_state(), &frame, &DecayRates(g), 0.01, Method::ExactPiecewise),
            Err(DynamicsError::DecayRequiresRk4)
        ));
    }

    #[test]
    fn rk4_decay_matches_exponential() {
        // gamma on the excited state: rho22 ~ e^{-g t}, |rho12| ~ e^{-g t/2}
        let g = 0.8;
        let mut gamma = Matrix3::zeros();
        gamma[(1, 1)] = g;
        let gamma = DecayRates(gamma);
        let mut rho = DensityMatrix::zeros();
        rho[(0, 0)] = C64::new(0.5, 0.0);
        rho[(1, 1)] = C64::new(0.5, 0.0);
        rho[(0, 1)] = C64::new(0.5, 0.0);
        rho[(1, 0)] = C64::new(0.5, 0.0);
        let frame = free_frame(0.0);
        let dt = 0.01;
        let mut t = 0.0;
        for _ in 0..300 {
            rho = step(&rho, &frame, &gamma, dt, Method::Rk4).unwrap();
            t += dt;
        }
        assert_abs_diff_eq!(rho[(1, 1)].re, 0.5 * (-g * t).exp(), epsilon = 1e-8);
        assert_abs_diff_eq!(rho[(0, 1)].norm(), 0.5 * (-g * t / 2.0).exp(), epsilon = 1e-8);
    }

    #[test]
    fn frame_lookup_matches_conventions() {
        let seq = PulseSequence {
            pulses: vec![Pulse {
                name: "AC".into(),
                channel: Channel::Probe,
                t_on: 3.0,
                duration: 0.1,
                rabi_mhz: 1.25,
                detune_mhz: 15.0f64.sqrt() * 1.25,
            }],
            dt: 0.01,
            t_end: 5.0,
            ensemble: EnsembleSpec::new(850.0, 10.0, 1),
        };
        let resonant = AtomGroup { delta_khz: 0.0, weight: 1.0 };
        let f = frame_at(3.05, &seq, &resonant);
        assert_abs_diff_eq!(f.omega1, TAU * 1.25, epsilon = 1e-12);
        assert_abs_diff_eq!(f.delta1, TAU * 4.841229182759271, epsilon = 1e-9);
        assert_eq!(f.omega2, 0.0);

        // gap: free evolution at the group detuning
        let detuned = AtomGroup { delta_khz: 150.0, weight: 1.0 };
        let f = frame_at(2.0, &seq, &detuned);
        assert_eq!(f.omega1, 0.0);
        assert_abs_diff_eq!(f.delta1, TAU * 0.15, epsilon = 1e-12);

        // half-open activity: on at t_on, off at t_on + dur
        assert!(frame_at(3.0, &seq, &resonant).omega1 > 0.0);
        assert_eq!(frame_at(3.1, &seq, &resonant).omega1, 0.0);
    }

    #[test]
    fn control_pulse_drives_omega2_only() {
        let seq = preset(Preset::Fig4a);
        let group = AtomGroup { delta_khz: -70.0, weight: 1.0 };
        let f = frame_at(17.2, &seq, &group);
        assert!(f.omega2 > 0.0);
        assert_eq!(f.omega1, 0.0);
        assert_eq!(f.delta2, 0.0);
        let f = frame_at_with(17.2, &seq, &group, ControlDetuning::GroupDelta);
        assert_abs_diff_eq!(f.delta2, TAU * -0.07, epsilon = 1e-12);
    }

    #[test]
    fn empty_sequence_keeps_state_constant() {
        let seq = PulseSequence {
            pulses: vec![],
            dt: 0.05,
            t_end: 1.0,
            ensemble: EnsembleSpec::new(850.0, 10.0, 1),
        };
        let group = AtomGroup { delta_khz: 310.0, weight: 1.0 };
        let config = PropagationConfig::from_sequence(&seq);
        let trace = propagate_group(&seq, &group, &DecayRates::none(), &config).unwrap();
        assert_eq!(trace.rho.len(), 21);
        for rho in &trace.rho {
            assert!((rho - ground_state()).iter().all(|z| z.norm() < 1e-15));
        }
    }

    #[test]
    fn free_evolution_phase_slope_is_minus_two_pi_delta() {
        let seq = preset(Preset::Fig1b);
        let group = AtomGroup { delta_khz: 150.0, weight: 1.0 };
        let config = PropagationConfig::from_sequence(&seq);
        let trace = propagate_group(&seq, &group, &DecayRates::none(), &config).unwrap();
        // between R1 (ends 7.01) and R2 (starts 17): pure free evolution
        let i0 = (7.5 / 0.01) as usize;
        let i1 = (16.5 / 0.01) as usize;
        let mut prev = trace.rho[i0][(0, 1)].arg();
        let mut unwrapped = prev;
        let mut total = 0.0;
        for k in i0 + 1..=i1 {
            let a = trace.rho[k][(0, 1)].arg();
            let mut d = a - prev;
            while d > PI {
                d -= TAU;
            }
            while d < -PI {
                d += TAU;
            }
            unwrapped += d;
            prev = a;
            total = unwrapped;
        }
        let slope = (total - trace.rho[i0][(0, 1)].arg()) / ((i1 - i0) as f64 * 0.01);
        assert_abs_diff_eq!(slope, -TAU * 0.15, epsilon = 1e-3);
    }

    #[test]
    fn off_grid_pulse_edges_are_split_exactly() {
        // a pi pulse living entirely inside one output step still inverts
        let seq = PulseSequence {
            pulses: vec![Pulse {
                name: "R".into(),
                channel: Channel::Probe,
                t_on: 0.052,
                duration: 0.005,
                rabi_mhz: 50.0,
                detune_mhz: 0.0,
            }],
            dt: 0.01,
            t_end: 0.2,
            ensemble: EnsembleSpec::new(850.0, 10.0, 1),
        };
        let group = AtomGroup { delta_khz: 0.0, weight: 1.0 };
        let config = PropagationConfig::from_sequence(&seq);
        for method in [Method::ExactPiecewise, Method::Rk4] {
            let cfg = PropagationConfig { method, ..config };
            let trace = propagate_group(&seq, &group, &DecayRates::none(), &cfg).unwrap();
            let last = trace.rho.last().unwrap();
            assert_abs_diff_eq!(last[(1, 1)].re, 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn single_resonant_group_macro_equals_group_trace() {
        let seq = preset(Preset::FigS2Resonant);
        let ens = resonant_only(&build_ensemble(&seq.ensemble).unwrap());
        let config = PropagationConfig::from_sequence(&seq);
        let set = propagate_ensemble(&seq, &ens, &DecayRates::none(), &config).unwrap();
        let single =
            propagate_group(&seq, &ens.groups[0], &DecayRates::none(), &config).unwrap();
        for (a, b) in set.macroscopic.iter().zip(&single.rho) {
            assert!((a - b).iter().all(|z| z.norm() < 1e-15));
        }
    }

    #[test]
    fn macro_trace_is_weighted_sum_of_groups() {
        let mut seq = preset(Preset::FigS2Resonant);
        seq.ensemble = EnsembleSpec::new(850.0, 100.0, 21);
        let ens = build_ensemble(&seq.ensemble).unwrap();
        let mut config = PropagationConfig::from_sequence(&seq);
        config.keep_per_group = true;
        let set = propagate_ensemble(&seq, &ens, &DecayRates::none(), &config).unwrap();
        let per = set.per_group.as_ref().unwrap();
        for (k, _) in set.times.iter().enumerate() {
            let sum: C64 = per.iter().map(|g| g.rho12[k] * g.weight).sum();
            assert!((sum - set.macroscopic[k][(0, 1)]).norm() < 1e-12);
        }
    }

    #[test]
    fn parallel_and_serial_runs_are_bitwise_identical() {
        let mut seq = preset(Preset::FigS2Detuned(3.0f64.sqrt()));
        seq.ensemble = EnsembleSpec::new(850.0, 50.0, 41);
        let ens = build_ensemble(&seq.ensemble).unwrap();
        let mut cfg = PropagationConfig::from_sequence(&seq);
        cfg.parallel = true;
        let a = propagate_ensemble(&seq, &ens, &DecayRates::none(), &cfg).unwrap();
        cfg.parallel = false;
        let b = propagate_ensemble(&seq, &ens, &DecayRates::none(), &cfg).unwrap();
        for (x, y) in a.macroscopic.iter().zip(&b.macroscopic) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn third_level_untouched_without_control_drive() {
        let seq = preset(Preset::Fig1b);
        let group = AtomGroup { delta_khz: 500.0, weight: 1.0 };
        let config = PropagationConfig::from_sequence(&seq);
        let trace = propagate_group(&seq, &group, &DecayRates::none(), &config).unwrap();
        for rho in &trace.rho {
            assert!(rho[(2, 2)].norm() < 1e-9);
        }
    }
}
