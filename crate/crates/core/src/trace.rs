//! Time-gridded macroscopic (and optionally per-group) coherence traces.

use crate::dynamics::{DecayRates, DensityMatrix, PropagationConfig};
use crate::ensemble::Ensemble;
use crate::sequence::PulseSequence;
use num_complex::Complex64 as C64;

/// rho_12 time series of one atom group.
#[derive(Debug, Clone)]
pub struct GroupCoherence {
    pub delta_khz: f64,
    pub weight: f64,
    pub rho12: Vec<C64>,
}

/// Result of an ensemble run: the weighted macroscopic density matrix on the
/// output grid, plus everything needed to reproduce or post-process the run.
#[derive(Debug, Clone)]
pub struct TraceSet {
    pub times: Vec<f64>,
    pub macroscopic: Vec<DensityMatrix>,
    pub per_group: Option<Vec<GroupCoherence>>,
    pub sequence: PulseSequence,
    pub ensemble: Ensemble,
    pub config: PropagationConfig,
    pub gamma: DecayRates,
}

/// One row of the numeric trace: the six independent coherence components
/// and the three populations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacroSample {
    pub re12: f64,
    pub im12: f64,
    pub re13: f64,
    pub im13: f64,
    pub re23: f64,
    pub im23: f64,
    pub p11: f64,
    pub p22: f64,
    pub p33: f64,
}

impl MacroSample {
    pub fn from_rho(rho: &DensityMatrix) -> Self {
        Self {
            re12: rho[(0, 1)].re,
            im12: rho[(0, 1)].im,
            re13: rho[(0, 2)].re,
            im13: rho[(0, 2)].im,
            re23: rho[(1, 2)].re,
            im23: rho[(1, 2)].im,
            p11: rho[(0, 0)].re,
            p22: rho[(1, 1)].re,
            p33: rho[(2, 2)].re,
        }
    }
}

impl TraceSet {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Index of the grid sample nearest to `t`.
    pub fn index_of(&self, t: f64) -> usize {
        let k = (t / self.config.dt).round() as isize;
        k.clamp(0, self.times.len() as isize - 1) as usize
    }

    pub fn im12(&self, k: usize) -> f64 {
        self.macroscopic[k][(0, 1)].im
    }

    pub fn re12(&self, k: usize) -> f64 {
        self.macroscopic[k][(0, 1)].re
    }

    pub fn sample(&self, k: usize) -> MacroSample {
        MacroSample::from_rho(&self.macroscopic[k])
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, MacroSample)> + '_ {
        self.times.iter().zip(&self.macroscopic).map(|(t, r)| (*t, MacroSample::from_rho(r)))
    }
}
