//! Complex amplitude vectors shared by the polynomial and evolution layers.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// State of the truncated mode system: amplitudes `a_0 .. a_n_max` plus the
/// slow-time stamp at which they were recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeState {
    pub amps: Vec<Complex64>,
    pub tau: f64,
}

impl ModeState {
    pub fn new(amps: Vec<Complex64>) -> Self {
        Self { amps, tau: 0.0 }
    }

    pub fn zeros(n_max: u32) -> Self {
        Self::new(vec![Complex64::ZERO; n_max as usize + 1])
    }

    /// Highest representable mode index.
    pub fn n_max(&self) -> u32 {
        debug_assert!(!self.amps.is_empty());
        (self.amps.len() - 1) as u32
    }

    pub fn amp(&self, n: u32) -> Complex64 {
        self.amps.get(n as usize).copied().unwrap_or(Complex64::ZERO)
    }

    /// Particle number `N = sum |a_n|^2`.
    pub fn number(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Level-weighted number `E = sum n |a_n|^2`.
    pub fn energy(&self) -> f64 {
        self.amps
            .iter()
            .enumerate()
            .map(|(n, a)| n as f64 * a.norm_sqr())
            .sum()
    }

    /// Hopping sum `sum_n beta_n conj(a_n) a_{n+1}` for the given weights.
    pub fn hopping_sum(&self, betas: &[f64]) -> Complex64 {
        let mut b = Complex64::ZERO;
        for n in 0..self.amps.len().saturating_sub(1) {
            let beta = betas.get(n).copied().unwrap_or(0.0);
            b += beta * self.amps[n].conj() * self.amps[n + 1];
        }
        b
    }

    pub fn norm(&self) -> f64 {
        self.number().sqrt()
    }

    pub fn conjugated(&self) -> Self {
        Self {
            amps: self.amps.iter().map(|a| a.conj()).collect(),
            tau: self.tau,
        }
    }
}
