//! Slow-time evolution of the truncated resonant system.
//!
//! The Hamiltonian represented by a [`CouplingTensor`] is the ordered sum
//! `H = sum_{n+m=k+l} C[n,m,k,l] abar_n abar_m a_k a_l`, so the equations
//! of motion are
//!
//! ```text
//! da_n/dtau = i dH/dabar_n
//!           = 2i sum_m sum_{k=0}^{n+m} C[n,m,k,n+m-k] abar_m a_k a_{n+m-k}
//! ```
//!
//! with index sums clipped to the window `[0, n_max]`. The contraction is
//! evaluated from a dense per-`(n,m,k)` table; the loop nest is fixed
//! (ascending `m`, then `k`) and the parallel split is over the output
//! index only, so results are bit-identical regardless of thread count.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::couplings::{BreathingVector, CouplingTensor};
use crate::ode::{Dopri5, OdeRhs};
use crate::state::ModeState;

pub use crate::ode::OdeError as EvolveError;

/// Dense, symmetric-resolved view of a coupling tensor: one `f64` per
/// `(n, m, k)` with the fourth index implied by resonance.
pub struct DenseCoupling {
    n_max: usize,
    stride_m: usize,
    stride_n: usize,
    values: Vec<f64>,
}

impl DenseCoupling {
    pub fn new(tensor: &CouplingTensor) -> Self {
        let n_max = tensor.n_max() as usize;
        let stride_m = 2 * n_max + 1;
        let stride_n = (n_max + 1) * stride_m;
        let mut values = vec![0.0; (n_max + 1) * stride_n];
        for n in 0..=n_max {
            for m in 0..=n_max {
                let s = n + m;
                for k in s.saturating_sub(n_max)..=s.min(n_max) {
                    values[n * stride_n + m * stride_m + k] =
                        tensor.get(n as u32, m as u32, k as u32, (s - k) as u32);
                }
            }
        }
        Self { n_max, stride_m, stride_n, values }
    }

    pub fn n_max(&self) -> u32 {
        self.n_max as u32
    }

    /// `da_n/dtau` for every mode.
    pub fn rhs(&self, amps: &[Complex64], out: &mut [Complex64]) {
        debug_assert_eq!(amps.len(), self.n_max + 1);
        debug_assert_eq!(out.len(), self.n_max + 1);
        let two_i = Complex64::new(0.0, 2.0);
        out.par_iter_mut().enumerate().for_each(|(n, slot)| {
            let mut sum = Complex64::ZERO;
            let base_n = n * self.stride_n;
            for m in 0..=self.n_max {
                let s = n + m;
                let abar_m = amps[m].conj();
                if abar_m == Complex64::ZERO {
                    continue;
                }
                let lo = s.saturating_sub(self.n_max);
                let hi = s.min(self.n_max);
                let base = base_n + m * self.stride_m;
                let row = &self.values[base + lo..=base + hi];
                let fwd = &amps[lo..=hi];
                // a_k a_{s-k}: the second factor is the same window read
                // backwards
                let bwd = &amps[s - hi..=s - lo];
                let mut inner = Complex64::ZERO;
                for ((&c, &af), &ab) in row.iter().zip(fwd).zip(bwd.iter().rev()) {
                    inner += c * af * ab;
                }
                sum += abar_m * inner;
            }
            *slot = two_i * sum;
        });
    }
}

/// Sampled slow-time trajectory.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<ModeState>,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    pub rhs_evals: usize,
}

impl Trajectory {
    pub fn taus(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.tau).collect()
    }

    /// `|a_n|^2` per mode at each sample.
    pub fn spectra(&self) -> Vec<Vec<f64>> {
        self.states
            .iter()
            .map(|s| s.amps.iter().map(|a| a.norm_sqr()).collect())
            .collect()
    }
}

struct ResonantRhs<'a>(&'a DenseCoupling);

impl OdeRhs for ResonantRhs<'_> {
    fn eval(&self, _t: f64, y: &[Complex64], dydt: &mut [Complex64]) {
        self.0.rhs(y, dydt);
    }
}

/// Integrates the resonant system from `s0` to `tau_end`, sampling at
/// `samples + 1` uniformly spaced slow times (including both ends).
///
/// `tol` drives both relative and absolute local error control and must lie
/// in `[1e-13, 1e-6]`.
pub fn evolve(
    coupling: &DenseCoupling,
    s0: &ModeState,
    tau_end: f64,
    tol: f64,
    samples: usize,
) -> Result<Trajectory, EvolveError> {
    let times: Vec<f64> = (0..=samples)
        .map(|i| s0.tau + (tau_end - s0.tau) * i as f64 / samples.max(1) as f64)
        .collect();
    evolve_sampled(coupling, s0, &times, tol)
}

/// Same, with caller-chosen sample times (ascending, starting at `s0.tau`).
pub fn evolve_sampled(
    coupling: &DenseCoupling,
    s0: &ModeState,
    times: &[f64],
    tol: f64,
) -> Result<Trajectory, EvolveError> {
    assert!(
        (1e-13..=1e-6).contains(&tol),
        "tolerance {tol:e} outside supported range [1e-13, 1e-6]"
    );
    assert_eq!(
        s0.n_max(),
        coupling.n_max(),
        "state window must match the coupling window"
    );
    let t_end = times.last().copied().unwrap_or(s0.tau);
    let run = Dopri5::with_tol(tol).integrate(
        &ResonantRhs(coupling),
        &s0.amps,
        s0.tau,
        t_end,
        times,
    )?;
    let states = times
        .iter()
        .zip(run.samples)
        .map(|(&tau, amps)| ModeState { amps, tau })
        .collect();
    Ok(Trajectory {
        states,
        steps_accepted: run.steps_accepted,
        steps_rejected: run.steps_rejected,
        rhs_evals: run.rhs_evals,
    })
}

/// Conserved quantities at one sample.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ConservedSample {
    pub tau: f64,
    pub number: f64,
    pub energy: f64,
    pub h_res: f64,
    pub b0_re: f64,
    pub b0_im: f64,
}

/// Drift summary relative to the first sample.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ConservedReport {
    pub samples: Vec<ConservedSample>,
    /// relative drifts (absolute when the reference value vanishes)
    pub drift_number: f64,
    pub drift_energy: f64,
    pub drift_h_res: f64,
    pub drift_b0: f64,
}

fn rel_drift(current: f64, reference: f64) -> f64 {
    let d = (current - reference).abs();
    if reference.abs() > 0.0 {
        d / reference.abs()
    } else {
        d
    }
}

/// Evaluates `N`, `E`, `H_res` and `B0` along a trajectory and reports the
/// worst drift of each relative to the initial sample.
pub fn conserved_report(
    traj: &Trajectory,
    tensor: &CouplingTensor,
    bv: &BreathingVector,
) -> ConservedReport {
    let samples: Vec<ConservedSample> = traj
        .states
        .iter()
        .map(|s| {
            let b0 = bv.b0_value(s);
            ConservedSample {
                tau: s.tau,
                number: s.number(),
                energy: s.energy(),
                h_res: tensor.hamiltonian(s),
                b0_re: b0.re,
                b0_im: b0.im,
            }
        })
        .collect();
    let first = samples[0];
    let b0_ref = Complex64::new(first.b0_re, first.b0_im);
    let mut report = ConservedReport {
        samples,
        drift_number: 0.0,
        drift_energy: 0.0,
        drift_h_res: 0.0,
        drift_b0: 0.0,
    };
    for s in &report.samples {
        report.drift_number = report.drift_number.max(rel_drift(s.number, first.number));
        report.drift_energy = report.drift_energy.max(rel_drift(s.energy, first.energy));
        report.drift_h_res = report.drift_h_res.max(rel_drift(s.h_res, first.h_res));
        let b0 = Complex64::new(s.b0_re, s.b0_im);
        let d = (b0 - b0_ref).norm();
        report.drift_b0 = report.drift_b0.max(if b0_ref.norm() > 0.0 {
            d / b0_ref.norm()
        } else {
            d
        });
    }
    report
}

/// First-order kinematic transformation generated by the breathing mode:
/// `a_n -> a_n + i eta beta_n a_{n+1} + i conj(eta) beta_{n-1} a_{n-1}`,
/// with out-of-window neighbors taken as zero. Valid as a symmetry probe
/// for `|eta| <~ 0.1`.
pub fn breathing_transform(s: &ModeState, eta: Complex64, bv: &BreathingVector) -> ModeState {
    debug_assert!(eta.norm() <= 0.1 + 1e-12, "first-order regime only");
    let n_max = s.n_max() as usize;
    let i = Complex64::I;
    let amps = (0..=n_max)
        .map(|n| {
            let mut a = s.amps[n];
            if n < n_max {
                a += i * eta * bv.beta(n as u32) * s.amps[n + 1];
            }
            if n > 0 {
                a += i * eta.conj() * bv.beta(n as u32 - 1) * s.amps[n - 1];
            }
            a
        })
        .collect();
    ModeState { amps, tau: s.tau }
}
