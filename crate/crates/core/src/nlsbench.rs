//! Full-PDE validation bed: the 1D nonlinear Schrödinger equation in a
//! harmonic trap,
//!
//! ```text
//! i dPsi/dt = (1/2)(-d^2/dx^2 + x^2) Psi + g |Psi|^2 Psi,
//! ```
//!
//! discretized in the orthonormal Hermite-function basis (`omega_n = n + 1/2`)
//! with the nonlinearity evaluated by transform–pointwise–transform on a
//! Gauss–Hermite grid. The stiff linear part is removed by an integrating
//! factor, so the adaptive step is set by the interaction, not by
//! `omega_{n_max}`.
//!
//! Sign conventions: this bench integrates `i dPsi/dt = +H Psi`, under
//! which mode coefficients carry `exp(-i omega_n t)`. The amplitude
//! variables used everywhere else in the crate rotate with the opposite
//! sign, and the two pictures are connected by complex conjugation of the
//! stripped coefficients. The conjugation is applied in exactly one place,
//! [`resonant_initial_state`], so every cross-module comparison inherits a
//! single documented convention. One consequence is that the measured
//! breathing phase advances at slope `+1` here.

use num_complex::Complex64;
use thiserror::Error;

use crate::couplings::{gen_nls1d, CouplingError};
use crate::evolution::{evolve_sampled, DenseCoupling};
use crate::hermite::{hermite_values, GaussHermite};
use crate::ode::{Dopri5, OdeError};
use crate::state::ModeState;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("grid holds {expected} values, got {got}")]
    GridMismatch { expected: usize, got: usize },
    #[error("breathing amplitude below 1e-12 at t = 0; phase undefined")]
    ZeroBreathing,
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
}

/// Field state in the Hermite-function basis at fast time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub coeffs: Vec<Complex64>,
    pub t: f64,
}

impl FieldState {
    pub fn new(coeffs: Vec<Complex64>) -> Self {
        Self { coeffs, t: 0.0 }
    }

    pub fn n_max(&self) -> u32 {
        (self.coeffs.len() - 1) as u32
    }

    pub fn norm_sqr(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Interaction-picture coefficients `gamma_n = exp(+i omega_n t) c_n`.
    pub fn stripped(&self) -> Vec<Complex64> {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(n, c)| Complex64::from_polar(1.0, omega(n) * self.t) * c)
            .collect()
    }
}

fn omega(n: usize) -> f64 {
    n as f64 + 0.5
}

/// Hermite spectral grid: Gauss–Hermite nodes with the function table, for
/// the forward/backward transform between coefficients and point values.
#[derive(Debug, Clone)]
pub struct HermiteGrid {
    n_max: u32,
    nodes: Vec<f64>,
    lifted_weights: Vec<f64>,
    /// `table[j][n] = h_n(x_j)`
    table: Vec<Vec<f64>>,
}

impl HermiteGrid {
    /// `2 n_max + 16` nodes: exact for the linear transform, with margin
    /// for the quartic nonlinearity.
    pub fn new(n_max: u32) -> Self {
        let rule = GaussHermite::new(2 * n_max as usize + 16);
        let table = rule
            .nodes
            .iter()
            .map(|&x| hermite_values(n_max, x))
            .collect();
        Self {
            n_max,
            lifted_weights: rule.lifted_weights(),
            nodes: rule.nodes,
            table,
        }
    }

    pub fn n_max(&self) -> u32 {
        self.n_max
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Point values at the nodes from coefficients.
    pub fn to_samples(&self, coeffs: &[Complex64]) -> Result<Vec<Complex64>, BenchError> {
        if coeffs.len() != self.n_max as usize + 1 {
            return Err(BenchError::GridMismatch {
                expected: self.n_max as usize + 1,
                got: coeffs.len(),
            });
        }
        Ok(self
            .table
            .iter()
            .map(|row| {
                let mut v = Complex64::ZERO;
                for (c, h) in coeffs.iter().zip(row) {
                    v += c * h;
                }
                v
            })
            .collect())
    }

    /// Coefficients from point values at the nodes.
    pub fn to_coeffs(&self, samples: &[Complex64]) -> Result<Vec<Complex64>, BenchError> {
        if samples.len() != self.nodes.len() {
            return Err(BenchError::GridMismatch {
                expected: self.nodes.len(),
                got: samples.len(),
            });
        }
        Ok((0..=self.n_max as usize)
            .map(|n| {
                let mut c = Complex64::ZERO;
                for ((w, row), v) in self.lifted_weights.iter().zip(&self.table).zip(samples) {
                    c += w * row[n] * v;
                }
                c
            })
            .collect())
    }

    /// Quadrature of a node-sampled integrand (weights already lifted).
    pub fn integrate(&self, values: impl Iterator<Item = f64>) -> f64 {
        self.lifted_weights
            .iter()
            .zip(values)
            .map(|(w, v)| w * v)
            .sum()
    }
}

/// Coefficients of the shifted ground state `h_0(x - d)`: a coherent
/// profile `c_n = exp(-d^2/4) (d/sqrt(2))^n / sqrt(n!)`, exact in closed
/// form.
pub fn shifted_gaussian(d: f64, n_max: u32) -> FieldState {
    let mut coeffs = Vec::with_capacity(n_max as usize + 1);
    let mut c = (-d * d / 4.0).exp();
    coeffs.push(Complex64::new(c, 0.0));
    for n in 1..=n_max as usize {
        c *= d / std::f64::consts::SQRT_2 / (n as f64).sqrt();
        coeffs.push(Complex64::new(c, 0.0));
    }
    FieldState::new(coeffs)
}

/// Integrates the trapped NLS from `f0` to `t_end`, sampling at `samples+1`
/// uniform times. Interaction picture: the integrated variables are
/// `gamma_n = exp(+i omega_n t) c_n`, whose motion is entirely due to the
/// nonlinearity.
pub fn nls_evolve(
    grid: &HermiteGrid,
    f0: &FieldState,
    g: f64,
    t_end: f64,
    tol: f64,
    samples: usize,
) -> Result<Vec<FieldState>, BenchError> {
    assert!(g >= 0.0);
    if f0.coeffs.len() != grid.n_max as usize + 1 {
        return Err(BenchError::GridMismatch {
            expected: grid.n_max as usize + 1,
            got: f0.coeffs.len(),
        });
    }
    let dim = f0.coeffs.len();
    let rhs = move |t: f64, gamma: &[Complex64], out: &mut [Complex64]| {
        // c = e^{-i omega t} gamma; d gamma_n/dt = -i g e^{+i omega_n t} (T |psi|^2 psi)_n
        let c: Vec<Complex64> = gamma
            .iter()
            .enumerate()
            .map(|(n, v)| Complex64::from_polar(1.0, -omega(n) * t) * v)
            .collect();
        let psi = grid.to_samples(&c).expect("dimension fixed");
        let nl: Vec<Complex64> = psi.iter().map(|p| p * p.norm_sqr()).collect();
        let d = grid.to_coeffs(&nl).expect("dimension fixed");
        for n in 0..dim {
            out[n] = Complex64::new(0.0, -g) * Complex64::from_polar(1.0, omega(n) * t) * d[n];
        }
    };

    let times: Vec<f64> = (0..=samples)
        .map(|i| f0.t + (t_end - f0.t) * i as f64 / samples.max(1) as f64)
        .collect();
    let gamma0: Vec<Complex64> = f0.stripped();
    let run = Dopri5::with_tol(tol).integrate(&rhs, &gamma0, f0.t, t_end, &times)?;
    Ok(times
        .iter()
        .zip(run.samples)
        .map(|(&t, gamma)| FieldState {
            coeffs: gamma
                .iter()
                .enumerate()
                .map(|(n, v)| Complex64::from_polar(1.0, -omega(n) * t) * v)
                .collect(),
            t,
        })
        .collect())
}

/// Field energy `sum omega_n |c_n|^2 + (g/2) \int |psi|^4 dx`.
pub fn pde_energy(grid: &HermiteGrid, f: &FieldState, g: f64) -> Result<f64, BenchError> {
    let linear: f64 = f
        .coeffs
        .iter()
        .enumerate()
        .map(|(n, c)| omega(n) * c.norm_sqr())
        .sum();
    let psi = grid.to_samples(&f.coeffs)?;
    let quartic = grid.integrate(psi.iter().map(|p| p.norm_sqr() * p.norm_sqr()));
    Ok(linear + 0.5 * g * quartic)
}

/// Breathing observable `B = \int (x |Psi|^2 - conj(Psi) dPsi/dx) dx`
/// through its closed bilinear form
/// `B = sqrt(2) sum_n sqrt(n+1) conj(c_{n+1}) c_n`.
pub fn measure_breathing(f: &FieldState) -> Complex64 {
    let mut b = Complex64::ZERO;
    for n in 0..f.coeffs.len().saturating_sub(1) {
        b += std::f64::consts::SQRT_2
            * ((n + 1) as f64).sqrt()
            * f.coeffs[n + 1].conj()
            * f.coeffs[n];
    }
    b
}

/// Same observable by position-space quadrature; the derivative acts in
/// coefficient space (`d/dx h_n = sqrt(n/2) h_{n-1} - sqrt((n+1)/2) h_{n+1}`).
pub fn measure_breathing_quadrature(
    grid: &HermiteGrid,
    f: &FieldState,
) -> Result<Complex64, BenchError> {
    let n_max = f.n_max() as usize;
    let mut dcoeffs = vec![Complex64::ZERO; n_max + 1];
    for (m, slot) in dcoeffs.iter_mut().enumerate() {
        let mut v = Complex64::ZERO;
        if m < n_max {
            v += ((m as f64 + 1.0) / 2.0).sqrt() * f.coeffs[m + 1];
        }
        if m >= 1 {
            v -= (m as f64 / 2.0).sqrt() * f.coeffs[m - 1];
        }
        *slot = v;
    }
    let psi = grid.to_samples(&f.coeffs)?;
    let dpsi = grid.to_samples(&dcoeffs)?;
    let mut b = Complex64::ZERO;
    for j in 0..grid.len() {
        let local = Complex64::new(grid.nodes[j] * psi[j].norm_sqr(), 0.0)
            - psi[j].conj() * dpsi[j];
        b += grid.lifted_weights[j] * local;
    }
    Ok(b)
}

/// Modulus stability and phase slope of the breathing observable along a
/// trajectory.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct BreathingPhaseReport {
    pub b0_abs: f64,
    /// max relative deviation of `|B(t)|` from `|B(0)|`
    pub max_modulus_drift: f64,
    /// least-squares slope of the unwrapped `arg B(t)`
    pub phase_slope: f64,
}

pub fn breathing_phase_test(traj: &[FieldState]) -> Result<BreathingPhaseReport, BenchError> {
    assert!(traj.len() >= 2);
    let b: Vec<Complex64> = traj.iter().map(measure_breathing).collect();
    let b0 = b[0].norm();
    if b0 < 1e-12 {
        return Err(BenchError::ZeroBreathing);
    }
    let mut max_drift = 0.0f64;
    for v in &b {
        max_drift = max_drift.max((v.norm() - b0).abs() / b0);
    }
    // unwrap phases
    let mut phases = Vec::with_capacity(b.len());
    let mut prev = b[0].arg();
    let mut offset = 0.0;
    phases.push(prev);
    for v in &b[1..] {
        let raw = v.arg();
        let mut delta = raw - prev;
        while delta > std::f64::consts::PI {
            delta -= std::f64::consts::TAU;
        }
        while delta < -std::f64::consts::PI {
            delta += std::f64::consts::TAU;
        }
        offset += delta;
        phases.push(phases[0] + offset);
        prev = raw;
    }
    // least-squares line through (t_i, phase_i)
    let n = traj.len() as f64;
    let mean_t: f64 = traj.iter().map(|f| f.t).sum::<f64>() / n;
    let mean_p: f64 = phases.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (f, p) in traj.iter().zip(&phases) {
        num += (f.t - mean_t) * (p - mean_p);
        den += (f.t - mean_t).powi(2);
    }
    Ok(BreathingPhaseReport {
        b0_abs: b0,
        max_modulus_drift: max_drift,
        phase_slope: num / den,
    })
}

/// The resonant-side initial state matching a field state: stripped
/// coefficients, conjugated into the amplitude convention of the
/// resonant modules.
pub fn resonant_initial_state(f: &FieldState) -> ModeState {
    ModeState::new(f.stripped().iter().map(|c| c.conj()).collect())
}

/// Error of the resonant approximation against the full PDE.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CompareReport {
    pub g: f64,
    pub horizon: f64,
    /// `sup_{samples, modes} | |a_n^{full}| - |a_n^{res}| |`
    pub metric: f64,
    /// metric per sample, for g-scaling diagnostics
    pub per_sample: Vec<f64>,
    /// drift of `N` and `E` of the stripped full trajectory
    pub stripped_number_drift: f64,
    pub stripped_energy_drift: f64,
}

/// Runs the PDE to fast time `horizon/g` and the resonant system to slow
/// time `horizon`, then compares mode moduli sample by sample.
pub fn compare_resonant(
    grid: &HermiteGrid,
    f0: &FieldState,
    g: f64,
    horizon: f64,
    tol: f64,
    samples: usize,
) -> Result<CompareReport, BenchError> {
    let t_end = if g > 0.0 { horizon / g } else { horizon };
    let pde = nls_evolve(grid, f0, g, t_end, tol, samples)?;

    let n_max = grid.n_max();
    let a0 = resonant_initial_state(&pde[0]);
    let res_states: Vec<ModeState> = if g > 0.0 {
        let tensor = gen_nls1d(n_max)?;
        let dense = DenseCoupling::new(&tensor);
        let times: Vec<f64> = pde.iter().map(|f| g * f.t).collect();
        evolve_sampled(&dense, &a0, &times, tol)?.states
    } else {
        pde.iter()
            .map(|f| {
                let mut s = a0.clone();
                s.tau = 0.0;
                s.tau = f.t;
                s
            })
            .collect()
    };

    let number0 = a0.number();
    let energy0 = a0.energy();
    let mut metric = 0.0f64;
    let mut per_sample = Vec::with_capacity(pde.len());
    let mut n_drift = 0.0f64;
    let mut e_drift = 0.0f64;
    for (f, r) in pde.iter().zip(&res_states) {
        let stripped = f.stripped();
        let mut worst = 0.0f64;
        for (c, a) in stripped.iter().zip(&r.amps) {
            worst = worst.max((c.norm() - a.norm()).abs());
        }
        per_sample.push(worst);
        metric = metric.max(worst);
        let s = ModeState::new(stripped);
        n_drift = n_drift.max((s.number() - number0).abs() / number0.max(1e-300));
        e_drift = e_drift.max((s.energy() - energy0).abs() / energy0.max(1e-300));
    }
    Ok(CompareReport {
        g,
        horizon,
        metric,
        per_sample,
        stripped_number_drift: n_drift,
        stripped_energy_drift: e_drift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand::rngs::StdRng;

    fn random_field(n_max: u32, seed: u64) -> FieldState {
        let mut rng = StdRng::seed_from_u64(seed);
        FieldState::new(
            (0..=n_max)
                .map(|n| {
                    let damp = (-0.35 * n as f64).exp();
                    Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * damp
                })
                .collect(),
        )
    }

    #[test]
    fn transform_round_trip() {
        let grid = HermiteGrid::new(24);
        let f = random_field(24, 1);
        let samples = grid.to_samples(&f.coeffs).unwrap();
        let back = grid.to_coeffs(&samples).unwrap();
        let err: f64 = back
            .iter()
            .zip(&f.coeffs)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "round trip error {err:e}");
    }

    #[test]
    fn ground_state_coefficients() {
        let grid = HermiteGrid::new(8);
        // samples of h_0 at the nodes transform to (1, 0, ...)
        let h0_samples: Vec<Complex64> = grid
            .nodes()
            .iter()
            .map(|&x| Complex64::new(hermite_values(0, x)[0], 0.0))
            .collect();
        let coeffs = grid.to_coeffs(&h0_samples).unwrap();
        assert!((coeffs[0] - Complex64::ONE).norm() < 1e-13);
        for c in &coeffs[1..] {
            assert!(c.norm() < 1e-13);
        }
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let grid = HermiteGrid::new(8);
        assert!(matches!(
            grid.to_coeffs(&[Complex64::ZERO; 3]),
            Err(BenchError::GridMismatch { .. })
        ));
        assert!(matches!(
            grid.to_samples(&[Complex64::ZERO; 3]),
            Err(BenchError::GridMismatch { .. })
        ));
    }

    #[test]
    fn linear_eigenmode_phases() {
        let grid = HermiteGrid::new(6);
        let mut f0 = FieldState::new(vec![Complex64::ZERO; 7]);
        f0.coeffs[0] = Complex64::ONE;
        let traj = nls_evolve(&grid, &f0, 0.0, 4.0, 1e-11, 8).unwrap();
        for f in &traj {
            // c_0(t) = e^{-i t/2}, modulus constant
            let expect = Complex64::from_polar(1.0, -0.5 * f.t);
            assert!((f.coeffs[0] - expect).norm() < 1e-10);
        }
    }

    #[test]
    fn two_mode_relative_phase_advances_at_unit_rate() {
        let grid = HermiteGrid::new(6);
        let mut f0 = FieldState::new(vec![Complex64::ZERO; 7]);
        f0.coeffs[0] = Complex64::new(0.8, 0.0);
        f0.coeffs[1] = Complex64::new(0.6, 0.0);
        let traj = nls_evolve(&grid, &f0, 0.0, 5.0, 1e-11, 10).unwrap();
        for f in &traj {
            assert!((f.coeffs[0].norm() - 0.8).abs() < 1e-10);
            assert!((f.coeffs[1].norm() - 0.6).abs() < 1e-10);
            let rel = (f.coeffs[0] / f.coeffs[1]).arg();
            let expect = angle_wrap(1.0 * f.t + 0.0);
            assert!((angle_wrap(rel) - expect).abs() < 1e-9 || (angle_wrap(rel) - expect).abs() > std::f64::consts::TAU - 1e-9);
        }
    }

    fn angle_wrap(x: f64) -> f64 {
        x.rem_euclid(std::f64::consts::TAU)
    }

    #[test]
    fn norm_conserved_with_interaction() {
        let grid = HermiteGrid::new(16);
        let f0 = shifted_gaussian(0.5, 16);
        let n0 = f0.norm_sqr();
        let traj = nls_evolve(&grid, &f0, 0.05, 20.0, 1e-10, 10).unwrap();
        for f in &traj {
            assert!(
                (f.norm_sqr() - n0).abs() / n0 < 1e-9,
                "norm drift {:e}",
                (f.norm_sqr() - n0).abs() / n0
            );
        }
    }

    #[test]
    fn breathing_parity_zeros_and_shift() {
        let mut f = FieldState::new(vec![Complex64::ZERO; 9]);
        f.coeffs[0] = Complex64::ONE;
        assert!(measure_breathing(&f).norm() < 1e-15);
        let mut f = FieldState::new(vec![Complex64::ZERO; 9]);
        f.coeffs[1] = Complex64::ONE;
        assert!(measure_breathing(&f).norm() < 1e-15);

        // shifted Gaussian: B = d exactly
        let f = shifted_gaussian(0.5, 24);
        let b = measure_breathing(&f);
        assert!((b - Complex64::new(0.5, 0.0)).norm() < 1e-13, "B = {b}");
    }

    #[test]
    fn breathing_routes_agree() {
        let grid = HermiteGrid::new(20);
        let f = random_field(20, 7);
        let bilinear = measure_breathing(&f);
        let quad = measure_breathing_quadrature(&grid, &f).unwrap();
        assert!(
            (bilinear - quad).norm() < 1e-10,
            "bilinear {bilinear} vs quadrature {quad}"
        );
    }

    #[test]
    fn zero_breathing_is_an_error() {
        let grid = HermiteGrid::new(6);
        let mut f0 = FieldState::new(vec![Complex64::ZERO; 7]);
        f0.coeffs[0] = Complex64::ONE;
        let traj = nls_evolve(&grid, &f0, 0.0, 1.0, 1e-10, 4).unwrap();
        assert!(matches!(
            breathing_phase_test(&traj),
            Err(BenchError::ZeroBreathing)
        ));
    }

    #[test]
    fn free_breathing_phase_is_exact() {
        let grid = HermiteGrid::new(16);
        let f0 = shifted_gaussian(0.5, 16);
        let traj = nls_evolve(&grid, &f0, 0.0, 20.0, 1e-11, 200).unwrap();
        let report = breathing_phase_test(&traj).unwrap();
        assert!(report.max_modulus_drift < 1e-10);
        assert!((report.phase_slope.abs() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn stripped_frame_constant_without_interaction() {
        let grid = HermiteGrid::new(10);
        let f0 = random_field(10, 3);
        let report = compare_resonant(&grid, &f0, 0.0, 5.0, 1e-11, 10).unwrap();
        assert!(report.metric < 1e-10, "metric {:e}", report.metric);
    }

    #[test]
    fn stripped_drifts_scale_with_g() {
        // N of the stripped frame is the PDE norm: conserved exactly. E is
        // conserved only by the averaged system; over a fixed slow-time
        // horizon its drift is O(g) and halves with g.
        let grid = HermiteGrid::new(10);
        let mut f0 = FieldState::new(vec![Complex64::ZERO; 11]);
        f0.coeffs[0] = Complex64::new(0.7, 0.0);
        f0.coeffs[1] = Complex64::new(0.0, 0.5);
        f0.coeffs[2] = Complex64::new(0.3, 0.1);
        let hi = compare_resonant(&grid, &f0, 0.02, 0.5, 1e-10, 10).unwrap();
        let lo = compare_resonant(&grid, &f0, 0.01, 0.5, 1e-10, 10).unwrap();
        assert!(hi.stripped_number_drift < 1e-9);
        assert!(lo.stripped_number_drift < 1e-9);
        let ratio = hi.stripped_energy_drift / lo.stripped_energy_drift;
        assert!(
            (1.5..=2.7).contains(&ratio),
            "E-drift ratio {ratio} (hi {:e}, lo {:e})",
            hi.stripped_energy_drift,
            lo.stripped_energy_drift
        );
    }
}
