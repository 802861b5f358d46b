//! Embedded Runge–Kutta 5(4) integrator (Dormand–Prince coefficients) over
//! complex state vectors, with fourth-order dense output for sampling
//! between steps.
//!
//! Non-symplectic on purpose: the horizons used in this crate are short
//! enough that drift at tolerance `1e-10` stays orders of magnitude below
//! every acceptance threshold, and the conserved-quantity monitors in the
//! evolution module are the safety net.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },
}

/// Right-hand side `dy/dt = f(t, y)`.
pub trait OdeRhs {
    fn eval(&self, t: f64, y: &[Complex64], dydt: &mut [Complex64]);
}

impl<F: Fn(f64, &[Complex64], &mut [Complex64])> OdeRhs for F {
    fn eval(&self, t: f64, y: &[Complex64], dydt: &mut [Complex64]) {
        self(t, y, dydt)
    }
}

// Dormand-Prince 5(4) tableau
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;

const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;

// fifth-order minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// dense-output weights (Hairer's contd5)
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
}

impl Dopri5 {
    pub fn with_tol(tol: f64) -> Self {
        Self { rtol: tol, atol: tol, h_max: f64::INFINITY }
    }
}

#[derive(Debug, Clone)]
pub struct Integration {
    /// state at each requested sample time, in order
    pub samples: Vec<Vec<Complex64>>,
    pub final_y: Vec<Complex64>,
    pub final_t: f64,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    pub rhs_evals: usize,
}

struct DenseSegment {
    r1: Vec<Complex64>,
    r2: Vec<Complex64>,
    r3: Vec<Complex64>,
    r4: Vec<Complex64>,
    r5: Vec<Complex64>,
}

impl DenseSegment {
    fn eval(&self, theta: f64, out: &mut [Complex64]) {
        let th1 = 1.0 - theta;
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = self.r1[i]
                + theta
                    * (self.r2[i]
                        + th1 * (self.r3[i] + theta * (self.r4[i] + th1 * self.r5[i])));
        }
    }
}

impl Dopri5 {
    /// Integrates from `t0` to `t_end >= t0`, recording the state at each of
    /// the ascending `sample_times` (dense output; sample times need not
    /// align with steps).
    pub fn integrate<F: OdeRhs>(
        &self,
        rhs: &F,
        y0: &[Complex64],
        t0: f64,
        t_end: f64,
        sample_times: &[f64],
    ) -> Result<Integration, OdeError> {
        let dim = y0.len();
        debug_assert!(sample_times.windows(2).all(|w| w[0] <= w[1]));
        debug_assert!(sample_times.iter().all(|&ts| ts >= t0 && ts <= t_end));

        let mut samples = Vec::with_capacity(sample_times.len());
        let mut next_sample = 0usize;
        while next_sample < sample_times.len() && sample_times[next_sample] <= t0 {
            samples.push(y0.to_vec());
            next_sample += 1;
        }

        let mut t = t0;
        let mut y = y0.to_vec();
        let mut k1 = vec![Complex64::ZERO; dim];
        rhs.eval(t, &y, &mut k1);
        let mut stats = (1usize, 0usize, 0usize); // rhs, accepted, rejected

        if t_end <= t0 {
            return Ok(Integration {
                samples,
                final_y: y,
                final_t: t,
                steps_accepted: 0,
                steps_rejected: 0,
                rhs_evals: stats.0,
            });
        }

        let mut h = self.initial_step(rhs, &y, &k1, t, t_end, &mut stats.0);

        let mut k2 = vec![Complex64::ZERO; dim];
        let mut k3 = vec![Complex64::ZERO; dim];
        let mut k4 = vec![Complex64::ZERO; dim];
        let mut k5 = vec![Complex64::ZERO; dim];
        let mut k6 = vec![Complex64::ZERO; dim];
        let mut k7 = vec![Complex64::ZERO; dim];
        let mut work = vec![Complex64::ZERO; dim];
        let mut y5 = vec![Complex64::ZERO; dim];

        loop {
            if t >= t_end {
                break;
            }
            if h < 1e-14 * t.abs().max(1.0) {
                return Err(OdeError::StepSizeUnderflow { t });
            }
            let last = t + h >= t_end;
            if last {
                h = t_end - t;
            }

            for i in 0..dim {
                work[i] = y[i] + h * A21 * k1[i];
            }
            rhs.eval(t + C2 * h, &work, &mut k2);
            for i in 0..dim {
                work[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
            }
            rhs.eval(t + C3 * h, &work, &mut k3);
            for i in 0..dim {
                work[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            rhs.eval(t + C4 * h, &work, &mut k4);
            for i in 0..dim {
                work[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            rhs.eval(t + C5 * h, &work, &mut k5);
            for i in 0..dim {
                work[i] = y[i]
                    + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            rhs.eval(t + h, &work, &mut k6);
            for i in 0..dim {
                y5[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
            }
            rhs.eval(t + h, &y5, &mut k7);
            stats.0 += 6;

            let mut err_acc = 0.0;
            for i in 0..dim {
                let e = h
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i]
                        + E7 * k7[i]);
                let sc = self.atol + self.rtol * y[i].norm().max(y5[i].norm());
                err_acc += (e.norm() / sc).powi(2);
            }
            let err = (err_acc / dim as f64).sqrt();

            if err <= 1.0 {
                // dense output for samples inside (t, t+h]
                if next_sample < sample_times.len() && sample_times[next_sample] <= t + h {
                    let seg = Self::dense_segment(&y, &y5, &k1, &k3, &k4, &k5, &k6, &k7, h);
                    let mut out = vec![Complex64::ZERO; dim];
                    while next_sample < sample_times.len() && sample_times[next_sample] <= t + h {
                        let theta = (sample_times[next_sample] - t) / h;
                        seg.eval(theta, &mut out);
                        samples.push(out.clone());
                        next_sample += 1;
                    }
                }
                t += h;
                std::mem::swap(&mut y, &mut y5);
                std::mem::swap(&mut k1, &mut k7);
                stats.1 += 1;
            } else {
                stats.2 += 1;
            }

            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h = (h * factor).min(self.h_max);
        }

        // exact landing on t_end: emit any samples equal to t_end that the
        // loop left behind on rounding grounds
        while next_sample < sample_times.len() {
            samples.push(y.clone());
            next_sample += 1;
        }

        Ok(Integration {
            samples,
            final_y: y,
            final_t: t,
            steps_accepted: stats.1,
            steps_rejected: stats.2,
            rhs_evals: stats.0,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn dense_segment(
        y0: &[Complex64],
        y1: &[Complex64],
        k1: &[Complex64],
        k3: &[Complex64],
        k4: &[Complex64],
        k5: &[Complex64],
        k6: &[Complex64],
        k7: &[Complex64],
        h: f64,
    ) -> DenseSegment {
        let dim = y0.len();
        let mut r1 = Vec::with_capacity(dim);
        let mut r2 = Vec::with_capacity(dim);
        let mut r3 = Vec::with_capacity(dim);
        let mut r4 = Vec::with_capacity(dim);
        let mut r5 = Vec::with_capacity(dim);
        for i in 0..dim {
            let dy = y1[i] - y0[i];
            let bspl = h * k1[i] - dy;
            r1.push(y0[i]);
            r2.push(dy);
            r3.push(bspl);
            r4.push(dy - h * k7[i] - bspl);
            r5.push(
                h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i]
                    + D7 * k7[i]),
            );
        }
        DenseSegment { r1, r2, r3, r4, r5 }
    }

    fn initial_step<F: OdeRhs>(
        &self,
        rhs: &F,
        y: &[Complex64],
        k1: &[Complex64],
        t: f64,
        t_end: f64,
        evals: &mut usize,
    ) -> f64 {
        // standard two-evaluation guess
        let dim = y.len();
        let sc: Vec<f64> = y
            .iter()
            .map(|yi| self.atol + self.rtol * yi.norm())
            .collect();
        let d0 = (y
            .iter()
            .zip(&sc)
            .map(|(yi, s)| (yi.norm() / s).powi(2))
            .sum::<f64>()
            / dim as f64)
            .sqrt();
        let d1 = (k1
            .iter()
            .zip(&sc)
            .map(|(ki, s)| (ki.norm() / s).powi(2))
            .sum::<f64>()
            / dim as f64)
            .sqrt();
        let h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        let h0 = h0.min(t_end - t);

        let mut y1 = vec![Complex64::ZERO; dim];
        for i in 0..dim {
            y1[i] = y[i] + h0 * k1[i];
        }
        let mut k2 = vec![Complex64::ZERO; dim];
        rhs.eval(t + h0, &y1, &mut k2);
        *evals += 1;
        let d2 = (k2
            .iter()
            .zip(k1)
            .zip(&sc)
            .map(|((a, b), s)| ((*a - *b).norm() / s).powi(2))
            .sum::<f64>()
            / dim as f64)
            .sqrt()
            / h0;
        let d_max = d1.max(d2);
        let h1 = if d_max <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d_max).powf(0.2)
        };
        (100.0 * h0).min(h1).min(t_end - t).min(self.h_max)
    }
}
