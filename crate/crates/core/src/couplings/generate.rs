//! Coupling generation from concrete PDE mode overlaps.
//!
//! Two sources are built in:
//!
//! * `nls1d` — the 1D nonlinear Schrödinger equation in a harmonic trap
//!   with contact interaction. Mode functions are the orthonormal Hermite
//!   functions `h_n`, the ladder offset is `1/2`, and the quartic
//!   Hamiltonian is `(1/2) sum W[n,m,k,l] abar abar a a` with
//!   `W = \int h_n h_m h_k h_l dx`, so `C = W/2` on resonant quartets.
//!
//! * `conformal` — the 1+1d wave equation `v_tt - v_xx + v^3/sin^2 x = 0`
//!   on `(0, pi)` with Dirichlet ends. Mode functions are
//!   `e_n = sqrt(2/pi) sin((n+1)x)` with `omega_n = n+1`; the quartic
//!   Hamiltonian is `(1/4) sum V[n,m,k,l] q q q q` with
//!   `V = \int e_n e_m e_k e_l / sin^2 x dx`, expanded in interaction-
//!   picture amplitudes via `q_n = (a_n + abar_n)/sqrt(2 omega_n)` and
//!   time-averaged. The expansion fixes every combinatorial factor; the
//!   only inputs are the overlap integrals.
//!
//! Both quadratures are exact for the polynomial degrees involved, so
//! doubling the node count only moves results at rounding level.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use super::{from_resonant_poly_tol, CouplingError, CouplingTensor};
use crate::hermite::OverlapGrid;
use crate::polyspace::{Monomial, PhasePoly, TermKey};

/// Quadrature accuracy budget: windows past this size are refused rather
/// than silently degraded.
pub const GEN_N_MAX_LIMIT: u32 = 64;

/// Couplings of the 1D trapped NLS: `C[n,m,k,l] = W[n,m,k,l]/2` on
/// resonant quartets, by exact Gauss–Hermite quadrature.
pub fn gen_nls1d(n_max: u32) -> Result<CouplingTensor, CouplingError> {
    if n_max > GEN_N_MAX_LIMIT {
        return Err(CouplingError::QuadratureBudgetExceeded(n_max, GEN_N_MAX_LIMIT));
    }
    let grid = OverlapGrid::for_quartics(n_max);
    let quartets = canonical_resonant_quartets(n_max);
    let entries: Vec<([u32; 4], f64)> = quartets
        .par_iter()
        .map(|&q| {
            let [n, m, k, l] = q;
            (q, 0.5 * grid.overlap4(n, m, k, l))
        })
        .collect();
    let mut tensor = CouplingTensor::new(n_max);
    for (q, v) in entries {
        tensor.insert(q[0], q[1], q[2], q[3], v)?;
    }
    Ok(tensor)
}

fn canonical_resonant_quartets(n_max: u32) -> Vec<[u32; 4]> {
    let mut out = Vec::new();
    for s in 0..=2 * n_max {
        let lo = s.saturating_sub(n_max);
        let pairs: Vec<(u32, u32)> = (lo..=s / 2).map(|n| (n, s - n)).collect();
        for (i, &bra) in pairs.iter().enumerate() {
            for &ket in &pairs[i..] {
                out.push([bra.0, bra.1, ket.0, ket.1]);
            }
        }
    }
    out
}

/// Gauss–Chebyshev (second kind) grid in the angle variable, tabulating the
/// mode-function ratios `e_n(x)/sin x` up to normalization. Exact for the
/// quartic overlaps on the window; node values are mirrored explicitly so
/// parity zeros come out exact.
#[derive(Debug, Clone)]
pub struct ConformalGrid {
    /// quadrature weights including the `4/pi^2` normalization of the `e_n`
    pub weights: Vec<f64>,
    /// `table[j][n] = sin((n+1) theta_j) / sin(theta_j)`
    pub table: Vec<Vec<f64>>,
}

impl ConformalGrid {
    pub fn new(n_max: u32) -> Self {
        Self::with_len(n_max, 2 * n_max as usize + 1)
    }

    /// Custom rule length; exact overlaps need `len >= 2 n_max + 1`. Larger
    /// rules are only useful for convergence diagnostics.
    pub fn with_len(n_max: u32, m: usize) -> Self {
        let mut weights = vec![0.0; m];
        let mut table = vec![Vec::new(); m];
        for j in 0..m.div_ceil(2) {
            let theta = (j + 1) as f64 * PI / (m + 1) as f64;
            let s = theta.sin();
            let w = (4.0 / (PI * PI)) * (PI / (m + 1) as f64) * s * s;
            let center = 2 * (j + 1) == m + 1;
            let vals: Vec<f64> = (0..=n_max)
                .map(|n| {
                    if center {
                        // theta = pi/2: sin((n+1) pi/2) is exactly 0 for odd
                        // n and +-1 for even n; keep the parity zeros exact
                        if n % 2 == 1 {
                            0.0
                        } else if (n / 2) % 2 == 0 {
                            1.0
                        } else {
                            -1.0
                        }
                    } else {
                        ((n + 1) as f64 * theta).sin() / s
                    }
                })
                .collect();
            let mirror = m - 1 - j;
            weights[j] = w;
            weights[mirror] = w;
            if mirror != j {
                table[mirror] = vals
                    .iter()
                    .enumerate()
                    .map(|(n, &v)| if n % 2 == 1 { -v } else { v })
                    .collect();
            }
            table[j] = vals;
        }
        Self { weights, table }
    }

    fn len(&self) -> usize {
        self.weights.len()
    }
}

/// `V[n,m,k,l] = \int_0^pi e_n e_m e_k e_l / sin^2 x dx`.
pub fn conformal_overlap(grid: &ConformalGrid, n: u32, m: u32, k: u32, l: u32) -> f64 {
    let f = |j: usize| {
        let t = &grid.table[j];
        grid.weights[j] * t[n as usize] * t[m as usize] * t[k as usize] * t[l as usize]
    };
    let len = grid.len();
    let mut total = 0.0;
    for j in 0..len / 2 {
        total += f(j) + f(len - 1 - j);
    }
    if len % 2 == 1 {
        total += f(len / 2);
    }
    total
}

/// The time average of the conformal quartic Hamiltonian as a polynomial.
///
/// The average over the `2 pi` period keeps exactly the zero-net-frequency
/// part of `(1/4) sum_j w_j F_j^4` with `F_j = sum_n u_n(j) q_n`, which
/// splits by conjugation count: the 2-2 block pairs equal level sums, and
/// the 3-1 block pairs a triple of level sum `T` with the single mode
/// `T + 2`. Assembling those blocks directly is the frequency filter of
/// the reduction module applied analytically; nonresonant monomials are
/// never materialized. Agreement with the literal expand-then-average
/// route is checked in the integration tests.
pub fn conformal_resonant_poly(n_max: u32) -> PhasePoly {
    let grid = ConformalGrid::new(n_max);
    let mut acc = PhasePoly::zero(n_max);

    // sorted pair/triple index lists with multinomial factors, shared by
    // every node
    let mut pairs_by_sum: Vec<Vec<(u32, u32, f64)>> = vec![Vec::new(); 2 * n_max as usize + 1];
    for n in 0..=n_max {
        for m in n..=n_max {
            let mult = if n == m { 1.0 } else { 2.0 };
            pairs_by_sum[(n + m) as usize].push((n, m, mult));
        }
    }
    let mut triples: Vec<(u32, u32, u32, f64)> = Vec::new();
    if n_max >= 2 {
        for m in 0..=n_max {
            for k in m..=n_max {
                for l in k..=n_max {
                    if m + k + l + 2 > n_max {
                        continue;
                    }
                    let mult = if m == k && k == l {
                        1.0
                    } else if m == k || k == l {
                        3.0
                    } else {
                        6.0
                    };
                    triples.push((m, k, l, mult));
                }
            }
        }
    }

    for j in 0..grid.len() {
        let w4 = grid.weights[j] / 4.0;
        let g: Vec<f64> = grid.table[j]
            .iter()
            .enumerate()
            .map(|(n, &u)| u / (2.0 * (n as f64 + 1.0)).sqrt())
            .collect();

        // 2-2 block: 6 A^2 Abar^2 restricted to equal level sums
        for pairs in &pairs_by_sum {
            for &(k, l, mkl) in pairs {
                let bra = mkl * g[k as usize] * g[l as usize];
                for &(n, m, mnm) in pairs {
                    let ket = mnm * g[n as usize] * g[m as usize];
                    acc.add_term(
                        TermKey::from_indices(&[k, l], &[n, m]),
                        Complex64::new(6.0 * w4 * bra * ket, 0.0),
                    );
                }
            }
        }

        // 3-1 blocks: 4 A^3 Abar + 4 Abar^3 A; the partner of a triple with
        // level sum T is the single mode T + 2. These coefficients cancel
        // across nodes (the sine-overlap selection rule) and are pruned
        // downstream; they are accumulated here so the cancellation is
        // observable rather than assumed.
        for &(m, k, l, mult) in &triples {
            let r = m + k + l + 2;
            let c = 4.0 * w4 * mult * g[m as usize] * g[k as usize] * g[l as usize] * g[r as usize];
            acc.add_term(TermKey::from_indices(&[r], &[m, k, l]), Complex64::new(c, 0.0));
            acc.add_term(TermKey::from_indices(&[m, k, l], &[r]), Complex64::new(c, 0.0));
        }
    }
    acc
}

/// The quartic Hamiltonian of the trapped 1D NLS on a window, as a
/// polynomial: `(1/2) sum W[n,m,k,l] abar_n abar_m a_k a_l` over *all*
/// index tuples, resonant or not. This is the order-`g` input of the
/// time-averaging pipeline.
pub fn nls1d_quartic_poly(n_max: u32) -> PhasePoly {
    let grid = OverlapGrid::for_quartics(n_max);
    let mut h1 = PhasePoly::zero(n_max);
    for n in 0..=n_max {
        for m in n..=n_max {
            let s_bra = if n == m { 1.0 } else { 2.0 };
            for k in 0..=n_max {
                for l in k..=n_max {
                    let s_ket = if k == l { 1.0 } else { 2.0 };
                    let w = grid.overlap4(n, m, k, l);
                    if w != 0.0 {
                        h1.add_term(
                            TermKey::from_indices(&[n, m], &[k, l]),
                            Complex64::new(0.5 * w * s_bra * s_ket, 0.0),
                        );
                    }
                }
            }
        }
    }
    h1
}

/// The quartic interaction of the conformal wave equation expanded
/// literally in interaction-picture amplitudes,
/// `H1 = (1/4) sum_j w_j (sum_n u_n(j) q_n)^4` with
/// `q_n = (a_n + abar_n)/sqrt(2 omega_n)`, every nonresonant monomial
/// included. Feasible for small windows only (the term count grows like
/// `n_max^4`); [`conformal_resonant_poly`] assembles the same average
/// without materializing the nonresonant bulk.
pub fn conformal_quartic_poly(n_max: u32) -> PhasePoly {
    let grid = ConformalGrid::new(n_max);
    let mut h1 = PhasePoly::zero(n_max);
    for j in 0..grid.len() {
        let mut f = PhasePoly::zero(n_max);
        for n in 0..=n_max {
            let g = grid.table[j][n as usize] / (2.0 * (n as f64 + 1.0)).sqrt();
            f = f.add(&PhasePoly::term(Complex64::new(g, 0.0), &[], &[n], n_max));
            f = f.add(&PhasePoly::term(Complex64::new(g, 0.0), &[n], &[], n_max));
        }
        let f2 = f.mul(&f);
        let f4 = f2.mul(&f2);
        h1 = h1.add(&f4.scale(Complex64::new(grid.weights[j] / 4.0, 0.0)));
    }
    h1
}

/// Conformal-flow couplings plus whatever survived in the S channel after
/// stripping quadrature rounding noise (expected: nothing).
pub fn gen_conformal_full(
    n_max: u32,
) -> Result<(CouplingTensor, Vec<Monomial>), CouplingError> {
    if n_max > GEN_N_MAX_LIMIT {
        return Err(CouplingError::QuadratureBudgetExceeded(n_max, GEN_N_MAX_LIMIT));
    }
    let poly = conformal_resonant_poly(n_max);
    let noise_floor = 1e-9 * poly.max_coeff();
    let pruned = poly.pruned(noise_floor);
    from_resonant_poly_tol(&pruned, noise_floor.max(1e-12))
}

pub fn gen_conformal(n_max: u32) -> Result<CouplingTensor, CouplingError> {
    Ok(gen_conformal_full(n_max)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::couplings::{check_c_identity, BreathingVector};

    #[test]
    fn nls_diagonal_oracles() {
        let t = gen_nls1d(4).unwrap();
        let inv_sqrt_2pi = (2.0 * PI).powf(-0.5);
        assert!((t.get(0, 0, 0, 0) - 0.5 * inv_sqrt_2pi).abs() < 1e-14);
        assert!((t.get(1, 1, 1, 1) - 0.5 * 0.75 * inv_sqrt_2pi).abs() < 1e-14);
        // symmetry of lookups
        assert_eq!(t.get(2, 0, 1, 1), t.get(0, 2, 1, 1));
        assert_eq!(t.get(1, 1, 2, 0), t.get(0, 2, 1, 1));
    }

    #[test]
    fn nls_budget_enforced() {
        assert!(matches!(
            gen_nls1d(65),
            Err(CouplingError::QuadratureBudgetExceeded(65, 64))
        ));
    }

    #[test]
    fn conformal_overlap_oracles() {
        let grid = ConformalGrid::new(4);
        // handmade integrals: V0000 = 2/pi, V1111 = 4/pi
        assert!((conformal_overlap(&grid, 0, 0, 0, 0) - 2.0 / PI).abs() < 1e-13);
        assert!((conformal_overlap(&grid, 1, 1, 1, 1) - 4.0 / PI).abs() < 1e-13);
        // odd total level: exactly zero by mirrored parity
        assert_eq!(conformal_overlap(&grid, 0, 0, 0, 1), 0.0);
        assert_eq!(conformal_overlap(&grid, 1, 2, 3, 1), 0.0);
    }

    #[test]
    fn doubling_conformal_nodes_changes_nothing() {
        let base = ConformalGrid::new(12);
        let fine = ConformalGrid::with_len(12, 2 * (2 * 12 + 1));
        for (n, m, k, l) in [(0, 0, 0, 0), (3, 5, 2, 6), (12, 12, 12, 12), (1, 7, 4, 4)] {
            let a = conformal_overlap(&base, n, m, k, l);
            let b = conformal_overlap(&fine, n, m, k, l);
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "V[{n},{m},{k},{l}]");
        }
    }

    #[test]
    fn conformal_selection_rule_zeros() {
        // quartets with one frequency equal to the sum of the others have
        // vanishing overlap; these feed the S channel
        let grid = ConformalGrid::new(8);
        for (n, m, k, l) in [(2, 0, 0, 0), (3, 1, 0, 0), (4, 2, 0, 0), (4, 1, 1, 0), (6, 2, 1, 1)] {
            assert_eq!(n, m + k + l + 2);
            let v = conformal_overlap(&grid, n, m, k, l);
            assert!(v.abs() < 1e-13, "V[{n},{m},{k},{l}] = {v:e}");
        }
    }

    #[test]
    fn conformal_pipeline_has_empty_s_channel() {
        let (tensor, s_terms) = gen_conformal_full(8).unwrap();
        assert!(s_terms.is_empty());
        assert!(!tensor.is_empty());
        // pipeline-normalized corner entries: C0000 = (3/8) V0000 = 3/(4 pi),
        // C0101 = (3/16) V0011 = 3/(8 pi)
        assert!((tensor.get(0, 0, 0, 0) - 3.0 / (4.0 * PI)).abs() < 1e-12);
        assert!((tensor.get(0, 1, 0, 1) - 3.0 / (8.0 * PI)).abs() < 1e-12);
    }

    #[test]
    fn conformal_couplings_follow_min_rule() {
        // C[n,m,k,l] * sqrt(prod omega) is proportional to min+1 with a
        // single constant read off the (0,0,0,0) entry
        let t = gen_conformal(10).unwrap();
        let kappa = t.get(0, 0, 0, 0);
        let mut worst: f64 = 0.0;
        for (&[n, m, k, l], &c) in t.iter() {
            let sqrt_om = (((n + 1) * (m + 1) * (k + 1) * (l + 1)) as f64).sqrt();
            let predicted = kappa * (n.min(m).min(k).min(l) + 1) as f64 / sqrt_om;
            worst = worst.max(((c - predicted) / predicted).abs());
        }
        assert!(worst < 1e-8, "relative spread {worst:e}");
    }

    #[test]
    fn generated_tensors_satisfy_their_identities() {
        let nls = gen_nls1d(8).unwrap();
        let r = check_c_identity(&nls, &BreathingVector::new(0.0, 8));
        assert!(r < 1e-12, "nls residual {r:e}");

        let conf = gen_conformal(8).unwrap();
        let r = check_c_identity(&conf, &BreathingVector::new(0.5, 8));
        assert!(r < 1e-12, "conformal residual {r:e}");
    }
}
