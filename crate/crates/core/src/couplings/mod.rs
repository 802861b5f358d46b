//! Resonant coupling tensors and the beta-recursion identities.
//!
//! The resonant Hamiltonian of a quartic system on a unit-spaced ladder is
//!
//! ```text
//! H_res = sum_{n+m=k+l} C[n,m,k,l] abar_n abar_m a_k a_l
//! ```
//!
//! where the sum runs over *ordered* index tuples and `C` is real and fully
//! symmetric under `n<->m`, `k<->l` and `(n,m)<->(k,l)`. Storage keeps one
//! entry per canonical quartet; the symmetry-orbit multiplicity is applied
//! whenever the tensor is evaluated, converted to a polynomial, or
//! contracted into equations of motion. This convention makes
//! [`CouplingTensor::to_phase_poly`] the exact inverse of
//! [`from_resonant_poly`].

mod generate;
mod io;

pub use generate::{
    conformal_overlap, conformal_quartic_poly, conformal_resonant_poly, gen_conformal,
    gen_conformal_full, gen_nls1d, nls1d_quartic_poly, ConformalGrid, GEN_N_MAX_LIMIT,
};
pub use io::{format_hex_f64, load_tensor, parse_hex_f64, save_tensor};

use std::collections::BTreeMap;

use num_complex::Complex64;
use num_rational::Rational64;
use thiserror::Error;

use crate::polyspace::{hopping_quadratic, Monomial, PhasePoly, TermKey};
use crate::state::ModeState;

#[derive(Debug, Error)]
pub enum CouplingError {
    #[error("quartet ({0}, {1}, {2}, {3}) is not resonant: n+m != k+l")]
    NotResonant(u32, u32, u32, u32),
    #[error("term is neither C- nor S-channel: {0}")]
    MalformedChannel(String),
    #[error("coupling coefficient fails the reality check: {0}")]
    NonRealCoupling(String),
    #[error("S-recursion pivot beta[{0}] vanishes; entries are not forced")]
    NonForcing(u32),
    #[error("n_max {0} exceeds the quadrature accuracy budget {1}")]
    QuadratureBudgetExceeded(u32, u32),
    #[error("no lambda fits the coupling identity: best residual {residual:.3e} exceeds threshold {threshold:.3e}")]
    NoConsistentG { residual: f64, threshold: f64 },
    #[error("tensor window admits no identity instances")]
    NoIdentityInstances,
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Canonical representative of a resonant quartet: `n <= m`, `k <= l`,
/// `(n, m) <= (k, l)` lexicographically.
pub fn canonical_quartet(n: u32, m: u32, k: u32, l: u32) -> Result<[u32; 4], CouplingError> {
    if n + m != k + l {
        return Err(CouplingError::NotResonant(n, m, k, l));
    }
    let bra = if n <= m { (n, m) } else { (m, n) };
    let ket = if k <= l { (k, l) } else { (l, k) };
    let (bra, ket) = if bra <= ket { (bra, ket) } else { (ket, bra) };
    Ok([bra.0, bra.1, ket.0, ket.1])
}

/// Number of ordered index tuples in the symmetry orbit of a canonical
/// quartet.
pub fn orbit_multiplicity(q: [u32; 4]) -> f64 {
    let s_bra = if q[0] == q[1] { 1.0 } else { 2.0 };
    let s_ket = if q[2] == q[3] { 1.0 } else { 2.0 };
    let s_swap = if (q[0], q[1]) == (q[2], q[3]) { 1.0 } else { 2.0 };
    s_bra * s_ket * s_swap
}

/// Sparse symmetric rank-4 coupling tensor on resonant quartets.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingTensor {
    n_max: u32,
    entries: BTreeMap<[u32; 4], f64>,
}

impl CouplingTensor {
    pub fn new(n_max: u32) -> Self {
        Self { n_max, entries: BTreeMap::new() }
    }

    pub fn n_max(&self) -> u32 {
        self.n_max
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[u32; 4], &f64)> {
        self.entries.iter()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.values().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// Symmetric lookup; indices outside `[0, n_max]` or missing quartets
    /// give zero.
    pub fn get(&self, n: u32, m: u32, k: u32, l: u32) -> f64 {
        if n.max(m).max(k).max(l) > self.n_max {
            return 0.0;
        }
        match canonical_quartet(n, m, k, l) {
            Ok(q) => self.entries.get(&q).copied().unwrap_or(0.0),
            Err(_) => 0.0,
        }
    }

    /// Inserts (accumulating) at the canonical representative.
    pub fn insert(&mut self, n: u32, m: u32, k: u32, l: u32, value: f64) -> Result<(), CouplingError> {
        let q = canonical_quartet(n, m, k, l)?;
        assert!(q[3] <= self.n_max, "quartet index exceeds n_max");
        *self.entries.entry(q).or_insert(0.0) += value;
        Ok(())
    }

    /// The represented polynomial `sum_ordered C abar abar a a`, assembled
    /// with explicit orbit multiplicities.
    pub fn to_phase_poly(&self) -> PhasePoly {
        let mut poly = PhasePoly::zero(self.n_max);
        for (&[n, m, k, l], &c) in &self.entries {
            let s_bra = if n == m { 1.0 } else { 2.0 };
            let s_ket = if k == l { 1.0 } else { 2.0 };
            let coeff = Complex64::new(c * s_bra * s_ket, 0.0);
            poly.add_term(TermKey::from_indices(&[n, m], &[k, l]), coeff);
            if (n, m) != (k, l) {
                poly.add_term(TermKey::from_indices(&[k, l], &[n, m]), coeff);
            }
        }
        poly
    }

    /// Value of the represented Hamiltonian at a state; always real.
    pub fn hamiltonian(&self, state: &ModeState) -> f64 {
        let mut total = 0.0;
        for (&[n, m, k, l], &c) in &self.entries {
            let s_bra = if n == m { 1.0 } else { 2.0 };
            let s_ket = if k == l { 1.0 } else { 2.0 };
            let z = state.amp(n).conj() * state.amp(m).conj() * state.amp(k) * state.amp(l);
            let contrib = if (n, m) == (k, l) { z.re } else { 2.0 * z.re };
            total += c * s_bra * s_ket * contrib;
        }
        total
    }

    /// Perturbs one canonical entry multiplicatively; used by control runs.
    pub fn perturbed(&self, q: [u32; 4], factor: f64) -> Self {
        let mut out = self.clone();
        if let Some(v) = out.entries.get_mut(&q) {
            *v *= factor;
        }
        out
    }
}

/// Breathing-mode weight sequence `beta_n = sqrt((1+n)(1+n*lambda))` with
/// `lambda = 1/G`; `lambda = 0` encodes `G = infinity`.
#[derive(Debug, Clone, PartialEq)]
pub struct BreathingVector {
    lambda: f64,
    betas: Vec<f64>,
}

impl BreathingVector {
    pub fn new(lambda: f64, n_max: u32) -> Self {
        assert!(lambda >= 0.0, "lambda must be nonnegative");
        let betas = (0..=n_max as usize)
            .map(|n| ((1.0 + n as f64) * (1.0 + n as f64 * lambda)).sqrt())
            .collect();
        Self { lambda, betas }
    }

    /// Arbitrary weights, for degeneracy diagnostics only; the derived
    /// `beta_n > 0` invariant is deliberately not enforced here.
    pub fn with_betas(betas: Vec<f64>) -> Self {
        Self { lambda: f64::NAN, betas }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Solvability parameter `G = 1/lambda`.
    pub fn g(&self) -> f64 {
        if self.lambda == 0.0 {
            f64::INFINITY
        } else {
            1.0 / self.lambda
        }
    }

    pub fn beta(&self, n: u32) -> f64 {
        self.betas.get(n as usize).copied().unwrap_or(0.0)
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    /// The quadratic breathing mode `B0 = sum beta_n abar_n a_{n+1}` on the
    /// given window.
    pub fn b0_poly(&self, max_mode: u32) -> PhasePoly {
        let betas: Vec<f64> = (0..max_mode).map(|n| self.beta(n)).collect();
        hopping_quadratic(&betas, max_mode)
    }

    /// `B0` evaluated directly on a state.
    pub fn b0_value(&self, state: &ModeState) -> Complex64 {
        state.hopping_sum(&self.betas)
    }
}

/// Splits a resonant quartic polynomial into its C-channel tensor and its
/// S-channel terms.
///
/// The stored coefficients satisfy `evaluate(P) = sum_ordered C abar abar a a`
/// exactly: each canonical monomial contributes its coefficient divided by
/// the orbit multiplicity, and hermiticity (equal coefficients on swapped
/// bra/ket monomials, vanishing imaginary parts) is enforced to `reality_tol`.
pub fn from_resonant_poly(
    poly: &PhasePoly,
) -> Result<(CouplingTensor, Vec<Monomial>), CouplingError> {
    from_resonant_poly_tol(poly, 1e-12 * poly.max_coeff().max(1.0))
}

pub fn from_resonant_poly_tol(
    poly: &PhasePoly,
    reality_tol: f64,
) -> Result<(CouplingTensor, Vec<Monomial>), CouplingError> {
    let mut acc: BTreeMap<[u32; 4], Complex64> = BTreeMap::new();
    let mut s_terms = Vec::new();

    for (key, &coeff) in poly.terms() {
        match (key.degree_abar(), key.degree_a()) {
            (2, 2) => {
                let bra = key.abar_indices();
                let ket = key.a_indices();
                let q = canonical_quartet(bra[0], bra[1], ket[0], ket[1]).map_err(|_| {
                    CouplingError::MalformedChannel(format!(
                        "C-channel term with nonzero net level: abar {bra:?} a {ket:?}"
                    ))
                })?;
                *acc.entry(q).or_insert(Complex64::ZERO) += coeff;
            }
            (3, 1) | (1, 3) => {
                s_terms.push(Monomial { key: key.clone(), coeff });
            }
            (da, db) => {
                return Err(CouplingError::MalformedChannel(format!(
                    "term with {da} conjugated and {db} plain amplitudes"
                )));
            }
        }
    }

    let mut tensor = CouplingTensor::new(poly.max_mode());
    for (q, total) in acc {
        if total.im.abs() > reality_tol {
            return Err(CouplingError::NonRealCoupling(format!(
                "quartet {q:?} accumulates imaginary part {:.3e}",
                total.im
            )));
        }
        let c = total.re / orbit_multiplicity(q);
        // hermiticity: the polynomial must weight both orbit monomials the
        // way a real symmetric tensor would
        if (q[0], q[1]) != (q[2], q[3]) {
            let m1 = poly.coeff(&TermKey::from_indices(&[q[0], q[1]], &[q[2], q[3]]));
            let m2 = poly.coeff(&TermKey::from_indices(&[q[2], q[3]], &[q[0], q[1]]));
            if (m1 - m2).norm() > reality_tol {
                return Err(CouplingError::NonRealCoupling(format!(
                    "quartet {q:?}: bra/ket-swapped coefficients differ by {:.3e}",
                    (m1 - m2).norm()
                )));
            }
        }
        tensor.entries.insert(q, c);
    }
    Ok((tensor, s_terms))
}

/// Precollected instances of the finite-difference coupling identity
///
/// ```text
/// beta_n C[n+1,m,k,l] + beta_m C[n,m+1,k,l]
///     = beta_{k-1} C[n,m,k-1,l] + beta_{l-1} C[n,m,k,l-1]
/// ```
///
/// quantified over `n+m+1 = k+l` with every *referenced* entry inside the
/// window (below-zero indices are exactly zero and stay; instances that
/// would reach above `n_max` are not testable on a truncated tensor and are
/// excluded).
pub struct IdentityInstances {
    /// (beta index, coupling value) per identity side; resolved once.
    terms: Vec<[(u32, f64); 4]>,
}

impl IdentityInstances {
    pub fn collect(tensor: &CouplingTensor) -> Self {
        let n_max = tensor.n_max;
        let mut terms = Vec::new();
        if n_max == 0 {
            return Self { terms };
        }
        for n in 0..n_max {
            for m in 0..n_max {
                let s = n + m + 1;
                for k in 0..=n_max.min(s) {
                    let l = s - k;
                    if l > n_max {
                        continue;
                    }
                    let c1 = tensor.get(n + 1, m, k, l);
                    let c2 = tensor.get(n, m + 1, k, l);
                    let c3 = if k > 0 { tensor.get(n, m, k - 1, l) } else { 0.0 };
                    let c4 = if l > 0 { tensor.get(n, m, k, l - 1) } else { 0.0 };
                    if c1 == 0.0 && c2 == 0.0 && c3 == 0.0 && c4 == 0.0 {
                        continue;
                    }
                    terms.push([
                        (n, c1),
                        (m, c2),
                        (k.wrapping_sub(1), c3),
                        (l.wrapping_sub(1), c4),
                    ]);
                }
            }
        }
        Self { terms }
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Max identity residual for the given weights; `beta[-1]` terms carry
    /// zero coupling by construction, so the wrapped index is never read
    /// with a nonzero factor.
    pub fn max_residual(&self, bv: &BreathingVector) -> f64 {
        let mut worst = 0.0f64;
        for inst in &self.terms {
            let [(bn, c1), (bm, c2), (bk, c3), (bl, c4)] = *inst;
            let mut r = 0.0;
            if c1 != 0.0 {
                r += bv.beta(bn) * c1;
            }
            if c2 != 0.0 {
                r += bv.beta(bm) * c2;
            }
            if c3 != 0.0 {
                r -= bv.beta(bk) * c3;
            }
            if c4 != 0.0 {
                r -= bv.beta(bl) * c4;
            }
            worst = worst.max(r.abs());
        }
        worst
    }
}

/// Max residual of the coupling identity over all in-window instances.
pub fn check_c_identity(tensor: &CouplingTensor, bv: &BreathingVector) -> f64 {
    IdentityInstances::collect(tensor).max_residual(bv)
}

/// Result of fitting the solvability parameter.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct GFit {
    pub lambda: f64,
    /// `1/lambda`; infinity when `lambda = 0`.
    pub g: f64,
    pub residual: f64,
}

pub const FIND_G_LAMBDA_MAX: f64 = 100.0;
pub const FIND_G_GRID: usize = 10_000;

/// Finds `lambda in [0, 100]` minimizing the identity residual: log-spaced
/// grid scan (with the `lambda = 0` endpoint included) followed by
/// golden-section refinement. Fails with `NoConsistentG` when the best
/// residual exceeds `1e-6 * max|C|`.
pub fn find_g(tensor: &CouplingTensor) -> Result<GFit, CouplingError> {
    find_g_with_threshold(tensor, 1e-6 * tensor.max_abs())
}

pub fn find_g_with_threshold(
    tensor: &CouplingTensor,
    threshold: f64,
) -> Result<GFit, CouplingError> {
    let instances = IdentityInstances::collect(tensor);
    if instances.is_empty() {
        return Err(CouplingError::NoIdentityInstances);
    }
    let n_max = tensor.n_max;
    let residual_at = |lambda: f64| {
        instances.max_residual(&BreathingVector::new(lambda, n_max))
    };

    let mut grid = Vec::with_capacity(FIND_G_GRID + 1);
    grid.push(0.0);
    let lo = 1e-6f64.ln();
    let hi = FIND_G_LAMBDA_MAX.ln();
    for i in 0..FIND_G_GRID {
        let t = i as f64 / (FIND_G_GRID - 1) as f64;
        grid.push((lo + t * (hi - lo)).exp());
    }

    let mut best_idx = 0;
    let mut best_val = f64::INFINITY;
    for (i, &lambda) in grid.iter().enumerate() {
        let r = residual_at(lambda);
        if r < best_val {
            best_val = r;
            best_idx = i;
        }
    }

    let left = if best_idx == 0 { 0.0 } else { grid[best_idx - 1] };
    let right = if best_idx + 1 < grid.len() {
        grid[best_idx + 1]
    } else {
        FIND_G_LAMBDA_MAX
    };
    let (lambda, residual) = golden_section(residual_at, left, right, 1e-13);

    let (lambda, residual) = if best_val < residual {
        (grid[best_idx], best_val)
    } else {
        (lambda, residual)
    };

    if residual > threshold {
        return Err(CouplingError::NoConsistentG { residual, threshold });
    }
    let g = if lambda == 0.0 { f64::INFINITY } else { 1.0 / lambda };
    Ok(GFit { lambda, g, residual })
}

fn golden_section<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if (b - a).abs() < tol * (1.0 + a.abs() + b.abs()) {
            break;
        }
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    // evaluate endpoints too: the minimum may sit at a window edge
    let fa = f(a);
    let fb = f(b);
    let mut best = (x1, f1);
    for cand in [(x2, f2), (a, fa), (b, fb)] {
        if cand.1 < best.1 {
            best = cand;
        }
    }
    best
}

/// One forced zero in the S-channel recursion proof.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForcingStep {
    /// canonical S-entry (n; m <= k <= l) with `omega_n = omega_m + omega_k + omega_l`
    pub entry: [u32; 4],
    /// recursion pivot `beta[n-1]` that forces it
    pub pivot_beta: u32,
}

/// Outcome of the S-channel vanishing certificate.
#[derive(Debug, Clone, PartialEq)]
pub enum SVanishProof {
    /// The ladder admits no S-channel resonances (`2 omega0` not a positive
    /// integer, or the lowest resonance lies beyond the window).
    EmptySupport,
    /// Every S-entry in the window is forced to zero, in the listed order.
    Forced(Vec<ForcingStep>),
}

/// Enumerates the S-channel support `{omega_n = omega_m + omega_k + omega_l}`
/// on the ladder with offset `omega0` and applies the recursion
///
/// ```text
/// beta_{n-1} S[n,m,k,l] = beta_{m-1} S[n-1,m-1,k,l]
///                       + beta_{k-1} S[n-1,m,k-1,l]
///                       + beta_{l-1} S[n-1,m,k,l-1]
/// ```
///
/// in increasing `m+k+l` order. Right-hand entries either sit lower in the
/// order (hence already forced to zero) or fall outside the index range
/// (hence zero), so each entry is forced provided its pivot beta does not
/// vanish.
pub fn assert_s_vanishes(
    bv: &BreathingVector,
    omega0: Rational64,
    n_max: u32,
) -> Result<SVanishProof, CouplingError> {
    // omega_n = omega_m + omega_k + omega_l  <=>  n = m + k + l + 2*omega0
    let two_omega0 = omega0 * Rational64::from_integer(2);
    if !two_omega0.is_integer() || two_omega0 <= Rational64::from_integer(0) {
        return Ok(SVanishProof::EmptySupport);
    }
    let shift = *two_omega0.numer() as u32;
    if shift > n_max {
        return Ok(SVanishProof::EmptySupport);
    }

    let mut steps = Vec::new();
    let budget = n_max - shift; // max m+k+l
    for total in 0..=budget {
        for m in 0..=total / 3 {
            for k in m..=(total - m) / 2 {
                let l = total - m - k;
                debug_assert!(k <= l);
                let n = total + shift;
                let pivot = n - 1;
                if bv.beta(pivot) == 0.0 {
                    return Err(CouplingError::NonForcing(pivot));
                }
                steps.push(ForcingStep { entry: [n, m, k, l], pivot_beta: pivot });
            }
        }
    }
    Ok(SVanishProof::Forced(steps))
}
