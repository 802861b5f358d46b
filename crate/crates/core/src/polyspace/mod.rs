//! Exact sparse polynomial algebra over complex mode amplitudes.
//!
//! Polynomials live in the variables `a_n` and their conjugates `abar_n`,
//! `0 <= n <= max_mode`. The canonical structure is the bracket
//!
//! ```text
//! {F, G} = i * sum_k ( dF/dabar_k * dG/da_k  -  dF/da_k * dG/dabar_k )
//! ```
//!
//! under which the mode amplitudes evolve as `da_n/dt = {H, a_n}`, so a
//! ladder Hamiltonian `H0 = sum omega_n abar_n a_n` rotates each amplitude
//! as `a_n(t) = exp(i omega_n t) a_n(0)`.
//!
//! Coefficients are double-precision complex. Every operation is exact in
//! the sense of IEEE arithmetic: no hidden tolerances, and term order is
//! canonical (lexicographic over the sorted conjugated index list, then the
//! sorted plain index list) so iteration and summation orders are
//! reproducible.

mod io;

pub use io::{read_poly, write_poly, PolyFormatError};

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use num_rational::Rational64;
use thiserror::Error;

use crate::state::ModeState;

/// Exponent list of one side (plain or conjugated) of a monomial:
/// sorted `(mode, degree)` pairs, no zero degrees.
pub type DegreeMap = Vec<(u32, u32)>;

/// Key identifying a monomial: conjugated exponents first, then plain ones.
///
/// `Ord` on this type is the canonical term order of the crate.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TermKey {
    pub abar: DegreeMap,
    pub a: DegreeMap,
}

impl TermKey {
    pub fn one() -> Self {
        Self { abar: Vec::new(), a: Vec::new() }
    }

    /// Builds a key from (possibly repeated, unsorted) index lists.
    pub fn from_indices(abar: &[u32], a: &[u32]) -> Self {
        Self { abar: collect_degrees(abar), a: collect_degrees(a) }
    }

    pub fn degree_abar(&self) -> u32 {
        self.abar.iter().map(|&(_, d)| d).sum()
    }

    pub fn degree_a(&self) -> u32 {
        self.a.iter().map(|&(_, d)| d).sum()
    }

    pub fn total_degree(&self) -> u32 {
        self.degree_abar() + self.degree_a()
    }

    pub fn max_index(&self) -> Option<u32> {
        self.abar
            .iter()
            .chain(self.a.iter())
            .map(|&(n, _)| n)
            .max()
    }

    /// Index list with multiplicity, ascending (conjugated side).
    pub fn abar_indices(&self) -> Vec<u32> {
        expand_degrees(&self.abar)
    }

    /// Index list with multiplicity, ascending (plain side).
    pub fn a_indices(&self) -> Vec<u32> {
        expand_degrees(&self.a)
    }

    fn mul(&self, other: &Self) -> Self {
        Self {
            abar: merge_degrees(&self.abar, &other.abar),
            a: merge_degrees(&self.a, &other.a),
        }
    }

    fn conjugate(&self) -> Self {
        Self { abar: self.a.clone(), a: self.abar.clone() }
    }

    /// Net interaction-picture frequency `sum_abar omega_n - sum_a omega_n`.
    pub fn net_frequency(&self, ladder: &FrequencyLadder) -> Rational64 {
        let mut net = Rational64::from_integer(0);
        for &(n, d) in &self.abar {
            net += ladder.omega(n) * Rational64::from_integer(d as i64);
        }
        for &(n, d) in &self.a {
            net -= ladder.omega(n) * Rational64::from_integer(d as i64);
        }
        net
    }
}

fn collect_degrees(indices: &[u32]) -> DegreeMap {
    let mut map: BTreeMap<u32, u32> = BTreeMap::new();
    for &n in indices {
        *map.entry(n).or_insert(0) += 1;
    }
    map.into_iter().collect()
}

fn expand_degrees(map: &DegreeMap) -> Vec<u32> {
    let mut out = Vec::new();
    for &(n, d) in map {
        for _ in 0..d {
            out.push(n);
        }
    }
    out
}

fn merge_degrees(lhs: &DegreeMap, rhs: &DegreeMap) -> DegreeMap {
    let mut map: BTreeMap<u32, u32> = lhs.iter().copied().collect();
    for &(n, d) in rhs {
        *map.entry(n).or_insert(0) += d;
    }
    map.into_iter().collect()
}

/// A single stored term: canonical key plus a nonzero coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub key: TermKey,
    pub coeff: Complex64,
}

/// Evenly spaced frequency ladder `omega_n = omega0 + n` with exact
/// rational offset, so resonance arithmetic never touches floating point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrequencyLadder {
    omega0: Rational64,
    n_max: u32,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LadderError {
    #[error("ladder offset must be positive, got {0}")]
    NonPositiveOffset(Rational64),
}

impl FrequencyLadder {
    pub fn new(omega0: Rational64, n_max: u32) -> Result<Self, LadderError> {
        if omega0 <= Rational64::from_integer(0) {
            return Err(LadderError::NonPositiveOffset(omega0));
        }
        Ok(Self { omega0, n_max })
    }

    pub fn omega0(&self) -> Rational64 {
        self.omega0
    }

    pub fn n_max(&self) -> u32 {
        self.n_max
    }

    pub fn omega(&self, n: u32) -> Rational64 {
        self.omega0 + Rational64::from_integer(n as i64)
    }

    pub fn omega_f64(&self, n: u32) -> f64 {
        *self.omega(n).numer() as f64 / *self.omega(n).denom() as f64
    }
}

/// Sparse polynomial in the amplitudes `a_n`, `abar_n` with complex
/// coefficients, truncated to mode indices `<= max_mode`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoly {
    terms: BTreeMap<TermKey, Complex64>,
    max_mode: u32,
}

/// Count of terms discarded when restricting a polynomial to a smaller
/// mode window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TruncationReport {
    pub dropped_terms: usize,
}

impl PhasePoly {
    pub fn zero(max_mode: u32) -> Self {
        Self { terms: BTreeMap::new(), max_mode }
    }

    pub fn constant(c: Complex64, max_mode: u32) -> Self {
        let mut p = Self::zero(max_mode);
        p.add_term(TermKey::one(), c);
        p
    }

    pub fn one(max_mode: u32) -> Self {
        Self::constant(Complex64::ONE, max_mode)
    }

    /// Single term `coeff * prod abar_i * prod a_j`.
    ///
    /// Panics if some index exceeds `max_mode`; indices out of window are a
    /// construction error, not data.
    pub fn term(coeff: Complex64, abar: &[u32], a: &[u32], max_mode: u32) -> Self {
        let key = TermKey::from_indices(abar, a);
        assert!(
            key.max_index().is_none_or(|n| n <= max_mode),
            "term index exceeds max_mode {max_mode}"
        );
        let mut p = Self::zero(max_mode);
        p.add_term(key, coeff);
        p
    }

    pub fn max_mode(&self) -> u32 {
        self.max_mode
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&TermKey, &Complex64)> {
        self.terms.iter()
    }

    pub fn coeff(&self, key: &TermKey) -> Complex64 {
        self.terms.get(key).copied().unwrap_or(Complex64::ZERO)
    }

    pub fn monomials(&self) -> Vec<Monomial> {
        self.terms
            .iter()
            .map(|(k, &c)| Monomial { key: k.clone(), coeff: c })
            .collect()
    }

    /// Largest coefficient magnitude; zero polynomial gives 0.
    pub fn max_coeff(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn add_term(&mut self, key: TermKey, coeff: Complex64) {
        debug_assert!(key.max_index().is_none_or(|n| n <= self.max_mode));
        use std::collections::btree_map::Entry;
        match self.terms.entry(key) {
            Entry::Vacant(v) => {
                if coeff != Complex64::ZERO {
                    v.insert(coeff);
                }
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += coeff;
                // exact cancellation only; no tolerance here
                if *o.get() == Complex64::ZERO {
                    o.remove();
                }
            }
        }
    }

    /// Coefficient-wise sum. The result window is the larger of the two.
    pub fn add(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.max_mode.max(other.max_mode));
        out.terms = self.terms.clone();
        for (k, &c) in &other.terms {
            let entry = out.terms.entry(k.clone()).or_insert(Complex64::ZERO);
            *entry += c;
            if *entry == Complex64::ZERO {
                out.terms.remove(k);
            }
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-Complex64::ONE))
    }

    pub fn scale(&self, c: Complex64) -> Self {
        if c == Complex64::ZERO {
            return Self::zero(self.max_mode);
        }
        Self {
            terms: self.terms.iter().map(|(k, &v)| (k.clone(), v * c)).collect(),
            max_mode: self.max_mode,
        }
    }

    /// Distributed product with like terms merged. Indices never exceed the
    /// larger input window, so no terms are dropped here; use
    /// [`PhasePoly::truncate_to`] to restrict the window afterwards.
    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.max_mode.max(other.max_mode));
        for (k1, &c1) in &self.terms {
            for (k2, &c2) in &other.terms {
                out.add_term(k1.mul(k2), c1 * c2);
            }
        }
        out
    }

    /// Restricts to terms whose indices all lie in `[0, new_max]`, counting
    /// what was dropped.
    pub fn truncate_to(&self, new_max: u32) -> (Self, TruncationReport) {
        let mut out = Self::zero(new_max);
        let mut dropped = 0usize;
        for (k, &c) in &self.terms {
            if k.max_index().is_none_or(|n| n <= new_max) {
                out.terms.insert(k.clone(), c);
            } else {
                dropped += 1;
            }
        }
        (out, TruncationReport { dropped_terms: dropped })
    }

    /// Drops terms with coefficient magnitude `<= tol`. Used to strip
    /// quadrature rounding noise before channel classification; the exact
    /// algebra above never calls this.
    pub fn pruned(&self, tol: f64) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .filter(|(_, c)| c.norm() > tol)
                .map(|(k, &c)| (k.clone(), c))
                .collect(),
            max_mode: self.max_mode,
        }
    }

    /// Complex conjugate: swaps `a` and `abar` degrees, conjugates
    /// coefficients.
    pub fn conjugate(&self) -> Self {
        let mut out = Self::zero(self.max_mode);
        for (k, &c) in &self.terms {
            out.terms.insert(k.conjugate(), c.conj());
        }
        out
    }

    /// Partial derivative with respect to `a_k`.
    pub fn d_da(&self, k: u32) -> Self {
        self.derive(k, false)
    }

    /// Partial derivative with respect to `abar_k`.
    pub fn d_dabar(&self, k: u32) -> Self {
        self.derive(k, true)
    }

    fn derive(&self, k: u32, conjugated: bool) -> Self {
        let mut out = Self::zero(self.max_mode);
        for (key, &c) in &self.terms {
            let side = if conjugated { &key.abar } else { &key.a };
            let Some(pos) = side.iter().position(|&(n, _)| n == k) else {
                continue;
            };
            let deg = side[pos].1;
            let mut new_side = side.clone();
            if deg == 1 {
                new_side.remove(pos);
            } else {
                new_side[pos].1 = deg - 1;
            }
            let new_key = if conjugated {
                TermKey { abar: new_side, a: key.a.clone() }
            } else {
                TermKey { abar: key.abar.clone(), a: new_side }
            };
            out.add_term(new_key, c * deg as f64);
        }
        out
    }

    /// Mode indices appearing in any term.
    pub fn support(&self) -> Vec<u32> {
        let mut modes: Vec<u32> = self
            .terms
            .keys()
            .flat_map(|k| k.abar.iter().chain(k.a.iter()).map(|&(n, _)| n))
            .collect();
        modes.sort_unstable();
        modes.dedup();
        modes
    }

    /// Canonical Poisson bracket
    /// `{F, G} = i sum_k (dF/dabar_k dG/da_k - dF/da_k dG/dabar_k)`.
    pub fn poisson_bracket(&self, other: &Self) -> Self {
        let max_mode = self.max_mode.max(other.max_mode);
        let mut acc = Self::zero(max_mode);
        let lhs_modes = self.support();
        let rhs_modes: std::collections::BTreeSet<u32> = other.support().into_iter().collect();
        for k in lhs_modes {
            if !rhs_modes.contains(&k) {
                continue;
            }
            let t1 = self.d_dabar(k).mul(&other.d_da(k));
            let t2 = self.d_da(k).mul(&other.d_dabar(k));
            acc = acc.add(&t1.sub(&t2));
        }
        acc.scale(Complex64::I)
    }

    /// Numerical value at a mode state. Terms are summed in canonical key
    /// order for reproducibility.
    ///
    /// Panics if the state does not cover the polynomial's support.
    pub fn evaluate(&self, state: &ModeState) -> Complex64 {
        if let Some(max_used) = self.terms.keys().filter_map(|k| k.max_index()).max() {
            assert!(
                state.n_max() >= max_used,
                "state covers modes up to {}, polynomial uses {}",
                state.n_max(),
                max_used
            );
        }
        let mut total = Complex64::ZERO;
        for (key, &c) in &self.terms {
            let mut v = c;
            for &(n, d) in &key.abar {
                v *= state.amps[n as usize].conj().powu(d);
            }
            for &(n, d) in &key.a {
                v *= state.amps[n as usize].powu(d);
            }
            total += v;
        }
        total
    }

    /// True when every term has equal plain and conjugated degree, i.e. the
    /// polynomial is invariant under the global phase rotation generated by
    /// the number operator.
    pub fn is_phase_balanced(&self) -> bool {
        self.terms.keys().all(|k| k.degree_a() == k.degree_abar())
    }

    /// True when every term has the given total degree.
    pub fn is_homogeneous(&self, degree: u32) -> bool {
        self.terms.keys().all(|k| k.total_degree() == degree)
    }
}

impl fmt::Display for PhasePoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (k, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({}{:+}i)", c.re, c.im)?;
            for &(n, d) in &k.abar {
                write!(f, "*abar{n}^{d}")?;
            }
            for &(n, d) in &k.a {
                write!(f, "*a{n}^{d}")?;
            }
        }
        Ok(())
    }
}

/// Ladder Hamiltonian `H0 = sum omega_n abar_n a_n`.
pub fn ladder_hamiltonian(ladder: &FrequencyLadder) -> PhasePoly {
    let mut h = PhasePoly::zero(ladder.n_max());
    for n in 0..=ladder.n_max() {
        h.add_term(
            TermKey::from_indices(&[n], &[n]),
            Complex64::new(ladder.omega_f64(n), 0.0),
        );
    }
    h
}

/// Hopping quadratic `sum_n beta_n abar_n a_{n+1}`; the shape of every
/// linearized breathing mode on a nondegenerate ladder. `betas[n]` couples
/// modes `n` and `n+1`, so `betas.len()` must be `max_mode`.
pub fn hopping_quadratic(betas: &[f64], max_mode: u32) -> PhasePoly {
    assert_eq!(betas.len(), max_mode as usize, "need one beta per rung");
    let mut b = PhasePoly::zero(max_mode);
    for (n, &beta) in betas.iter().enumerate() {
        if beta != 0.0 {
            let n = n as u32;
            b.add_term(
                TermKey::from_indices(&[n], &[n + 1]),
                Complex64::new(beta, 0.0),
            );
        }
    }
    b
}

/// Number operator `N = sum abar_n a_n`.
pub fn number_poly(max_mode: u32) -> PhasePoly {
    let mut p = PhasePoly::zero(max_mode);
    for n in 0..=max_mode {
        p.add_term(TermKey::from_indices(&[n], &[n]), Complex64::ONE);
    }
    p
}

/// Level-weighted number `E = sum n abar_n a_n`.
pub fn energy_poly(max_mode: u32) -> PhasePoly {
    let mut p = PhasePoly::zero(max_mode);
    for n in 1..=max_mode {
        p.add_term(
            TermKey::from_indices(&[n], &[n]),
            Complex64::new(n as f64, 0.0),
        );
    }
    p
}
