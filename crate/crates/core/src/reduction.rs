//! Resonant (time-averaging) reduction on an evenly spaced ladder.
//!
//! With a rational ladder offset the average of an interaction-picture
//! monomial over the common period is 1 if its net frequency vanishes and
//! 0 otherwise, so the average reduces to an exact rational frequency
//! filter. That filter is what [`time_average`] implements; no quadrature
//! in `t` is ever performed.

use num_complex::Complex64;
use num_rational::Rational64;
use thiserror::Error;

use crate::polyspace::{FrequencyLadder, Monomial, PhasePoly, TermKey};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReductionError {
    #[error("degree mismatch: {0}")]
    DegreeMismatch(String),
}

/// A monomial tagged with its exact net interaction-picture frequency
/// `sum_abar omega_n - sum_a omega_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedMonomial {
    pub monomial: Monomial,
    pub net_frequency: Rational64,
}

/// Attaches net frequencies to every stored term.
pub fn weigh_terms(poly: &PhasePoly, ladder: &FrequencyLadder) -> Vec<WeightedMonomial> {
    poly.terms()
        .map(|(key, &coeff)| WeightedMonomial {
            monomial: Monomial { key: key.clone(), coeff },
            net_frequency: key.net_frequency(ladder),
        })
        .collect()
}

/// Resonant part of a polynomial: the sub-polynomial whose terms have net
/// frequency exactly zero on the given ladder.
///
/// Equals the average `(1/T) \int_0^T S^t H dt` over the ladder's common
/// period; the rational offset stored in [`FrequencyLadder`] makes the
/// frequency test exact, so irrational ladders are unrepresentable here by
/// construction.
pub fn time_average(h1: &PhasePoly, ladder: &FrequencyLadder) -> PhasePoly {
    let zero = Rational64::from_integer(0);
    let mut out = PhasePoly::zero(h1.max_mode());
    for (key, &coeff) in h1.terms() {
        if key.net_frequency(ladder) == zero {
            out.add_term(key.clone(), coeff);
        }
    }
    out
}

/// Census of a reduction: how many surviving terms sit in each quartic
/// channel and how many input terms were dropped.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct ChannelCensus {
    pub c_terms: usize,
    pub s_terms: usize,
    pub dropped: usize,
}

/// Runs [`time_average`] and classifies the survivors: C-channel terms have
/// two plain and two conjugated amplitudes, S-channel terms have a 3-1
/// imbalance. Terms with four amplitudes of one kind never survive on a
/// positive ladder.
pub fn reduce_with_census(h1: &PhasePoly, ladder: &FrequencyLadder) -> (PhasePoly, ChannelCensus) {
    let averaged = time_average(h1, ladder);
    let mut census = ChannelCensus {
        dropped: h1.num_terms() - averaged.num_terms(),
        ..Default::default()
    };
    for (key, _) in averaged.terms() {
        match (key.degree_abar(), key.degree_a()) {
            (2, 2) => census.c_terms += 1,
            (3, 1) | (1, 3) => census.s_terms += 1,
            _ => {}
        }
    }
    (averaged, census)
}

/// Result of the conserved-quantity criterion on `B1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CondB1Report {
    pub holds: bool,
    /// Terms violating the phase-return condition.
    pub violating_terms: Vec<Monomial>,
}

/// Checks whether `B1` is invariant under `a_n -> a_n exp(2 pi i omega_n)`.
///
/// A term with plain degree `p` and conjugated degree `q` picks up the
/// phase `exp(2 pi i (p - q) omega0)` (the integer parts of the ladder
/// frequencies always cancel), so it passes iff `(p - q) * omega0` is an
/// integer. When this holds for every term, the quadratic breathing mode
/// descends to an ordinary conserved quantity of the averaged system.
pub fn check_cond_b1(b1: &PhasePoly, omega0: Rational64) -> CondB1Report {
    let mut violating = Vec::new();
    for (key, &coeff) in b1.terms() {
        let imbalance = key.degree_a() as i64 - key.degree_abar() as i64;
        let phase = omega0 * Rational64::from_integer(imbalance);
        if !phase.is_integer() {
            violating.push(Monomial { key: key.clone(), coeff });
        }
    }
    CondB1Report { holds: violating.is_empty(), violating_terms: violating }
}

/// Multiplies each term by `exp(i theta * net_frequency)`.
pub fn phase_shift(poly: &PhasePoly, theta: f64, ladder: &FrequencyLadder) -> PhasePoly {
    let mut out = PhasePoly::zero(poly.max_mode());
    for (key, &coeff) in poly.terms() {
        let net = key.net_frequency(ladder);
        let net = *net.numer() as f64 / *net.denom() as f64;
        out.add_term(key.clone(), coeff * Complex64::from_polar(1.0, theta * net));
    }
    out
}

/// Order-by-order residuals of the breathing-mode relations for
/// `H = H0 + g H1`, `B = B0 + g B1`.
#[derive(Debug, Clone)]
pub struct BreathingOrderReport {
    /// `{H0, B0} - i B0`; must vanish.
    pub order0: PhasePoly,
    /// `{H0, B1} + {H1, B0} - i B1`; must vanish.
    pub order1: PhasePoly,
    /// `{H1, B1}`; reported for information only, never required. The
    /// first two relations alone suffice for everything downstream.
    pub order2_informational: PhasePoly,
}

impl BreathingOrderReport {
    /// Max residual coefficient over terms supported entirely on modes
    /// `<= n_max - margin`. Brackets of window-truncated polynomials miss
    /// boundary terms, so residuals are only meaningful on a like-truncated
    /// interior; a margin of 1 covers quadratic generators, which shift
    /// indices by at most one.
    pub fn interior_max(&self, residual: &PhasePoly, margin: u32) -> f64 {
        let interior = residual.max_mode().saturating_sub(margin);
        residual.truncate_to(interior).0.max_coeff()
    }
}

/// Computes the order-by-order residuals, validating that `H0`, `B0` are
/// quadratic and `H1` quartic.
pub fn verify_breathing_orders(
    h0: &PhasePoly,
    h1: &PhasePoly,
    b0: &PhasePoly,
    b1: &PhasePoly,
) -> Result<BreathingOrderReport, ReductionError> {
    if !h0.is_homogeneous(2) || h0.is_zero() {
        return Err(ReductionError::DegreeMismatch("H0 must be quadratic".into()));
    }
    if !b0.is_homogeneous(2) {
        return Err(ReductionError::DegreeMismatch("B0 must be quadratic".into()));
    }
    if !h1.is_homogeneous(4) {
        return Err(ReductionError::DegreeMismatch("H1 must be quartic".into()));
    }

    let i = Complex64::I;
    let order0 = h0.poisson_bracket(b0).sub(&b0.scale(i));
    let order1 = h0
        .poisson_bracket(b1)
        .add(&h1.poisson_bracket(b0))
        .sub(&b1.scale(i));
    let order2_informational = h1.poisson_bracket(b1);
    Ok(BreathingOrderReport { order0, order1, order2_informational })
}

/// Convenience: single quartic monomial, used in tests and the CLI.
pub fn quartic_term(coeff: Complex64, abar: &[u32], a: &[u32], max_mode: u32) -> PhasePoly {
    let key = TermKey::from_indices(abar, a);
    assert_eq!(key.total_degree(), 4);
    PhasePoly::term(coeff, abar, a, max_mode)
}
