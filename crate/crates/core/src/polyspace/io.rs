//! Text serialization for [`PhasePoly`].
//!
//! One term per line:
//!
//! ```text
//! re im | abar: n1 n2 ... | a: m1 m2 ...
//! ```
//!
//! with indices repeated per degree, terminated by a blank line. Floats are
//! written in shortest round-trip form, so save/load is value-exact.

use std::io::{BufRead, Write};

use num_complex::Complex64;
use thiserror::Error;

use super::{PhasePoly, TermKey};

#[derive(Debug, Error)]
pub enum PolyFormatError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn write_poly<W: Write>(poly: &PhasePoly, mut w: W) -> std::io::Result<()> {
    for (key, coeff) in poly.terms() {
        write!(w, "{} {} | abar:", coeff.re, coeff.im)?;
        for n in key.abar_indices() {
            write!(w, " {n}")?;
        }
        write!(w, " | a:")?;
        for n in key.a_indices() {
            write!(w, " {n}")?;
        }
        writeln!(w)?;
    }
    writeln!(w)
}

/// Reads a polynomial. `max_mode` defaults to the largest index present
/// (0 for constants).
pub fn read_poly<R: BufRead>(r: R, max_mode: Option<u32>) -> Result<PhasePoly, PolyFormatError> {
    let mut terms: Vec<(TermKey, Complex64)> = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            break;
        }
        let parts: Vec<&str> = line.split('|').collect();
        if parts.len() != 3 {
            return Err(PolyFormatError::Malformed {
                line: lineno,
                msg: format!("expected 3 '|'-separated fields, got {}", parts.len()),
            });
        }
        let nums: Vec<&str> = parts[0].split_whitespace().collect();
        if nums.len() != 2 {
            return Err(PolyFormatError::Malformed {
                line: lineno,
                msg: "coefficient field must hold exactly two floats".into(),
            });
        }
        let re = parse_f64(nums[0], lineno)?;
        let im = parse_f64(nums[1], lineno)?;
        let abar = parse_indices(parts[1], "abar:", lineno)?;
        let a = parse_indices(parts[2], "a:", lineno)?;
        terms.push((TermKey::from_indices(&abar, &a), Complex64::new(re, im)));
    }

    let inferred = terms
        .iter()
        .filter_map(|(k, _)| k.max_index())
        .max()
        .unwrap_or(0);
    let max_mode = max_mode.unwrap_or(inferred);
    if inferred > max_mode {
        return Err(PolyFormatError::Malformed {
            line: 0,
            msg: format!("index {inferred} exceeds requested max_mode {max_mode}"),
        });
    }
    let mut poly = PhasePoly::zero(max_mode);
    for (key, coeff) in terms {
        poly.add_term(key, coeff);
    }
    Ok(poly)
}

fn parse_f64(s: &str, line: usize) -> Result<f64, PolyFormatError> {
    s.parse().map_err(|_| PolyFormatError::Malformed {
        line,
        msg: format!("bad float {s:?}"),
    })
}

fn parse_indices(field: &str, tag: &str, line: usize) -> Result<Vec<u32>, PolyFormatError> {
    let field = field.trim();
    let rest = field
        .strip_prefix(tag)
        .ok_or_else(|| PolyFormatError::Malformed {
            line,
            msg: format!("field must start with {tag:?}"),
        })?;
    rest.split_whitespace()
        .map(|tok| {
            tok.parse().map_err(|_| PolyFormatError::Malformed {
                line,
                msg: format!("bad index {tok:?}"),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_value_exact() {
        let mut p = PhasePoly::term(Complex64::new(0.1, -2.5e-7), &[0, 0], &[1], 5);
        p = p.add(&PhasePoly::term(
            Complex64::new(1.0 / 3.0, 0.0),
            &[3],
            &[2, 2, 4],
            5,
        ));
        let mut buf = Vec::new();
        write_poly(&p, &mut buf).unwrap();
        let q = read_poly(buf.as_slice(), Some(5)).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn blank_line_terminates() {
        let text = "1 0 | abar: 0 | a: 1\n\n1 0 | abar: 9 | a: 9\n";
        let p = read_poly(text.as_bytes(), None).unwrap();
        assert_eq!(p.num_terms(), 1);
        assert_eq!(p.max_mode(), 1);
    }

    #[test]
    fn malformed_lines_carry_line_numbers() {
        let text = "1 0 | abar: 0 | a: 1\n1 0 nonsense\n";
        match read_poly(text.as_bytes(), None) {
            Err(PolyFormatError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected malformed error, got {other:?}"),
        }
    }

    #[test]
    fn zero_polynomial_round_trips() {
        let p = PhasePoly::zero(3);
        let mut buf = Vec::new();
        write_poly(&p, &mut buf).unwrap();
        let q = read_poly(buf.as_slice(), Some(3)).unwrap();
        assert!(q.is_zero());
    }
}
