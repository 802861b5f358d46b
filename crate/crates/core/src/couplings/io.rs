//! Tensor file format.
//!
//! ```text
//! resonant-coupling v1
//! n_max=12
//! symmetry=nm.kl.swap
//! n m k l value
//! ```
//!
//! Values are C-style hexadecimal floats (`-0x1.23abp-4`) so the numeric
//! payload round-trips bit-exactly. Entries must be canonical resonant
//! quartets inside the window; the loader audits this and reports the
//! offending line.

use std::io::{BufRead, Write};

use super::{canonical_quartet, CouplingError, CouplingTensor};

const MAGIC: &str = "resonant-coupling v1";
const SYMMETRY: &str = "symmetry=nm.kl.swap";

pub fn save_tensor<W: Write>(tensor: &CouplingTensor, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "n_max={}", tensor.n_max())?;
    writeln!(w, "{SYMMETRY}")?;
    for (&[n, m, k, l], &v) in tensor.iter() {
        writeln!(w, "{n} {m} {k} {l} {}", format_hex_f64(v))?;
    }
    Ok(())
}

pub fn load_tensor<R: BufRead>(r: R) -> Result<CouplingTensor, CouplingError> {
    let mut lines = r.lines().enumerate();

    let mut expect_line = |want: Option<&str>| -> Result<(usize, String), CouplingError> {
        match lines.next() {
            Some((i, Ok(line))) => {
                if let Some(want) = want {
                    if line.trim() != want {
                        return Err(CouplingError::Format {
                            line: i + 1,
                            msg: format!("expected {want:?}, got {line:?}"),
                        });
                    }
                }
                Ok((i + 1, line))
            }
            Some((i, Err(e))) => Err(CouplingError::Format { line: i + 1, msg: e.to_string() }),
            None => Err(CouplingError::Format { line: 0, msg: "truncated file".into() }),
        }
    };

    expect_line(Some(MAGIC))?;
    let (lineno, nmax_line) = expect_line(None)?;
    let n_max: u32 = nmax_line
        .trim()
        .strip_prefix("n_max=")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| CouplingError::Format {
            line: lineno,
            msg: format!("expected n_max=K, got {nmax_line:?}"),
        })?;
    expect_line(Some(SYMMETRY))?;

    let mut tensor = CouplingTensor::new(n_max);
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line.map_err(|e| CouplingError::Format { line: lineno, msg: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 5 {
            return Err(CouplingError::Format {
                line: lineno,
                msg: format!("expected 'n m k l value', got {} fields", toks.len()),
            });
        }
        let mut idx = [0u32; 4];
        for (slot, tok) in idx.iter_mut().zip(&toks[..4]) {
            *slot = tok.parse().map_err(|_| CouplingError::Format {
                line: lineno,
                msg: format!("bad index {tok:?}"),
            })?;
        }
        let value = parse_hex_f64(toks[4]).ok_or_else(|| CouplingError::Format {
            line: lineno,
            msg: format!("bad hex float {:?}", toks[4]),
        })?;
        if !value.is_finite() {
            return Err(CouplingError::Format { line: lineno, msg: "non-finite value".into() });
        }
        let [n, m, k, l] = idx;
        if n.max(m).max(k).max(l) > n_max {
            return Err(CouplingError::Format {
                line: lineno,
                msg: format!("index exceeds header n_max={n_max}"),
            });
        }
        let canon = canonical_quartet(n, m, k, l).map_err(|_| CouplingError::Format {
            line: lineno,
            msg: format!("quartet ({n},{m},{k},{l}) is not resonant"),
        })?;
        if canon != idx {
            return Err(CouplingError::Format {
                line: lineno,
                msg: format!("quartet not in canonical order, expected {canon:?}"),
            });
        }
        if tensor.get(n, m, k, l) != 0.0 {
            return Err(CouplingError::Format {
                line: lineno,
                msg: format!("duplicate quartet {idx:?}"),
            });
        }
        tensor.insert(n, m, k, l, value).expect("validated above");
    }
    Ok(tensor)
}

/// C-style hexadecimal float: `[-]0x1.<13 hex digits>p<exp>`, with
/// subnormals as `0x0.<digits>p-1022`. Exact for all finite `f64`.
pub fn format_hex_f64(v: f64) -> String {
    assert!(v.is_finite(), "tensor values must be finite");
    let bits = v.to_bits();
    let sign = if bits >> 63 == 1 { "-" } else { "" };
    let exp_raw = ((bits >> 52) & 0x7ff) as i64;
    let mant = bits & ((1u64 << 52) - 1);
    if exp_raw == 0 {
        if mant == 0 {
            return format!("{sign}0x0p+0");
        }
        return format!("{sign}0x0.{mant:013x}p-1022");
    }
    format!("{sign}0x1.{mant:013x}p{:+}", exp_raw - 1023)
}

/// Parses the format written by [`format_hex_f64`] (plus trimmed-zero
/// variants). Returns `None` if the literal would not round-trip exactly.
pub fn parse_hex_f64(s: &str) -> Option<f64> {
    let (sign, rest) = match s.strip_prefix('-') {
        Some(r) => (-1.0, r),
        None => (1.0, s.strip_prefix('+').unwrap_or(s)),
    };
    let rest = rest.strip_prefix("0x").or_else(|| rest.strip_prefix("0X"))?;
    let (mant_str, exp_str) = rest.split_once(['p', 'P'])?;
    let exp: i64 = exp_str.parse().ok()?;
    let (int_part, frac_part) = match mant_str.split_once('.') {
        Some((i, f)) => (i, f),
        None => (mant_str, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    let mut m: u128 = 0;
    for c in int_part.chars().chain(frac_part.chars()) {
        m = m.checked_mul(16)?.checked_add(c.to_digit(16)? as u128)?;
    }
    let mut e = exp - 4 * frac_part.len() as i64;
    while m != 0 && m & 1 == 0 {
        m >>= 1;
        e += 1;
    }
    if m >> 53 != 0 {
        return None;
    }
    Some(sign * ldexp(m as f64, e))
}

fn ldexp(x: f64, mut e: i64) -> f64 {
    let mut v = x;
    while e > 0 {
        let step = e.min(1000);
        v *= 2f64.powi(step as i32);
        e -= step;
    }
    while e < 0 {
        let step = (-e).min(1000);
        v /= 2f64.powi(step as i32);
        e += step;
    }
    v
}
