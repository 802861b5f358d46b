//! Small value parsers shared by the subcommands: exact rationals,
//! complex literals, mode-amplitude files and initial-condition specs.

use anyhow::{anyhow, bail, Context, Result};
use num_complex::Complex64;
use num_rational::Rational64;

/// Exact rational in `p/q` form (or a bare integer). Decimal notation is
/// rejected: resonance arithmetic must stay exact.
pub fn parse_rational(s: &str) -> Result<Rational64> {
    let s = s.trim();
    if s.contains('.') {
        bail!("rationals must be written p/q (got {s:?}); decimals are not exact");
    }
    if let Some((p, q)) = s.split_once('/') {
        let p: i64 = p.trim().parse().with_context(|| format!("bad numerator in {s:?}"))?;
        let q: i64 = q.trim().parse().with_context(|| format!("bad denominator in {s:?}"))?;
        if q == 0 {
            bail!("zero denominator in {s:?}");
        }
        Ok(Rational64::new(p, q))
    } else {
        let p: i64 = s.parse().with_context(|| format!("bad rational {s:?}"))?;
        Ok(Rational64::from_integer(p))
    }
}

/// Complex literal: `1`, `-0.5`, `0.4i`, `1+0.4i`, `1-i`, `i`.
pub fn parse_complex(s: &str) -> Result<Complex64> {
    let s: String = s.trim().chars().filter(|c| !c.is_whitespace()).collect();
    if s.is_empty() {
        bail!("empty complex literal");
    }
    // pure real or pure imaginary
    if !s.ends_with('i') {
        return Ok(Complex64::new(
            s.parse().map_err(|_| anyhow!("bad complex literal {s:?}"))?,
            0.0,
        ));
    }
    let body = &s[..s.len() - 1];
    // find the split between the real part and the imaginary coefficient:
    // the last '+'/'-' that is not an exponent sign and not leading
    let bytes = body.as_bytes();
    let mut split = None;
    for i in (1..bytes.len()).rev() {
        let c = bytes[i] as char;
        if (c == '+' || c == '-') && !matches!(bytes[i - 1] as char, 'e' | 'E') {
            split = Some(i);
            break;
        }
    }
    let (re_str, im_str) = match split {
        Some(i) => (&body[..i], &body[i..]),
        None => ("", body),
    };
    let im: f64 = match im_str {
        "" | "+" => 1.0,
        "-" => -1.0,
        other => other.parse().map_err(|_| anyhow!("bad complex literal {s:?}"))?,
    };
    let re: f64 = if re_str.is_empty() {
        0.0
    } else {
        re_str.parse().map_err(|_| anyhow!("bad complex literal {s:?}"))?
    };
    Ok(Complex64::new(re, im))
}

/// Mode-amplitude file: lines `n re im`, `#` comments allowed, missing
/// modes are zero.
pub fn parse_amplitude_file(text: &str, n_max: u32) -> Result<Vec<Complex64>> {
    let mut amps = vec![Complex64::ZERO; n_max as usize + 1];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 3 {
            bail!("line {}: expected 'n re im'", lineno + 1);
        }
        let n: u32 = toks[0]
            .parse()
            .with_context(|| format!("line {}: bad mode index", lineno + 1))?;
        if n > n_max {
            bail!("line {}: mode {n} exceeds n_max {n_max}", lineno + 1);
        }
        let re: f64 = toks[1]
            .parse()
            .with_context(|| format!("line {}: bad real part", lineno + 1))?;
        let im: f64 = toks[2]
            .parse()
            .with_context(|| format!("line {}: bad imaginary part", lineno + 1))?;
        amps[n as usize] = Complex64::new(re, im);
    }
    Ok(amps)
}

/// Field initial condition: `shifted-gaussian:d=0.5` or
/// `modes:0=1,1=0.5+0.2i`.
pub enum FieldInit {
    ShiftedGaussian { d: f64 },
    Modes(Vec<(u32, Complex64)>),
}

pub fn parse_field_init(s: &str) -> Result<FieldInit> {
    if let Some(rest) = s.strip_prefix("shifted-gaussian:") {
        let d = rest
            .strip_prefix("d=")
            .ok_or_else(|| anyhow!("expected shifted-gaussian:d=<value>, got {s:?}"))?
            .parse()
            .with_context(|| format!("bad displacement in {s:?}"))?;
        return Ok(FieldInit::ShiftedGaussian { d });
    }
    if let Some(rest) = s.strip_prefix("modes:") {
        let mut modes = Vec::new();
        for item in rest.split(',') {
            let (n, v) = item
                .split_once('=')
                .ok_or_else(|| anyhow!("expected n=value in {item:?}"))?;
            modes.push((
                n.trim().parse().with_context(|| format!("bad mode index {n:?}"))?,
                parse_complex(v)?,
            ));
        }
        if modes.is_empty() {
            bail!("empty mode list in {s:?}");
        }
        return Ok(FieldInit::Modes(modes));
    }
    bail!("unknown init spec {s:?}; use shifted-gaussian:d=... or modes:0=...,1=...");
}
