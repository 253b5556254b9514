use std::f64::consts::PI;

use anyhow::{anyhow, bail, Context, Result};
use deformed_xi::gaussmat::RhoMatrix;
use num_complex::Complex64;

/// Parse one real term, allowing a `π` (or `pi`) factor: `8π`, `-π`, `0.5pi`, `π/4`.
fn real_term(t: &str) -> Result<f64> {
    let t = t.trim();
    if t.is_empty() {
        bail!("empty number");
    }
    let (num, den) = match t.split_once('/') {
        Some((a, b)) => (a, Some(b.trim().parse::<f64>().with_context(|| format!("bad divisor in '{t}'"))?)),
        None => (t, None),
    };
    let (body, has_pi) = if let Some(b) = num.strip_suffix('π').or_else(|| num.strip_suffix("pi")) {
        (b.trim_end_matches('*'), true)
    } else {
        (num, false)
    };
    let v = match body {
        "" | "+" => 1.0,
        "-" => -1.0,
        b => b.parse::<f64>().with_context(|| format!("bad number '{t}'"))?,
    };
    let v = if has_pi { v * PI } else { v };
    Ok(match den {
        Some(d) => v / d,
        None => v,
    })
}

/// `a`, `bi`, `a+bi`, `a-bi`, with π allowed in either part (`0.5+8πi`).
pub fn complex(s: &str) -> Result<Complex64> {
    let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    if s.is_empty() {
        bail!("empty complex number");
    }
    // split at the last sign that is not at the start and not part of an exponent
    let b = s.as_bytes();
    let mut split = None;
    for i in (1..b.len()).rev() {
        if (b[i] == b'+' || b[i] == b'-') && !matches!(b[i - 1], b'e' | b'E') {
            split = Some(i);
            break;
        }
    }
    let imag = |t: &str| -> Result<f64> {
        let t = t.strip_suffix('i').ok_or_else(|| anyhow!("expected imaginary part ending in 'i': '{t}'"))?;
        let t = t.strip_suffix('*').unwrap_or(t);
        real_term(t)
    };
    let is_imag = |t: &str| t.ends_with('i') && !(t.ends_with("pi") && !t.ends_with("pii"));
    let z = match split {
        Some(i) => Complex64::new(real_term(&s[..i])?, imag(&s[i..])?),
        None if is_imag(&s) => Complex64::new(0.0, imag(&s)?),
        None => Complex64::new(real_term(&s)?, 0.0),
    };
    if !z.re.is_finite() || !z.im.is_finite() {
        bail!("non-finite complex number '{s}'");
    }
    Ok(z)
}

/// Comma-separated complex list.
pub fn complex_list(s: &str) -> Result<Vec<Complex64>> {
    s.split(',').map(complex).collect()
}

/// `"1,0.2;0.2,1"`: rows separated by `;`, entries by `,`.
pub fn rho_matrix(s: &str) -> Result<RhoMatrix> {
    let rows = s
        .split(';')
        .map(complex_list)
        .collect::<Result<Vec<_>>>()?;
    Ok(RhoMatrix::new(&rows)?)
}

/// `lo:hi:n`, n ≥ 1 points including both ends.
pub fn range(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        bail!("range must be lo:hi:n, got '{s}'");
    }
    let lo = real_term(parts[0])?;
    let hi = real_term(parts[1])?;
    let n: usize = parts[2].parse().with_context(|| format!("bad point count in '{s}'"))?;
    if n == 0 {
        bail!("range needs at least one point");
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
}

/// `key=value` with a complex value.
pub fn key_value(s: &str) -> Result<(String, Complex64)> {
    let (k, v) = s.split_once('=').ok_or_else(|| anyhow!("expected key=value, got '{s}'"))?;
    Ok((k.trim().to_string(), complex(v)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_forms() {
        assert_eq!(complex("2+3i").unwrap(), Complex64::new(2.0, 3.0));
        assert_eq!(complex("-1.5").unwrap(), Complex64::new(-1.5, 0.0));
        assert_eq!(complex("3i").unwrap(), Complex64::new(0.0, 3.0));
        assert_eq!(complex("-i").unwrap(), Complex64::new(0.0, -1.0));
        assert_eq!(complex("0.5+8πi").unwrap(), Complex64::new(0.5, 8.0 * PI));
        assert_eq!(complex("0.5-8pii").unwrap(), Complex64::new(0.5, -8.0 * PI));
        assert_eq!(complex("1e-3-2e+1i").unwrap(), Complex64::new(1e-3, -20.0));
        assert_eq!(complex("π/4").unwrap(), Complex64::new(PI / 4.0, 0.0));
        assert!(complex("abc").is_err());
        assert!(complex("1+2").is_err());
        assert_eq!(complex("pi").unwrap(), Complex64::new(PI, 0.0));
    }

    #[test]
    fn matrices_and_ranges() {
        let m = rho_matrix("1,0.2;0.2,1").unwrap();
        assert_eq!(m.dim(), 2);
        assert_eq!(m.get(0, 1), Complex64::new(0.2, 0.0));
        assert_eq!(range("0:1:5").unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(range("0:1").is_err());
    }
}
