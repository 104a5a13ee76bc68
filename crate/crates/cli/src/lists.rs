//! Parsers for list-valued flags.

use std::f64::consts::PI;

/// A number, optionally followed by `pi` (`0.5pi`, `pi`).
fn parse_real(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let v = match s.strip_suffix("pi") {
        Some("") => PI,
        Some(head) => head.trim().parse::<f64>().map(|v| v * PI).map_err(|_| format!("bad number {s:?}"))?,
        None => s.parse::<f64>().map_err(|_| format!("bad number {s:?}"))?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("non-finite value {s:?}"))
    }
}

/// Comma-separated reals and inclusive `lo:step:hi` ranges.
pub fn parse_f64_list(s: &str) -> Result<Vec<f64>, String> {
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let parts: Vec<&str> = item.split(':').collect();
        match parts.as_slice() {
            [v] => out.push(parse_real(v)?),
            [lo, step, hi] => {
                let (lo, step, hi) = (parse_real(lo)?, parse_real(step)?, parse_real(hi)?);
                if !(step > 0.0) || hi < lo {
                    return Err(format!("bad range {item:?}"));
                }
                let n = ((hi - lo) / step + 1e-9).floor() as usize;
                out.extend((0..=n).map(|k| lo + k as f64 * step));
            }
            _ => return Err(format!("bad list item {item:?}")),
        }
    }
    if out.is_empty() {
        return Err("empty list".into());
    }
    Ok(out)
}

/// Comma-separated integers and inclusive `a..b` ranges.
pub fn parse_usize_list(s: &str) -> Result<Vec<usize>, String> {
    let int = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("bad integer {t:?}"));
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        match item.split_once("..") {
            Some((a, b)) => {
                let (a, b) = (int(a)?, int(b)?);
                if b < a {
                    return Err(format!("bad range {item:?}"));
                }
                out.extend(a..=b);
            }
            None => out.push(int(item)?),
        }
    }
    if out.is_empty() {
        return Err("empty list".into());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reals() {
        assert_eq!(parse_f64_list("1, 0.5pi").unwrap(), vec![1.0, PI / 2.0]);
        assert_eq!(parse_f64_list("0.5:0.25:1").unwrap(), vec![0.5, 0.75, 1.0]);
        assert_eq!(parse_f64_list("0.5:0.01:2").unwrap().len(), 151);
        assert!(parse_f64_list("x").is_err());
        assert!(parse_f64_list("").is_err());
    }

    #[test]
    fn integers() {
        assert_eq!(parse_usize_list("1..3,8").unwrap(), vec![1, 2, 3, 8]);
        assert!(parse_usize_list("3..1").is_err());
        assert!(parse_usize_list("-1").is_err());
    }
}
