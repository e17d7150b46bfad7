//! `--grid` and `--sweep` value lists.

use crate::CliError;

/// `lo:hi:step` (inclusive of `hi` when it lands on the grid) or a comma
/// list.
pub fn parse_values(spec: &str) -> Result<Vec<String>, CliError> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Err(CliError::Validation("empty value list".into()));
    }
    let parts: Vec<&str> = spec.split(':').map(str::trim).collect();
    match parts.as_slice() {
        [_] => {
            let items: Vec<String> = spec.split(',').map(|s| s.trim().to_string()).collect();
            if items.iter().any(String::is_empty) {
                return Err(CliError::Validation(format!("empty entry in list {spec:?}")));
            }
            Ok(items)
        }
        [lo, hi, step] => {
            let num = |s: &str| {
                s.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| CliError::Validation(format!("bad number {s:?} in range {spec:?}")))
            };
            let (lo, hi, step) = (num(lo)?, num(hi)?, num(step)?);
            if step <= 0.0 {
                return Err(CliError::Validation(format!("range {spec:?}: step must be positive")));
            }
            if hi < lo {
                return Err(CliError::Validation(format!("range {spec:?} is empty")));
            }
            let n = ((hi - lo) / step + 1e-9).floor() as u64 + 1;
            if n > 10_000_000 {
                return Err(CliError::Validation(format!("range {spec:?} has {n} points")));
            }
            // lo + i * step avoids accumulated drift; round off representation noise
            Ok((0..n)
                .map(|i| {
                    let x = lo + i as f64 * step;
                    format!("{}", (x * 1e12).round() / 1e12)
                })
                .collect())
        }
        _ => Err(CliError::Validation(format!("expected lo:hi:step or a comma list, got {spec:?}"))),
    }
}

pub fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    parse_values(spec)?
        .iter()
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| CliError::Validation(format!("bad grid value {s:?}")))
        })
        .collect()
}

/// `field=values`.
pub fn parse_sweep(spec: &str) -> Result<(String, Vec<String>), CliError> {
    let (field, values) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Validation(format!("expected field=values, got {spec:?}")))?;
    let field = field.trim();
    if !crate::config::KEYS.contains(&field) {
        return Err(CliError::Validation(format!("unknown sweep field {field:?}")));
    }
    Ok((field.to_string(), parse_values(values)?))
}
