//! Helpers behind the `robustfl` binary: vector CSV input, output
//! formatting and flag parsing.

use std::path::Path;

use robustfl_core::{Params, PreAggregatorSpec, VectorSet};
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or unreadable inputs.
    #[error("{0}")]
    Usage(String),
    /// Valid request that could not be carried out.
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Failure(_) => EXIT_FAILURE,
        }
    }
}

/// One vector per non-blank line, comma-separated decimals.
pub fn parse_vectors(text: &str) -> Result<VectorSet<f64>, CliError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|c| {
                let c = c.trim();
                match c.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    Ok(_) => Err(CliError::Usage(format!("line {lineno}: non-finite value {c:?}"))),
                    Err(_) => Err(CliError::Usage(format!("line {lineno}: not a number: {c:?}"))),
                }
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(CliError::Usage(format!(
                    "line {lineno}: {} values, expected {}",
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Usage("input holds no vectors".into()));
    }
    VectorSet::new(rows).map_err(|e| CliError::Usage(e.to_string()))
}

pub fn read_vectors(path: &Path) -> Result<VectorSet<f64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    parse_vectors(&text)
}

/// Shortest decimal form that parses back to the same value; `-0`
/// prints as `0`.
pub fn format_vector(v: &[f64]) -> String {
    v.iter()
        .map(|&x| if x == 0.0 { "0".to_string() } else { x.to_string() })
        .collect::<Vec<_>>()
        .join(",")
}

/// `key=value` into a parameter map.
pub fn parse_params<'a>(items: impl IntoIterator<Item = &'a str>) -> Result<Params, CliError> {
    let mut params = Params::new();
    for item in items {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("expected key=value, got {item:?}")))?;
        let value: f64 = v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{k}: not a number: {v:?}")))?;
        params.insert(k.trim().to_string(), value);
    }
    Ok(params)
}

/// `NAME` or `NAME:key=value[,key=value]`.
pub fn parse_pre(arg: &str, f: usize) -> Result<PreAggregatorSpec, CliError> {
    let (name, rest) = arg.split_once(':').unwrap_or((arg, ""));
    let params = parse_params(rest.split(',').filter(|s| !s.is_empty()))?;
    PreAggregatorSpec::parse(name, f, params).map_err(|e| CliError::Usage(e.to_string()))
}
