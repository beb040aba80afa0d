//! Parsers for command-line values and channel files.

use std::fs;
use std::path::Path;

use lipagg::{AggregationTask, Channel, Domain, Error, Prior, Result};

/// Comma-separated reals.
pub fn parse_values(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::InvalidConfig(format!("{t:?} is not a number")))
        })
        .collect()
}

/// A probability vector, or a single `p1` for a binary prior.
pub fn parse_prior(s: &str) -> Result<Prior> {
    let v = parse_values(s)?;
    if v.len() == 1 {
        Prior::binary(v[0])
    } else {
        Prior::new(v)
    }
}

/// `start:stop:step` (inclusive of `stop`) or a comma list.
pub fn parse_eps_grid(s: &str) -> Result<Vec<f64>> {
    let grid = if s.contains(':') {
        let parts = s.split(':').map(|t| t.replace(',', "")).collect::<Vec<_>>().join(",");
        let v = parse_values(&parts)?;
        let [start, stop, step] = v[..] else {
            return Err(Error::InvalidConfig(format!("budget grid {s:?} is not start:stop:step")));
        };
        if step.is_nan() || step <= 0.0 || stop < start {
            return Err(Error::InvalidConfig(format!("budget grid {s:?} is empty")));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize;
        // rounding keeps 0.1-style steps from printing as 0.30000000000000004
        (0..=count).map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12).collect()
    } else {
        parse_values(s)?
    };
    if let Some(bad) = grid.iter().find(|e| **e < 0.0) {
        return Err(Error::InvalidBudget(*bad));
    }
    Ok(grid)
}

/// `survey[:target]`, `summation` or `histogram`.
pub fn parse_task(s: &str) -> Result<AggregationTask> {
    let (name, arg) = match s.split_once(':') {
        Some((n, a)) => (n, Some(a)),
        None => (s, None),
    };
    match (name, arg) {
        ("survey", None) => Ok(AggregationTask::Survey { target: 1.0 }),
        ("survey", Some(t)) => Ok(AggregationTask::Survey { target: parse_values(t)?[0] }),
        ("summation", None) => Ok(AggregationTask::Summation),
        ("histogram", None) => Ok(AggregationTask::Histogram),
        _ => Err(Error::InvalidTask(format!(
            "{s:?}: expected survey[:target], summation or histogram (weighted sums need a config file)"
        ))),
    }
}

/// Reads a channel from JSON (a bare channel object or the output of
/// `mechanism derive`) or CSV rows. A CSV header row is skipped; when it
/// starts with `input`, the first column holds input values and the header
/// lists output values.
pub fn read_channel(path: &Path) -> Result<Channel> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    if text.trim_start().starts_with('{') {
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::ParseError { line: e.line(), message: e.to_string() })?;
        let inner = value.get("channel").cloned().unwrap_or(value);
        return serde_json::from_value(inner).map_err(|e| Error::ParseError { line: 0, message: e.to_string() });
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
    let mut records = Vec::new();
    for r in reader.records() {
        let r = r.map_err(|e| Error::ParseError { line: e.position().map_or(0, |p| p.line() as usize), message: e.to_string() })?;
        records.push(r.iter().map(|f| f.trim().to_string()).collect::<Vec<_>>());
    }
    let Some(first) = records.first() else {
        return Err(Error::EmptyInput);
    };
    let has_header = first.iter().any(|f| f.parse::<f64>().is_err());
    let labelled = has_header && first[0] == "input";
    let body = if has_header { &records[1..] } else { &records[..] };
    if body.is_empty() {
        return Err(Error::EmptyInput);
    }
    let skip = labelled as usize;
    let mut rows = Vec::with_capacity(body.len());
    let mut inputs = Vec::with_capacity(body.len());
    for (i, rec) in body.iter().enumerate() {
        let line = i + 1 + has_header as usize;
        let parse = |f: &String| {
            f.parse::<f64>().map_err(|_| Error::ParseError { line, message: format!("{f:?} is not a number") })
        };
        if labelled {
            inputs.push(parse(&rec[0])?);
        }
        rows.push(rec[skip..].iter().map(parse).collect::<Result<Vec<_>>>()?);
    }
    let width = rows[0].len();
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::DimensionMismatch("channel rows have different lengths".into()));
    }
    let (input_domain, output_domain) = if labelled {
        let outs = first[1..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| Error::ParseError { line: 1, message: format!("{f:?} is not a value") }))
            .collect::<Result<Vec<_>>>()?;
        (Domain::new(inputs)?, Domain::new(outs)?)
    } else {
        (Domain::range(rows.len())?, Domain::range(width)?)
    };
    Channel::new(rows, input_domain, output_domain)
}
