use std::collections::HashMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{AggregationTask, Domain, Population, Prior, User};

/// Latitude/longitude rectangle split into a `rows x cols` grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_lat: f64,
    pub max_lat: f64,
    pub min_lon: f64,
    pub max_lon: f64,
}

/// How one CSV row becomes a domain index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IngestMode {
    /// `1` when the column value exceeds `threshold`, else `0`.
    BinarizeThreshold { column: String, threshold: f64 },
    /// Cell `row * cols + col` of the grid; row by latitude, column by
    /// longitude. Points on the upper edges fall in the last cell.
    GridMap { lat_column: String, lon_column: String, rows: usize, cols: usize, bbox: BoundingBox },
    /// Distinct labels of the column, sorted numerically when every label is
    /// a number and lexically otherwise.
    Categorical { column: String },
}

/// Where user priors come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorSource {
    /// One row per user; every user gets the empirical distribution of all
    /// rows.
    GlobalFromData,
    /// Rows are events keyed by `user_column`. A user's prior is the
    /// empirical distribution of their events and their true value is the
    /// last event in file order.
    PerUserFromHistory { user_column: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSpec {
    pub mode: IngestMode,
    pub prior_source: PriorSource,
}

impl IngestSpec {
    pub fn validate(&self) -> Result<()> {
        match &self.mode {
            IngestMode::BinarizeThreshold { threshold, .. } if !threshold.is_finite() => {
                Err(Error::InvalidConfig(format!("threshold {threshold} is not finite")))
            }
            IngestMode::GridMap { rows, cols, bbox, .. } => {
                if rows * cols < 2 {
                    return Err(Error::InvalidConfig(format!("grid {rows}x{cols} has fewer than 2 cells")));
                }
                if !(bbox.min_lat < bbox.max_lat && bbox.min_lon < bbox.max_lon) {
                    return Err(Error::InvalidConfig("bounding box is empty".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// An ingested population with the recorded value of every user.
#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub population: Population,
    /// Domain index of each user's true value.
    pub inputs: Vec<usize>,
    /// Source label of each domain value (the category name, grid cell or
    /// binarized bit).
    pub labels: Vec<String>,
}

impl Ingested {
    /// The task statistic on the recorded values.
    pub fn truth(&self, task: &AggregationTask) -> Result<Vec<f64>> {
        task.validate(&self.population)?;
        Ok(task.evaluate(self.population.domain(), &self.inputs))
    }
}

pub fn ingest(path: &Path, spec: &IngestSpec) -> Result<Ingested> {
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    ingest_reader(file, spec)
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers.iter().position(|h| h.trim() == name).ok_or_else(|| Error::MissingColumn(name.to_string()))
}

fn parse_f64(record: &csv::StringRecord, idx: usize, line: usize, name: &str) -> Result<f64> {
    let raw = record.get(idx).unwrap_or("").trim();
    raw.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::ParseError { line, message: format!("column {name}: {raw:?} is not a number") })
}

fn grid_cell(v: f64, lo: f64, hi: f64, cells: usize) -> Option<usize> {
    if !(lo..=hi).contains(&v) {
        return None;
    }
    Some((((v - lo) / (hi - lo) * cells as f64) as usize).min(cells - 1))
}

/// Reads a comma-separated file with a header row.
pub fn ingest_reader<R: Read>(reader: R, spec: &IngestSpec) -> Result<Ingested> {
    spec.validate()?;
    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = csv.headers().map_err(|e| csv_error(&e))?.clone();
    let user_col = match &spec.prior_source {
        PriorSource::PerUserFromHistory { user_column } => Some(column(&headers, user_column)?),
        PriorSource::GlobalFromData => None,
    };
    // raw per-row keys, mapped to indices once the domain is known
    enum Key {
        Index(usize),
        Label(String),
    }
    let mut keys = Vec::new();
    let mut owners = Vec::new();
    type Extractor = Box<dyn Fn(&csv::StringRecord, usize) -> Result<Key>>;
    let (d_fixed, extractor): (Option<usize>, Extractor) = match &spec.mode {
        IngestMode::BinarizeThreshold { column: name, threshold } => {
            let idx = column(&headers, name)?;
            let (name, t) = (name.clone(), *threshold);
            (Some(2), Box::new(move |r, line| Ok(Key::Index((parse_f64(r, idx, line, &name)? > t) as usize))))
        }
        IngestMode::GridMap { lat_column, lon_column, rows, cols, bbox } => {
            let (li, oi) = (column(&headers, lat_column)?, column(&headers, lon_column)?);
            let (lat_name, lon_name, rows, cols, b) = (lat_column.clone(), lon_column.clone(), *rows, *cols, *bbox);
            (
                Some(rows * cols),
                Box::new(move |r, line| {
                    let lat = parse_f64(r, li, line, &lat_name)?;
                    let lon = parse_f64(r, oi, line, &lon_name)?;
                    match (grid_cell(lat, b.min_lat, b.max_lat, rows), grid_cell(lon, b.min_lon, b.max_lon, cols)) {
                        (Some(i), Some(j)) => Ok(Key::Index(i * cols + j)),
                        _ => Err(Error::ParseError {
                            line,
                            message: format!("point ({lat}, {lon}) lies outside the bounding box"),
                        }),
                    }
                }),
            )
        }
        IngestMode::Categorical { column: name } => {
            let idx = column(&headers, name)?;
            let name = name.clone();
            (
                None,
                Box::new(move |r, line| {
                    let raw = r.get(idx).unwrap_or("").trim();
                    if raw.is_empty() {
                        return Err(Error::ParseError { line, message: format!("column {name} is empty") });
                    }
                    Ok(Key::Label(raw.to_string()))
                }),
            )
        }
    };
    for record in csv.records() {
        let record = record.map_err(|e| csv_error(&e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        keys.push(extractor(&record, line)?);
        if let Some(u) = user_col {
            owners.push(record.get(u).unwrap_or("").trim().to_string());
        }
    }
    if keys.is_empty() {
        return Err(Error::EmptyInput);
    }

    let (domain, labels, xs): (Domain, Vec<String>, Vec<usize>) = match d_fixed {
        Some(d) => {
            let xs = keys.iter().map(|k| if let Key::Index(i) = k { *i } else { unreachable!() }).collect();
            let labels = if d == 2 && matches!(spec.mode, IngestMode::BinarizeThreshold { .. }) {
                vec!["0".into(), "1".into()]
            } else {
                (0..d).map(|i| i.to_string()).collect()
            };
            (Domain::range(d)?, labels, xs)
        }
        None => {
            let mut distinct: Vec<String> = keys
                .iter()
                .map(|k| if let Key::Label(s) = k { s.clone() } else { unreachable!() })
                .collect();
            distinct.sort();
            distinct.dedup();
            let numeric: Option<Vec<f64>> = distinct.iter().map(|s| s.parse::<f64>().ok().filter(|v| v.is_finite())).collect();
            let (domain, labels) = match numeric {
                Some(mut vals) => {
                    let mut pairs: Vec<(f64, String)> = vals.drain(..).zip(distinct.iter().cloned()).collect();
                    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
                    let vals: Vec<f64> = pairs.iter().map(|p| p.0).collect();
                    (Domain::new(vals)?, pairs.into_iter().map(|p| p.1).collect::<Vec<_>>())
                }
                None => (Domain::range(distinct.len())?, distinct),
            };
            let index: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
            let xs = keys.iter().map(|k| if let Key::Label(s) = k { index[s.as_str()] } else { unreachable!() }).collect();
            (domain, labels, xs)
        }
    };
    let d = domain.len();

    let (users, inputs) = match &spec.prior_source {
        PriorSource::GlobalFromData => {
            let mut counts = vec![0.0; d];
            for &x in &xs {
                counts[x] += 1.0;
            }
            let prior = Prior::from_weights(&counts)?;
            let users = (0..xs.len()).map(|i| User { id: i.to_string(), prior: prior.clone() }).collect();
            (users, xs)
        }
        PriorSource::PerUserFromHistory { .. } => {
            let mut order: Vec<String> = Vec::new();
            let mut history: HashMap<String, (Vec<f64>, usize)> = HashMap::new();
            for (owner, &x) in owners.iter().zip(&xs) {
                let entry = history.entry(owner.clone()).or_insert_with(|| {
                    order.push(owner.clone());
                    (vec![0.0; d], x)
                });
                entry.0[x] += 1.0;
                entry.1 = x;
            }
            let mut users = Vec::with_capacity(order.len());
            let mut inputs = Vec::with_capacity(order.len());
            for id in order {
                let (counts, last) = &history[&id];
                users.push(User { prior: Prior::from_weights(counts)?, id });
                inputs.push(*last);
            }
            (users, inputs)
        }
    };
    Ok(Ingested { population: Population::new(domain, users)?, inputs, labels })
}

fn csv_error(e: &csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::ParseError { line, message: e.to_string() }
}
