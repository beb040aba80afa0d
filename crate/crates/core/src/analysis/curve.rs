use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mse_context_free, mse_histogram, mse_linear, mse_mimo};
use crate::error::{Error, Result};
use crate::mechanisms::{derive, Mechanism, MechanismFamily};
use crate::types::{AggregationTask, Domain, Population, Prior, PrivacyBudget};

/// A mechanism family run at a fraction of the nominal budget, e.g. the
/// `eps/2` variants compared against full-budget baselines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct CurveFamily {
    pub family: MechanismFamily,
    pub budget_scale: f64,
}

impl CurveFamily {
    pub fn new(family: MechanismFamily, budget_scale: f64) -> Result<Self> {
        if !(budget_scale.is_finite() && budget_scale > 0.0) {
            return Err(Error::InvalidConfig(format!("budget scale {budget_scale} must be positive")));
        }
        Ok(CurveFamily { family, budget_scale })
    }

    pub fn budget(&self, eps: PrivacyBudget) -> Result<PrivacyBudget> {
        eps.scaled(self.budget_scale)
    }

    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl From<MechanismFamily> for CurveFamily {
    fn from(family: MechanismFamily) -> Self {
        CurveFamily { family, budget_scale: 1.0 }
    }
}

impl fmt::Display for CurveFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.budget_scale == 1.0 {
            write!(f, "{}", self.family)
        } else {
            write!(f, "{}@{}", self.family, self.budget_scale)
        }
    }
}

impl FromStr for CurveFamily {
    type Err = Error;

    /// Parses `name` or `name@scale`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once('@') {
            None => Ok(s.parse::<MechanismFamily>()?.into()),
            Some((name, scale)) => {
                let scale: f64 = scale
                    .parse()
                    .map_err(|_| Error::InvalidConfig(format!("bad budget scale in {s:?}")))?;
                CurveFamily::new(name.parse()?, scale)
            }
        }
    }
}

impl From<CurveFamily> for String {
    fn from(c: CurveFamily) -> Self {
        c.to_string()
    }
}

impl TryFrom<String> for CurveFamily {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub epsilon: f64,
    pub family: String,
    /// `sqrt(E / N)`.
    pub metric: f64,
    /// Monte-Carlo trial count; 0 for closed-form rows.
    pub trials: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveMetadata {
    pub population: String,
    pub task: String,
    pub trials: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffCurve {
    pub rows: Vec<CurveRow>,
    pub metadata: CurveMetadata,
}

impl TradeoffCurve {
    pub fn new(mut rows: Vec<CurveRow>, metadata: CurveMetadata) -> Self {
        rows.sort_by(|a, b| {
            a.family
                .cmp(&b.family)
                .then(a.epsilon.total_cmp(&b.epsilon))
                .then(a.trials.cmp(&b.trials))
        });
        TradeoffCurve { rows, metadata }
    }

    /// Combines two curves over the same population and task.
    pub fn merge(self, other: TradeoffCurve) -> TradeoffCurve {
        let trials = self.metadata.trials.max(other.metadata.trials);
        let mut rows = self.rows;
        rows.extend(other.rows);
        TradeoffCurve::new(rows, CurveMetadata { trials, ..self.metadata })
    }

    /// Metric for `family` at `epsilon` from rows with the given trial count.
    pub fn metric(&self, family: &str, epsilon: f64, trials: u64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.family == family && r.trials == trials && (r.epsilon - epsilon).abs() < 1e-12)
            .map(|r| r.metric)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epsilon", "family", "metric", "trials"])
            .map_err(|e| Error::Io(e.to_string()))?;
        for r in &self.rows {
            w.write_record([r.epsilon.to_string(), r.family.clone(), r.metric.to_string(), r.trials.to_string()])
                .map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("curve serializes")
    }
}

pub(crate) fn describe_population(population: &Population) -> String {
    let first = population.users()[0].prior.probs();
    let global = population.priors().all(|p| p.probs() == first);
    format!(
        "n={} d={} priors={}",
        population.len(),
        population.domain().len(),
        if global { "global" } else { "local" }
    )
}

fn unsupported(family: MechanismFamily, task: &AggregationTask) -> Error {
    Error::UnsupportedPairing { family: family.to_string(), task: task.name().to_string() }
}

/// Per-user error of the task's own statistic before any per-user scaling:
/// the indicator-count error for surveys, the value error for sums and the
/// summed coordinate error for histograms.
fn base_mse(family: MechanismFamily, task: &AggregationTask, domain: &Domain, prior: &Prior, eps: PrivacyBudget) -> Result<f64> {
    let mechanism = derive(family, domain, prior, eps)?;
    match (&mechanism, family) {
        (Mechanism::Unary(oue), _) => match task {
            AggregationTask::Histogram => Ok(oue.per_user_mse()),
            _ => Err(unsupported(family, task)),
        },
        (Mechanism::Channel(_), MechanismFamily::SymmetricRr) => {
            // prior-free debiasing: every user contributes p(1-p)/(1-2p)^2
            // on the 0/1 scale regardless of their prior
            let v = mse_context_free(eps)?;
            let spread = domain.value(1) - domain.value(0);
            Ok(match task {
                AggregationTask::Survey { .. } => v,
                AggregationTask::Summation | AggregationTask::WeightedSum { .. } => spread * spread * v,
                AggregationTask::Histogram => 2.0 * v,
            })
        }
        (Mechanism::Channel(ch), _) => match task {
            AggregationTask::Survey { target } => {
                let t = domain.index_of(*target)?;
                let w: Vec<f64> = (0..domain.len()).map(|m| if m == t { 1.0 } else { 0.0 }).collect();
                mse_linear(ch, prior, &w)
            }
            AggregationTask::Summation | AggregationTask::WeightedSum { .. } => mse_mimo(ch, prior, domain),
            AggregationTask::Histogram => mse_histogram(ch, prior),
        },
    }
}

fn user_scale(task: &AggregationTask, user: usize, n: usize) -> f64 {
    match task {
        AggregationTask::Summation => 1.0 / (n as f64 * n as f64),
        AggregationTask::WeightedSum { coefficients, .. } => coefficients[user] * coefficients[user],
        _ => 1.0,
    }
}

/// Closed-form contribution of `user` to the aggregate MSE.
pub fn per_user_mse(
    family: CurveFamily,
    task: &AggregationTask,
    population: &Population,
    user: usize,
    eps: PrivacyBudget,
) -> Result<f64> {
    let prior = &population.users()[user].prior;
    let base = base_mse(family.family, task, population.domain(), prior, family.budget(eps)?)?;
    Ok(base * user_scale(task, user, population.len()))
}

/// Aggregate closed-form MSE: independent users add (users with identical
/// priors share one evaluation).
pub(crate) fn aggregate_mse(
    family: CurveFamily,
    task: &AggregationTask,
    population: &Population,
    eps: PrivacyBudget,
) -> Result<f64> {
    task.validate(population)?;
    let budget = family.budget(eps)?;
    let mut memo: HashMap<Vec<u64>, f64> = HashMap::new();
    let mut total = 0.0;
    for (i, user) in population.users().iter().enumerate() {
        let key: Vec<u64> = user.prior.probs().iter().map(|p| p.to_bits()).collect();
        let base = match memo.get(&key) {
            Some(&v) => v,
            None => {
                let v = base_mse(family.family, task, population.domain(), &user.prior, budget)?;
                memo.insert(key, v);
                v
            }
        };
        total += base * user_scale(task, i, population.len());
    }
    Ok(total)
}

/// Closed-form `sqrt(E / N)` of one family over a budget grid.
pub fn tradeoff_curve(
    family: impl Into<CurveFamily>,
    population: &Population,
    task: &AggregationTask,
    eps_grid: &[f64],
) -> Result<TradeoffCurve> {
    let family = family.into();
    if eps_grid.is_empty() {
        return Err(Error::InvalidConfig("empty budget grid".into()));
    }
    let budgets = eps_grid.iter().map(|&e| PrivacyBudget::new(e)).collect::<Result<Vec<_>>>()?;
    let n = population.len() as f64;
    let rows = budgets
        .par_iter()
        .map(|&eps| {
            let total = aggregate_mse(family, task, population, eps)?;
            Ok(CurveRow {
                epsilon: eps.epsilon(),
                family: family.label(),
                metric: (total / n).sqrt(),
                trials: 0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TradeoffCurve::new(
        rows,
        CurveMetadata { population: describe_population(population), task: task.name().to_string(), trials: 0 },
    ))
}
