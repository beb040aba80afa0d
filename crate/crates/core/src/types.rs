//! Domain types shared by every other module: finite domains, priors,
//! perturbation channels, user populations and aggregation tasks.
//!
//! All of them validate on construction and are immutable afterwards.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for probability-vector and row-sum checks.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Ordered set of distinct real values `a_1..a_d`, `d >= 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Domain {
    values: Vec<f64>,
}

impl Domain {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidDomain(format!(
                "need at least 2 values, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidDomain(format!("non-finite value {v}")));
        }
        for (i, a) in values.iter().enumerate() {
            if values[..i].contains(a) {
                return Err(Error::InvalidDomain(format!("duplicate value {a}")));
            }
        }
        Ok(Domain { values })
    }

    /// `{0, 1}`.
    pub fn binary() -> Self {
        Domain {
            values: vec![0.0, 1.0],
        }
    }

    /// `{0, 1, .., d-1}`.
    pub fn range(d: usize) -> Result<Self> {
        Domain::new((0..d).map(|v| v as f64).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, index: usize) -> f64 {
        self.values[index]
    }

    pub fn index_of(&self, value: f64) -> Result<usize> {
        self.values
            .iter()
            .position(|&v| v == value)
            .ok_or(Error::ValueNotInDomain(value))
    }
}

impl TryFrom<Vec<f64>> for Domain {
    type Error = Error;
    fn try_from(values: Vec<f64>) -> Result<Self> {
        Domain::new(values)
    }
}

impl From<Domain> for Vec<f64> {
    fn from(d: Domain) -> Self {
        d.values
    }
}

fn check_probability_vector(p: &[f64]) -> std::result::Result<(), String> {
    if let Some((m, v)) = p
        .iter()
        .enumerate()
        .find(|(_, v)| !(0.0..=1.0).contains(*v))
    {
        return Err(format!("entry {m} = {v} outside [0, 1]"));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(format!("entries sum to {sum}"));
    }
    Ok(())
}

/// Probability vector `p[m] = Pr(X = a_m)`. Zero entries are allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Prior {
    p: Vec<f64>,
}

impl Prior {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::InvalidPrior("empty".into()));
        }
        check_probability_vector(&p).map_err(Error::InvalidPrior)?;
        Ok(Prior { p })
    }

    /// Normalizes a nonnegative weight vector into a prior.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if total.is_nan() || total <= 0.0 || weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidPrior(
                "weights must be nonnegative with positive sum".into(),
            ));
        }
        Prior::new(weights.iter().map(|w| w / total).collect())
    }

    /// Binary prior `(1 - p1, p1)` over `{0, 1}`.
    pub fn binary(p1: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p1) {
            return Err(Error::InvalidPrior(format!("p1 = {p1} outside [0, 1]")));
        }
        Ok(Prior {
            p: vec![1.0 - p1, p1],
        })
    }

    pub fn uniform(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidPrior("empty".into()));
        }
        Ok(Prior {
            p: vec![1.0 / d as f64; d],
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    /// `Pr(X = 1)` for binary priors (the last entry in general).
    pub fn p1(&self) -> f64 {
        self.p[self.p.len() - 1]
    }

    pub fn mean(&self, domain: &Domain) -> f64 {
        self.p.iter().zip(domain.values()).map(|(p, a)| p * a).sum()
    }

    pub fn variance(&self, domain: &Domain) -> f64 {
        let mean = self.mean(domain);
        let second: f64 = self
            .p
            .iter()
            .zip(domain.values())
            .map(|(p, a)| p * a * a)
            .sum();
        (second - mean * mean).max(0.0)
    }

    /// Indices with strictly positive mass.
    pub fn support(&self) -> Vec<usize> {
        (0..self.p.len()).filter(|&m| self.p[m] > 0.0).collect()
    }
}

impl TryFrom<Vec<f64>> for Prior {
    type Error = Error;
    fn try_from(p: Vec<f64>) -> Result<Self> {
        Prior::new(p)
    }
}

impl From<Prior> for Vec<f64> {
    fn from(p: Prior) -> Self {
        p.p
    }
}

/// Checks that `rows` is a row-stochastic matrix.
///
/// Reports the first offending row: an entry outside `[0, 1]` takes
/// precedence over a row-sum mismatch.
pub fn validate_channel(rows: &[Vec<f64>]) -> Result<()> {
    let width = rows.first().map(Vec::len).unwrap_or(0);
    if rows.is_empty() || width == 0 {
        return Err(Error::DimensionMismatch("channel has no entries".into()));
    }
    for (row, r) in rows.iter().enumerate() {
        if r.len() != width {
            return Err(Error::DimensionMismatch(format!(
                "row {row} has {} columns, expected {width}",
                r.len()
            )));
        }
        if r.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::NegativeEntry { row });
        }
        let sum: f64 = r.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::RowSumMismatch { row, sum });
        }
    }
    Ok(())
}

#[derive(Deserialize)]
struct ChannelRepr {
    input_domain: Domain,
    output_domain: Domain,
    rows: Vec<Vec<f64>>,
}

/// Row-stochastic perturbation matrix, `q[m][k] = Pr(Y = b_k | X = a_m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChannelRepr")]
pub struct Channel {
    input_domain: Domain,
    output_domain: Domain,
    rows: Vec<Vec<f64>>,
}

impl TryFrom<ChannelRepr> for Channel {
    type Error = Error;
    fn try_from(r: ChannelRepr) -> Result<Self> {
        Channel::new(r.rows, r.input_domain, r.output_domain)
    }
}

impl Channel {
    pub fn new(rows: Vec<Vec<f64>>, input_domain: Domain, output_domain: Domain) -> Result<Self> {
        validate_channel(&rows)?;
        if rows.len() != input_domain.len() || rows[0].len() != output_domain.len() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix for domains of size {} and {}",
                rows.len(),
                rows[0].len(),
                input_domain.len(),
                output_domain.len()
            )));
        }
        Ok(Channel {
            input_domain,
            output_domain,
            rows,
        })
    }

    /// Square channel over a single domain.
    pub fn square(rows: Vec<Vec<f64>>, domain: Domain) -> Result<Self> {
        Channel::new(rows, domain.clone(), domain)
    }

    /// Clamps entries to `[0, 1]` and rescales each row to sum to one before
    /// validating. Used after closed-form construction.
    pub fn renormalized(mut rows: Vec<Vec<f64>>, input_domain: Domain, output_domain: Domain) -> Result<Self> {
        for r in rows.iter_mut() {
            for v in r.iter_mut() {
                *v = v.clamp(0.0, 1.0);
            }
            let s: f64 = r.iter().sum();
            if s > 0.0 {
                for v in r.iter_mut() {
                    *v /= s;
                }
            }
        }
        Channel::new(rows, input_domain, output_domain)
    }

    pub fn identity(domain: Domain) -> Self {
        let d = domain.len();
        let rows = (0..d)
            .map(|m| (0..d).map(|k| if m == k { 1.0 } else { 0.0 }).collect())
            .collect();
        Channel {
            input_domain: domain.clone(),
            output_domain: domain,
            rows,
        }
    }

    /// Every row equal to `row`; the output carries no information.
    pub fn constant(input_domain: Domain, output_domain: Domain, row: &[f64]) -> Result<Self> {
        Channel::new(vec![row.to_vec(); input_domain.len()], input_domain, output_domain)
    }

    /// Binary channel from the two flip probabilities
    /// `q0 = Pr(Y=1 | X=0)` and `q1 = Pr(Y=0 | X=1)`.
    pub fn binary(q0: f64, q1: f64) -> Result<Self> {
        Channel::square(vec![vec![1.0 - q0, q0], vec![q1, 1.0 - q1]], Domain::binary())
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.rows[m]
    }

    pub fn get(&self, m: usize, k: usize) -> f64 {
        self.rows[m][k]
    }

    pub fn input_domain(&self) -> &Domain {
        &self.input_domain
    }

    pub fn output_domain(&self) -> &Domain {
        &self.output_domain
    }

    pub fn inputs(&self) -> usize {
        self.rows.len()
    }

    pub fn outputs(&self) -> usize {
        self.rows[0].len()
    }

    pub fn is_square(&self) -> bool {
        self.inputs() == self.outputs()
    }

    /// `q0 = Pr(Y=1 | X=0)` of a binary channel.
    pub fn q0(&self) -> f64 {
        self.rows[0][1]
    }

    /// `q1 = Pr(Y=0 | X=1)` of a binary channel.
    pub fn q1(&self) -> f64 {
        self.rows[1][0]
    }

    pub fn check_prior(&self, prior: &Prior) -> Result<()> {
        if prior.len() != self.inputs() {
            return Err(Error::DimensionMismatch(format!(
                "prior of length {} for a channel with {} inputs",
                prior.len(),
                self.inputs()
            )));
        }
        Ok(())
    }
}

/// Marginal of the published value: `lambda[k] = sum_m p[m] q[m][k]`.
pub fn output_distribution(channel: &Channel, prior: &Prior) -> Result<Vec<f64>> {
    channel.check_prior(prior)?;
    let mut lambda = vec![0.0; channel.outputs()];
    for (p, row) in prior.probs().iter().zip(channel.rows()) {
        for (l, q) in lambda.iter_mut().zip(row) {
            *l += p * q;
        }
    }
    Ok(lambda)
}

/// Nonnegative privacy budget on the natural-log scale.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct PrivacyBudget(f64);

impl PrivacyBudget {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !epsilon.is_finite() || epsilon < 0.0 {
            return Err(Error::InvalidBudget(epsilon));
        }
        Ok(PrivacyBudget(epsilon))
    }

    pub fn epsilon(self) -> f64 {
        self.0
    }

    /// `e^epsilon`.
    pub fn exp(self) -> f64 {
        self.0.exp()
    }

    pub fn scaled(self, factor: f64) -> Result<Self> {
        PrivacyBudget::new(self.0 * factor)
    }
}

impl TryFrom<f64> for PrivacyBudget {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        PrivacyBudget::new(v)
    }
}

impl From<PrivacyBudget> for f64 {
    fn from(b: PrivacyBudget) -> Self {
        b.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct User {
    pub id: String,
    pub prior: Prior,
}

/// A set of `N >= 1` independent users sharing a value domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    domain: Domain,
    users: Vec<User>,
}

impl Population {
    pub fn new(domain: Domain, users: Vec<User>) -> Result<Self> {
        if users.is_empty() {
            return Err(Error::InvalidConfig("population needs at least one user".into()));
        }
        if let Some(u) = users.iter().find(|u| u.prior.len() != domain.len()) {
            return Err(Error::DimensionMismatch(format!(
                "user {} has a prior of length {} over a domain of size {}",
                u.id,
                u.prior.len(),
                domain.len()
            )));
        }
        Ok(Population { domain, users })
    }

    /// `n` users sharing one prior, with ids `0..n`.
    pub fn global(domain: Domain, prior: Prior, n: usize) -> Result<Self> {
        let users = (0..n)
            .map(|i| User {
                id: i.to_string(),
                prior: prior.clone(),
            })
            .collect();
        Population::new(domain, users)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn users(&self) -> &[User] {
        &self.users
    }

    pub fn priors(&self) -> impl Iterator<Item = &Prior> {
        self.users.iter().map(|u| &u.prior)
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }
}

/// Which statistic `S = f(X_1..X_N)` the curator estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AggregationTask {
    /// Number of users holding `target`.
    Survey { target: f64 },
    /// Average value, `(1/N) sum_i X_i`.
    Summation,
    /// `sum_i (a_i X_i + b_i)`.
    WeightedSum {
        coefficients: Vec<f64>,
        offsets: Vec<f64>,
    },
    /// Per-category counts `S_k = sum_i 1{X_i = a_k}`.
    Histogram,
}

impl AggregationTask {
    pub fn validate(&self, population: &Population) -> Result<()> {
        match self {
            AggregationTask::Survey { target } => {
                population.domain().index_of(*target).map_err(|_| {
                    Error::InvalidTask(format!("survey target {target} is not in the domain"))
                })?;
            }
            AggregationTask::WeightedSum {
                coefficients,
                offsets,
            } => {
                let n = population.len();
                if coefficients.len() != n || offsets.len() != n {
                    return Err(Error::InvalidTask(format!(
                        "weighted sum needs {n} coefficients and offsets, got {} and {}",
                        coefficients.len(),
                        offsets.len()
                    )));
                }
            }
            AggregationTask::Summation | AggregationTask::Histogram => {}
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            AggregationTask::Survey { .. } => "survey",
            AggregationTask::Summation => "summation",
            AggregationTask::WeightedSum { .. } => "weighted_sum",
            AggregationTask::Histogram => "histogram",
        }
    }

    /// The value of the statistic on true input indices `xs`.
    pub fn evaluate(&self, domain: &Domain, xs: &[usize]) -> Vec<f64> {
        match self {
            AggregationTask::Survey { target } => {
                vec![xs.iter().filter(|&&x| domain.value(x) == *target).count() as f64]
            }
            AggregationTask::Summation => {
                let total: f64 = xs.iter().map(|&x| domain.value(x)).sum();
                vec![total / xs.len() as f64]
            }
            AggregationTask::WeightedSum {
                coefficients,
                offsets,
            } => {
                let total = xs
                    .iter()
                    .zip(coefficients.iter().zip(offsets))
                    .map(|(&x, (a, b))| a * domain.value(x) + b)
                    .sum();
                vec![total]
            }
            AggregationTask::Histogram => {
                let mut h = vec![0.0; domain.len()];
                for &x in xs {
                    h[x] += 1.0;
                }
                h
            }
        }
    }
}
