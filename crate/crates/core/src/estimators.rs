//! MMSE (posterior-mean) estimation per user and per task, plus the two
//! prior-free baselines: the randomized-response count estimator and the
//! unary-encoding histogram estimator.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mechanisms::ldp_flip_probability;
use crate::types::{output_distribution, AggregationTask, Channel, Domain, Population, Prior, PrivacyBudget};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerUserPosterior {
    /// `Pr(X = a_m | Y = y)`.
    pub posterior: Vec<f64>,
    /// `E[X | Y = y]`.
    pub point_estimate: f64,
}

/// Bayes posterior of the input given output index `y`.
pub fn posterior(channel: &Channel, prior: &Prior, y: usize) -> Result<PerUserPosterior> {
    let lambda = output_distribution(channel, prior)?;
    if y >= lambda.len() {
        return Err(Error::DimensionMismatch(format!(
            "output index {y} for a channel with {} outputs",
            lambda.len()
        )));
    }
    posterior_with_marginal(channel, prior, &lambda, y)
}

fn posterior_with_marginal(channel: &Channel, prior: &Prior, lambda: &[f64], y: usize) -> Result<PerUserPosterior> {
    if lambda[y] <= 0.0 {
        return Err(Error::UnreachableOutput(y));
    }
    let mut post: Vec<f64> = prior
        .probs()
        .iter()
        .zip(channel.rows())
        .map(|(p, row)| p * row[y] / lambda[y])
        .collect();
    // absorb rounding so the posterior is exactly normalized
    let total: f64 = post.iter().sum();
    post.iter_mut().for_each(|v| *v /= total);
    let point_estimate = post
        .iter()
        .zip(channel.input_domain().values())
        .map(|(w, a)| w * a)
        .sum();
    Ok(PerUserPosterior {
        posterior: post,
        point_estimate,
    })
}

/// Posteriors for every output of one (channel, prior) pair, computed once
/// and then looked up per observation.
#[derive(Debug, Clone)]
pub struct PosteriorTable {
    entries: Vec<Option<PerUserPosterior>>,
}

impl PosteriorTable {
    pub fn new(channel: &Channel, prior: &Prior) -> Result<Self> {
        let lambda = output_distribution(channel, prior)?;
        let entries = (0..lambda.len())
            .map(|y| posterior_with_marginal(channel, prior, &lambda, y).ok())
            .collect();
        Ok(PosteriorTable { entries })
    }

    pub fn get(&self, y: usize) -> Result<&PerUserPosterior> {
        self.entries
            .get(y)
            .ok_or_else(|| Error::DimensionMismatch(format!("output index {y} out of range")))?
            .as_ref()
            .ok_or(Error::UnreachableOutput(y))
    }

    pub fn outputs(&self) -> usize {
        self.entries.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum AggregateEstimate {
    Scalar(f64),
    Histogram(Vec<f64>),
}

impl AggregateEstimate {
    pub fn as_vec(&self) -> Vec<f64> {
        match self {
            AggregateEstimate::Scalar(v) => vec![*v],
            AggregateEstimate::Histogram(h) => h.clone(),
        }
    }
}

/// Accumulates per-user contributions `E[f_i(X_i) | Y_i]` into a task
/// estimate. Users are added in a fixed order so the reduction is
/// reproducible bit for bit.
#[derive(Debug, Clone)]
pub struct TaskAccumulator<'a> {
    task: &'a AggregationTask,
    target: usize,
    n: usize,
    sum: f64,
    hist: Vec<f64>,
}

impl<'a> TaskAccumulator<'a> {
    pub fn new(task: &'a AggregationTask, domain: &Domain, n: usize) -> Result<Self> {
        let target = match task {
            AggregationTask::Survey { target } => domain.index_of(*target)?,
            _ => 0,
        };
        let hist = match task {
            AggregationTask::Histogram => vec![0.0; domain.len()],
            _ => Vec::new(),
        };
        Ok(TaskAccumulator {
            task,
            target,
            n,
            sum: 0.0,
            hist,
        })
    }

    pub fn add(&mut self, user: usize, post: &PerUserPosterior) {
        match self.task {
            AggregationTask::Survey { .. } => self.sum += post.posterior[self.target],
            AggregationTask::Summation => self.sum += post.point_estimate,
            AggregationTask::WeightedSum {
                coefficients,
                offsets,
            } => self.sum += coefficients[user] * post.point_estimate + offsets[user],
            AggregationTask::Histogram => {
                for (h, w) in self.hist.iter_mut().zip(&post.posterior) {
                    *h += w;
                }
            }
        }
    }

    pub fn finish(self) -> AggregateEstimate {
        match self.task {
            AggregationTask::Histogram => AggregateEstimate::Histogram(self.hist),
            AggregationTask::Summation => AggregateEstimate::Scalar(self.sum / self.n as f64),
            _ => AggregateEstimate::Scalar(self.sum),
        }
    }
}

/// MMSE estimate of the task statistic from per-user output indices.
pub fn estimate(
    task: &AggregationTask,
    population: &Population,
    channels: &[Channel],
    observations: &[usize],
) -> Result<AggregateEstimate> {
    task.validate(population)?;
    let n = population.len();
    if channels.len() != n || observations.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} users but {} channels and {} observations",
            channels.len(),
            observations.len()
        )));
    }
    let mut acc = TaskAccumulator::new(task, population.domain(), n)?;
    for (i, ((user, channel), &y)) in population.users().iter().zip(channels).zip(observations).enumerate() {
        if channel.input_domain() != population.domain() {
            return Err(Error::DimensionMismatch(format!(
                "channel of user {} is over a different input domain",
                user.id
            )));
        }
        if y >= channel.outputs() {
            return Err(Error::DimensionMismatch(format!(
                "observation {y} of user {} exceeds {} outputs",
                user.id,
                channel.outputs()
            )));
        }
        let post = posterior(channel, &user.prior, y)?;
        acc.add(i, &post);
    }
    Ok(acc.finish())
}

/// Prior-free unbiased count estimate `(sum Y_i - N p) / (1 - 2p)` under
/// symmetric randomized response with flip probability `p = 1/(e^eps + 1)`.
///
/// Not clipped to `[0, N]`.
pub fn context_free_estimate(observations: &[usize], eps: PrivacyBudget) -> Result<f64> {
    if eps.epsilon() == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    let mut ones = 0usize;
    for &y in observations {
        match y {
            0 => {}
            1 => ones += 1,
            other => {
                return Err(Error::DimensionMismatch(format!(
                    "context-free estimator needs binary observations, got {other}"
                )))
            }
        }
    }
    Ok(context_free_from_count(ones as f64, observations.len() as f64, eps))
}

pub(crate) fn context_free_from_count(ones: f64, n: f64, eps: PrivacyBudget) -> f64 {
    let p = ldp_flip_probability(eps);
    (ones - n * p) / (1.0 - 2.0 * p)
}

/// Unbiased per-bucket counts from unary-encoded reports.
pub fn oue_histogram_estimate(reports: &[Vec<bool>], d: usize, eps: PrivacyBudget) -> Result<Vec<f64>> {
    let mut counts = vec![0u64; d];
    for (i, r) in reports.iter().enumerate() {
        if r.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "report {i} has {} bits, expected {d}",
                r.len()
            )));
        }
        for (c, &b) in counts.iter_mut().zip(r) {
            *c += b as u64;
        }
    }
    oue_estimate_from_counts(&counts, reports.len(), eps)
}

/// Same as [`oue_histogram_estimate`] from aggregated bit counts.
pub fn oue_estimate_from_counts(counts: &[u64], n: usize, eps: PrivacyBudget) -> Result<Vec<f64>> {
    if eps.epsilon() == 0.0 {
        return Err(Error::ZeroEpsilon);
    }
    let f = ldp_flip_probability(eps);
    let n = n as f64;
    Ok(counts.iter().map(|&c| (c as f64 - n * f) / (0.5 - f)).collect())
}
