//! Centralized information privacy for a binary global-prior population.
//!
//! A trusted curator sees `S = sum_i X_i ~ Binomial(N, p1)` and publishes
//! `Y` drawn from a channel over `{0..N}`. The privacy constraint confines
//! every posterior mean `E[S | Y = y]` to the band
//! `[e^-eps N p1, N - e^-eps N (1 - p1)]`.

use serde::Serialize;

use crate::analysis::search::{Constraint, Problem, SearchConfig, Statistic};
use crate::error::{Error, Result};
use crate::mechanisms::opt_mimo_lip;
use crate::types::{output_distribution, Channel, Domain, Prior, PrivacyBudget};

/// Largest population the numeric search accepts.
pub const MAX_SEARCH_USERS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CipInstance {
    n_users: usize,
    p1: f64,
    eps: PrivacyBudget,
    s_prior: Vec<f64>,
}

impl CipInstance {
    pub fn new(n_users: usize, p1: f64, eps: PrivacyBudget) -> Result<Self> {
        if n_users == 0 {
            return Err(Error::InvalidConfig("CIP needs at least one user".into()));
        }
        if !(0.0..=1.0).contains(&p1) {
            return Err(Error::InvalidPrior(format!("p1 = {p1} outside [0, 1]")));
        }
        let s_prior = binomial_pmf(n_users, p1);
        Ok(CipInstance { n_users, p1, eps, s_prior })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn p1(&self) -> f64 {
        self.p1
    }

    pub fn eps(&self) -> PrivacyBudget {
        self.eps
    }

    /// `Pr(S = s)` for `s = 0..=N`.
    pub fn s_prior(&self) -> &[f64] {
        &self.s_prior
    }

    pub fn s_domain(&self) -> Domain {
        Domain::range(self.n_users + 1).expect("N + 1 >= 2 values")
    }

    pub fn mean(&self) -> f64 {
        self.n_users as f64 * self.p1
    }

    pub fn variance(&self) -> f64 {
        self.n_users as f64 * self.p1 * (1.0 - self.p1)
    }
}

/// Binomial probabilities from log-factorials, stable for large `n`.
fn binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    if p == 0.0 || p == 1.0 {
        let mut v = vec![0.0; n + 1];
        v[if p == 0.0 { 0 } else { n }] = 1.0;
        return v;
    }
    let mut ln_fact = vec![0.0; n + 1];
    for k in 1..=n {
        ln_fact[k] = ln_fact[k - 1] + (k as f64).ln();
    }
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    let raw: Vec<f64> = (0..=n)
        .map(|s| (ln_fact[n] - ln_fact[s] - ln_fact[n - s] + s as f64 * lp + (n - s) as f64 * lq).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// Admissible range for the released estimate of `S`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimatorBand {
    pub lower: f64,
    pub upper: f64,
}

impl EstimatorBand {
    pub fn contains(&self, x: f64, tol: f64) -> bool {
        x >= self.lower - tol && x <= self.upper + tol
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

pub fn cip_band(instance: &CipInstance) -> EstimatorBand {
    let n = instance.n_users as f64;
    let t = (-instance.eps.epsilon()).exp();
    let mean = instance.mean();
    // the two ends coincide at eps = 0; guard against rounding apart
    let lower = (t * mean).min(mean);
    let upper = (n - t * (n - mean)).max(mean);
    EstimatorBand { lower, upper }
}

/// Lower bound on the MSE of any mechanism whose posterior means stay in
/// the band: the estimate has mean `N p1`, and its variance is at most that
/// of a two-point law on the band ends.
pub fn cip_mse_lower_bound(instance: &CipInstance) -> f64 {
    let band = cip_band(instance);
    let mean = instance.mean();
    (instance.variance() - (mean - band.lower) * (band.upper - mean)).max(0.0)
}

/// Posterior means `E[S | Y = y]` of every reachable output.
pub fn posterior_means(instance: &CipInstance, channel: &Channel) -> Result<Vec<Option<f64>>> {
    let prior = Prior::new(instance.s_prior.clone())?;
    let lam = output_distribution(channel, &prior)?;
    Ok(lam
        .iter()
        .enumerate()
        .map(|(y, &l)| {
            (l > 0.0).then(|| {
                let num: f64 = instance.s_prior.iter().enumerate().map(|(s, p)| s as f64 * p * channel.get(s, y)).sum();
                num / l
            })
        })
        .collect())
}

/// Whether every reachable posterior mean lies in the band.
pub fn satisfies_band(instance: &CipInstance, channel: &Channel, tol: f64) -> Result<bool> {
    let band = cip_band(instance);
    Ok(posterior_means(instance, channel)?.into_iter().flatten().all(|m| band.contains(m, tol)))
}

/// MSE of the MMSE estimate of `S` released through `channel`.
pub fn cip_mse(instance: &CipInstance, channel: &Channel) -> Result<f64> {
    let prior = Prior::new(instance.s_prior.clone())?;
    let lam = output_distribution(channel, &prior)?;
    let means = posterior_means(instance, channel)?;
    let mean = instance.mean();
    let explained: f64 = lam.iter().zip(&means).filter_map(|(l, m)| m.map(|m| l * (m - mean) * (m - mean))).sum();
    Ok((instance.variance() - explained).max(0.0))
}

/// The LIP-optimal square channel over `{0..N}` under the binomial prior.
/// An `eps`-LIP release of `S` satisfies the band, so this is a feasible
/// start for [`cip_search`].
pub fn lip_seed_channel(instance: &CipInstance) -> Result<Channel> {
    let prior = Prior::new(instance.s_prior.clone())?;
    opt_mimo_lip(&instance.s_domain(), &prior, instance.eps)
}

/// Merges the columns of `channel` into `groups` contiguous blocks ordered
/// by posterior mean. Merging averages the means, so band feasibility and
/// row sums are preserved.
fn merge_columns(instance: &CipInstance, channel: &Channel, groups: usize) -> Result<Vec<Vec<f64>>> {
    let means = posterior_means(instance, channel)?;
    let mut order: Vec<usize> = (0..channel.outputs()).filter(|&y| means[y].is_some()).collect();
    order.sort_by(|&a, &b| means[a].unwrap().total_cmp(&means[b].unwrap()));
    let mut target = vec![0; channel.outputs()];
    for (rank, &y) in order.iter().enumerate() {
        target[y] = (rank * groups / order.len().max(1)).min(groups - 1);
    }
    Ok(channel
        .rows()
        .iter()
        .map(|row| {
            let mut merged = vec![0.0; groups];
            for (y, &q) in row.iter().enumerate() {
                merged[target[y]] += q;
            }
            merged
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CipResult {
    pub band: EstimatorBand,
    pub lower_bound: f64,
    /// Mechanism over `S`, inputs `0..=N`, outputs `0..output_size`.
    pub channel: Channel,
    pub mse: f64,
    /// MSE of the LIP seed before the search.
    pub seed_mse: f64,
}

impl CipResult {
    /// The normalized metric `sqrt(mse / N)`.
    pub fn metric(&self, n_users: usize) -> f64 {
        (self.mse / n_users as f64).sqrt()
    }
}

/// Numeric search for the CIP mechanism minimizing `E[(S - E[S|Y])^2]` with
/// every posterior mean in the band. `output_size = N + 1` is the natural
/// choice; smaller alphabets start from a merged seed.
pub fn cip_search(instance: &CipInstance, output_size: usize, config: SearchConfig) -> Result<CipResult> {
    let n = instance.n_users;
    if n > MAX_SEARCH_USERS {
        return Err(Error::InvalidConfig(format!("CIP search supports N <= {MAX_SEARCH_USERS}, got {n}")));
    }
    if !(2..=n + 1).contains(&output_size) {
        return Err(Error::InvalidConfig(format!("output size {output_size} outside 2..={}", n + 1)));
    }
    let band = cip_band(instance);
    let lower_bound = cip_mse_lower_bound(instance);
    let seed = lip_seed_channel(instance)?;
    let seed_rows = merge_columns(instance, &seed, output_size)?;
    let domain = instance.s_domain();
    let outputs = Domain::range(output_size)?;
    let seed_channel = Channel::renormalized(seed_rows.clone(), domain.clone(), outputs.clone())?;
    let seed_mse = cip_mse(instance, &seed_channel)?;

    let support: Vec<usize> = (0..=n).filter(|&s| instance.s_prior[s] > 0.0).collect();
    if support.len() < 2 || band.width() <= 0.0 {
        let lam = output_distribution(&seed_channel, &Prior::new(instance.s_prior.clone())?)?;
        let constant = Channel::constant(domain, outputs, &lam)?;
        return Ok(CipResult { band, lower_bound, mse: instance.variance(), channel: constant, seed_mse });
    }
    let prior: Vec<f64> = support.iter().map(|&s| instance.s_prior[s]).collect();
    let values: Vec<f64> = support.iter().map(|&s| s as f64).collect();
    let problem = Problem::new(
        prior,
        Statistic::Mean(values),
        Constraint::PosteriorBand { lower: band.lower, upper: band.upper },
        output_size,
    )?;
    let restricted: Vec<Vec<f64>> = support.iter().map(|&s| seed_rows[s].clone()).collect();
    let solution = problem.solve(vec![restricted], config)?;

    // zero-probability values of S take the output marginal as their row
    let mut lam = vec![0.0; output_size];
    for (row, &s) in solution.rows.iter().zip(&support) {
        for (l, q) in lam.iter_mut().zip(row) {
            *l += instance.s_prior[s] * q;
        }
    }
    let mut rows = vec![lam; n + 1];
    for (row, &s) in solution.rows.into_iter().zip(&support) {
        rows[s] = row;
    }
    let channel = Channel::renormalized(rows, domain, outputs)?;
    let mse = cip_mse(instance, &channel)?;
    Ok(CipResult { band, lower_bound, channel, mse, seed_mse })
}
