//! Brute-force optimizers used to check closed-form optima.

use serde::Serialize;

use super::mse_binary_params;
use super::search::{Constraint, Problem, SearchConfig, Statistic};
use crate::error::{Error, Result};
use crate::mechanisms::opt_mimo_lip;
use crate::types::{Channel, Domain, Prior, PrivacyBudget};

/// Best binary channel found by [`binary_lip_grid_search`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridOptimum {
    pub q0: f64,
    pub q1: f64,
    pub mse: f64,
}

/// Whether `(q0, q1)` is an `eps`-LIP binary channel under prior `p1`:
/// every ratio `lambda_y / q_xy` lies in `[e^-eps, e^eps]`.
pub fn binary_lip_feasible(q0: f64, q1: f64, p1: f64, eps: PrivacyBudget) -> bool {
    const TOL: f64 = 1e-12;
    if !(0.0..=1.0).contains(&q0) || !(0.0..=1.0).contains(&q1) {
        return false;
    }
    let e = eps.exp();
    let lambda0 = (1.0 - p1) * (1.0 - q0) + p1 * q1;
    let lambda1 = (1.0 - p1) * q0 + p1 * (1.0 - q1);
    let within = |lam: f64, q: f64| lam <= e * q + TOL && q <= e * lam + TOL;
    let row0 = p1 >= 1.0 || (within(lambda0, 1.0 - q0) && within(lambda1, q0));
    let row1 = p1 <= 0.0 || (within(lambda0, q1) && within(lambda1, 1.0 - q1));
    row0 && row1
}

/// Minimizes the binary MSE over the LIP-feasible square by a grid of the
/// given step followed by a Nelder-Mead refinement from the best cell.
pub fn binary_lip_grid_search(p1: f64, eps: PrivacyBudget, step: f64) -> Result<GridOptimum> {
    if !(step > 0.0 && step <= 0.5) {
        return Err(Error::InvalidConfig(format!("grid step {step} outside (0, 0.5]")));
    }
    if !(0.0..=1.0).contains(&p1) {
        return Err(Error::InvalidPrior(format!("p1 = {p1}")));
    }
    let objective = |x: [f64; 2]| {
        if binary_lip_feasible(x[0], x[1], p1, eps) {
            mse_binary_params(x[0], x[1], p1)
        } else {
            f64::INFINITY
        }
    };
    let cells = (1.0 / step).round() as usize;
    let mut best = ([0.5, 0.5], objective([0.5, 0.5]));
    for i in 0..=cells {
        let q0 = (i as f64 * step).min(1.0);
        for j in 0..=cells {
            let q1 = (j as f64 * step).min(1.0);
            let v = objective([q0, q1]);
            if v < best.1 {
                best = ([q0, q1], v);
            }
        }
    }
    let mut x = best.0;
    let mut scale = step;
    for _ in 0..8 {
        x = nelder_mead(&objective, x, scale, 4000);
        scale *= 0.5;
    }
    let mse = objective(x);
    if !mse.is_finite() {
        return Err(Error::NoFeasiblePoint);
    }
    Ok(GridOptimum { q0: x[0], q1: x[1], mse })
}

/// Nelder-Mead in two dimensions; infeasible points carry `+inf`.
fn nelder_mead(f: &impl Fn([f64; 2]) -> f64, start: [f64; 2], scale: f64, max_iter: usize) -> [f64; 2] {
    let mut simplex = [start, [start[0] + scale, start[1]], [start[0], start[1] + scale]];
    let mut values = simplex.map(f);
    let lerp = |a: [f64; 2], b: [f64; 2], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    for _ in 0..max_iter {
        let mut order = [0, 1, 2];
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.map(|i| simplex[i]);
        values = order.map(|i| values[i]);
        let spread = (simplex[1][0] - simplex[0][0]).abs().max((simplex[1][1] - simplex[0][1]).abs())
            + (simplex[2][0] - simplex[0][0]).abs().max((simplex[2][1] - simplex[0][1]).abs());
        if spread < 1e-14 {
            break;
        }
        let centroid = lerp(simplex[0], simplex[1], 0.5);
        let reflected = lerp(centroid, simplex[2], -1.0);
        let fr = f(reflected);
        if fr < values[0] {
            let expanded = lerp(centroid, simplex[2], -2.0);
            let fe = f(expanded);
            if fe < fr {
                simplex[2] = expanded;
                values[2] = fe;
            } else {
                simplex[2] = reflected;
                values[2] = fr;
            }
        } else if fr < values[1] {
            simplex[2] = reflected;
            values[2] = fr;
        } else {
            let contracted = if fr < values[2] {
                lerp(centroid, reflected, 0.5)
            } else {
                lerp(centroid, simplex[2], 0.5)
            };
            let fc = f(contracted);
            if fc < values[2].min(fr) {
                simplex[2] = contracted;
                values[2] = fc;
            } else {
                for i in 1..3 {
                    simplex[i] = lerp(simplex[0], simplex[i], 0.5);
                    values[i] = f(simplex[i]);
                }
            }
        }
    }
    let mut best = 0;
    for i in 1..3 {
        if values[i] < values[best] {
            best = i;
        }
    }
    simplex[best]
}

/// Effort knobs for the channel-space oracles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleConfig {
    pub random_starts: usize,
    pub max_sweeps: usize,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { random_starts: 64, max_sweeps: 20_000, seed: 0x000a_11ce }
    }
}

impl From<OracleConfig> for SearchConfig {
    fn from(c: OracleConfig) -> Self {
        SearchConfig { random_starts: c.random_starts, max_sweeps: c.max_sweeps, seed: c.seed }
    }
}

fn support(prior: &Prior, values: Option<&[f64]>) -> (Vec<f64>, Vec<f64>) {
    let mut p = Vec::new();
    let mut v = Vec::new();
    for (i, &x) in prior.probs().iter().enumerate() {
        if x > 0.0 {
            p.push(x);
            v.push(values.map_or(0.0, |vals| vals[i]));
        }
    }
    (p, v)
}

fn check_desk_scale(d: usize, outputs: usize) -> Result<()> {
    if !(2..=3).contains(&d) || !(1..=d + 2).contains(&outputs) {
        return Err(Error::InvalidConfig(format!(
            "oracle supports d in 2..=3 and f in 1..=d+2, got d = {d}, f = {outputs}"
        )));
    }
    Ok(())
}

/// Smallest per-user MSE of `X` over `d x f` channels satisfying `eps`-LIP.
pub fn output_range_oracle(
    domain: &Domain,
    outputs: usize,
    prior: &Prior,
    eps: PrivacyBudget,
    config: OracleConfig,
) -> Result<f64> {
    check_desk_scale(domain.len(), outputs)?;
    if prior.len() != domain.len() {
        return Err(Error::DimensionMismatch("prior and domain sizes differ".into()));
    }
    let (p, v) = support(prior, Some(domain.values()));
    let problem = Problem::new(p, Statistic::Mean(v), Constraint::Lip(eps), outputs)?;
    Ok(problem.solve(Vec::new(), config.into())?.mse)
}

/// Smallest per-user histogram MSE over `d x f` channels satisfying `eps`-LIP.
pub fn histogram_oracle(prior: &Prior, outputs: usize, eps: PrivacyBudget, config: OracleConfig) -> Result<f64> {
    check_desk_scale(prior.len(), outputs)?;
    // a zero-prior input's indicator is identically 0 and adds no error
    let (p, _) = support(prior, None);
    let problem = Problem::new(p, Statistic::Indicators, Constraint::Lip(eps), outputs)?;
    Ok(problem.solve(Vec::new(), config.into())?.mse)
}

/// Statistic targeted by [`lip_channel_search`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// MSE of the value `X`, as for sums.
    Value,
    /// Summed squared error of the category indicators, as for histograms.
    Histogram,
}

/// Largest domain [`lip_channel_search`] accepts.
pub const MAX_SEARCH_DOMAIN: usize = 8;

/// Numerically optimized `eps`-LIP channel with `outputs` outputs for one
/// prior, seeded with [`opt_mimo_lip`] when square. Returns the channel and
/// its per-user MSE for `target`. Useful where the closed form is not
/// optimal (some prior entry below `1 / (e^eps + 1)` and `d >= 3`).
pub fn lip_channel_search(
    domain: &Domain,
    prior: &Prior,
    eps: PrivacyBudget,
    target: Target,
    outputs: usize,
    config: OracleConfig,
) -> Result<(Channel, f64)> {
    let d = domain.len();
    if prior.len() != d {
        return Err(Error::DimensionMismatch("prior and domain sizes differ".into()));
    }
    if d > MAX_SEARCH_DOMAIN || outputs == 0 || outputs > 2 * MAX_SEARCH_DOMAIN {
        return Err(Error::InvalidConfig(format!(
            "search supports d <= {MAX_SEARCH_DOMAIN} and 1..={} outputs",
            2 * MAX_SEARCH_DOMAIN
        )));
    }
    let support = prior.support();
    let (p, v) = support_values(prior, domain);
    let statistic = match target {
        Target::Value => Statistic::Mean(v),
        Target::Histogram => Statistic::Indicators,
    };
    let output_domain = Domain::range(outputs)?;
    let mut seeds = Vec::new();
    if outputs == d {
        let seed = opt_mimo_lip(domain, prior, eps)?;
        seeds.push(support.iter().map(|&m| seed.row(m).to_vec()).collect());
    }
    let solution = if support.len() == 1 {
        let mut row = vec![0.0; outputs];
        row[0] = 1.0;
        super::search::Solution { rows: vec![row], mse: 0.0 }
    } else {
        Problem::new(p, statistic, Constraint::Lip(eps), outputs)?.solve(seeds, config.into())?
    };
    let mut lam = vec![0.0; outputs];
    for (row, &m) in solution.rows.iter().zip(&support) {
        for (l, q) in lam.iter_mut().zip(row) {
            *l += prior.probs()[m] * q;
        }
    }
    // zero-prior inputs publish like the population, as in the closed form
    let mut rows = vec![lam; d];
    for (row, &m) in solution.rows.into_iter().zip(&support) {
        rows[m] = row;
    }
    let channel = Channel::renormalized(rows, domain.clone(), output_domain)?;
    Ok((channel, solution.mse))
}

fn support_values(prior: &Prior, domain: &Domain) -> (Vec<f64>, Vec<f64>) {
    support(prior, Some(domain.values()))
}
