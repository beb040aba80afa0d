//! Numeric search over row-stochastic channels.
//!
//! The explained variance `sum_k b_k^2 / lambda_k` is convex in the channel
//! and every supported constraint is linear, so along any feasible segment
//! the best point is a vertex. Each start first climbs by successive linear
//! programs, jumping to the vertex that maximizes the linearized objective.
//! It is then polished by moving probability mass inside one row from one
//! output to another, always to the far end of the feasible interval, until
//! no such transfer improves the objective. Multiple starts guard against
//! poor local vertices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use microlp::{ComparisonOp, OptimizationDirection, Problem as LinearProgram, Variable};
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::types::PrivacyBudget;

/// Statistic whose MMSE the search minimizes.
#[derive(Debug, Clone, PartialEq)]
pub enum Statistic {
    /// `f(X) = values[X]`.
    Mean(Vec<f64>),
    /// The indicator vector `(1{X = 0}, ..., 1{X = d-1})`, with squared
    /// error summed over coordinates.
    Indicators,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Constraint {
    /// `e^-eps lambda_k <= q_mk <= e^eps lambda_k` for every input and output.
    Lip(PrivacyBudget),
    /// `lower <= E[f(X) | Y = k] <= upper` for every reachable output.
    /// Requires a [`Statistic::Mean`].
    PosteriorBand { lower: f64, upper: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchConfig {
    /// Random starts added to the structured ones.
    pub random_starts: usize,
    /// Sweep cap per start; reaching it raises [`Error::BudgetExceeded`].
    pub max_sweeps: usize,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { random_starts: 32, max_sweeps: 20_000, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub rows: Vec<Vec<f64>>,
    pub mse: f64,
}

const FEAS_TOL: f64 = 1e-10;
const STRICT_TOL: f64 = 1e-9;
const MAX_ENUMERATED_MAPS: usize = 512;
const MAX_LP_ROUNDS: usize = 200;

#[derive(Debug, Clone)]
pub struct Problem {
    prior: Vec<f64>,
    values: Vec<f64>,
    statistic: Statistic,
    constraint: Constraint,
    outputs: usize,
}

impl Problem {
    /// Every prior entry must be positive; drop zero-probability inputs
    /// beforehand, they do not affect any objective.
    pub fn new(prior: Vec<f64>, statistic: Statistic, constraint: Constraint, outputs: usize) -> Result<Self> {
        if prior.is_empty() || prior.iter().any(|&p| !p.is_finite() || p <= 0.0) {
            return Err(Error::InvalidPrior("search needs a strictly positive prior".into()));
        }
        if outputs == 0 {
            return Err(Error::InvalidConfig("output alphabet must be nonempty".into()));
        }
        let values = match &statistic {
            Statistic::Mean(v) => {
                if v.len() != prior.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "{} values for {} inputs",
                        v.len(),
                        prior.len()
                    )));
                }
                v.clone()
            }
            Statistic::Indicators => {
                if matches!(constraint, Constraint::PosteriorBand { .. }) {
                    return Err(Error::InvalidConfig("posterior band needs a scalar statistic".into()));
                }
                Vec::new()
            }
        };
        Ok(Problem { prior, values, statistic, constraint, outputs })
    }

    pub fn inputs(&self) -> usize {
        self.prior.len()
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    /// Prior variance of the statistic: the MSE of any constant channel.
    pub fn total_variance(&self) -> f64 {
        match self.statistic {
            Statistic::Mean(_) => {
                let mean = self.mean();
                self.prior.iter().zip(&self.values).map(|(p, v)| p * (v - mean) * (v - mean)).sum()
            }
            Statistic::Indicators => self.prior.iter().map(|p| p * (1.0 - p)).sum(),
        }
    }

    fn mean(&self) -> f64 {
        self.prior.iter().zip(&self.values).map(|(p, v)| p * v).sum()
    }

    fn baseline(&self) -> f64 {
        match self.statistic {
            Statistic::Mean(_) => self.mean().powi(2),
            Statistic::Indicators => self.prior.iter().map(|p| p * p).sum(),
        }
    }

    fn check_shape(&self, rows: &[Vec<f64>]) -> Result<()> {
        if rows.len() != self.inputs() || rows.iter().any(|r| r.len() != self.outputs) {
            return Err(Error::DimensionMismatch("start point has the wrong shape".into()));
        }
        crate::types::validate_channel(rows)
    }

    /// MMSE of the statistic under `rows`.
    pub fn mse(&self, rows: &[Vec<f64>]) -> f64 {
        let state = State::new(self, rows.to_vec());
        (self.total_variance() - (state.total_score() - self.baseline())).max(0.0)
    }

    pub fn is_feasible(&self, rows: &[Vec<f64>]) -> bool {
        let state = State::new(self, rows.to_vec());
        (0..self.outputs).all(|k| self.column_feasible(&state, k))
    }

    fn column_feasible(&self, state: &State, k: usize) -> bool {
        let lam = state.lam[k];
        match self.constraint {
            Constraint::Lip(eps) => {
                let e = eps.exp();
                state.q.iter().all(|row| {
                    let q = row[k];
                    q <= e * lam + FEAS_TOL && q + FEAS_TOL >= lam / e
                })
            }
            Constraint::PosteriorBand { lower, upper } => {
                let b = state.b[k];
                let scale = 1.0 + lower.abs().max(upper.abs());
                b + FEAS_TOL * scale >= lower * lam && b <= upper * lam + FEAS_TOL * scale
            }
        }
    }

    /// Mixes `rows` toward the constant channel with the same output
    /// distribution until feasible; the constant end is always feasible.
    pub fn shrink_to_feasible(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        if self.is_feasible(rows) {
            return rows.to_vec();
        }
        let lam: Vec<f64> = (0..self.outputs)
            .map(|k| rows.iter().zip(&self.prior).map(|(r, p)| p * r[k]).sum())
            .collect();
        let mix = |t: f64| -> Vec<Vec<f64>> {
            rows.iter()
                .map(|r| r.iter().zip(&lam).map(|(q, l)| (1.0 - t) * l + t * q).collect())
                .collect()
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.is_feasible(&mix(mid)) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        mix(lo)
    }

    /// Local ascent from a feasible start.
    pub fn ascend(&self, start: Vec<Vec<f64>>, max_sweeps: usize) -> Result<Solution> {
        self.check_shape(&start)?;
        if !self.is_feasible(&start) {
            return Err(Error::NoFeasiblePoint);
        }
        let mut state = State::new(self, start);
        let mut converged = false;
        for _ in 0..max_sweeps {
            if !self.sweep(&mut state) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::BudgetExceeded(max_sweeps));
        }
        let rows = self.merge_stray_columns(state.q);
        let mse = self.mse(&rows);
        Ok(Solution { rows, mse })
    }

    /// Whether output `k` meets the constraint in ratio form. The working
    /// check is absolute, which lets an output of vanishing mass carry any
    /// posterior.
    fn column_strictly_feasible(&self, state: &State, k: usize) -> bool {
        let lam = state.lam[k];
        if lam <= 0.0 {
            return true;
        }
        match self.constraint {
            Constraint::Lip(eps) => {
                let e = eps.exp();
                state.q.iter().all(|row| {
                    let r = row[k] / lam;
                    r <= e * (1.0 + STRICT_TOL) && r >= (1.0 - STRICT_TOL) / e
                })
            }
            Constraint::PosteriorBand { lower, upper } => {
                let m = state.b[k] / lam;
                let slack = STRICT_TOL * (1.0 + lower.abs().max(upper.abs()));
                m >= lower - slack && m <= upper + slack
            }
        }
    }

    /// Folds every output that fails the ratio-form check into the heaviest
    /// output. Such outputs carry mass near the absolute tolerance, so the
    /// merge moves the heaviest output's posterior by a negligible amount.
    fn merge_stray_columns(&self, rows: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
        let mut state = State::new(self, rows);
        let stray: Vec<usize> = (0..self.outputs).filter(|&k| !self.column_strictly_feasible(&state, k)).collect();
        if stray.is_empty() {
            return state.q;
        }
        let Some(target) = (0..self.outputs)
            .filter(|k| !stray.contains(k))
            .max_by(|&a, &b| state.lam[a].total_cmp(&state.lam[b]))
        else {
            return state.q;
        };
        for &k in &stray {
            for row in state.q.iter_mut() {
                row[target] += row[k];
                row[k] = 0.0;
            }
        }
        for k in stray.iter().copied().chain([target]) {
            state.refresh(self, k);
        }
        state.q
    }

    /// Runs the search from structured and random starts plus any `seeds`,
    /// returning the best solution. Each start is first pushed to a vertex
    /// by successive linear programming, then polished by transfers. Starts
    /// run in parallel; the winner is chosen in start order so results do
    /// not depend on scheduling.
    pub fn solve(&self, seeds: Vec<Vec<Vec<f64>>>, config: SearchConfig) -> Result<Solution> {
        let mut starts = Vec::new();
        for s in &seeds {
            self.check_shape(s)?;
            starts.push(self.shrink_to_feasible(s));
        }
        starts.extend(self.structured_starts(config.seed));
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let directions: Vec<Vec<Vec<f64>>> = (0..config.random_starts)
            .map(|_| {
                (0..self.inputs())
                    .map(|_| (0..self.outputs).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
                    .collect()
            })
            .collect();
        let random: Vec<Vec<Vec<f64>>> = directions.par_iter().filter_map(|c| self.lp_vertex(c)).collect();
        starts.extend(random);
        let results: Vec<Result<Solution>> = starts
            .into_par_iter()
            .map(|s| {
                let s = self.successive_lp(s);
                self.ascend(s, config.max_sweeps)
            })
            .collect();
        let mut best: Option<Solution> = None;
        for r in results {
            let sol = r?;
            if best.as_ref().is_none_or(|b| sol.mse < b.mse) {
                best = Some(sol);
            }
        }
        best.ok_or(Error::NoFeasiblePoint)
    }

    /// Repeatedly jumps to the vertex maximizing the linearized objective.
    /// The objective is convex, so each accepted jump cannot decrease it.
    pub fn successive_lp(&self, start: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
        let mut current = start;
        let mut value = State::new(self, current.clone()).total_score();
        for _ in 0..MAX_LP_ROUNDS {
            let grad = self.gradient(&State::new(self, current.clone()));
            let Some(next) = self.lp_vertex(&grad) else { break };
            let v = State::new(self, next.clone()).total_score();
            if v <= value + 1e-13 * value.abs().max(1e-12) {
                break;
            }
            current = next;
            value = v;
        }
        current
    }

    /// Gradient of the explained variance with respect to each `q_mk`.
    fn gradient(&self, state: &State) -> Vec<Vec<f64>> {
        let mut g = vec![vec![0.0; self.outputs]; self.inputs()];
        for k in 0..self.outputs {
            let lam = state.lam[k];
            if lam <= 1e-300 {
                continue;
            }
            for (m, row) in g.iter_mut().enumerate() {
                let pi = self.prior[m];
                row[k] = match self.statistic {
                    Statistic::Mean(_) => {
                        let post = state.b[k] / lam;
                        pi * (2.0 * post * self.values[m] - post * post)
                    }
                    Statistic::Indicators => {
                        pi * (2.0 * pi * state.q[m][k] / lam - state.h[k] / (lam * lam))
                    }
                };
            }
        }
        g
    }

    /// Feasible vertex maximizing `sum c_mk q_mk`, cleaned of solver
    /// round-off. `None` if the solver fails.
    fn lp_vertex(&self, c: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
        let (n, f) = (self.inputs(), self.outputs);
        let mut lp = LinearProgram::new(OptimizationDirection::Maximize);
        let vars: Vec<Vec<Variable>> =
            (0..n).map(|m| (0..f).map(|k| lp.add_var(c[m][k], (0.0, 1.0))).collect()).collect();
        for row in &vars {
            let expr: Vec<(Variable, f64)> = row.iter().map(|&v| (v, 1.0)).collect();
            lp.add_constraint(expr.as_slice(), ComparisonOp::Eq, 1.0);
        }
        for k in 0..f {
            let col: Vec<Variable> = vars.iter().map(|row| row[k]).collect();
            match self.constraint {
                Constraint::Lip(eps) => {
                    let e = eps.exp();
                    for m in 0..n {
                        // q_mk <= e lambda_k and lambda_k <= e q_mk
                        let upper: Vec<(Variable, f64)> = (0..n)
                            .map(|r| (col[r], if r == m { 1.0 } else { 0.0 } - e * self.prior[r]))
                            .collect();
                        lp.add_constraint(upper.as_slice(), ComparisonOp::Le, 0.0);
                        let lower: Vec<(Variable, f64)> = (0..n)
                            .map(|r| (col[r], self.prior[r] - if r == m { e } else { 0.0 }))
                            .collect();
                        lp.add_constraint(lower.as_slice(), ComparisonOp::Le, 0.0);
                    }
                }
                Constraint::PosteriorBand { lower, upper } => {
                    let lo: Vec<(Variable, f64)> =
                        (0..n).map(|r| (col[r], self.prior[r] * (self.values[r] - lower))).collect();
                    lp.add_constraint(lo.as_slice(), ComparisonOp::Ge, 0.0);
                    let hi: Vec<(Variable, f64)> =
                        (0..n).map(|r| (col[r], self.prior[r] * (upper - self.values[r]))).collect();
                    lp.add_constraint(hi.as_slice(), ComparisonOp::Ge, 0.0);
                }
            }
        }
        let sol = lp.solve().ok()?;
        let rows: Vec<Vec<f64>> = vars
            .iter()
            .map(|row| {
                let r: Vec<f64> = row.iter().map(|&v| sol[v].max(0.0)).collect();
                let t: f64 = r.iter().sum();
                r.into_iter().map(|x| x / t).collect()
            })
            .collect();
        Some(self.shrink_to_feasible(&rows))
    }

    /// Deterministic input-to-output maps, enumerated when few enough and
    /// sampled otherwise, each shrunk into the feasible set.
    fn structured_starts(&self, seed: u64) -> Vec<Vec<Vec<f64>>> {
        let (n, f) = (self.inputs(), self.outputs);
        let total = (f as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
        let maps: Vec<Vec<usize>> = if total <= MAX_ENUMERATED_MAPS as u128 {
            (0..total as usize)
                .map(|mut code| {
                    (0..n)
                        .map(|_| {
                            let o = code % f;
                            code /= f;
                            o
                        })
                        .collect()
                })
                .collect()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_4a95);
            let mut maps = vec![(0..n).map(|m| m * f / n).collect::<Vec<_>>()];
            for _ in 0..MAX_ENUMERATED_MAPS / 8 {
                maps.push((0..n).map(|_| rng.random_range(0..f)).collect());
            }
            maps
        };
        maps.into_iter()
            .map(|map| {
                let rows: Vec<Vec<f64>> = map
                    .iter()
                    .map(|&o| {
                        let mut r = vec![0.0; f];
                        r[o] = 1.0;
                        r
                    })
                    .collect();
                self.shrink_to_feasible(&rows)
            })
            .collect()
    }

    fn score(&self, lam: f64, b: f64, h: f64) -> f64 {
        if lam <= 1e-300 {
            return 0.0;
        }
        match self.statistic {
            Statistic::Mean(_) => b * b / lam,
            Statistic::Indicators => h / lam,
        }
    }

    /// Tries every transfer out of every nonzero entry; returns whether
    /// anything improved.
    fn sweep(&self, state: &mut State) -> bool {
        let mut improved = false;
        for s in 0..self.inputs() {
            for j in 0..self.outputs {
                if state.q[s][j] <= 0.0 {
                    continue;
                }
                let mut best: Option<(usize, f64, f64)> = None;
                for k in 0..self.outputs {
                    if k == j {
                        continue;
                    }
                    let delta = self.max_step(state, s, j, k);
                    if delta <= 1e-15 {
                        continue;
                    }
                    let gain = self.gain(state, s, j, k, delta);
                    let base = state.col_score[j] + state.col_score[k];
                    if gain > 1e-13 * base.abs().max(1e-12) && best.is_none_or(|(_, _, g)| gain > g) {
                        best = Some((k, delta, gain));
                    }
                }
                if let Some((k, delta, _)) = best {
                    state.transfer(self, s, j, k, delta);
                    improved = true;
                }
            }
        }
        improved
    }

    fn gain(&self, state: &State, s: usize, j: usize, k: usize, delta: f64) -> f64 {
        let pi = self.prior[s];
        let v = self.values.get(s).copied().unwrap_or(0.0);
        let (qj, qk) = (state.q[s][j], state.q[s][k]);
        let nj = self.score(
            state.lam[j] - pi * delta,
            state.b[j] - pi * v * delta,
            state.h[j] + pi * pi * ((qj - delta).powi(2) - qj * qj),
        );
        let nk = self.score(
            state.lam[k] + pi * delta,
            state.b[k] + pi * v * delta,
            state.h[k] + pi * pi * ((qk + delta).powi(2) - qk * qk),
        );
        nj + nk - state.col_score[j] - state.col_score[k]
    }

    /// Largest feasible transfer of mass in row `s` from output `j` to `k`.
    fn max_step(&self, state: &State, s: usize, j: usize, k: usize) -> f64 {
        let mut limit = state.q[s][j];
        let pi = self.prior[s];
        // each constraint reads alpha + beta * delta >= 0
        let mut bound = |alpha: f64, beta: f64| {
            if beta < 0.0 {
                limit = limit.min(alpha.max(0.0) / -beta);
            }
        };
        for (c, sigma) in [(j, -1.0), (k, 1.0)] {
            let lam = state.lam[c];
            match self.constraint {
                Constraint::Lip(eps) => {
                    let e = eps.exp();
                    let own = state.q[s][c];
                    bound(e * lam - own, sigma * (e * pi - 1.0));
                    bound(own - lam / e, sigma * (1.0 - pi / e));
                    let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
                    for (m, row) in state.q.iter().enumerate() {
                        if m != s {
                            hi = hi.max(row[c]);
                            lo = lo.min(row[c]);
                        }
                    }
                    if hi.is_finite() {
                        bound(e * lam - hi, sigma * e * pi);
                        bound(lo - lam / e, -sigma * pi / e);
                    }
                }
                Constraint::PosteriorBand { lower, upper } => {
                    let v = self.values[s];
                    let b = state.b[c];
                    bound(b - lower * lam, sigma * pi * (v - lower));
                    bound(upper * lam - b, sigma * pi * (upper - v));
                }
            }
        }
        limit
    }
}

#[derive(Debug, Clone)]
struct State {
    q: Vec<Vec<f64>>,
    lam: Vec<f64>,
    b: Vec<f64>,
    h: Vec<f64>,
    col_score: Vec<f64>,
}

impl State {
    fn new(problem: &Problem, q: Vec<Vec<f64>>) -> Self {
        let f = problem.outputs;
        let mut state = State { q, lam: vec![0.0; f], b: vec![0.0; f], h: vec![0.0; f], col_score: vec![0.0; f] };
        for k in 0..f {
            state.refresh(problem, k);
        }
        state
    }

    fn refresh(&mut self, problem: &Problem, k: usize) {
        let (mut lam, mut b, mut h) = (0.0, 0.0, 0.0);
        for (m, row) in self.q.iter().enumerate() {
            let w = problem.prior[m] * row[k];
            lam += w;
            b += w * problem.values.get(m).copied().unwrap_or(0.0);
            h += w * w;
        }
        self.lam[k] = lam;
        self.b[k] = b;
        self.h[k] = h;
        self.col_score[k] = problem.score(lam, b, h);
    }

    fn transfer(&mut self, problem: &Problem, s: usize, j: usize, k: usize, delta: f64) {
        let moved = delta.min(self.q[s][j]);
        self.q[s][j] -= moved;
        if self.q[s][j] < 1e-15 {
            self.q[s][k] += self.q[s][j] + moved;
            self.q[s][j] = 0.0;
        } else {
            self.q[s][k] += moved;
        }
        self.refresh(problem, j);
        self.refresh(problem, k);
    }

    fn total_score(&self) -> f64 {
        self.col_score.iter().sum()
    }
}
