use std::collections::HashMap;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate_population, ingest, stream, IngestSpec, PriorMode};
use crate::analysis::{describe_population, tradeoff_curve, CurveFamily, CurveMetadata, CurveRow, TradeoffCurve};
use crate::error::{Error, Result};
use crate::estimators::{context_free_from_count, oue_estimate_from_counts, PosteriorTable, TaskAccumulator};
use crate::mechanisms::{derive, ldp_flip_probability, sample_index, Mechanism, MechanismFamily, OueChannel};
use crate::types::{AggregationTask, Domain, Population, PrivacyBudget};

/// Where the simulated users come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopulationSource {
    /// Generated users; true values are redrawn from the priors each trial.
    Synthetic { n: usize, domain: Vec<f64>, prior: PriorMode, seed: u64 },
    /// Users read from a file; their recorded values are held fixed and
    /// only the perturbation is repeated.
    Ingested { path: PathBuf, spec: IngestSpec },
}

/// One Monte-Carlo experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: AggregationTask,
    pub families: Vec<CurveFamily>,
    pub eps_grid: Vec<f64>,
    pub population: PopulationSource,
    pub trials: u64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Also emit closed-form rows (`trials = 0`).
    #[serde(default = "yes")]
    pub closed_form: bool,
}

fn yes() -> bool {
    true
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        if self.families.is_empty() {
            return Err(Error::InvalidConfig("no mechanism families given".into()));
        }
        if self.eps_grid.is_empty() {
            return Err(Error::InvalidConfig("empty budget grid".into()));
        }
        for &e in &self.eps_grid {
            PrivacyBudget::new(e)?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::ParseError { line: e.line(), message: e.to_string() })
    }
}

/// Per-user machinery of one (family, budget) cell.
enum Prepared {
    Mmse { tables: Vec<PosteriorTable>, rows: Vec<Vec<Vec<f64>>>, user_table: Vec<usize> },
    ContextFree { flip: f64, eps: PrivacyBudget },
    Unary(OueChannel, PrivacyBudget),
}

fn prepare(family: CurveFamily, population: &Population, task: &AggregationTask, eps: PrivacyBudget) -> Result<Prepared> {
    let budget = family.budget(eps)?;
    let domain = population.domain();
    let unsupported = || Error::UnsupportedPairing { family: family.label(), task: task.name().to_string() };
    match family.family {
        MechanismFamily::Oue => {
            if !matches!(task, AggregationTask::Histogram) {
                return Err(unsupported());
            }
            match derive(MechanismFamily::Oue, domain, &population.users()[0].prior, budget)? {
                Mechanism::Unary(oue) => {
                    // the estimator divides by 1/2 - f, which vanishes at eps = 0
                    if budget.epsilon() == 0.0 {
                        return Err(Error::ZeroEpsilon);
                    }
                    Ok(Prepared::Unary(oue, budget))
                }
                Mechanism::Channel(_) => unreachable!("OUE derives a unary mechanism"),
            }
        }
        MechanismFamily::SymmetricRr => {
            derive(MechanismFamily::SymmetricRr, domain, &population.users()[0].prior, budget)?;
            if budget.epsilon() == 0.0 {
                return Err(Error::ZeroDenominator);
            }
            Ok(Prepared::ContextFree { flip: ldp_flip_probability(budget), eps: budget })
        }
        f => {
            let mut memo: HashMap<Vec<u64>, usize> = HashMap::new();
            let mut tables = Vec::new();
            let mut rows = Vec::new();
            let mut user_table = Vec::with_capacity(population.len());
            for user in population.users() {
                let key: Vec<u64> = user.prior.probs().iter().map(|p| p.to_bits()).collect();
                let idx = match memo.get(&key) {
                    Some(&i) => i,
                    None => {
                        let Mechanism::Channel(ch) = derive(f, domain, &user.prior, budget)? else {
                            unreachable!("only OUE is unary")
                        };
                        tables.push(PosteriorTable::new(&ch, &user.prior)?);
                        rows.push(ch.rows().to_vec());
                        memo.insert(key, tables.len() - 1);
                        tables.len() - 1
                    }
                };
                user_table.push(idx);
            }
            Ok(Prepared::Mmse { tables, rows, user_table })
        }
    }
}

/// Squared error of one trial of one cell, summed over coordinates.
fn trial_error(
    prepared: &Prepared,
    task: &AggregationTask,
    domain: &Domain,
    xs: &[usize],
    truth: &[f64],
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<f64> {
    let n = xs.len();
    let estimate: Vec<f64> = match prepared {
        Prepared::Mmse { tables, rows, user_table } => {
            let mut acc = TaskAccumulator::new(task, domain, n)?;
            for (i, &x) in xs.iter().enumerate() {
                let t = user_table[i];
                let y = sample_index(&rows[t][x], rng);
                acc.add(i, tables[t].get(y)?);
            }
            acc.finish().as_vec()
        }
        Prepared::ContextFree { flip, eps } => {
            // unbiased per-user indicator estimates (Y_i - f) / (1 - 2f)
            let row0 = [1.0 - flip, *flip];
            let row1 = [*flip, 1.0 - flip];
            let ys: Vec<usize> = xs.iter().map(|&x| sample_index(if x == 0 { &row0 } else { &row1 }, rng)).collect();
            let ind = |y: usize| (y as f64 - flip) / (1.0 - 2.0 * flip);
            let (a0, spread) = (domain.value(0), domain.value(1) - domain.value(0));
            match task {
                AggregationTask::Survey { target } => {
                    let ones = context_free_from_count(ys.iter().sum::<usize>() as f64, n as f64, *eps);
                    vec![if *target == domain.value(1) { ones } else { n as f64 - ones }]
                }
                AggregationTask::Summation => {
                    let total: f64 = ys.iter().map(|&y| a0 + spread * ind(y)).sum();
                    vec![total / n as f64]
                }
                AggregationTask::WeightedSum { coefficients, offsets } => {
                    let total = ys
                        .iter()
                        .zip(coefficients.iter().zip(offsets))
                        .map(|(&y, (a, b))| a * (a0 + spread * ind(y)) + b)
                        .sum();
                    vec![total]
                }
                AggregationTask::Histogram => {
                    let ones = context_free_from_count(ys.iter().sum::<usize>() as f64, n as f64, *eps);
                    vec![n as f64 - ones, ones]
                }
            }
        }
        Prepared::Unary(oue, eps) => {
            let mut counts = vec![0u64; domain.len()];
            for &x in xs {
                oue.perturb_into(x, rng, &mut counts);
            }
            oue_estimate_from_counts(&counts, n, *eps)?
        }
    };
    Ok(estimate.iter().zip(truth).map(|(e, t)| (e - t) * (e - t)).sum())
}

/// Runs the experiment: for every trial, family and budget, draws the true
/// values, perturbs, estimates and records the squared error of the task
/// statistic. Emits `sqrt(mean error / N)` rows with `trials = R`, plus the
/// closed-form rows when requested.
///
/// Trial `r` draws true values from stream `(seed, r, 0)` and perturbations
/// from stream `(seed, r, 1)`; every cell replays the same perturbation
/// stream, so families are compared on common random numbers. Results do not
/// depend on thread count or scheduling.
pub fn run_experiment(config: &ExperimentConfig) -> Result<TradeoffCurve> {
    config.validate()?;
    let (population, fixed) = match &config.population {
        PopulationSource::Synthetic { n, domain, prior, seed } => {
            let domain = Domain::new(domain.clone())?;
            (generate_population(*n, &domain, prior, *seed)?, None)
        }
        PopulationSource::Ingested { path, spec } => {
            let data = ingest(path, spec)?;
            (data.population, Some(data.inputs))
        }
    };
    config.task.validate(&population)?;
    let domain = population.domain().clone();
    let n = population.len();

    let mut cells = Vec::new();
    for &family in &config.families {
        for &e in &config.eps_grid {
            let eps = PrivacyBudget::new(e)?;
            cells.push((family, eps, prepare(family, &population, &config.task, eps)?));
        }
    }

    let per_trial: Vec<Result<Vec<f64>>> = (0..config.trials)
        .into_par_iter()
        .map(|r| {
            let xs: Vec<usize> = match &fixed {
                Some(xs) => xs.clone(),
                None => {
                    let mut rng = stream(config.seed, r, 0, 0);
                    population.users().iter().map(|u| sample_index(u.prior.probs(), &mut rng)).collect()
                }
            };
            let truth = config.task.evaluate(&domain, &xs);
            cells
                .iter()
                .map(|(_, _, prepared)| {
                    let mut rng = stream(config.seed, r, 1, 0);
                    trial_error(prepared, &config.task, &domain, &xs, &truth, &mut rng)
                })
                .collect()
        })
        .collect();
    let mut totals = vec![0.0; cells.len()];
    for errors in per_trial {
        for (t, e) in totals.iter_mut().zip(errors?) {
            *t += e;
        }
    }

    let mut rows: Vec<CurveRow> = cells
        .iter()
        .zip(&totals)
        .map(|((family, eps, _), total)| CurveRow {
            epsilon: eps.epsilon(),
            family: family.label(),
            metric: (total / config.trials as f64 / n as f64).sqrt(),
            trials: config.trials,
        })
        .collect();
    if config.closed_form {
        for &family in &config.families {
            rows.extend(tradeoff_curve(family, &population, &config.task, &config.eps_grid)?.rows);
        }
    }
    let metadata = CurveMetadata {
        population: describe_population(&population),
        task: config.task.name().to_string(),
        trials: config.trials,
    };
    Ok(TradeoffCurve::new(rows, metadata))
}
