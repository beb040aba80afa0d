use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use super::stream;
use crate::error::{Error, Result};
use crate::types::{Domain, Population, Prior, User};

/// How synthetic users receive their priors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorMode {
    /// Every user shares this prior.
    Global(Prior),
    /// Independent priors drawn uniformly: `p1 ~ U[0, 1]` on binary
    /// domains, a uniform point of the simplex otherwise.
    LocalUniformRandom,
}

/// `n` users over `domain`, reproducible from `seed`.
pub fn generate_population(n: usize, domain: &Domain, mode: &PriorMode, seed: u64) -> Result<Population> {
    if n == 0 {
        return Err(Error::InvalidConfig("population needs at least one user".into()));
    }
    match mode {
        PriorMode::Global(prior) => {
            if prior.len() != domain.len() {
                return Err(Error::DimensionMismatch(format!(
                    "prior of length {} over a domain of size {}",
                    prior.len(),
                    domain.len()
                )));
            }
            Population::global(domain.clone(), prior.clone(), n)
        }
        PriorMode::LocalUniformRandom => {
            let mut rng = stream(seed, u64::MAX, 0, 0);
            let d = domain.len();
            let users = (0..n)
                .map(|i| {
                    let prior = if d == 2 {
                        Prior::binary(rng.random::<f64>())?
                    } else {
                        // normalized unit exponentials are Dirichlet(1, ..., 1)
                        let w: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(Exp1)).collect();
                        Prior::from_weights(&w)?
                    };
                    Ok(User { id: i.to_string(), prior })
                })
                .collect::<Result<Vec<_>>>()?;
            Population::new(domain.clone(), users)
        }
    }
}
