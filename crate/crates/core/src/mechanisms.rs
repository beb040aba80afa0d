//! Closed-form optimal perturbation channels and output sampling.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Channel, Domain, Prior, PrivacyBudget};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MechanismFamily {
    OptBinaryLip,
    OptBinaryLdp,
    OptMimoLip,
    OptMimoLdp,
    SymmetricRr,
    Oue,
}

impl MechanismFamily {
    pub const ALL: [MechanismFamily; 6] = [
        MechanismFamily::OptBinaryLip,
        MechanismFamily::OptBinaryLdp,
        MechanismFamily::OptMimoLip,
        MechanismFamily::OptMimoLdp,
        MechanismFamily::SymmetricRr,
        MechanismFamily::Oue,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MechanismFamily::OptBinaryLip => "opt-binary-lip",
            MechanismFamily::OptBinaryLdp => "opt-binary-ldp",
            MechanismFamily::OptMimoLip => "opt-mimo-lip",
            MechanismFamily::OptMimoLdp => "opt-mimo-ldp",
            MechanismFamily::SymmetricRr => "symmetric-rr",
            MechanismFamily::Oue => "oue",
        }
    }

    /// Families whose channel depends on the prior.
    pub fn is_context_aware(self) -> bool {
        matches!(self, MechanismFamily::OptBinaryLip | MechanismFamily::OptMimoLip)
    }

    pub fn is_binary(self) -> bool {
        matches!(
            self,
            MechanismFamily::OptBinaryLip | MechanismFamily::OptBinaryLdp | MechanismFamily::SymmetricRr
        )
    }
}

impl fmt::Display for MechanismFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MechanismFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        MechanismFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown mechanism family {s:?}")))
    }
}

fn check_binary_prior(p1: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p1) {
        return Err(Error::InvalidPrior(format!("p1 = {p1} outside [0, 1]")));
    }
    Ok(())
}

/// LIP-optimal binary channel, the two-output case of [`opt_mimo_lip`].
///
/// When `min(p1, 1 - p1) >= 1 / (e^eps + 1)` this is `q0 = p1 / e^eps`,
/// `q1 = (1 - p1) / e^eps`. Of the two MSE-optimal channels it is the one
/// closer to the identity, so it also minimizes `E|X - Y|`.
pub fn opt_binary_lip(p1: f64, eps: PrivacyBudget) -> Result<Channel> {
    check_binary_prior(p1)?;
    let ch = opt_mimo_lip(&Domain::binary(), &Prior::binary(p1)?, eps)?;
    Ok(ch)
}

/// The mirror image of [`opt_binary_lip`] about `(0.5, 0.5)`: outputs
/// swapped. Same MSE, larger mean absolute error.
pub fn opt_binary_lip_twin(p1: f64, eps: PrivacyBudget) -> Result<Channel> {
    let ch = opt_binary_lip(p1, eps)?;
    let rows = ch.rows().iter().map(|r| vec![r[1], r[0]]).collect();
    Channel::new(rows, Domain::binary(), Domain::binary())
}

/// Symmetric flip probability `1 / (e^eps + 1)`.
pub fn ldp_flip_probability(eps: PrivacyBudget) -> f64 {
    1.0 / (eps.exp() + 1.0)
}

/// LDP-optimal binary channel, flip probability `1 / (e^eps + 1)` both ways.
pub fn opt_binary_ldp(eps: PrivacyBudget) -> Channel {
    let f = ldp_flip_probability(eps);
    Channel::binary(f, f).expect("flip probability lies in [0, 0.5]")
}

/// Binary randomized response; the same matrix as [`opt_binary_ldp`], kept
/// separate because it is paired with the prior-free count estimator.
pub fn symmetric_rr(eps: PrivacyBudget) -> Channel {
    opt_binary_ldp(eps)
}

/// Square `eps`-LIP channel with every output on the privacy boundary.
///
/// Output `k` carries the posterior `t_k p + (1 - t_k) e_k`: the prior pushed
/// toward input `k` until the first LIP bound binds, with
/// `1 - t_k = min(1 - e^-eps, p_k (e^eps - 1) / (1 - p_k))`. The output
/// marginal is `lambda_k = p_k / (A (1 - t_k))` with `A = sum_m p_m / (1 - t_m)`.
///
/// When every `p_k >= 1 / (e^eps + 1)` all `t_k = e^-eps`, which gives
/// `q[m][m] = 1 - (1 - p[m]) / e^eps`, `q[m][k] = p[k] / e^eps` and
/// `lambda = p`. Below that threshold those entries would push the posterior
/// of input `k` past `e^eps p_k`, so `t_k` grows instead.
///
/// The channel minimizes the MSE of every linear statistic when all priors
/// clear the threshold, and for binary domains at any prior. Outside that
/// range with `d >= 3` it stays feasible but a channel tuned to the
/// statistic can do better; see [`crate::analysis::oracle`].
///
/// Zero-prior outputs are never emitted; zero-prior inputs get the row
/// `lambda`.
pub fn opt_mimo_lip(domain: &Domain, prior: &Prior, eps: PrivacyBudget) -> Result<Channel> {
    if prior.len() != domain.len() {
        return Err(Error::DimensionMismatch(format!(
            "prior of length {} over a domain of size {}",
            prior.len(),
            domain.len()
        )));
    }
    let p = prior.probs();
    let d = p.len();
    if eps.epsilon() == 0.0 {
        return Channel::constant(domain.clone(), domain.clone(), p);
    }
    let e = eps.exp();
    // 1 - t_k, and t_k, for outputs in the support
    let slack: Vec<f64> = p
        .iter()
        .map(|&pk| {
            if pk == 0.0 {
                0.0
            } else if pk == 1.0 {
                1.0 - 1.0 / e
            } else {
                (1.0 - 1.0 / e).min(pk * (e - 1.0) / (1.0 - pk))
            }
        })
        .collect();
    let a: f64 = p.iter().zip(&slack).filter(|(pk, _)| **pk > 0.0).map(|(pk, s)| pk / s).sum();
    let lambda: Vec<f64> = p
        .iter()
        .zip(&slack)
        .map(|(&pk, &s)| if pk > 0.0 { pk / (a * s) } else { 0.0 })
        .collect();
    let rows = (0..d)
        .map(|m| {
            if p[m] == 0.0 {
                return lambda.clone();
            }
            (0..d)
                .map(|k| {
                    if p[k] == 0.0 {
                        0.0
                    } else if k == m {
                        lambda[k] * (1.0 - slack[k]) + 1.0 / a
                    } else {
                        lambda[k] * (1.0 - slack[k])
                    }
                })
                .collect()
        })
        .collect();
    Channel::renormalized(rows, domain.clone(), domain.clone())
}

/// LDP-optimal square channel: diagonal `e^eps / (e^eps + d - 1)`, every
/// other entry `1 / (e^eps + d - 1)`.
pub fn opt_mimo_ldp(domain: &Domain, eps: PrivacyBudget) -> Result<Channel> {
    let d = domain.len();
    let e = eps.exp();
    let denom = e + d as f64 - 1.0;
    let rows = (0..d)
        .map(|m| (0..d).map(|k| if k == m { e / denom } else { 1.0 / denom }).collect())
        .collect();
    Channel::renormalized(rows, domain.clone(), domain.clone())
}

/// Optimized unary encoding: one-hot encode, then report the hot bit as 1
/// with probability `keep_prob` and every cold bit as 1 with probability
/// `flip_up_prob`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OueChannel {
    pub d: usize,
    pub keep_prob: f64,
    pub flip_up_prob: f64,
}

pub fn oue_channel(d: usize, eps: PrivacyBudget) -> Result<OueChannel> {
    if eps.epsilon() == 0.0 {
        return Err(Error::ZeroEpsilon);
    }
    if d < 2 {
        return Err(Error::InvalidDomain(format!("unary encoding needs d >= 2, got {d}")));
    }
    Ok(OueChannel {
        d,
        keep_prob: 0.5,
        flip_up_prob: ldp_flip_probability(eps),
    })
}

impl OueChannel {
    /// Perturbed bit vector for input index `x`.
    pub fn perturb<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> Result<Vec<bool>> {
        if x >= self.d {
            return Err(Error::ValueNotInDomain(x as f64));
        }
        Ok((0..self.d)
            .map(|k| {
                let p = if k == x { self.keep_prob } else { self.flip_up_prob };
                rng.random::<f64>() < p
            })
            .collect())
    }

    /// Adds the perturbed report for `x` into per-bucket counts.
    pub fn perturb_into<R: Rng + ?Sized>(&self, x: usize, rng: &mut R, counts: &mut [u64]) {
        for (k, c) in counts.iter_mut().enumerate().take(self.d) {
            let p = if k == x { self.keep_prob } else { self.flip_up_prob };
            if rng.random::<f64>() < p {
                *c += 1;
            }
        }
    }

    /// Exact per-user histogram MSE of the unbiased estimator,
    /// `(1/4 + (d-1) f (1-f)) / (1/2 - f)^2`.
    pub fn per_user_mse(&self) -> f64 {
        let f = self.flip_up_prob;
        let gap = self.keep_prob - f;
        (self.keep_prob * (1.0 - self.keep_prob) + (self.d as f64 - 1.0) * f * (1.0 - f)) / (gap * gap)
    }

    /// Per-bucket variance for a bucket nobody holds, per user:
    /// `4 e^eps / (e^eps - 1)^2`.
    pub fn cold_bucket_variance(&self) -> f64 {
        let f = self.flip_up_prob;
        let gap = self.keep_prob - f;
        f * (1.0 - f) / (gap * gap)
    }
}

/// Inverse-CDF draw from a probability row. Uses `u` in `(0, 1]` and picks
/// the first index whose cumulative sum reaches `u`, so ties resolve to the
/// lower index and zero-probability entries are never chosen.
pub fn sample_index<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let u = 1.0 - rng.random::<f64>();
    let mut cdf = 0.0;
    let mut last_positive = 0;
    for (k, &q) in row.iter().enumerate() {
        if q > 0.0 {
            cdf += q;
            last_positive = k;
            if u <= cdf {
                return k;
            }
        }
    }
    last_positive
}

/// Samples the published output index for input index `x`.
pub fn perturb_index<R: Rng + ?Sized>(channel: &Channel, x: usize, rng: &mut R) -> Result<usize> {
    if x >= channel.inputs() {
        return Err(Error::ValueNotInDomain(x as f64));
    }
    Ok(sample_index(channel.row(x), rng))
}

/// Samples the published value for input value `x` with a generator seeded
/// from `seed`.
pub fn perturb(channel: &Channel, x: f64, seed: u64) -> Result<f64> {
    let m = channel.input_domain().index_of(x)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = perturb_index(channel, m, &mut rng)?;
    Ok(channel.output_domain().value(k))
}

/// A derived mechanism: a square channel or a unary-encoding protocol.
#[derive(Debug, Clone, PartialEq)]
pub enum Mechanism {
    Channel(Channel),
    Unary(OueChannel),
}

/// Derives the optimal mechanism of `family` for one user.
pub fn derive(family: MechanismFamily, domain: &Domain, prior: &Prior, eps: PrivacyBudget) -> Result<Mechanism> {
    let binary_only = || -> Result<()> {
        if domain.len() != 2 || prior.len() != 2 {
            return Err(Error::UnsupportedPairing {
                family: family.to_string(),
                task: format!("a domain of size {}", domain.len()),
            });
        }
        Ok(())
    };
    let relabel = |ch: Channel| Channel::square(ch.rows().to_vec(), domain.clone());
    match family {
        MechanismFamily::OptBinaryLip => {
            binary_only()?;
            Ok(Mechanism::Channel(relabel(opt_binary_lip(prior.p1(), eps)?)?))
        }
        MechanismFamily::OptBinaryLdp => {
            binary_only()?;
            Ok(Mechanism::Channel(relabel(opt_binary_ldp(eps))?))
        }
        MechanismFamily::SymmetricRr => {
            binary_only()?;
            Ok(Mechanism::Channel(relabel(symmetric_rr(eps))?))
        }
        MechanismFamily::OptMimoLip => Ok(Mechanism::Channel(opt_mimo_lip(domain, prior, eps)?)),
        MechanismFamily::OptMimoLdp => Ok(Mechanism::Channel(opt_mimo_ldp(domain, eps)?)),
        MechanismFamily::Oue => Ok(Mechanism::Unary(oue_channel(domain.len(), eps)?)),
    }
}
