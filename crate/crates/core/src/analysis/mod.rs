//! Closed-form error formulas and utility-privacy tradeoff curves.
//!
//! Every per-user MSE here is the MMSE error `Var[f(X)] - Var[E[f(X) | Y]]`
//! (law of total variance). Output columns with zero mass contribute
//! nothing to the estimator variance.

mod curve;
pub mod oracle;
pub mod search;

pub(crate) use curve::describe_population;
pub use curve::{per_user_mse, tradeoff_curve, CurveFamily, CurveMetadata, CurveRow, TradeoffCurve};
pub use oracle::{
    binary_lip_grid_search, histogram_oracle, lip_channel_search, output_range_oracle, GridOptimum, OracleConfig, Target,
};

use crate::error::{Error, Result};
use crate::types::{output_distribution, Channel, Domain, Prior, PrivacyBudget};

fn binary_channel(channel: &Channel) -> Result<()> {
    if channel.inputs() != 2 || channel.outputs() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "binary formula applied to a {}x{} channel",
            channel.inputs(),
            channel.outputs()
        )));
    }
    Ok(())
}

/// Per-user MMSE of a binary channel,
/// `p1 (1 - p1) - [p1 (lambda0 - q1)]^2 / (lambda0 lambda1)`.
pub fn mse_binary(channel: &Channel, p1: f64) -> Result<f64> {
    binary_channel(channel)?;
    let (q0, q1) = (channel.q0(), channel.q1());
    Ok(mse_binary_params(q0, q1, p1))
}

/// [`mse_binary`] on raw flip probabilities.
pub fn mse_binary_params(q0: f64, q1: f64, p1: f64) -> f64 {
    let var = p1 * (1.0 - p1);
    let lambda0 = (1.0 - p1) * (1.0 - q0) + p1 * q1;
    let lambda1 = (1.0 - p1) * q0 + p1 * (1.0 - q1);
    if lambda0 <= 0.0 || lambda1 <= 0.0 {
        return var;
    }
    let num = p1 * (lambda0 - q1);
    (var - num * num / (lambda0 * lambda1)).max(0.0)
}

/// Per-user MSE of the LIP-optimal binary channel.
///
/// LIP confines every posterior `Pr(X = 1 | Y = y)` to `[lo, hi]` with
/// `lo = max(p1 / e^eps, 1 - e^eps (1 - p1))` and
/// `hi = min(e^eps p1, 1 - (1 - p1) / e^eps)`, and the posteriors average to
/// `p1`, so the estimator variance is at most `(p1 - lo)(hi - p1)`. When
/// `min(p1, 1 - p1) >= 1 / (e^eps + 1)` this equals
/// `p1 (1 - p1) (2 e^-eps - e^-2eps)`.
pub fn mse_binary_lip_opt(p1: f64, eps: PrivacyBudget) -> f64 {
    let e = eps.exp();
    let lo = (p1 / e).max(1.0 - e * (1.0 - p1));
    let hi = (e * p1).min(1.0 - (1.0 - p1) / e);
    (p1 * (1.0 - p1) - (p1 - lo).max(0.0) * (hi - p1).max(0.0)).max(0.0)
}

/// Whether the prior-proportional form `q0 = p1 / e^eps, q1 = (1 - p1) / e^eps`
/// is itself `eps`-LIP: `min(p1, 1 - p1) >= 1 / (e^eps + 1)`.
pub fn binary_proportional_regime(p1: f64, eps: PrivacyBudget) -> bool {
    p1.min(1.0 - p1) * (eps.exp() + 1.0) >= 1.0
}

/// Closed-form per-user MSE of the LDP-optimal binary channel.
pub fn mse_binary_ldp_opt(p1: f64, eps: PrivacyBudget) -> f64 {
    let e = eps.exp();
    let var = p1 * (1.0 - p1);
    let num = var * (1.0 - e);
    let den = (1.0 - p1 + p1 * e) * (e - p1 * e + p1);
    if den <= 0.0 {
        return var;
    }
    (var - num * num / den).max(0.0)
}

/// Per-user MSE of the prior-free count estimator under symmetric
/// randomized response, `p (1 - p) / (1 - 2p)^2` with `p = 1/(e^eps + 1)`.
pub fn mse_context_free(eps: PrivacyBudget) -> Result<f64> {
    if eps.epsilon() == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    let p = crate::mechanisms::ldp_flip_probability(eps);
    Ok(p * (1.0 - p) / ((1.0 - 2.0 * p) * (1.0 - 2.0 * p)))
}

/// Per-user MMSE for the linear statistic `sum_m w_m 1{X = a_m}`:
/// `Var[w(X)] - sum_{m,n,k} w_m w_n p_m p_n q_mk (q_nk / lambda_k - 1)`.
///
/// The triple sum is evaluated in its factored form
/// `sum_k (sum_m w_m p_m q_mk)^2 / lambda_k - (sum_m w_m p_m)^2`.
pub fn mse_linear(channel: &Channel, prior: &Prior, weights: &[f64]) -> Result<f64> {
    let lambda = output_distribution(channel, prior)?;
    if weights.len() != channel.inputs() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} inputs",
            weights.len(),
            channel.inputs()
        )));
    }
    let p = prior.probs();
    let mean: f64 = p.iter().zip(weights).map(|(p, w)| p * w).sum();
    let second: f64 = p.iter().zip(weights).map(|(p, w)| p * w * w).sum();
    let var_x = second - mean * mean;
    let mut explained = 0.0;
    for (k, &l) in lambda.iter().enumerate() {
        if l <= 0.0 {
            continue;
        }
        let b: f64 = (0..p.len()).map(|m| weights[m] * p[m] * channel.get(m, k)).sum();
        explained += b * b / l;
    }
    let var_est = explained - mean * mean;
    Ok((var_x - var_est).max(0.0))
}

/// Per-user MMSE of `X` itself over a numeric domain.
pub fn mse_mimo(channel: &Channel, prior: &Prior, domain: &Domain) -> Result<f64> {
    if domain.len() != channel.inputs() {
        return Err(Error::DimensionMismatch(format!(
            "domain of size {} for {} inputs",
            domain.len(),
            channel.inputs()
        )));
    }
    mse_linear(channel, prior, domain.values())
}

/// Per-user histogram MMSE,
/// `sum_k [p_k (1 - p_k) - p_k^2 sum_j q_kj (q_kj / lambda_j - 1)]`.
pub fn mse_histogram(channel: &Channel, prior: &Prior) -> Result<f64> {
    let lambda = output_distribution(channel, prior)?;
    let mut total = 0.0;
    for (k, &pk) in prior.probs().iter().enumerate() {
        let mut s = 0.0;
        for (j, &l) in lambda.iter().enumerate() {
            let q = channel.get(k, j);
            if l > 0.0 && q > 0.0 {
                s += q * (q / l - 1.0);
            }
        }
        total += pk * (1.0 - pk) - pk * pk * s;
    }
    Ok(total.max(0.0))
}

/// `E|X - Y| = sum_{m,k} |a_m - a_k| p_m q_mk` over a square channel.
pub fn mae(channel: &Channel, prior: &Prior, domain: &Domain) -> Result<f64> {
    channel.check_prior(prior)?;
    if !channel.is_square() || domain.len() != channel.inputs() {
        return Err(Error::DimensionMismatch("mean absolute error needs a square channel over the domain".into()));
    }
    let a = domain.values();
    let mut total = 0.0;
    for (m, &p) in prior.probs().iter().enumerate() {
        for k in 0..channel.outputs() {
            total += (a[m] - a[k]).abs() * p * channel.get(m, k);
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::{opt_binary_ldp, opt_binary_lip, opt_binary_lip_twin, opt_mimo_lip};

    fn eps(v: f64) -> PrivacyBudget {
        PrivacyBudget::new(v).unwrap()
    }

    #[test]
    fn binary_extremes() {
        let id = Channel::identity(Domain::binary());
        assert!(mse_binary(&id, 0.3).unwrap().abs() < 1e-15);
        let c = Channel::binary(0.4, 0.6).unwrap();
        assert!((mse_binary(&c, 0.3).unwrap() - 0.21).abs() < 1e-15);
        // all mass on one output
        let c = Channel::binary(0.0, 1.0).unwrap();
        assert!((mse_binary(&c, 0.3).unwrap() - 0.21).abs() < 1e-15);
    }

    #[test]
    fn binary_lip_optimum_matches_closed_form() {
        for (p1, e) in [(0.4, 0.5), (0.3, 1.0), (0.8, 2.5)] {
            assert!(binary_proportional_regime(p1, eps(e)));
            let ch = opt_binary_lip(p1, eps(e)).unwrap();
            let t = f64::exp(-e);
            let expected = p1 * (1.0 - p1) * (2.0 * t - t * t);
            assert!((mse_binary(&ch, p1).unwrap() - expected).abs() < 1e-14);
            assert!((mse_binary_lip_opt(p1, eps(e)) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn ldp_closed_form_matches_direct_evaluation() {
        assert!((mse_binary_ldp_opt(0.3, eps(0.0)) - 0.21).abs() < 1e-15);
        for e in [0.1, 1.0, 3.0] {
            for p1 in [0.5, 0.2, 0.93] {
                let ch = opt_binary_ldp(eps(e));
                let direct = mse_binary(&ch, p1).unwrap();
                assert!((direct - mse_binary_ldp_opt(p1, eps(e))).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn lip_advantage_grows_with_skew() {
        // grows while the prior stays in the proportional regime, then
        // both errors collapse to p1 (1 - p1) as p1 -> 0
        let ratio = |p1: f64| mse_binary_ldp_opt(p1, eps(1.0)) / mse_binary_lip_opt(p1, eps(1.0));
        let mut last = ratio(0.5);
        for p1 in [0.45, 0.4, 0.35, 0.3] {
            assert!(binary_proportional_regime(p1, eps(1.0)));
            let r = ratio(p1);
            assert!(r > last, "ratio at {p1}");
            last = r;
        }
        assert!(ratio(0.1) < ratio(0.3));
        assert!(ratio(0.01) < 1.001);
    }

    #[test]
    fn absolute_gap_is_not_monotone_in_skew() {
        let gap = |p1: f64| mse_binary_ldp_opt(p1, eps(1.0)) - mse_binary_lip_opt(p1, eps(1.0));
        assert!(gap(0.5) > gap(0.4));
        assert!(gap(0.4) > gap(0.1));
    }

    #[test]
    fn twin_has_same_mse_larger_mae() {
        let d = Domain::binary();
        let p = Prior::binary(0.2).unwrap();
        let a = opt_binary_lip(0.2, eps(1.0)).unwrap();
        let b = opt_binary_lip_twin(0.2, eps(1.0)).unwrap();
        assert!((mse_binary(&a, 0.2).unwrap() - mse_binary(&b, 0.2).unwrap()).abs() < 1e-14);
        assert!(mae(&a, &p, &d).unwrap() < mae(&b, &p, &d).unwrap());
    }

    #[test]
    fn mae_fair_coin() {
        let c = Channel::binary(0.5, 0.5).unwrap();
        let v = mae(&c, &Prior::binary(0.3).unwrap(), &Domain::binary()).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
        assert_eq!(
            mae(&Channel::identity(Domain::binary()), &Prior::binary(0.3).unwrap(), &Domain::binary()).unwrap(),
            0.0
        );
    }

    #[test]
    fn mimo_extremes() {
        let d = Domain::new(vec![1.0, 2.0, 3.0]).unwrap();
        let p = Prior::new(vec![0.1, 0.2, 0.7]).unwrap();
        assert!(mse_mimo(&Channel::identity(d.clone()), &p, &d).unwrap().abs() < 1e-14);
        let c = Channel::constant(d.clone(), d.clone(), &[0.3, 0.3, 0.4]).unwrap();
        assert!((mse_mimo(&c, &p, &d).unwrap() - p.variance(&d)).abs() < 1e-14);
        let h = mse_histogram(&c, &p).unwrap();
        let expected: f64 = p.probs().iter().map(|x| x * (1.0 - x)).sum();
        assert!((h - expected).abs() < 1e-14);
        assert!(mse_histogram(&Channel::identity(d.clone()), &p).unwrap().abs() < 1e-14);
    }

    #[test]
    fn mimo_reduces_to_binary() {
        let d = Domain::binary();
        for (p1, e) in [(0.3, 1.0), (0.05, 0.2)] {
            let p = Prior::binary(p1).unwrap();
            let ch = opt_mimo_lip(&d, &p, eps(e)).unwrap();
            assert!((mse_mimo(&ch, &p, &d).unwrap() - mse_binary_lip_opt(p1, eps(e))).abs() < 1e-14);
        }
    }

    #[test]
    fn context_free_limits() {
        assert!(mse_context_free(eps(20.0)).unwrap() < 1e-8);
        assert_eq!(mse_context_free(eps(0.0)).unwrap_err(), Error::ZeroDenominator);
        let p: f64 = 0.25;
        let v = mse_context_free(eps(3f64.ln())).unwrap();
        assert!((v - p * (1.0 - p) / 0.25).abs() < 1e-15);
    }

    #[test]
    fn dimension_checks() {
        let ch = Channel::identity(Domain::range(3).unwrap());
        assert!(mse_binary(&ch, 0.3).is_err());
        assert!(mse_mimo(&ch, &Prior::uniform(3).unwrap(), &Domain::binary()).is_err());
        assert!(mse_histogram(&ch, &Prior::uniform(2).unwrap()).is_err());
    }
}
