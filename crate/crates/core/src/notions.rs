//! Numeric audit of a channel against localized differential privacy
//! (LDP), localized information privacy (LIP) and mutual-information
//! privacy (MIP).
//!
//! LDP bounds the likelihood ratio of any output under two inputs, LIP
//! bounds the prior-to-posterior ratio of every realizable (input, output)
//! pair, and MIP bounds `I(X; Y)`. For every channel and prior
//! `lip <= ldp <= 2 lip` and `mip <= lip`; [`audit`] checks both.

use std::cmp::Ordering;
use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::types::{output_distribution, Channel, Prior};

/// A measured privacy level in nats: either finite or unbounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Leakage {
    Finite(f64),
    Unbounded,
}

impl Leakage {
    pub fn is_finite(self) -> bool {
        matches!(self, Leakage::Finite(_))
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Leakage::Finite(v) => Some(v),
            Leakage::Unbounded => None,
        }
    }

    /// `+inf` maps to `f64::INFINITY`; for display and serialization only.
    pub fn as_f64(self) -> f64 {
        self.value().unwrap_or(f64::INFINITY)
    }

    /// Whether the level is within `budget`. Unbounded fails every budget.
    pub fn within(self, budget: f64) -> bool {
        match self {
            Leakage::Finite(v) => v <= budget,
            Leakage::Unbounded => false,
        }
    }
}

impl PartialOrd for Leakage {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (Leakage::Finite(a), Leakage::Finite(b)) => a.partial_cmp(b),
            (Leakage::Finite(_), Leakage::Unbounded) => Some(Ordering::Less),
            (Leakage::Unbounded, Leakage::Finite(_)) => Some(Ordering::Greater),
            (Leakage::Unbounded, Leakage::Unbounded) => Some(Ordering::Equal),
        }
    }
}

impl fmt::Display for Leakage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Leakage::Finite(v) => write!(f, "{v}"),
            Leakage::Unbounded => write!(f, "inf"),
        }
    }
}

impl Serialize for Leakage {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Leakage::Finite(v) => s.serialize_f64(*v),
            Leakage::Unbounded => s.serialize_str("inf"),
        }
    }
}

/// Tracks the running maximum of log-ratios.
struct MaxLog(Leakage);

impl MaxLog {
    fn new() -> Self {
        MaxLog(Leakage::Finite(0.0))
    }

    fn push(&mut self, num: f64, den: f64) {
        if num == den {
            return;
        }
        let v = if num == 0.0 || den == 0.0 {
            Leakage::Unbounded
        } else {
            Leakage::Finite((num / den).ln().abs())
        };
        if v > self.0 {
            self.0 = v;
        }
    }
}

/// `max_{y, x, x'} ln(q[x][y] / q[x'][y])`.
///
/// Columns that are zero in every row are never emitted and impose nothing.
pub fn measure_ldp(channel: &Channel) -> Leakage {
    let mut acc = MaxLog::new();
    for k in 0..channel.outputs() {
        let column = channel.rows().iter().map(|r| r[k]);
        let hi = column.clone().fold(0.0_f64, f64::max);
        let lo = column.fold(1.0_f64, f64::min);
        if hi > 0.0 {
            acc.push(hi, lo);
        }
    }
    acc.0
}

/// `max |ln(q[x][y] / lambda[y])|` over pairs with `p[x] > 0` and
/// `lambda[y] > 0`.
pub fn measure_lip(channel: &Channel, prior: &Prior) -> Result<Leakage> {
    let lambda = output_distribution(channel, prior)?;
    let mut acc = MaxLog::new();
    for (row, &p) in channel.rows().iter().zip(prior.probs()) {
        if p == 0.0 {
            continue;
        }
        for (&q, &l) in row.iter().zip(&lambda) {
            if l > 0.0 {
                acc.push(q, l);
            }
        }
    }
    Ok(acc.0)
}

/// Mutual information `I(X; Y)` in nats.
pub fn measure_mip(channel: &Channel, prior: &Prior) -> Result<f64> {
    let lambda = output_distribution(channel, prior)?;
    let mut info = 0.0;
    for (row, &p) in channel.rows().iter().zip(prior.probs()) {
        for (&q, &l) in row.iter().zip(&lambda) {
            let joint = p * q;
            if joint > 0.0 {
                info += joint * (q / l).ln();
            }
        }
    }
    Ok(info.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrivacyAudit {
    pub ldp_eps: Leakage,
    pub lip_eps: Leakage,
    pub mip_nats: f64,
}

const AUDIT_SLACK: f64 = 1e-12;

fn le_with_slack(a: f64, b: f64) -> bool {
    a <= b + AUDIT_SLACK * b.abs().max(1.0)
}

impl PrivacyAudit {
    /// Checks `lip <= ldp <= 2 lip` and `mip <= lip`.
    pub fn check(&self) -> Result<()> {
        let fail = |what: &str| Err(Error::InternalInconsistency(format!("{what}: {self:?}")));
        match (self.lip_eps, self.ldp_eps) {
            (Leakage::Finite(lip), Leakage::Finite(ldp)) => {
                if !le_with_slack(lip, ldp) {
                    return fail("lip exceeds ldp");
                }
                if !le_with_slack(ldp, 2.0 * lip) {
                    return fail("ldp exceeds twice lip");
                }
            }
            (Leakage::Unbounded, Leakage::Finite(_)) => return fail("lip unbounded but ldp finite"),
            (Leakage::Finite(_), Leakage::Unbounded) => {
                // a zero-prior row can make ldp unbounded while lip stays finite
            }
            (Leakage::Unbounded, Leakage::Unbounded) => {}
        }
        if let Leakage::Finite(lip) = self.lip_eps {
            if !le_with_slack(self.mip_nats, lip) {
                return fail("mip exceeds lip");
            }
        }
        Ok(())
    }
}

/// Measures all three notions and verifies the relations among them.
pub fn audit(channel: &Channel, prior: &Prior) -> Result<PrivacyAudit> {
    let audit = PrivacyAudit {
        ldp_eps: measure_ldp(channel),
        lip_eps: measure_lip(channel, prior)?,
        mip_nats: measure_mip(channel, prior)?,
    };
    audit.check()?;
    Ok(audit)
}
