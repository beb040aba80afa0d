//! Context-aware perturbation mechanisms under localized information
//! privacy, MMSE aggregation, privacy auditing and tradeoff analysis.

pub mod analysis;
pub mod cip;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod mechanisms;
pub mod notions;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    output_distribution, validate_channel, AggregationTask, Channel, Domain, Population, Prior, PrivacyBudget, User,
};
