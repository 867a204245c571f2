//! Empirical null estimation for genome-scale confidence levels.
//!
//! The crate turns replicate measurements into one-sided confidence levels,
//! estimates the null distribution of their normal-quantile transforms by
//! truncated-normal maximum likelihood, adjusts levels under that null,
//! makes screening decisions that minimize a non-additive expected loss,
//! scores whether conditioning on the estimated null is worthwhile, and
//! runs the precision-mixture simulation used to study all of the above.

pub mod benefit;
pub mod dist;
pub mod error;
pub mod io;
pub mod levels;
pub mod nullmodel;
mod optim;
pub mod rng;
pub mod screening;
pub mod simstudy;

pub use benefit::{benefit_curve, denull, renyi_half, BenefitCurve, DenullMode};
pub use error::{Error, ErrorKind, Result};
pub use levels::{complement, levels_from_table, ConfidenceVector, Exclusion, FeatureLevel, FeatureTable, LogBase};
pub use nullmodel::{
    adjust_level, adjust_vector, fit_null, fit_null_detailed, NullFit, NullModel, Provenance,
    DEFAULT_CENTER_FRACTION,
};
pub use rng::CounterRng;
pub use screening::{
    brute_force_decisions, expected_loss, optimize_decisions, Action, DecisionReport, LossParams,
};
pub use simstudy::{
    conservatism, generate_trial, marginalize_levels, run_study, true_conditional_levels,
    NullMode, PrecisionPrior, StudyConfig, StudyOutcome, StudySummary, TrialResult, TruthMode,
};

/// Seed used whenever the caller does not supply one.
pub const DEFAULT_SEED: u64 = 20_110_417;
