//! Offline continuous-time q-learning.
//!
//! The value function and q-function are parameterised in exact form,
//! `J^ξ(y) = ln(1+y) + ξ` and a quadratic `q^ψ`, and learned from simulated
//! episodes by stochastic approximation on the martingale orthogonality
//! conditions.

mod diagnostics;
mod params;
mod schedule;
mod train;
mod update;

pub use diagnostics::{
    convergence_study, orthogonality_stats, orthogonality_study, statistic_labels, OrthogonalityStats, StudyConfig,
    StudyResult,
};
pub use params::{PolicyParams, PolicyRecord, QGradient};
pub use schedule::{PowerDecay, Rates, Regime, Schedule};
pub use train::{resume, train, LearnConfig, Snapshot, TrainHistory, TrainSummary};
pub use update::{episode_statistic, td_residual, update, UpdateOutcome, UpdateRule};
