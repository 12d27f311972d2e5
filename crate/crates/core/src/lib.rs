//! Fairness-constrained empirical risk minimization under biased training
//! data: exact population analysis, recovery-region sweeps, interventions
//! and a reproducible Monte Carlo harness.

pub mod bias;
pub mod cli;
pub mod distribution;
pub mod error;
pub mod fairness;
pub mod format;
pub mod plot;
pub mod recovery;
pub mod simulate;
pub mod rng;
pub mod solver;
pub mod verify;

pub use bias::{apply_bias, region_masses, BiasParams, RegionMasses};
pub use distribution::{sample_true, Dataset, Group, LabeledExample, TrueModel};
pub use error::{LabError, Result};
pub use fairness::{ConstraintKind, Criterion};
pub use recovery::{check_conditions, recovery_region, ConditionReport, Verdict};
pub use solver::{
    exact_constrained_erm, grid_constrained_erm, shrink, DeviationParams, SolveReport,
    ThresholdPair,
};
