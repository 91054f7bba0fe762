//! Likelihood-free Bayesian inference for partially observed stochastic
//! reaction networks.
//!
//! The crate provides exact (Gillespie) and approximate (tau-leaping)
//! simulation of chemical reaction networks, ABC rejection sampling, and
//! three accelerations that it composes: a multilevel telescoping
//! estimator over a decreasing threshold sequence (`mlmc`), multifidelity
//! weighting with tuned continuation probabilities (`mf`), and the
//! combination of both (`mfmlmc`). A benchmark harness (`bench`) measures
//! cost-versus-variance convergence rates across the methods.

pub mod abc;
pub mod bench;
pub mod config;
pub mod ecdf;
pub mod error;
pub mod io;
pub mod mf;
pub mod mfmlmc;
pub mod mlmc;
pub mod models;
pub mod network;
pub mod rng;
mod sampler;
pub mod sim;

pub use abc::{
    abc_rejection, discrepancy, rejection_prior_draws, weighted_estimate, AbcProblem,
    EstimatorReport, Prior, TargetFn, WeightedSample,
};
pub use error::{Error, Result};
pub use mf::{
    bias_mse_diagnostic, mf_abc, mf_weight, optimal_continuation, phi, phi_gradient,
    ContinuationProbs, EtaMode, FidelityPair, RocCostSummary, TunerConfig,
};
pub use mfmlmc::{mf_mlmc_abc, mf_optimal_allocation, mfmlmc_pipeline, tune_tau_sequence, LevelPlan};
pub use mlmc::{
    couple_down, estimate_level_stats, mlmc_abc, mlmc_pipeline, optimal_allocation,
    AllocationTarget, LevelBudget, ThresholdSchedule,
};
pub use models::{build_benchmark, Benchmark, BenchmarkId, Scale, CANONICAL_DATA_SEED};
pub use rng::RngStream;
pub use sim::{observe, simulate_exact, simulate_tau_leap, CostModel, ObservationModel, Trajectory};
