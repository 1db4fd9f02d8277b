//! Gibbs sampling with Metropolis steps for the interaction weights.

mod chain;
mod config;
mod diagnostics;
mod init;
mod summary;
pub mod sweeps;

pub use chain::{
    fixed_parameter_marginals, reduced_variant, run_chain, run_chain_on_growth, AcceptanceCounts, AcceptanceTally,
    ChainTrace, PhaseMarginals, Sampler,
};
pub use config::{ChainConfig, DriftUpdate};
pub use diagnostics::{chain_diagnostics, effective_sample_size, BlockDiagnostic, ChainDiagnostics, HEALTHY_ACCEPTANCE};
pub use init::{init_state, segment_phases, transition_log_frequencies, InitStrategy};
pub use summary::{quantile, Interval, PosteriorSummary};
pub use sweeps::{
    daily_mean_posterior, drift_conditional, epidemic_variance_posterior, sweep_daily_mean, sweep_daily_variance,
    sweep_drift, sweep_epidemic_variance, sweep_phases, sweep_transition_fields, Adaptation,
    MhBlock, MhState,
};
