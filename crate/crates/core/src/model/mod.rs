//! Domain types, densities and likelihood terms shared by every other module.

pub mod density;
mod graph;
mod likelihood;
mod panel;
mod params;
mod phase;

pub use graph::RegionGraph;
pub use likelihood::{
    effective_graph, emission_logpdf, emission_moments, joint_log_density, log_emission, log_prior,
    log_pseudo_likelihood, observation_log_likelihood, phase_conditional, phase_logits, field_energy, ContextTable,
    MAX_PHASES,
};
pub(crate) use likelihood::{emission_ln, neighbor_counts, temporal_context};
pub use panel::{apply_growth, compute_growth, day_code, GrowthSeries, ObservationPanel};
pub use params::{
    default_daily_centers, DailyEffect, EpidemicDynamics, HyperPriors, ModelState, ModelVariant, PhaseMatrix,
    SquareMatrix, TransitionField,
};
pub use phase::{Phase, PhaseKind, PhaseScheme};

/// Smoothing floor applied to the previous count when computing growth.
pub const GROWTH_FLOOR: f64 = 1.0;
