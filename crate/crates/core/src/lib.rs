//! Unsupervised four-phase spatio-temporal Markov network for daily count
//! surveillance.
//!
//! Each region's relative day-over-day growth is explained by a latent phase
//! (non-epidemic, rising, stationary, declining). Phases are coupled in time
//! through `Θ` and across bordering regions through `Ψ`; a weekly daily effect
//! shapes the growth of static phases and adds to the drift of the rising and
//! declining ones. Inference is Gibbs sampling with Metropolis–Hastings steps
//! for the interaction weights.
//!
//! Modules:
//! - [`model`]: data types, densities, phase conditionals and joint density
//! - [`sampler`]: chain initialisation, sweeps, traces and diagnostics
//! - [`detection`]: causal filtering, alarms and lead times
//! - [`forecast`]: next-day prediction, AR and log-log baselines, metrics, DIC
//! - [`synthetic`]: generative simulation and exact enumeration oracles
//! - [`cli`]: file formats, configuration and command implementations

pub mod cli;
pub mod detection;
mod error;
pub mod forecast;
pub mod model;
pub mod sampler;
pub mod synthetic;

pub use error::{FluError, Result};
