use serde::{Deserialize, Serialize};

use super::init::InitStrategy;
use crate::error::{FluError, Result};

/// How the drift of each dynamic phase is updated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftUpdate {
    /// Exact draw from the Gaussian full conditional truncated to the prior support.
    TruncatedGaussian,
    /// Gaussian random-walk Metropolis with step `mh_step_rho`.
    RandomWalk,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub seed: u64,
    pub mh_step_theta: f64,
    pub mh_step_psi: f64,
    pub mh_step_rho: f64,
    /// Robbins–Monro step-size adaptation during burn-in.
    pub adapt: bool,
    pub target_acceptance: f64,
    pub drift_update: DriftUpdate,
    pub init: InitStrategy,
    /// Smoothed growth magnitude above which a day starts out rising or declining.
    pub init_threshold: f64,
    /// Width of the centred window used to smooth growth for initialisation.
    pub init_window: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            burn_in: 500,
            thinning: 1,
            seed: 0,
            mh_step_theta: 0.5,
            mh_step_psi: 0.5,
            mh_step_rho: 0.5,
            adapt: true,
            target_acceptance: 0.35,
            drift_update: DriftUpdate::TruncatedGaussian,
            init: InitStrategy::Segmented,
            init_threshold: 0.1,
            init_window: 7,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(FluError::Config("iterations must be positive".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(FluError::Config(format!(
                "burn_in ({}) must be below iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.thinning == 0 {
            return Err(FluError::Config("thinning must be positive".into()));
        }
        for (name, v) in [
            ("mh_step_theta", self.mh_step_theta),
            ("mh_step_psi", self.mh_step_psi),
            ("mh_step_rho", self.mh_step_rho),
            ("init_threshold", self.init_threshold),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(FluError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(FluError::Config("target_acceptance must lie in (0, 1)".into()));
        }
        if self.init_window == 0 {
            return Err(FluError::Config("init_window must be positive".into()));
        }
        Ok(())
    }

    /// Number of states kept after burn-in and thinning.
    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in) / self.thinning
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn retained_count_arithmetic() {
        let c = ChainConfig { iterations: 1000, burn_in: 500, thinning: 5, ..Default::default() };
        assert_eq!(c.retained(), 100);
        let c = ChainConfig { iterations: 1000, burn_in: 500, thinning: 3, ..Default::default() };
        assert_eq!(c.retained(), 166);
    }

    #[test]
    fn validation() {
        assert!(ChainConfig::default().validate().is_ok());
        let bad = ChainConfig { burn_in: 1000, ..Default::default() };
        assert!(matches!(bad.validate(), Err(FluError::Config(_))));
        let bad = ChainConfig { mh_step_psi: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = ChainConfig { thinning: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn config_json_uses_defaults_for_missing_fields() {
        let c: ChainConfig = serde_json::from_str(r#"{"iterations": 50, "burn_in": 10, "drift_update": "random-walk"}"#).unwrap();
        assert_eq!(c.iterations, 50);
        assert_eq!(c.thinning, 1);
        assert_eq!(c.drift_update, DriftUpdate::RandomWalk);
        assert!(serde_json::from_str::<ChainConfig>(r#"{"iters": 5}"#).is_err());
    }
}
