use serde::{Deserialize, Serialize};

use super::chain::{AcceptanceTally, ChainTrace};
use crate::error::{FluError, Result};

/// Acceptance band outside which a Metropolis block is flagged.
pub const HEALTHY_ACCEPTANCE: (f64, f64) = (0.15, 0.6);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockDiagnostic {
    pub block: String,
    pub proposals: u64,
    pub rate: Option<f64>,
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub blocks: Vec<BlockDiagnostic>,
    pub retained: usize,
    pub log_density_ess: f64,
    pub log_density_min: f64,
    pub log_density_max: f64,
}

fn block(name: &str, t: AcceptanceTally) -> BlockDiagnostic {
    let rate = t.rate();
    let flagged = rate.is_some_and(|r| r < HEALTHY_ACCEPTANCE.0 || r > HEALTHY_ACCEPTANCE.1);
    BlockDiagnostic { block: name.to_string(), proposals: t.proposals, rate, flagged }
}

/// Post-burn-in acceptance per block and mixing of the retained log density.
/// Blocks that made no proposals report no rate and are never flagged.
pub fn chain_diagnostics(trace: &ChainTrace) -> Result<ChainDiagnostics> {
    let ld = trace.retained_log_density();
    if ld.is_empty() {
        return Err(FluError::invalid("trace retains no iterations"));
    }
    let a = trace.accept_counts;
    Ok(ChainDiagnostics {
        blocks: vec![block("theta", a.theta), block("psi", a.psi), block("drift", a.drift)],
        retained: ld.len(),
        log_density_ess: effective_sample_size(&ld),
        log_density_min: ld.iter().copied().fold(f64::INFINITY, f64::min),
        log_density_max: ld.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Effective sample size from the initial monotone positive sequence of
/// autocorrelation pair sums. A constant series counts every draw.
pub fn effective_sample_size(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 3 {
        return n as f64;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let c0 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    if !(c0 > 0.0) {
        return n as f64;
    }
    let rho = |lag: usize| -> f64 {
        (0..n - lag).map(|t| (xs[t] - mean) * (xs[t + lag] - mean)).sum::<f64>() / n as f64 / c0
    };
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut m = 0;
    while 2 * m + 1 < n {
        let pair = rho(2 * m) + rho(2 * m + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        m += 1;
    }
    n as f64 / tau.max(1.0 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn constant_trace_counts_every_draw() {
        assert_eq!(effective_sample_size(&[2.5; 400]), 400.0);
    }

    #[test]
    fn ar1_ess_near_analytic_value() {
        let phi: f64 = 0.5;
        let n = 20_000;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut xs = Vec::with_capacity(n);
        let mut x = 0.0;
        for _ in 0..n {
            let e: f64 = StandardNormal.sample(&mut rng);
            x = phi * x + e;
            xs.push(x);
        }
        let expected = n as f64 * (1.0 - phi) / (1.0 + phi);
        let ess = effective_sample_size(&xs);
        assert!((ess / expected - 1.0).abs() < 0.2, "ess {ess} vs {expected}");
    }

    #[test]
    fn flag_band() {
        let all = AcceptanceTally { proposals: 10, accepted: 10 };
        assert!(block("theta", all).flagged);
        let ok = AcceptanceTally { proposals: 10, accepted: 3 };
        assert!(!block("theta", ok).flagged);
        assert!(!block("psi", AcceptanceTally::default()).flagged);
    }
}
