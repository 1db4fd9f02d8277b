use serde::{Deserialize, Serialize};

use super::chain::{AcceptanceCounts, ChainTrace, PhaseMarginals};
use crate::error::{FluError, Result};
use crate::model::ModelState;

/// Posterior mean, standard deviation and central 95% interval of one scalar.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn from_draws(draws: &[f64]) -> Result<Self> {
        if draws.is_empty() {
            return Err(FluError::invalid("no draws to summarise"));
        }
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let var = if draws.len() > 1 {
            draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let mut sorted = draws.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { mean, sd: var.sqrt(), lower: quantile(&sorted, 0.025), upper: quantile(&sorted, 0.975) })
    }

    pub fn covers(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub variant: String,
    pub retained: usize,
    pub daily_means: Vec<Interval>,
    pub daily_variances: Vec<Interval>,
    pub temporal: Vec<Vec<Interval>>,
    pub spatial: Vec<Vec<Interval>>,
    pub drift: Vec<Interval>,
    pub epidemic_variance: Vec<Interval>,
    pub acceptance: AcceptanceCounts,
    pub phase_marginals: PhaseMarginals,
}

fn summarise(samples: &[ModelState], f: impl Fn(&ModelState) -> f64) -> Result<Interval> {
    Interval::from_draws(&samples.iter().map(f).collect::<Vec<_>>())
}

impl PosteriorSummary {
    pub fn from_trace(trace: &ChainTrace) -> Result<Self> {
        let s = &trace.samples;
        let first = s.first().ok_or_else(|| FluError::invalid("trace retains no samples"))?;
        let k = first.transitions.dim();
        let slots = first.dynamics.drift.len();
        let per_day = |f: fn(&ModelState, usize) -> f64| -> Result<Vec<Interval>> {
            (0..7).map(|d| summarise(s, |x| f(x, d))).collect()
        };
        let matrix = |spatial: bool| -> Result<Vec<Vec<Interval>>> {
            (0..k)
                .map(|a| {
                    (0..k)
                        .map(|b| {
                            summarise(s, |x| {
                                let m = if spatial { &x.transitions.spatial } else { &x.transitions.temporal };
                                m.get(a, b)
                            })
                        })
                        .collect()
                })
                .collect()
        };
        Ok(Self {
            variant: trace.variant.name().to_string(),
            retained: s.len(),
            daily_means: per_day(|x, d| x.daily.means[d])?,
            daily_variances: per_day(|x, d| x.daily.variances[d])?,
            temporal: matrix(false)?,
            spatial: matrix(true)?,
            drift: (0..slots).map(|z| summarise(s, |x| x.dynamics.drift[z])).collect::<Result<_>>()?,
            epidemic_variance: (0..slots).map(|z| summarise(s, |x| x.dynamics.variance[z])).collect::<Result<_>>()?,
            acceptance: trace.accept_counts,
            phase_marginals: trace.phase_marginals.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_of_uniform_grid() {
        let xs: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
        let iv = Interval::from_draws(&xs).unwrap();
        assert!((iv.mean - 0.5).abs() < 1e-12);
        assert!((iv.lower - 0.025).abs() < 1e-12);
        assert!((iv.upper - 0.975).abs() < 1e-12);
        assert!(iv.covers(0.5) && !iv.covers(0.99));
    }

    #[test]
    fn single_draw_interval_is_a_point() {
        let iv = Interval::from_draws(&[3.0]).unwrap();
        assert_eq!((iv.lower, iv.mean, iv.upper, iv.sd), (3.0, 3.0, 3.0, 0.0));
        assert!(Interval::from_draws(&[]).is_err());
    }
}
