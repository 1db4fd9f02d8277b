use serde::{Deserialize, Serialize};

use crate::error::{FluError, Result};
use crate::model::{
    observation_log_likelihood, DailyEffect, EpidemicDynamics, GrowthSeries, ModelState, ModelVariant, PhaseMatrix,
    RegionGraph, SquareMatrix, TransitionField,
};
use crate::sampler::ChainTrace;

/// Agreement between a predicted and a realised series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub correlation: f64,
    /// RMSE after standardising both series with the realised series' mean
    /// and standard deviation.
    pub rmse: f64,
    pub raw_rmse: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Pearson correlation and RMSE of `predicted` against `actual`.
pub fn evaluate(predicted: &[f64], actual: &[f64]) -> Result<Evaluation> {
    if predicted.len() != actual.len() || actual.is_empty() {
        return Err(FluError::invalid(format!(
            "series lengths {} and {} must match and be nonzero",
            predicted.len(),
            actual.len()
        )));
    }
    if predicted.iter().chain(actual).any(|v| !v.is_finite()) {
        return Err(FluError::invalid("series must be finite"));
    }
    let (mp, ma) = (mean(predicted), mean(actual));
    let (mut sxy, mut sxx, mut syy, mut sse) = (0.0, 0.0, 0.0, 0.0);
    for (&p, &a) in predicted.iter().zip(actual) {
        sxy += (p - mp) * (a - ma);
        sxx += (p - mp) * (p - mp);
        syy += (a - ma) * (a - ma);
        sse += (p - a) * (p - a);
    }
    if !(syy > 0.0) {
        return Err(FluError::Undefined("correlation against a constant series".into()));
    }
    if !(sxx > 0.0) {
        return Err(FluError::Undefined("correlation of a constant prediction".into()));
    }
    let n = actual.len() as f64;
    let sd = (syy / n).sqrt();
    let raw_rmse = (sse / n).sqrt();
    Ok(Evaluation { correlation: (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0), rmse: raw_rmse / sd, raw_rmse })
}

/// Deviance information criterion of one chain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DicReport {
    pub dic: f64,
    /// Posterior mean deviance.
    pub mean_deviance: f64,
    /// Deviance at the posterior mean parameters and modal phases.
    pub deviance_at_mean: f64,
    /// Effective number of parameters.
    pub p_d: f64,
}

/// Deviance `−2 (emission + phase pseudo-likelihood)` averaged over the
/// retained draws, plus the effective parameter count it implies.
pub fn compute_dic(
    trace: &ChainTrace,
    growth: &GrowthSeries,
    graph: &RegionGraph,
    variant: &ModelVariant,
) -> Result<DicReport> {
    if trace.samples.len() < 10 {
        return Err(FluError::invalid(format!("DIC needs at least 10 retained draws, got {}", trace.samples.len())));
    }
    let deviance = |s: &ModelState| observation_log_likelihood(s, growth, graph, variant).map(|l| -2.0 * l);
    let mut total = 0.0;
    for s in &trace.samples {
        total += deviance(s)?;
    }
    let mean_deviance = total / trace.samples.len() as f64;
    let deviance_at_mean = deviance(&posterior_point(&trace.samples, variant.phase_count()))?;
    let p_d = mean_deviance - deviance_at_mean;
    Ok(DicReport { dic: mean_deviance + p_d, mean_deviance, deviance_at_mean, p_d })
}

/// Posterior mean of every continuous parameter with each cell's most
/// frequent phase (lowest code on ties).
fn posterior_point(samples: &[ModelState], k: usize) -> ModelState {
    let first = &samples[0];
    let scale = 1.0 / samples.len() as f64;
    let avg = |f: &dyn Fn(&ModelState) -> f64| samples.iter().map(f).sum::<f64>() * scale;
    let (n, t) = (first.phases.n_regions(), first.phases.n_steps());
    let mut counts = vec![0u32; n * t * k];
    for s in samples {
        for (cell, &z) in s.phases.codes().iter().enumerate() {
            counts[cell * k + z as usize] += 1;
        }
    }
    let mut phases = PhaseMatrix::filled(n, t, crate::model::Phase::NE);
    for (cell, code) in phases.codes_mut().iter_mut().enumerate() {
        let c = &counts[cell * k..(cell + 1) * k];
        *code = (0..k).fold(0, |best, z| if c[z] > c[best] { z } else { best }) as u8;
    }
    let matrix = |get: &dyn Fn(&ModelState) -> &SquareMatrix| {
        let d = get(first).dim();
        let mut m = SquareMatrix::zeros(d);
        for a in 0..d {
            for b in 0..d {
                m.set(a, b, avg(&|s| get(s).get(a, b)));
            }
        }
        m
    };
    let slots = first.dynamics.drift.len();
    ModelState {
        phases,
        daily: DailyEffect {
            means: std::array::from_fn(|d| avg(&|s| s.daily.means[d])),
            variances: std::array::from_fn(|d| avg(&|s| s.daily.variances[d])),
        },
        transitions: TransitionField::new(matrix(&|s| &s.transitions.temporal), matrix(&|s| &s.transitions.spatial))
            .with_initial(first.transitions.initial.clone()),
        dynamics: EpidemicDynamics {
            drift: (0..slots).map(|z| avg(&|s| s.dynamics.drift[z])).collect(),
            variance: (0..slots).map(|z| avg(&|s| s.dynamics.variance[z])).collect(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_series() {
        let x = [1.0, 4.0, 2.0, 8.0];
        let e = evaluate(&x, &x).unwrap();
        assert!((e.correlation - 1.0).abs() < 1e-12 && e.rmse == 0.0);
        let neg: Vec<f64> = [-1.0, 2.0, -3.0, 2.0].iter().map(|v: &f64| -v).collect();
        assert!((evaluate(&neg, &[-1.0, 2.0, -3.0, 2.0]).unwrap().correlation + 1.0).abs() < 1e-12);
    }

    #[test]
    fn four_point_hand_computation() {
        let (p, a) = ([1.0, 2.0, 3.0, 5.0], [2.0, 1.0, 4.0, 5.0]);
        // means 2.75 and 3; deviations (-1.75,-0.75,0.25,2.25) and (-1,-2,1,2)
        let sxy = 1.75 + 1.5 + 0.25 + 4.5;
        let sxx = 1.75f64.powi(2) + 0.75f64.powi(2) + 0.25f64.powi(2) + 2.25f64.powi(2);
        let syy = 10.0;
        let e = evaluate(&p, &a).unwrap();
        assert!((e.correlation - sxy / (sxx * syy).sqrt()).abs() < 1e-12);
        let raw = ((1.0 + 1.0 + 1.0 + 0.0) / 4.0f64).sqrt();
        assert!((e.raw_rmse - raw).abs() < 1e-12);
        assert!((e.rmse - raw / (syy / 4.0f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn constant_actual_is_undefined() {
        assert!(matches!(evaluate(&[1.0, 2.0], &[3.0, 3.0]), Err(FluError::Undefined(_))));
        assert!(evaluate(&[1.0], &[1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn self_evaluation_is_perfect(x in proptest::collection::vec(-100.0f64..100.0, 3..30)) {
            prop_assume!(x.iter().any(|v| (v - x[0]).abs() > 1e-6));
            let e = evaluate(&x, &x).unwrap();
            prop_assert!((e.correlation - 1.0).abs() < 1e-9);
            prop_assert_eq!(e.rmse, 0.0);
        }

        #[test]
        fn correlation_ignores_positive_affine_maps(
            x in proptest::collection::vec(-100.0f64..100.0, 3..30),
            seed in 0u64..1000,
            scale in 0.01f64..100.0,
            shift in -1000.0f64..1000.0,
        ) {
            let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v + ((i as u64 * 7919 + seed) % 97) as f64).collect();
            prop_assume!(x.iter().any(|v| (v - x[0]).abs() > 1e-3));
            prop_assume!(y.iter().any(|v| (v - y[0]).abs() > 1e-3));
            let r = evaluate(&x, &y).unwrap().correlation;
            let mapped: Vec<f64> = x.iter().map(|v| scale * v + shift).collect();
            prop_assert!((evaluate(&mapped, &y).unwrap().correlation - r).abs() < 1e-8);
            let mapped_y: Vec<f64> = y.iter().map(|v| scale * v + shift).collect();
            prop_assert!((evaluate(&x, &mapped_y).unwrap().correlation - r).abs() < 1e-8);
        }
    }
}
