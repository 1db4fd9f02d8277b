//! One-step-ahead prediction, regression baselines and evaluation metrics.

mod metrics;
mod regression;

pub use metrics::{compute_dic, evaluate, DicReport, Evaluation};
pub use regression::{fit_ar, fit_ili_map, forecast_ar, weekly_totals, ArModel, IliMap, WeeklyTotal, AR_ORDER};

use chrono::{Days, NaiveDate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detection::{advance, FilterConfig};
use crate::error::{FluError, Result};
use crate::model::density::{sample_categorical, softmax_in_place};
use crate::model::{
    apply_growth, compute_growth, day_code, effective_graph, emission_moments, phase_logits, HyperPriors,
    ModelState, ModelVariant, ObservationPanel, RegionGraph, GROWTH_FLOOR, MAX_PHASES,
};
use crate::sampler::{ChainConfig, ChainTrace, Sampler};

/// Gibbs passes over the next day's phases per posterior draw; only the last
/// one is averaged.
const NEXT_DAY_PASSES: usize = 3;

/// Prediction for one region on the day after the data ends.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub region: String,
    /// Panel day index being predicted.
    pub day: usize,
    pub date: NaiveDate,
    /// Next-day phase distribution.
    pub probs: Vec<f64>,
    /// Posterior mean growth from the last observed count.
    pub expected_growth: f64,
    pub predicted: f64,
    /// Realised count, when the panel covers the predicted day.
    pub actual: Option<u64>,
}

/// Next-day phase distribution and mean growth of every region, averaged over
/// the retained draws of `trace`.
///
/// Each draw's last phases are pushed one step through the local conditional;
/// bordering regions' next-day phases are themselves drawn, so the spatial
/// term is averaged over them.
pub fn next_day_predictive(
    trace: &ChainTrace,
    graph: &RegionGraph,
    next_day: u8,
    seed: u64,
) -> Result<Vec<(Vec<f64>, f64)>> {
    if trace.samples.is_empty() {
        return Err(FluError::invalid("trace retains no samples"));
    }
    if !(1..=7).contains(&next_day) {
        return Err(FluError::invalid(format!("day-of-week {next_day} outside 1..=7")));
    }
    let variant = trace.variant;
    let graph = effective_graph(&variant, graph);
    let k = variant.phase_count();
    let n = trace.samples[0].phases.n_regions();
    if graph.n_regions() != n {
        return Err(FluError::invalid(format!("graph has {} regions, trace has {n}", graph.n_regions())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probs = vec![vec![0.0; k]; n];
    let mut growth = vec![0.0; n];
    let mut logits = [0.0; MAX_PHASES];
    for s in &trace.samples {
        let last = s.phases.n_steps() - 1;
        let mut next: Vec<usize> = (0..n).map(|i| s.phases.get(i, last)).collect();
        for pass in 0..NEXT_DAY_PASSES {
            for i in 0..n {
                let mut counts = [0u16; MAX_PHASES];
                for &j in graph.neighbors(i) {
                    counts[next[j]] += 1;
                }
                let p = &mut logits[..k];
                phase_logits(Some(s.phases.get(i, last)), None, &counts, &s.transitions, p);
                softmax_in_place(p);
                if pass + 1 == NEXT_DAY_PASSES {
                    for z in 0..k {
                        probs[i][z] += p[z];
                        growth[i] += p[z] * mean_growth(s, z, next_day, &variant);
                    }
                }
                next[i] = sample_categorical(&mut rng, p);
            }
        }
    }
    let scale = 1.0 / trace.samples.len() as f64;
    Ok(probs
        .into_iter()
        .zip(growth)
        .map(|(p, g)| (p.into_iter().map(|x| x * scale).collect(), g * scale))
        .collect())
}

fn mean_growth(state: &ModelState, z: usize, day: u8, variant: &ModelVariant) -> f64 {
    emission_moments(z, day, &state.daily, &state.dynamics, variant).0
}

/// Count after applying mean growth to the last count, floored at zero.
pub fn next_count(last: f64, expected_growth: f64) -> f64 {
    apply_growth(last, expected_growth, GROWTH_FLOOR).max(0.0)
}

fn records(
    panel: &ObservationPanel,
    last_day: usize,
    predictive: Vec<(Vec<f64>, f64)>,
) -> Vec<ForecastRecord> {
    let date = panel.dates()[last_day] + Days::new(1);
    predictive
        .into_iter()
        .enumerate()
        .map(|(i, (probs, g))| ForecastRecord {
            region: panel.region_ids()[i].clone(),
            day: last_day + 1,
            date,
            probs,
            expected_growth: g,
            predicted: next_count(panel.count(i, last_day) as f64, g),
            actual: (last_day + 1 < panel.n_days()).then(|| panel.count(i, last_day + 1)),
        })
        .collect()
}

fn predictive_seed(chain_seed: u64, day: usize) -> u64 {
    chain_seed.wrapping_add(day as u64) ^ 0x9e37_79b9_7f4a_7c15
}

/// Fit one chain to the whole panel and predict the following day.
pub fn predict_next(
    panel: &ObservationPanel,
    graph: &RegionGraph,
    hyper: &HyperPriors,
    variant: &ModelVariant,
    config: &ChainConfig,
) -> Result<Vec<ForecastRecord>> {
    if panel.n_days() < 2 {
        return Err(FluError::invalid("prediction needs at least two days of counts"));
    }
    let growth = compute_growth(panel, GROWTH_FLOOR)?;
    let trace = Sampler::new(&growth, graph, hyper, variant, config)?.run()?;
    let last = panel.n_days() - 1;
    let next = day_code(panel.dates()[last] + Days::new(1));
    let predictive = next_day_predictive(&trace, graph, next, predictive_seed(config.seed, last))?;
    Ok(records(panel, last, predictive))
}

/// Rolling one-step forecasts: for every day `d` from `first` to the last,
/// predict day `d + 1` from counts up to `d`; the final origin forecasts the
/// day after the panel ends. The chain is started cold on `first` and
/// warm-started on each later day, as in the filter.
pub fn rolling_forecast(
    panel: &ObservationPanel,
    graph: &RegionGraph,
    hyper: &HyperPriors,
    variant: &ModelVariant,
    config: &FilterConfig,
    first: usize,
) -> Result<Vec<Vec<ForecastRecord>>> {
    config.validate()?;
    if first == 0 || first >= panel.n_days() {
        return Err(FluError::invalid(format!("first forecast origin {first} outside 1..{}", panel.n_days())));
    }
    let mut out = Vec::with_capacity(panel.n_days() - first);
    let mut warm = None;
    for day in first..panel.n_days() {
        let (_, trace, next) = advance(panel, day, graph, hyper, variant, config, warm)?;
        let code = day_code(panel.dates()[day] + Days::new(1));
        let predictive = next_day_predictive(&trace, graph, code, predictive_seed(config.chain.seed, day))?;
        out.push(records(panel, day, predictive));
        warm = Some(next);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DailyEffect, EpidemicDynamics, PhaseMatrix, SquareMatrix, TransitionField};
    use crate::sampler::{AcceptanceCounts, PhaseMarginals};

    fn trace_of(states: Vec<ModelState>, variant: ModelVariant) -> ChainTrace {
        let (n, t) = (states[0].phases.n_regions(), states[0].phases.n_steps());
        ChainTrace {
            variant,
            config: ChainConfig::default(),
            samples: states,
            accept_counts: AcceptanceCounts::default(),
            log_density_trace: vec![],
            phase_marginals: PhaseMarginals::zeros(n, t, variant.phase_count()),
            step_sizes: [0.0; 3],
        }
    }

    fn state(phases: Vec<Vec<u8>>, temporal: SquareMatrix, drift_re: f64) -> ModelState {
        ModelState {
            phases: PhaseMatrix::from_rows(&phases).unwrap(),
            daily: DailyEffect::white_noise(0.1),
            transitions: TransitionField::new(temporal, SquareMatrix::zeros(4)),
            dynamics: EpidemicDynamics { drift: vec![drift_re, -0.5], variance: vec![0.2, 0.2] },
        }
    }

    #[test]
    fn certain_ne_keeps_the_count() {
        let mut theta = SquareMatrix::filled(4, -60.0);
        theta.set(0, 0, 0.0);
        let tr = trace_of(vec![state(vec![vec![0, 0]], theta, 0.5)], ModelVariant::TIME_HMM);
        let p = next_day_predictive(&tr, &RegionGraph::edgeless(1), 3, 1).unwrap();
        assert!((p[0].0[0] - 1.0).abs() < 1e-12);
        assert!(p[0].1.abs() < 1e-12);
        assert_eq!(next_count(100.0, p[0].1), 100.0);
    }

    #[test]
    fn certain_re_applies_its_drift() {
        let mut theta = SquareMatrix::filled(4, -60.0);
        theta.set(1, 1, 0.0);
        let tr = trace_of(vec![state(vec![vec![0, 1]], theta, 0.5)], ModelVariant::TIME_HMM);
        let p = next_day_predictive(&tr, &RegionGraph::edgeless(1), 3, 1).unwrap();
        assert!((p[0].0[1] - 1.0).abs() < 1e-12);
        assert!((next_count(100.0, p[0].1) - 150.0).abs() < 1e-9);
    }

    #[test]
    fn predictive_rows_are_distributions() {
        let theta = SquareMatrix::from_rows(&[
            &[1.0, 0.2, -1.0, 0.0],
            &[0.0, 1.0, 0.5, -2.0],
            &[0.3, 0.0, 1.0, 0.1],
            &[0.4, -0.3, 0.0, 1.0],
        ])
        .unwrap();
        let mut s = state(vec![vec![0, 1, 2], vec![3, 3, 1]], theta, 0.7);
        s.transitions.spatial = SquareMatrix::identity(4);
        let tr = trace_of(vec![s.clone(), s], ModelVariant::FLU_MN);
        let graph = RegionGraph::from_edges(2, &[(0, 1)]).unwrap();
        for (p, _) in next_day_predictive(&tr, &graph, 5, 9).unwrap() {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn clamps_collapse_to_zero() {
        assert_eq!(next_count(10.0, -3.0), 0.0);
    }
}
