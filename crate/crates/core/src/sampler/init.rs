use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sweeps::{sweep_daily_mean, sweep_daily_variance, sweep_drift, sweep_epidemic_variance, MhState};
use super::ChainConfig;
use crate::error::{FluError, Result};
use crate::model::density::{sample_normal, ScaledInvChiSquared};
use crate::model::{
    DailyEffect, EpidemicDynamics, GrowthSeries, HyperPriors, ModelState, ModelVariant, Phase, PhaseMatrix,
    PhaseScheme, RegionGraph, SquareMatrix, TransitionField,
};

/// Starting point of a chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitStrategy {
    /// Every phase NE, weights zero, parameters drawn from their priors.
    Flat,
    /// Phases from a smoothed-growth segmentation, temporal weights from its
    /// transition frequencies, parameters drawn given those phases.
    Segmented,
}

fn check_shapes(growth: &GrowthSeries, graph: &RegionGraph, hyper: &HyperPriors) -> Result<()> {
    if graph.n_regions() != growth.n_regions() {
        return Err(FluError::invalid(format!(
            "graph has {} regions, growth has {}",
            graph.n_regions(),
            growth.n_regions()
        )));
    }
    hyper.validate()
}

/// Draw every continuous parameter from its prior with phases all NE and
/// zero interaction weights.
pub fn init_state(
    growth: &GrowthSeries,
    graph: &RegionGraph,
    hyper: &HyperPriors,
    variant: &ModelVariant,
    rng_seed: u64,
) -> Result<ModelState> {
    check_shapes(growth, graph, hyper)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    Ok(prior_state(growth, hyper, variant, &mut rng))
}

pub(crate) fn prior_state<R: Rng + ?Sized>(
    growth: &GrowthSeries,
    hyper: &HyperPriors,
    variant: &ModelVariant,
    rng: &mut R,
) -> ModelState {
    let k = variant.phase_count();
    let daily = if variant.daily_effect {
        let mut d = DailyEffect::white_noise(1.0);
        for day in 0..7 {
            d.means[day] = sample_normal(rng, hyper.daily_mean_center[day], hyper.daily_mean_var[day]);
            d.variances[day] = ScaledInvChiSquared::new(hyper.daily_var_dof[day], hyper.daily_var_scale[day]).sample(rng);
        }
        d
    } else {
        DailyEffect::white_noise(ScaledInvChiSquared::new(hyper.static_var_dof, hyper.static_var_scale).sample(rng))
    };
    let slots = variant.scheme.dynamic_count();
    let mut dynamics = EpidemicDynamics { drift: Vec::with_capacity(slots), variance: Vec::with_capacity(slots) };
    for slot in 0..slots {
        let (lo, hi) = variant.scheme.drift_support(slot);
        let u: f64 = rng.random();
        dynamics.drift.push((lo + u * (hi - lo)).clamp(lo.next_up(), hi.next_down()));
        let (dof, scale) = hyper.epidemic_prior(slot);
        dynamics.variance.push(ScaledInvChiSquared::new(dof, scale).sample(rng));
    }
    ModelState {
        phases: PhaseMatrix::filled(growth.n_regions(), growth.n_steps(), Phase::NE),
        daily,
        transitions: TransitionField::zeros(k).with_initial(hyper.initial_weights(k)),
        dynamics,
    }
}

/// Centred moving average; the window shrinks at the ends.
fn centred_average(xs: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..xs.len())
        .map(|t| {
            let lo = t.saturating_sub(half);
            let hi = (t + half + 1).min(xs.len());
            xs[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Label each cell from the smoothed de-weekended growth: clearly positive is
/// rising, clearly negative is declining, and a flat stretch is stationary if
/// it follows a rise and non-epidemic otherwise.
pub fn segment_phases(
    growth: &GrowthSeries,
    centers: &[f64; 7],
    variant: &ModelVariant,
    threshold: f64,
    window: usize,
) -> PhaseMatrix {
    let mut phases = PhaseMatrix::filled(growth.n_regions(), growth.n_steps(), Phase::NE);
    for i in 0..growth.n_regions() {
        let adjusted: Vec<f64> = (0..growth.n_steps())
            .map(|t| {
                let w = if variant.daily_effect { centers[growth.day(t) as usize - 1] } else { 0.0 };
                growth.get(i, t) - w
            })
            .collect();
        let smooth = centred_average(&adjusted, window);
        let mut after_rise = false;
        for (t, &s) in smooth.iter().enumerate() {
            let z = match variant.scheme {
                PhaseScheme::Four => {
                    if s > threshold {
                        after_rise = true;
                        Phase::RE
                    } else if s < -threshold {
                        after_rise = false;
                        Phase::DE
                    } else if after_rise {
                        Phase::SE
                    } else {
                        Phase::NE
                    }
                }
                PhaseScheme::Two => {
                    if s.abs() > threshold {
                        after_rise = s > 0.0;
                        Phase::E
                    } else if after_rise {
                        Phase::E
                    } else {
                        Phase::NE
                    }
                }
            };
            phases.set(i, t, z.index());
        }
    }
    phases
}

/// Log of add-one smoothed transition frequencies, floored at -5.
pub fn transition_log_frequencies(phases: &PhaseMatrix, k: usize) -> SquareMatrix {
    let mut counts = SquareMatrix::zeros(k);
    for i in 0..phases.n_regions() {
        for t in 1..phases.n_steps() {
            let (a, b) = (phases.get(i, t - 1), phases.get(i, t));
            counts.set(a, b, counts.get(a, b) + 1.0);
        }
    }
    let mut out = SquareMatrix::zeros(k);
    for a in 0..k {
        let row: f64 = (0..k).map(|b| counts.get(a, b)).sum();
        for b in 0..k {
            out.set(a, b, ((counts.get(a, b) + 1.0) / (row + k as f64)).ln().max(-5.0));
        }
    }
    out
}

/// Initial state for a chain according to `config.init`, consuming `rng`.
pub(crate) fn initial_state<R: Rng + ?Sized>(
    growth: &GrowthSeries,
    hyper: &HyperPriors,
    variant: &ModelVariant,
    config: &ChainConfig,
    rng: &mut R,
) -> ModelState {
    let mut state = prior_state(growth, hyper, variant, rng);
    if config.init == InitStrategy::Segmented {
        state.phases =
            segment_phases(growth, &hyper.daily_mean_center, variant, config.init_threshold, config.init_window);
        state.transitions.temporal = transition_log_frequencies(&state.phases, variant.phase_count());
        let mut mh = MhState::from_config(config);
        // conditional pass so the continuous parameters agree with the phases
        sweep_daily_mean(&mut state, growth, hyper, variant, rng);
        sweep_daily_variance(&mut state, growth, hyper, variant, rng);
        sweep_epidemic_variance(&mut state, growth, hyper, variant, rng);
        sweep_drift(&mut state, growth, variant, config, &mut mh, None, rng);
    }
    state
}

#[cfg(test)]
mod tests {
    use super::*;

    fn growth(rows: Vec<Vec<f64>>) -> GrowthSeries {
        let n = rows[0].len();
        GrowthSeries::new(rows, (0..n).map(|t| (t % 7) as u8 + 1).collect()).unwrap()
    }

    #[test]
    fn same_seed_same_state() {
        let g = growth(vec![vec![0.1, -0.2, 0.0, 0.3]; 3]);
        let graph = RegionGraph::chain(3);
        let h = HyperPriors::default();
        let a = init_state(&g, &graph, &h, &ModelVariant::FLU_MN, 11).unwrap();
        let b = init_state(&g, &graph, &h, &ModelVariant::FLU_MN, 11).unwrap();
        assert_eq!(a, b);
        let c = init_state(&g, &graph, &h, &ModelVariant::FLU_MN, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn prior_state_is_valid_for_every_variant() {
        let g = growth(vec![vec![0.1, -0.2, 0.0, 0.3, 0.2]; 2]);
        let graph = RegionGraph::chain(2);
        for v in [ModelVariant::FLU_MN, ModelVariant::TIME_HMM, ModelVariant::TWO_PHASE, ModelVariant::FLU_MN_R] {
            for seed in 0..20 {
                let s = init_state(&g, &graph, &HyperPriors::default(), &v, seed).unwrap();
                s.validate(&v, 2, 5).unwrap();
                assert!(s.phases.codes().iter().all(|&z| z == 0));
                assert!(s.transitions.temporal.values().iter().all(|&x| x == 0.0));
            }
        }
    }

    #[test]
    fn graph_mismatch_rejected() {
        let g = growth(vec![vec![0.0; 4]; 2]);
        let err = init_state(&g, &RegionGraph::chain(3), &HyperPriors::default(), &ModelVariant::FLU_MN, 0);
        assert!(err.is_err());
    }

    #[test]
    fn segmentation_follows_a_wave() {
        let mut row = vec![0.0; 10];
        row.extend(vec![0.5; 10]);
        row.extend(vec![0.0; 10]);
        row.extend(vec![-0.4; 10]);
        row.extend(vec![0.0; 10]);
        let g = growth(vec![row]);
        let z = segment_phases(&g, &[0.0; 7], &ModelVariant::FLU_MN, 0.1, 3);
        let labels: Vec<u8> = z.row(0).to_vec();
        assert_eq!(labels[2], 0);
        assert_eq!(labels[15], 1);
        assert_eq!(labels[25], 2);
        assert_eq!(labels[35], 3);
        assert_eq!(labels[45], 0);
        let two = segment_phases(&g, &[0.0; 7], &ModelVariant::TWO_PHASE, 0.1, 3);
        assert_eq!(two.row(0)[2], 0);
        assert_eq!(two.row(0)[25], 1);
        assert_eq!(two.row(0)[45], 0);
    }

    #[test]
    fn log_frequencies_are_row_normalised() {
        let z = PhaseMatrix::from_rows(&[vec![0, 0, 1, 1, 2, 3, 0]]).unwrap();
        let m = transition_log_frequencies(&z, 4);
        for a in 0..4 {
            let s: f64 = (0..4).map(|b| m.get(a, b).exp()).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert!(m.get(0, 0) > m.get(0, 2));
    }
}
