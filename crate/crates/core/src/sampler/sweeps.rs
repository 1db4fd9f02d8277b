//! Full-conditional updates of one Gibbs iteration.
//!
//! Every sweep mutates the state in place and touches only its own block of
//! variables. The graph passed in must already be the variant's effective graph
//! (see [`effective_graph`](crate::model::effective_graph)).

use rand::Rng;

use super::config::{ChainConfig, DriftUpdate};
use crate::model::density::{
    normal_logpdf, sample_categorical, sample_normal, sample_truncated_normal, softmax_in_place, ScaledInvChiSquared,
};
use crate::model::{
    emission_ln, neighbor_counts, phase_logits, temporal_context, ContextTable, GrowthSeries, HyperPriors, ModelState, ModelVariant, PhaseKind,
    RegionGraph, MAX_PHASES,
};

/// Acceptance bookkeeping and step size of one Metropolis block.
#[derive(Clone, Debug, PartialEq)]
pub struct MhBlock {
    pub log_step: f64,
    pub proposals: u64,
    pub accepted: u64,
}

impl MhBlock {
    pub fn new(step: f64) -> Self {
        Self { log_step: step.ln(), proposals: 0, accepted: 0 }
    }

    pub fn step(&self) -> f64 {
        self.log_step.exp()
    }

    pub fn rate(&self) -> Option<f64> {
        (self.proposals > 0).then(|| self.accepted as f64 / self.proposals as f64)
    }

    fn record(&mut self, accept_prob: f64, accepted: bool, adapt: Option<Adaptation>) {
        self.proposals += 1;
        self.accepted += accepted as u64;
        if let Some(a) = adapt {
            self.log_step += a.gain * (accept_prob - a.target);
            self.log_step = self.log_step.clamp(-12.0, 4.0);
        }
    }
}

/// Robbins–Monro gain and target used while adapting.
#[derive(Clone, Copy, Debug)]
pub struct Adaptation {
    pub gain: f64,
    pub target: f64,
}

impl Adaptation {
    /// Gain decaying as `(1 + iteration)^-0.6`.
    pub fn at(iteration: usize, target: f64) -> Self {
        Self { gain: (1.0 + iteration as f64).powf(-0.6), target }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MhState {
    pub theta: MhBlock,
    pub psi: MhBlock,
    pub drift: MhBlock,
}

impl MhState {
    pub fn from_config(config: &ChainConfig) -> Self {
        Self {
            theta: MhBlock::new(config.mh_step_theta),
            psi: MhBlock::new(config.mh_step_psi),
            drift: MhBlock::new(config.mh_step_rho),
        }
    }

    pub fn reset_tallies(&mut self) {
        for b in [&mut self.theta, &mut self.psi, &mut self.drift] {
            b.proposals = 0;
            b.accepted = 0;
        }
    }
}

/// Log emission density of every cell under every phase, `[cell * k + z]`.
pub(crate) fn emission_table(state: &ModelState, growth: &GrowthSeries, variant: &ModelVariant) -> Vec<f64> {
    let k = variant.phase_count();
    let mut out = Vec::with_capacity(growth.n_cells() * k);
    for i in 0..growth.n_regions() {
        for t in 0..growth.n_steps() {
            let y = growth.get(i, t);
            let day = growth.day(t);
            for z in 0..k {
                out.push(emission_ln(y, z, day, &state.daily, &state.dynamics, variant));
            }
        }
    }
    out
}

/// Resample every phase in region-major raster order from its local
/// conditional times its emission.
///
/// When `marginals` is given, the normalised conditional of each cell is added
/// to it (`[cell * k + z]`), giving Rao–Blackwellised phase marginals.
pub fn sweep_phases<R: Rng + ?Sized>(
    state: &mut ModelState,
    growth: &GrowthSeries,
    graph: &RegionGraph,
    variant: &ModelVariant,
    rng: &mut R,
    mut marginals: Option<&mut [f64]>,
) {
    let k = variant.phase_count();
    let em = emission_table(state, growth, variant);
    let n_steps = growth.n_steps();
    let mut buf = [0.0; MAX_PHASES];
    for i in 0..growth.n_regions() {
        for t in 0..n_steps {
            let cell = i * n_steps + t;
            let (prev, next) = temporal_context(&state.phases, i, t);
            let counts = neighbor_counts(&state.phases, graph, i, t);
            phase_logits(prev, next, &counts, &state.transitions, &mut buf);
            for z in 0..k {
                buf[z] += em[cell * k + z];
            }
            softmax_in_place(&mut buf[..k]);
            if let Some(m) = marginals.as_deref_mut() {
                for z in 0..k {
                    m[cell * k + z] += buf[z];
                }
            }
            state.phases.set(i, t, sample_categorical(rng, &buf[..k]));
        }
    }
}

/// Gaussian posterior `(mean, variance)` of one daily mean given `n`
/// static-phase observations summing to `sum`.
pub fn daily_mean_posterior(n: f64, sum: f64, variance: f64, center: f64, prior_var: f64) -> (f64, f64) {
    let precision = n / variance + 1.0 / prior_var;
    ((sum / variance + center / prior_var) / precision, 1.0 / precision)
}

/// Count, sum and sum of squared deviations from `means` of static-phase
/// growth, per day of week.
fn static_stats(state: &ModelState, growth: &GrowthSeries, variant: &ModelVariant, means: &[f64; 7]) -> [(f64, f64, f64); 7] {
    let mut stats = [(0.0, 0.0, 0.0); 7];
    for i in 0..growth.n_regions() {
        for t in 0..growth.n_steps() {
            if variant.scheme.kind(state.phases.get(i, t)) != PhaseKind::Static {
                continue;
            }
            let d = growth.day(t) as usize - 1;
            let y = growth.get(i, t);
            let s = &mut stats[d];
            s.0 += 1.0;
            s.1 += y;
            s.2 += (y - means[d]).powi(2);
        }
    }
    stats
}

/// Draw each `L_k` from its conjugate Gaussian conditional using static-phase
/// cells only. No-op when the daily effect is disabled.
pub fn sweep_daily_mean<R: Rng + ?Sized>(
    state: &mut ModelState,
    growth: &GrowthSeries,
    hyper: &HyperPriors,
    variant: &ModelVariant,
    rng: &mut R,
) {
    if !variant.daily_effect {
        return;
    }
    let stats = static_stats(state, growth, variant, &state.daily.means);
    for k in 0..7 {
        let (n, sum, _) = stats[k];
        let (m, v) = daily_mean_posterior(
            n,
            sum,
            state.daily.variances[k],
            hyper.daily_mean_center[k],
            hyper.daily_mean_var[k],
        );
        state.daily.means[k] = sample_normal(rng, m, v);
    }
}

/// Draw each `δ²_k` from its scaled inverse chi-squared conditional over
/// static-phase cells. Without the daily effect a single shared variance is
/// drawn around a zero mean.
pub fn sweep_daily_variance<R: Rng + ?Sized>(
    state: &mut ModelState,
    growth: &GrowthSeries,
    hyper: &HyperPriors,
    variant: &ModelVariant,
    rng: &mut R,
) {
    if variant.daily_effect {
        let stats = static_stats(state, growth, variant, &state.daily.means);
        for k in 0..7 {
            let (n, _, ss) = stats[k];
            let post = ScaledInvChiSquared::new(hyper.daily_var_dof[k], hyper.daily_var_scale[k]).posterior(n, ss);
            state.daily.variances[k] = post.sample(rng);
        }
    } else {
        let stats = static_stats(state, growth, variant, &[0.0; 7]);
        let n: f64 = stats.iter().map(|s| s.0).sum();
        let ss: f64 = stats.iter().map(|s| s.2).sum();
        let post = ScaledInvChiSquared::new(hyper.static_var_dof, hyper.static_var_scale).posterior(n, ss);
        state.daily.variances = [post.sample(rng); 7];
    }
}

/// One random-walk Metropolis step for every temporal weight, then every
/// distinct spatial weight, targeting the Gaussian prior times
/// the phase pseudo-likelihood of the current phase field.
pub fn sweep_transition_fields<R: Rng + ?Sized>(
    state: &mut ModelState,
    graph: &RegionGraph,
    hyper: &HyperPriors,
    variant: &ModelVariant,
    mh: &mut MhState,
    adapt: Option<Adaptation>,
    rng: &mut R,
) {
    let k = variant.phase_count();
    let table = ContextTable::build(&state.phases, graph);
    let mut current = table.log_pseudo_likelihood(&state.transitions);

    for a in 0..k {
        for b in 0..k {
            let x = state.transitions.temporal.get(a, b);
            let y = x + sample_normal(rng, 0.0, 1.0) * mh.theta.step();
            state.transitions.temporal.set(a, b, y);
            let proposed = table.log_pseudo_likelihood(&state.transitions);
            let var = hyper.transition_var.get(a, b);
            let mu = hyper.transition_mean(k, a, b);
            let log_r = proposed - current + ((x - mu).powi(2) - (y - mu).powi(2)) / (2.0 * var);
            let accept_prob = log_r.exp().min(1.0);
            let accepted = rng.random::<f64>() < accept_prob;
            if accepted {
                current = proposed;
            } else {
                state.transitions.temporal.set(a, b, x);
            }
            mh.theta.record(accept_prob, accepted, adapt);
        }
    }

    if graph.is_edgeless() {
        return;
    }
    // spatial weights are symmetric: each unordered pair moves as one
    for a in 0..k {
        for b in a..k {
            let x = state.transitions.spatial.get(a, b);
            let y = x + sample_normal(rng, 0.0, 1.0) * mh.psi.step();
            state.transitions.spatial.set(a, b, y);
            state.transitions.spatial.set(b, a, y);
            let proposed = table.log_pseudo_likelihood(&state.transitions);
            let var = hyper.spatial_var.get(a, b);
            let mu = hyper.spatial_mean(a, b);
            let log_r = proposed - current + ((x - mu).powi(2) - (y - mu).powi(2)) / (2.0 * var);
            let accept_prob = log_r.exp().min(1.0);
            let accepted = rng.random::<f64>() < accept_prob;
            if accepted {
                current = proposed;
            } else {
                state.transitions.spatial.set(a, b, x);
                state.transitions.spatial.set(b, a, x);
            }
            mh.psi.record(accept_prob, accepted, adapt);
        }
    }
}

/// Conjugate posterior of a dynamic phase's extra variance given `n`
/// epidemic components whose squared deviations from the drift sum to `sum_sq`.
pub fn epidemic_variance_posterior(hyper: &HyperPriors, slot: usize, n: f64, sum_sq: f64) -> ScaledInvChiSquared {
    let (dof, scale) = hyper.epidemic_prior(slot);
    ScaledInvChiSquared::new(dof, scale).posterior(n, sum_sq)
}

/// Draw each `Σ²_z`.
///
/// A dynamic-phase observation is the sum of an epidemic component
/// `N(ρ_z, Σ²_z)` and daily noise `N(L_day, δ²_day)`. The epidemic component
/// of every such cell is drawn from its Gaussian conditional first; `Σ²_z`
/// is then conjugate in those components.
pub fn sweep_epidemic_variance<R: Rng + ?Sized>(
    state: &mut ModelState,
    growth: &GrowthSeries,
    hyper: &HyperPriors,
    variant: &ModelVariant,
    rng: &mut R,
) {
    let slots = variant.scheme.dynamic_count();
    let mut n = vec![0.0; slots];
    let mut ss = vec![0.0; slots];
    for i in 0..growth.n_regions() {
        for t in 0..growth.n_steps() {
            let PhaseKind::Dynamic(slot) = variant.scheme.kind(state.phases.get(i, t)) else {
                continue;
            };
            let day = growth.day(t);
            let (l, d2) = if variant.daily_effect {
                (state.daily.mean(day), state.daily.variance(day))
            } else {
                (0.0, state.daily.variances[0])
            };
            let rho = state.dynamics.drift[slot];
            let s2 = state.dynamics.variance[slot];
            let r = growth.get(i, t) - l;
            let v = 1.0 / (1.0 / s2 + 1.0 / d2);
            let m = v * (rho / s2 + r / d2);
            let component = sample_normal(rng, m, v);
            n[slot] += 1.0;
            ss[slot] += (component - rho).powi(2);
        }
    }
    for slot in 0..slots {
        state.dynamics.variance[slot] = epidemic_variance_posterior(hyper, slot, n[slot], ss[slot]).sample(rng);
    }
}

/// Precision-weighted sufficient statistics `(Σw, Σw·(y-L), count)` of a
/// dynamic slot.
fn drift_stats(state: &ModelState, growth: &GrowthSeries, variant: &ModelVariant, slot: usize) -> (f64, f64, usize) {
    let mut w_sum = 0.0;
    let mut wy_sum = 0.0;
    let mut count = 0;
    for i in 0..growth.n_regions() {
        for t in 0..growth.n_steps() {
            if variant.scheme.kind(state.phases.get(i, t)) != PhaseKind::Dynamic(slot) {
                continue;
            }
            let day = growth.day(t);
            let (l, d2) = if variant.daily_effect {
                (state.daily.mean(day), state.daily.variance(day))
            } else {
                (0.0, state.daily.variances[0])
            };
            let w = 1.0 / (state.dynamics.variance[slot] + d2);
            w_sum += w;
            wy_sum += w * (growth.get(i, t) - l);
            count += 1;
        }
    }
    (w_sum, wy_sum, count)
}

/// Gaussian conditional `(mean, variance)` of a drift before truncation, or
/// `None` when no cell is in the phase.
pub fn drift_conditional(state: &ModelState, growth: &GrowthSeries, variant: &ModelVariant, slot: usize) -> Option<(f64, f64)> {
    let (w, wy, count) = drift_stats(state, growth, variant, slot);
    (count > 0).then(|| (wy / w, 1.0 / w))
}

/// Draw each drift `ρ_z`, restricted to its uniform prior's support.
pub fn sweep_drift<R: Rng + ?Sized>(
    state: &mut ModelState,
    growth: &GrowthSeries,
    variant: &ModelVariant,
    config: &ChainConfig,
    mh: &mut MhState,
    adapt: Option<Adaptation>,
    rng: &mut R,
) {
    for slot in 0..variant.scheme.dynamic_count() {
        let (lo, hi) = variant.scheme.drift_support(slot);
        match config.drift_update {
            DriftUpdate::TruncatedGaussian => {
                state.dynamics.drift[slot] = match drift_conditional(state, growth, variant, slot) {
                    Some((m, v)) => sample_truncated_normal(rng, m, v, lo, hi),
                    None => {
                        let u: f64 = rng.random();
                        (lo + u * (hi - lo)).clamp(lo.next_up(), hi.next_down())
                    }
                };
            }
            DriftUpdate::RandomWalk => {
                let x = state.dynamics.drift[slot];
                let y = x + sample_normal(rng, 0.0, 1.0) * mh.drift.step();
                let (accept_prob, accepted) = if y <= lo || y >= hi {
                    (0.0, false)
                } else {
                    let log_r = drift_log_likelihood(state, growth, variant, slot, y)
                        - drift_log_likelihood(state, growth, variant, slot, x);
                    let p = log_r.exp().min(1.0);
                    (p, rng.random::<f64>() < p)
                };
                if accepted {
                    state.dynamics.drift[slot] = y;
                }
                mh.drift.record(accept_prob, accepted, adapt);
            }
        }
    }
}

fn drift_log_likelihood(state: &ModelState, growth: &GrowthSeries, variant: &ModelVariant, slot: usize, rho: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..growth.n_regions() {
        for t in 0..growth.n_steps() {
            if variant.scheme.kind(state.phases.get(i, t)) != PhaseKind::Dynamic(slot) {
                continue;
            }
            let day = growth.day(t);
            let (l, d2) = if variant.daily_effect {
                (state.daily.mean(day), state.daily.variance(day))
            } else {
                (0.0, state.daily.variances[0])
            };
            total += normal_logpdf(growth.get(i, t), rho + l, state.dynamics.variance[slot] + d2);
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DailyEffect, EpidemicDynamics, Phase, PhaseMatrix, SquareMatrix, TransitionField};
    use crate::synthetic::brute_force_posterior;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single_region(n_steps: usize, seed: u64) -> (GrowthSeries, ModelState) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let growth = GrowthSeries::new(
            vec![(0..n_steps).map(|_| rng.random_range(-0.6..0.6)).collect()],
            (0..n_steps).map(|t| (t % 7 + 1) as u8).collect(),
        )
        .unwrap();
        let mut temporal = SquareMatrix::zeros(4);
        for a in 0..4 {
            for b in 0..4 {
                temporal.set(a, b, rng.random_range(-2.0..2.0));
            }
        }
        let state = ModelState {
            phases: PhaseMatrix::filled(1, n_steps, Phase::NE),
            daily: DailyEffect::white_noise(0.1),
            transitions: TransitionField::new(temporal, SquareMatrix::zeros(4)),
            dynamics: EpidemicDynamics { drift: vec![0.4, -0.3], variance: vec![0.2, 0.2] },
        };
        (growth, state)
    }

    #[test]
    fn sweep_marginals_match_enumeration_on_one_region() {
        let (growth, state) = single_region(3, 9);
        let graph = RegionGraph::edgeless(1);
        let exact = brute_force_posterior(&growth, &graph, &state, &ModelVariant::TIME_HMM).unwrap();
        let mut m = vec![0.0; 12];
        let mut s = state.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sweeps = 40_000;
        for it in 0..sweeps + 200 {
            sweep_phases(&mut s, &growth, &graph, &ModelVariant::TIME_HMM, &mut rng, (it >= 200).then_some(&mut m[..]));
        }
        for (a, b) in exact.probs.iter().zip(&m) {
            assert!((a - b / sweeps as f64).abs() < 0.01, "{a} vs {}", b / sweeps as f64);
        }
    }
}
