//! Local phase conditionals, growth emissions and the joint log density.

use std::borrow::Cow;
use std::collections::HashMap;

use super::density::{log_sum_exp, normal_logpdf, softmax_in_place, ScaledInvChiSquared};
use super::graph::RegionGraph;
use super::panel::GrowthSeries;
use super::params::{DailyEffect, EpidemicDynamics, HyperPriors, ModelState, ModelVariant, PhaseMatrix, TransitionField};
use super::phase::PhaseKind;
use crate::error::{FluError, Result};

pub const MAX_PHASES: usize = 4;

/// Graph the variant actually uses: the edgeless graph when spatial coupling
/// is switched off.
pub fn effective_graph<'a>(variant: &ModelVariant, graph: &'a RegionGraph) -> Cow<'a, RegionGraph> {
    if variant.spatial {
        Cow::Borrowed(graph)
    } else {
        Cow::Owned(RegionGraph::edgeless(graph.n_regions()))
    }
}

/// Unnormalised log weights of each phase at one cell, written to `out[..k]`.
#[inline]
pub fn phase_logits(
    prev: Option<usize>,
    next: Option<usize>,
    neighbor_counts: &[u16; MAX_PHASES],
    field: &TransitionField,
    out: &mut [f64],
) {
    let k = field.dim();
    for (z, slot) in out.iter_mut().enumerate().take(k) {
        let mut s = match prev {
            Some(p) => field.temporal.get(p, z),
            None => field.initial_weight(z),
        };
        if let Some(n) = next {
            s += field.temporal.get(z, n);
        }
        for (a, &c) in neighbor_counts.iter().enumerate().take(k) {
            if c > 0 {
                s += c as f64 * field.spatial.get(a, z);
            }
        }
        *slot = s;
    }
}

/// Softmax over phases of the temporal and spatial weights around one cell.
///
/// `prev`/`next` are absent at the ends of a series; `neighbor_phases` are the
/// current phases of the bordering regions on the same step.
pub fn phase_conditional(
    prev: Option<usize>,
    next: Option<usize>,
    neighbor_phases: &[usize],
    field: &TransitionField,
) -> Result<Vec<f64>> {
    let k = field.dim();
    if field.spatial.dim() != k || !(k == 2 || k == 4) {
        return Err(FluError::invalid(format!(
            "transition field is {}x{} / {}x{}",
            k,
            k,
            field.spatial.dim(),
            field.spatial.dim()
        )));
    }
    let mut counts = [0u16; MAX_PHASES];
    for &z in prev.iter().chain(next.iter()).chain(neighbor_phases) {
        if z >= k {
            return Err(FluError::invalid(format!("phase {z} outside 0..{k}")));
        }
    }
    for &z in neighbor_phases {
        counts[z] += 1;
    }
    let mut out = vec![0.0; k];
    phase_logits(prev, next, &counts, field, &mut out);
    softmax_in_place(&mut out);
    Ok(out)
}

#[inline]
pub(crate) fn neighbor_counts(phases: &PhaseMatrix, graph: &RegionGraph, region: usize, step: usize) -> [u16; MAX_PHASES] {
    let mut counts = [0u16; MAX_PHASES];
    for &j in graph.neighbors(region) {
        counts[phases.get(j, step)] += 1;
    }
    counts
}

/// Temporal context of a cell: previous and next phase when they exist.
#[inline]
pub(crate) fn temporal_context(phases: &PhaseMatrix, region: usize, step: usize) -> (Option<usize>, Option<usize>) {
    let prev = (step > 0).then(|| phases.get(region, step - 1));
    let next = (step + 1 < phases.n_steps()).then(|| phases.get(region, step + 1));
    (prev, next)
}

/// Unnormalised log weight of a whole phase field: each region's first-step
/// weight, every temporal pair along each region and every spatial pair
/// across each border. Its single-cell
/// conditionals are exactly [`phase_logits`] (given symmetric spatial weights).
pub fn field_energy(phases: &PhaseMatrix, field: &TransitionField, graph: &RegionGraph) -> f64 {
    let n = phases.n_steps();
    let mut e = 0.0;
    for i in 0..phases.n_regions() {
        if n > 0 {
            e += field.initial_weight(phases.get(i, 0));
        }
        for t in 1..n {
            e += field.temporal.get(phases.get(i, t - 1), phases.get(i, t));
        }
    }
    for (i, j) in graph.edges() {
        for t in 0..n {
            e += field.spatial.get(phases.get(i, t), phases.get(j, t));
        }
    }
    e
}

/// Mean and variance of growth under phase `z` on day-of-week `day`.
#[inline]
pub fn emission_moments(
    z: usize,
    day: u8,
    daily: &DailyEffect,
    dynamics: &EpidemicDynamics,
    variant: &ModelVariant,
) -> (f64, f64) {
    let (l, d2) = if variant.daily_effect {
        (daily.mean(day), daily.variance(day))
    } else {
        (0.0, daily.variances[0])
    };
    match variant.scheme.kind(z) {
        PhaseKind::Static => (l, d2),
        PhaseKind::Dynamic(slot) => (dynamics.drift[slot] + l, dynamics.variance[slot] + d2),
    }
}

#[inline]
pub(crate) fn emission_ln(
    delta: f64,
    z: usize,
    day: u8,
    daily: &DailyEffect,
    dynamics: &EpidemicDynamics,
    variant: &ModelVariant,
) -> f64 {
    let (m, v) = emission_moments(z, day, daily, dynamics, variant);
    normal_logpdf(delta, m, v)
}

/// Log density of one growth observation under phase `z`.
pub fn emission_logpdf(
    delta: f64,
    z: usize,
    day: u8,
    daily: &DailyEffect,
    dynamics: &EpidemicDynamics,
    variant: &ModelVariant,
) -> Result<f64> {
    if !(1..=7).contains(&day) {
        return Err(FluError::invalid(format!("day-of-week {day} outside 1..=7")));
    }
    if z >= variant.phase_count() {
        return Err(FluError::invalid(format!("phase {z} outside the {} scheme", variant.scheme)));
    }
    let (_, v) = emission_moments(z, day, daily, dynamics, variant);
    if !(v > 0.0) || !v.is_finite() {
        return Err(FluError::InvalidState(format!("emission variance {v} is not positive")));
    }
    Ok(emission_ln(delta, z, day, daily, dynamics, variant))
}

/// Log prior of every continuous parameter.
pub fn log_prior(state: &ModelState, hyper: &HyperPriors, variant: &ModelVariant) -> f64 {
    let mut lp = 0.0;
    if variant.daily_effect {
        for k in 0..7 {
            lp += normal_logpdf(state.daily.means[k], hyper.daily_mean_center[k], hyper.daily_mean_var[k]);
            lp += ScaledInvChiSquared::new(hyper.daily_var_dof[k], hyper.daily_var_scale[k]).ln_pdf(state.daily.variances[k]);
        }
    } else {
        lp += ScaledInvChiSquared::new(hyper.static_var_dof, hyper.static_var_scale).ln_pdf(state.daily.variances[0]);
    }
    let k = variant.phase_count();
    for a in 0..k {
        for b in 0..k {
            let mean = hyper.transition_mean(k, a, b);
            lp += normal_logpdf(state.transitions.temporal.get(a, b), mean, hyper.transition_var.get(a, b));
        }
    }
    if variant.spatial {
        for a in 0..k {
            for b in a..k {
                let mean = hyper.spatial_mean(a, b);
                lp += normal_logpdf(state.transitions.spatial.get(a, b), mean, hyper.spatial_var.get(a, b));
            }
        }
    }
    for slot in 0..variant.scheme.dynamic_count() {
        let (dof, scale) = hyper.epidemic_prior(slot);
        lp += ScaledInvChiSquared::new(dof, scale).ln_pdf(state.dynamics.variance[slot]);
        let (lo, hi) = variant.scheme.drift_support(slot);
        let rho = state.dynamics.drift[slot];
        lp += if rho > lo && rho < hi { -(hi - lo).ln() } else { f64::NEG_INFINITY };
    }
    lp
}

/// Sum over cells of the log local phase conditional.
pub fn log_pseudo_likelihood(phases: &PhaseMatrix, field: &TransitionField, graph: &RegionGraph) -> f64 {
    ContextTable::build(phases, graph).log_pseudo_likelihood(field)
}

/// Sum over cells of the growth log density given the cell's phase.
pub fn log_emission(state: &ModelState, growth: &GrowthSeries, variant: &ModelVariant) -> f64 {
    let mut total = 0.0;
    for i in 0..growth.n_regions() {
        for t in 0..growth.n_steps() {
            total += emission_ln(
                growth.get(i, t),
                state.phases.get(i, t),
                growth.day(t),
                &state.daily,
                &state.dynamics,
                variant,
            );
        }
    }
    total
}

fn check_dims(state: &ModelState, growth: &GrowthSeries, graph: &RegionGraph, variant: &ModelVariant) -> Result<()> {
    if graph.n_regions() != growth.n_regions() {
        return Err(FluError::invalid(format!(
            "graph has {} regions, growth has {}",
            graph.n_regions(),
            growth.n_regions()
        )));
    }
    state
        .validate(variant, growth.n_regions(), growth.n_steps())
        .map_err(|e| FluError::invalid(e.to_string()))
}

/// Phase pseudo-likelihood plus emissions: the observation part of the joint
/// density, used for deviance.
pub fn observation_log_likelihood(
    state: &ModelState,
    growth: &GrowthSeries,
    graph: &RegionGraph,
    variant: &ModelVariant,
) -> Result<f64> {
    check_dims(state, growth, graph, variant)?;
    let graph = effective_graph(variant, graph);
    Ok(log_pseudo_likelihood(&state.phases, &state.transitions, &graph) + log_emission(state, growth, variant))
}

/// Log prior + phase pseudo-likelihood + emissions.
pub fn joint_log_density(
    state: &ModelState,
    growth: &GrowthSeries,
    graph: &RegionGraph,
    hyper: &HyperPriors,
    variant: &ModelVariant,
) -> Result<f64> {
    let obs = observation_log_likelihood(state, growth, graph, variant)?;
    let lp = log_prior(state, hyper, variant);
    if !lp.is_finite() {
        return Err(FluError::InvalidState("parameters outside prior support".into()));
    }
    Ok(lp + obs)
}

/// Cells grouped by their neighbourhood configuration, so the pseudo-likelihood
/// of a new transition field costs one softmax per distinct context.
#[derive(Clone, Debug, Default)]
pub struct ContextTable {
    contexts: Vec<Context>,
}

#[derive(Clone, Debug)]
struct Context {
    prev: Option<usize>,
    next: Option<usize>,
    neighbors: [u16; MAX_PHASES],
    by_phase: [u32; MAX_PHASES],
    total: u32,
}

impl ContextTable {
    pub fn build(phases: &PhaseMatrix, graph: &RegionGraph) -> Self {
        let mut index: HashMap<u64, usize> = HashMap::new();
        let mut contexts: Vec<Context> = Vec::new();
        for i in 0..phases.n_regions() {
            for t in 0..phases.n_steps() {
                let (prev, next) = temporal_context(phases, i, t);
                let neighbors = neighbor_counts(phases, graph, i, t);
                let key = context_key(prev, next, &neighbors);
                let slot = *index.entry(key).or_insert_with(|| {
                    contexts.push(Context { prev, next, neighbors, by_phase: [0; MAX_PHASES], total: 0 });
                    contexts.len() - 1
                });
                let c = &mut contexts[slot];
                c.by_phase[phases.get(i, t)] += 1;
                c.total += 1;
            }
        }
        Self { contexts }
    }

    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }

    pub fn log_pseudo_likelihood(&self, field: &TransitionField) -> f64 {
        let k = field.dim();
        let mut logits = [0.0; MAX_PHASES];
        let mut total = 0.0;
        for c in &self.contexts {
            phase_logits(c.prev, c.next, &c.neighbors, field, &mut logits);
            let lz = log_sum_exp(&logits[..k]);
            for z in 0..k {
                if c.by_phase[z] > 0 {
                    total += c.by_phase[z] as f64 * logits[z];
                }
            }
            total -= c.total as f64 * lz;
        }
        total
    }
}

#[inline]
fn context_key(prev: Option<usize>, next: Option<usize>, neighbors: &[u16; MAX_PHASES]) -> u64 {
    let p = prev.map_or(7, |x| x as u64);
    let n = next.map_or(7, |x| x as u64);
    let mut key = p | (n << 3);
    for (a, &c) in neighbors.iter().enumerate() {
        key |= (c as u64) << (6 + 14 * a);
    }
    key
}
