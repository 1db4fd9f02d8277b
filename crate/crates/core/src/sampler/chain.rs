use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ChainConfig;
use super::init::initial_state;
use super::summary::PosteriorSummary;
use super::sweeps::{
    sweep_daily_mean, sweep_daily_variance, sweep_drift, sweep_epidemic_variance, sweep_phases,
    sweep_transition_fields, Adaptation, MhBlock, MhState,
};
use crate::error::{FluError, Result};
use crate::model::{
    compute_growth, joint_log_density, GrowthSeries, HyperPriors, ModelState, ModelVariant, ObservationPanel,
    RegionGraph, GROWTH_FLOOR,
};

/// Proposal and acceptance counts of one Metropolis block.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptanceTally {
    pub proposals: u64,
    pub accepted: u64,
}

impl AcceptanceTally {
    pub fn rate(&self) -> Option<f64> {
        (self.proposals > 0).then(|| self.accepted as f64 / self.proposals as f64)
    }
}

impl From<&MhBlock> for AcceptanceTally {
    fn from(b: &MhBlock) -> Self {
        Self { proposals: b.proposals, accepted: b.accepted }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptanceCounts {
    pub theta: AcceptanceTally,
    pub psi: AcceptanceTally,
    pub drift: AcceptanceTally,
}

impl From<&MhState> for AcceptanceCounts {
    fn from(mh: &MhState) -> Self {
        Self { theta: (&mh.theta).into(), psi: (&mh.psi).into(), drift: (&mh.drift).into() }
    }
}

/// Per-cell phase probabilities, `[(region * n_steps + step) * n_phases + z]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseMarginals {
    pub n_regions: usize,
    pub n_steps: usize,
    pub n_phases: usize,
    pub probs: Vec<f64>,
}

impl PhaseMarginals {
    pub fn zeros(n_regions: usize, n_steps: usize, n_phases: usize) -> Self {
        Self { n_regions, n_steps, n_phases, probs: vec![0.0; n_regions * n_steps * n_phases] }
    }

    pub fn get(&self, region: usize, step: usize) -> &[f64] {
        let start = (region * self.n_steps + step) * self.n_phases;
        &self.probs[start..start + self.n_phases]
    }

    /// Most probable phase of a cell; the lowest code wins ties.
    pub fn map_phase(&self, region: usize, step: usize) -> usize {
        let p = self.get(region, step);
        (0..p.len()).fold(0, |best, z| if p[z] > p[best] { z } else { best })
    }

    fn scale(&mut self, factor: f64) {
        for p in &mut self.probs {
            *p *= factor;
        }
    }
}

/// Output of one chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace {
    pub variant: ModelVariant,
    pub config: ChainConfig,
    /// Retained states after burn-in and thinning.
    pub samples: Vec<ModelState>,
    /// Metropolis tallies after burn-in.
    pub accept_counts: AcceptanceCounts,
    /// Joint log density after every iteration, burn-in included.
    pub log_density_trace: Vec<f64>,
    /// Phase marginals averaged over every post-burn-in sweep.
    pub phase_marginals: PhaseMarginals,
    /// Proposal scales in force after burn-in (theta, psi, drift).
    pub step_sizes: [f64; 3],
}

impl ChainTrace {
    /// Log density of the retained iterations only.
    pub fn retained_log_density(&self) -> Vec<f64> {
        let burn = self.config.burn_in;
        self.log_density_trace[burn..]
            .iter()
            .enumerate()
            .filter(|(j, _)| (j + 1) % self.config.thinning == 0)
            .map(|(_, &x)| x)
            .collect()
    }
}

/// Variant with spatial coupling switched off when the graph has no edges;
/// the spatial weights are then not free parameters at all.
pub fn reduced_variant(variant: &ModelVariant, graph: &RegionGraph) -> ModelVariant {
    ModelVariant { spatial: variant.spatial && !graph.is_edgeless(), ..*variant }
}

/// A single Gibbs chain over fixed data.
pub struct Sampler<'a> {
    growth: &'a GrowthSeries,
    graph: RegionGraph,
    hyper: HyperPriors,
    variant: ModelVariant,
    requested: ModelVariant,
    config: ChainConfig,
    state: ModelState,
    mh: MhState,
    rng: ChaCha8Rng,
}

impl<'a> Sampler<'a> {
    /// Validate inputs and initialise from `config.seed`.
    pub fn new(
        growth: &'a GrowthSeries,
        graph: &RegionGraph,
        hyper: &HyperPriors,
        variant: &ModelVariant,
        config: &ChainConfig,
    ) -> Result<Self> {
        config.validate()?;
        hyper.validate()?;
        check_graph(growth, graph)?;
        let requested = *variant;
        let graph = if variant.spatial { graph.clone() } else { RegionGraph::edgeless(graph.n_regions()) };
        let variant = reduced_variant(variant, &graph);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let state = initial_state(growth, hyper, &variant, config, &mut rng);
        Ok(Self {
            growth,
            graph,
            hyper: hyper.clone(),
            variant,
            requested,
            config: config.clone(),
            state,
            mh: MhState::from_config(config),
            rng,
        })
    }

    /// Continue from a given state and proposal scales with a fresh stream
    /// seeded by `config.seed`.
    pub fn resume(
        growth: &'a GrowthSeries,
        graph: &RegionGraph,
        hyper: &HyperPriors,
        variant: &ModelVariant,
        config: &ChainConfig,
        state: ModelState,
        mh: Option<MhState>,
    ) -> Result<Self> {
        config.validate()?;
        hyper.validate()?;
        check_graph(growth, graph)?;
        state.validate(variant, growth.n_regions(), growth.n_steps())?;
        let requested = *variant;
        let graph = if variant.spatial { graph.clone() } else { RegionGraph::edgeless(graph.n_regions()) };
        let variant = reduced_variant(variant, &graph);
        let mh = mh.unwrap_or_else(|| MhState::from_config(config));
        Ok(Self {
            growth,
            graph,
            hyper: hyper.clone(),
            variant,
            requested,
            config: config.clone(),
            state,
            mh,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
        })
    }

    pub fn state(&self) -> &ModelState {
        &self.state
    }

    pub fn mh(&self) -> &MhState {
        &self.mh
    }

    pub fn into_parts(self) -> (ModelState, MhState) {
        (self.state, self.mh)
    }

    /// One full Gibbs iteration in the fixed block order.
    pub fn sweep(&mut self, adapt: Option<Adaptation>, marginals: Option<&mut [f64]>) {
        let (s, g, v, h) = (&mut self.state, self.growth, &self.variant, &self.hyper);
        sweep_phases(s, g, &self.graph, v, &mut self.rng, marginals);
        sweep_daily_mean(s, g, h, v, &mut self.rng);
        sweep_daily_variance(s, g, h, v, &mut self.rng);
        sweep_transition_fields(s, &self.graph, h, v, &mut self.mh, adapt, &mut self.rng);
        sweep_epidemic_variance(s, g, h, v, &mut self.rng);
        sweep_drift(s, g, v, &self.config, &mut self.mh, adapt, &mut self.rng);
    }

    pub fn log_density(&self) -> Result<f64> {
        joint_log_density(&self.state, self.growth, &self.graph, &self.hyper, &self.variant)
    }

    /// Run `config.iterations` sweeps, adapting during burn-in only.
    pub fn run(self) -> Result<ChainTrace> {
        self.run_keeping_state().map(|(trace, _, _)| trace)
    }

    /// Like [`Sampler::run`], also handing back the final state and
    /// proposal scales so a later chain can continue from them.
    pub fn run_keeping_state(mut self) -> Result<(ChainTrace, ModelState, MhState)> {
        let cfg = self.config.clone();
        let k = self.variant.phase_count();
        let mut marginals = PhaseMarginals::zeros(self.growth.n_regions(), self.growth.n_steps(), k);
        let mut samples = Vec::with_capacity(cfg.retained());
        let mut log_density_trace = Vec::with_capacity(cfg.iterations);
        for it in 0..cfg.iterations {
            let post = it >= cfg.burn_in;
            if it == cfg.burn_in {
                self.mh.reset_tallies();
            }
            let adapt = (cfg.adapt && !post).then(|| Adaptation::at(it, cfg.target_acceptance));
            self.sweep(adapt, post.then_some(marginals.probs.as_mut_slice()));
            let ld = self.log_density()?;
            if !ld.is_finite() {
                return Err(FluError::InvalidState(format!("log density {ld} at iteration {it}")));
            }
            log_density_trace.push(ld);
            if post && (it + 1 - cfg.burn_in).is_multiple_of(cfg.thinning) {
                samples.push(self.state.clone());
            }
        }
        marginals.scale(1.0 / (cfg.iterations - cfg.burn_in) as f64);
        let trace = ChainTrace {
            variant: self.requested,
            config: cfg,
            samples,
            accept_counts: (&self.mh).into(),
            log_density_trace,
            phase_marginals: marginals,
            step_sizes: [self.mh.theta.step(), self.mh.psi.step(), self.mh.drift.step()],
        };
        Ok((trace, self.state, self.mh))
    }
}

fn check_graph(growth: &GrowthSeries, graph: &RegionGraph) -> Result<()> {
    if graph.n_regions() != growth.n_regions() {
        return Err(FluError::invalid(format!(
            "graph has {} regions, data has {}",
            graph.n_regions(),
            growth.n_regions()
        )));
    }
    Ok(())
}

/// Run one chain on precomputed growth.
pub fn run_chain_on_growth(
    growth: &GrowthSeries,
    graph: &RegionGraph,
    hyper: &HyperPriors,
    variant: &ModelVariant,
    config: &ChainConfig,
) -> Result<(ChainTrace, PosteriorSummary)> {
    let trace = Sampler::new(growth, graph, hyper, variant, config)?.run()?;
    let summary = PosteriorSummary::from_trace(&trace)?;
    Ok((trace, summary))
}

/// Compute growth from counts and run one chain.
pub fn run_chain(
    panel: &ObservationPanel,
    graph: &RegionGraph,
    hyper: &HyperPriors,
    variant: &ModelVariant,
    config: &ChainConfig,
) -> Result<(ChainTrace, PosteriorSummary)> {
    config.validate()?;
    let growth = compute_growth(panel, GROWTH_FLOOR)?;
    run_chain_on_growth(&growth, graph, hyper, variant, config)
}

/// Phase marginals from Gibbs phase sweeps with every continuous parameter
/// held at `state`'s values.
pub fn fixed_parameter_marginals(
    growth: &GrowthSeries,
    graph: &RegionGraph,
    state: &ModelState,
    variant: &ModelVariant,
    burn_in: usize,
    sweeps: usize,
    seed: u64,
) -> Result<PhaseMarginals> {
    check_graph(growth, graph)?;
    state.validate(variant, growth.n_regions(), growth.n_steps())?;
    if sweeps == 0 {
        return Err(FluError::invalid("need at least one sweep"));
    }
    let graph = if variant.spatial { graph.clone() } else { RegionGraph::edgeless(graph.n_regions()) };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = state.clone();
    let mut m = PhaseMarginals::zeros(growth.n_regions(), growth.n_steps(), variant.phase_count());
    for it in 0..burn_in + sweeps {
        let acc = (it >= burn_in).then_some(m.probs.as_mut_slice());
        sweep_phases(&mut s, growth, &graph, variant, &mut rng, acc);
    }
    m.scale(1.0 / sweeps as f64);
    Ok(m)
}
