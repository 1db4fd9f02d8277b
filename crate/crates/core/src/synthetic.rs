//! Simulation from the model and exact enumeration on tiny instances.

use std::collections::VecDeque;

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FluError, Result};
use crate::model::density::{log_sum_exp, sample_categorical, sample_normal, softmax_in_place};
use crate::model::{
    apply_growth, day_code, effective_graph, emission_ln, emission_moments, field_energy, neighbor_counts,
    phase_logits,
    temporal_context, DailyEffect, EpidemicDynamics, GrowthSeries, HyperPriors, ModelState, ModelVariant, ObservationPanel,
    Phase, PhaseMatrix, RegionGraph, SquareMatrix, TransitionField, GROWTH_FLOOR, MAX_PHASES,
};
use crate::sampler::{run_chain_on_growth, AcceptanceCounts, ChainConfig, PhaseMarginals};

/// Largest number of phase configurations [`brute_force_posterior`] enumerates.
pub const MAX_CONFIGURATIONS: usize = 65_536;

/// Ceiling on simulated counts. Long rising runs grow geometrically; capping
/// keeps counts exactly representable so the growth recomputed from them
/// stays finite.
pub const MAX_SIMULATED_COUNT: f64 = 1e12;

fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2009, 1, 4).expect("valid date")
}

fn default_sweeps() -> usize {
    3
}

/// Known parameters and layout of a simulated panel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub n_regions: usize,
    pub n_days: usize,
    /// Bordering pairs of region indices.
    pub edges: Vec<(usize, usize)>,
    pub variant: ModelVariant,
    pub daily: DailyEffect,
    pub transitions: TransitionField,
    pub dynamics: EpidemicDynamics,
    pub initial_counts: Vec<u64>,
    pub seed: u64,
    #[serde(default = "default_start")]
    pub start_date: NaiveDate,
    /// Gibbs sweeps of the phase prior after the forward pass.
    #[serde(default = "default_sweeps")]
    pub sweeps: usize,
}

/// Weekly daily-effect means and variances reported for the fitted model on
/// real data, Sunday first.
pub const REFERENCE_DAILY: DailyEffect = DailyEffect {
    means: [-0.210, 0.607, 0.110, -0.092, 0.011, -0.004, -0.312],
    variances: [0.087, 0.142, 0.011, 0.013, 0.015, 0.010, 0.052],
};

/// Rising drift/variance then declining drift/variance reported on real data.
pub fn reference_dynamics() -> EpidemicDynamics {
    EpidemicDynamics { drift: vec![0.721, -0.572], variance: vec![0.467, 0.398] }
}

/// Temporal weights favouring persistence and the NE→RE→SE→DE→NE cycle;
/// spatial weights favouring agreement between neighbours; seasons start in
/// NE.
pub fn reference_transitions() -> TransitionField {
    let mut temporal = SquareMatrix::filled(4, -6.0);
    for a in 0..4 {
        temporal.set(a, a, 3.0);
        temporal.set(a, (a + 1) % 4, 0.0);
    }
    temporal.set(Phase::RE.index(), Phase::DE.index(), -3.0);
    let mut spatial = SquareMatrix::zeros(4);
    for a in 0..4 {
        spatial.set(a, a, 0.8);
    }
    TransitionField::new(temporal, spatial).with_initial(HyperPriors::default().initial_weights(4))
}

impl ScenarioSpec {
    /// 2x5 lattice of regions over 180 days at the reference parameters.
    pub fn reference(seed: u64) -> Self {
        let graph = RegionGraph::grid(2, 5);
        Self {
            n_regions: 10,
            n_days: 180,
            edges: graph.edges(),
            variant: ModelVariant::FLU_MN,
            daily: REFERENCE_DAILY,
            transitions: reference_transitions(),
            dynamics: reference_dynamics(),
            initial_counts: vec![200; 10],
            seed,
            start_date: default_start(),
            sweeps: default_sweeps(),
        }
    }

    /// Same scenario with every variance divided by `factor`.
    pub fn with_variances_divided(mut self, factor: f64) -> Self {
        self.daily.variances = self.daily.variances.map(|v| v / factor);
        for v in &mut self.dynamics.variance {
            *v /= factor;
        }
        self
    }

    pub fn graph(&self) -> Result<RegionGraph> {
        RegionGraph::from_edges(self.n_regions, &self.edges)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_days < 14 {
            return Err(FluError::invalid(format!("scenario needs at least 14 days, got {}", self.n_days)));
        }
        if self.n_regions == 0 || self.initial_counts.len() != self.n_regions {
            return Err(FluError::invalid(format!(
                "{} initial counts for {} regions",
                self.initial_counts.len(),
                self.n_regions
            )));
        }
        self.graph()?;
        let probe = ModelState {
            phases: PhaseMatrix::filled(self.n_regions, self.n_days - 1, Phase::NE),
            daily: self.daily.clone(),
            transitions: self.transitions.clone(),
            dynamics: self.dynamics.clone(),
        };
        probe
            .validate(&self.variant, self.n_regions, self.n_days - 1)
            .map_err(|e| FluError::invalid(e.to_string()))
    }
}

/// A simulated panel with the truth that generated it.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticPanel {
    pub panel: ObservationPanel,
    pub graph: RegionGraph,
    /// Phase of every growth step (one fewer column than the panel has days).
    pub true_phases: PhaseMatrix,
    /// Growth as drawn, before rounding counts.
    pub growth: GrowthSeries,
}

/// Draw phases forward in time from NE, then refine them with sequential
/// Gibbs sweeps of the phase prior; draw growth from the phase emissions and
/// rebuild integer counts from it.
pub fn generate_panel(spec: &ScenarioSpec) -> Result<SyntheticPanel> {
    spec.validate()?;
    let graph = spec.graph()?;
    let field_graph = effective_graph(&spec.variant, &graph).into_owned();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_steps = spec.n_days - 1;
    let k = spec.variant.phase_count();
    let field = &spec.transitions;
    let mut phases = PhaseMatrix::filled(spec.n_regions, n_steps, Phase::NE);
    let mut buf = [0.0; MAX_PHASES];

    // forward pass: earlier steps and already-drawn neighbours only
    for t in 1..n_steps {
        for i in 0..spec.n_regions {
            let mut nb = [0u16; MAX_PHASES];
            for &j in field_graph.neighbors(i) {
                if j < i {
                    nb[phases.get(j, t)] += 1;
                }
            }
            phase_logits(Some(phases.get(i, t - 1)), None, &nb, field, &mut buf);
            softmax_in_place(&mut buf[..k]);
            phases.set(i, t, sample_categorical(&mut rng, &buf[..k]));
        }
    }
    for _ in 0..spec.sweeps {
        for i in 0..spec.n_regions {
            for t in 0..n_steps {
                let (prev, next) = temporal_context(&phases, i, t);
                let nb = neighbor_counts(&phases, &field_graph, i, t);
                phase_logits(prev, next, &nb, field, &mut buf);
                softmax_in_place(&mut buf[..k]);
                phases.set(i, t, sample_categorical(&mut rng, &buf[..k]));
            }
        }
    }

    emit(spec.start_date, spec.n_days, &spec.initial_counts, phases, &spec.daily, &spec.dynamics, &spec.variant, graph, &mut rng)
}

#[allow(clippy::too_many_arguments)]
fn emit<R: Rng + ?Sized>(
    start: NaiveDate,
    n_days: usize,
    initial: &[u64],
    phases: PhaseMatrix,
    daily: &DailyEffect,
    dynamics: &EpidemicDynamics,
    variant: &ModelVariant,
    graph: RegionGraph,
    rng: &mut R,
) -> Result<SyntheticPanel> {
    let dates: Vec<NaiveDate> = (0..n_days as u64).map(|d| start + Days::new(d)).collect();
    let days: Vec<u8> = dates[1..].iter().map(|&d| day_code(d)).collect();
    let n_regions = phases.n_regions();
    let mut deltas = Vec::with_capacity(n_regions);
    let mut counts = Vec::with_capacity(n_regions);
    for i in 0..n_regions {
        let mut row = Vec::with_capacity(n_days - 1);
        let mut series = Vec::with_capacity(n_days);
        let mut y = initial[i] as f64;
        series.push(initial[i]);
        for (t, &day) in days.iter().enumerate() {
            let (m, v) = emission_moments(phases.get(i, t), day, daily, dynamics, variant);
            let delta = sample_normal(rng, m, v);
            row.push(delta);
            y = apply_growth(y, delta, GROWTH_FLOOR).round().clamp(0.0, MAX_SIMULATED_COUNT);
            series.push(y as u64);
        }
        deltas.push(row);
        counts.push(series);
    }
    let ids = (0..n_regions).map(|i| format!("R{i:02}")).collect();
    Ok(SyntheticPanel {
        panel: ObservationPanel::new(ids, dates, counts)?,
        graph,
        true_phases: phases,
        growth: GrowthSeries::new(deltas, days)?,
    })
}

/// A single epidemic wave spreading outward from region 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveSpec {
    pub n_regions: usize,
    pub n_days: usize,
    pub edges: Vec<(usize, usize)>,
    /// Step at which region 0 starts rising.
    pub first_onset: usize,
    /// Inclusive range of the delay added per hop away from region 0.
    pub hop_delay: (usize, usize),
    pub rise_days: usize,
    pub plateau_days: usize,
    pub decline_days: usize,
    pub daily: DailyEffect,
    pub dynamics: EpidemicDynamics,
    pub initial_count: u64,
    pub seed: u64,
    #[serde(default = "default_start")]
    pub start_date: NaiveDate,
}

impl WaveSpec {
    /// Onset step of every region: breadth-first from region 0, each hop
    /// adding a delay drawn uniformly from `hop_delay`.
    fn onsets<R: Rng + ?Sized>(&self, graph: &RegionGraph, rng: &mut R) -> Vec<usize> {
        let mut onset = vec![usize::MAX; self.n_regions];
        onset[0] = self.first_onset;
        let mut queue = VecDeque::from([0]);
        while let Some(i) = queue.pop_front() {
            for &j in graph.neighbors(i) {
                if onset[j] == usize::MAX {
                    onset[j] = onset[i] + rng.random_range(self.hop_delay.0..=self.hop_delay.1);
                    queue.push_back(j);
                }
            }
        }
        onset
    }
}

/// Simulate a prescribed single wave: each region runs NE, RE, SE, DE, NE
/// with its own onset.
pub fn generate_wave(spec: &WaveSpec) -> Result<(SyntheticPanel, Vec<usize>)> {
    if spec.n_days < 14 || spec.n_regions == 0 || spec.hop_delay.0 > spec.hop_delay.1 {
        return Err(FluError::invalid("wave needs 14+ days, a region, and an ordered hop delay"));
    }
    let graph = RegionGraph::from_edges(spec.n_regions, &spec.edges)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let onsets = spec.onsets(&graph, &mut rng);
    if onsets.contains(&usize::MAX) {
        return Err(FluError::invalid("wave graph must be connected"));
    }
    let n_steps = spec.n_days - 1;
    let mut phases = PhaseMatrix::filled(spec.n_regions, n_steps, Phase::NE);
    for (i, &on) in onsets.iter().enumerate() {
        let segments = [
            (on, Phase::RE, spec.rise_days),
            (on + spec.rise_days, Phase::SE, spec.plateau_days),
            (on + spec.rise_days + spec.plateau_days, Phase::DE, spec.decline_days),
        ];
        for (from, z, len) in segments {
            for t in from..(from + len).min(n_steps) {
                phases.set(i, t, z.index());
            }
        }
    }
    let initial = vec![spec.initial_count; spec.n_regions];
    let panel = emit(
        spec.start_date,
        spec.n_days,
        &initial,
        phases,
        &spec.daily,
        &spec.dynamics,
        &ModelVariant::FLU_MN,
        graph,
        &mut rng,
    )?;
    Ok((panel, onsets))
}

/// Exact phase marginals of a tiny instance with the continuous parameters
/// fixed at `params`' values (its phases are ignored).
///
/// Every configuration is scored by the field energy — the unnormalised
/// density whose single-cell conditionals are the local conditionals the
/// sampler draws from — plus the emissions, and normalised exactly.
pub fn brute_force_posterior(
    growth: &GrowthSeries,
    graph: &RegionGraph,
    params: &ModelState,
    variant: &ModelVariant,
) -> Result<PhaseMarginals> {
    if graph.n_regions() != growth.n_regions() {
        return Err(FluError::invalid("graph and growth disagree on region count"));
    }
    let k = variant.phase_count();
    let (r, t_len) = (growth.n_regions(), growth.n_steps());
    let cells = r * t_len;
    let total = (k as u128).checked_pow(cells as u32).unwrap_or(u128::MAX);
    if total > MAX_CONFIGURATIONS as u128 {
        return Err(FluError::TooLarge(format!("{k}^{cells} phase configurations exceed {MAX_CONFIGURATIONS}")));
    }
    params.validate(variant, r, t_len)?;
    let graph = effective_graph(variant, graph);
    let mut em = vec![0.0; cells * k];
    for i in 0..r {
        for t in 0..t_len {
            for z in 0..k {
                em[(i * t_len + t) * k + z] =
                    emission_ln(growth.get(i, t), z, growth.day(t), &params.daily, &params.dynamics, variant);
            }
        }
    }
    let field = &params.transitions;
    Ok(enumerate_marginals(r, t_len, k, |phases| {
        let emission: f64 = (0..cells).map(|c| em[c * k + phases.codes()[c] as usize]).sum();
        emission + field_energy(phases, field, &graph)
    }))
}

/// Exact marginals of the distribution proportional to `exp(score(Z))` over
/// every phase configuration.
fn enumerate_marginals(r: usize, t_len: usize, k: usize, score: impl Fn(&PhaseMatrix) -> f64) -> PhaseMarginals {
    let cells = r * t_len;
    let total = k.pow(cells as u32);
    let mut phases = PhaseMatrix::filled(r, t_len, Phase::NE);
    let mut scores = Vec::with_capacity(total);
    for code in 0..total {
        let mut c = code;
        for slot in phases.codes_mut() {
            *slot = (c % k) as u8;
            c /= k;
        }
        scores.push(score(&phases));
    }
    let norm = log_sum_exp(&scores);
    let mut out = PhaseMarginals::zeros(r, t_len, k);
    for (code, s) in scores.iter().enumerate() {
        let w = (s - norm).exp();
        let mut c = code;
        for cell in 0..cells {
            out.probs[cell * k + c % k] += w;
            c /= k;
        }
    }
    out
}

/// Coverage of one parameter's 95% interval across runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterCoverage {
    pub name: String,
    pub truth: f64,
    pub covered: usize,
    pub runs: usize,
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecovery {
    pub data_seed: u64,
    pub chain_seed: u64,
    /// Whether each parameter's interval (in `RecoveryReport::coverage` order) covers the truth.
    pub covered: Vec<bool>,
    /// Fraction of cells whose MAP phase equals the generating phase.
    pub phase_agreement: f64,
    /// Post-burn-in Metropolis tallies of the chain.
    pub acceptance: AcceptanceCounts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub runs: Vec<RunRecovery>,
    pub coverage: Vec<ParameterCoverage>,
    pub mean_agreement: f64,
    pub min_agreement: f64,
}

impl RecoveryReport {
    pub fn coverage_of(&self, name: &str) -> Option<&ParameterCoverage> {
        self.coverage.iter().find(|c| c.name == name)
    }
}

/// Generate `n_runs` panels (data seeds `spec.seed + r`) and fit each with
/// chain seed `config.seed + r`. The chain sees the generated growth itself,
/// so rounding of counts does not censor the truth.
pub fn recovery_report(
    spec: &ScenarioSpec,
    n_runs: usize,
    hyper: &HyperPriors,
    config: &ChainConfig,
) -> Result<RecoveryReport> {
    if n_runs < 10 {
        return Err(FluError::invalid(format!("recovery needs at least 10 runs, got {n_runs}")));
    }
    spec.validate()?;
    config.validate()?;
    let slots = spec.variant.scheme.dynamic_count();
    let mut names = Vec::new();
    let mut truths = Vec::new();
    for slot in 0..slots {
        let label = spec.variant.scheme.name(spec.variant.scheme.dynamic_phase(slot).index()).to_lowercase();
        names.push(format!("drift_{label}"));
        truths.push(spec.dynamics.drift[slot]);
        names.push(format!("variance_{label}"));
        truths.push(spec.dynamics.variance[slot]);
    }
    if spec.variant.daily_effect {
        for d in 0..7 {
            names.push(format!("daily_mean_{}", d + 1));
            truths.push(spec.daily.means[d]);
        }
    }

    let runs: Vec<RunRecovery> = (0..n_runs as u64)
        .into_par_iter()
        .map(|r| -> Result<RunRecovery> {
            let run_spec = ScenarioSpec { seed: spec.seed + r, ..spec.clone() };
            let sim = generate_panel(&run_spec)?;
            let cfg = ChainConfig { seed: config.seed + r, ..config.clone() };
            let (trace, summary) = run_chain_on_growth(&sim.growth, &sim.graph, hyper, &spec.variant, &cfg)?;
            let mut intervals = Vec::new();
            for slot in 0..slots {
                intervals.push(summary.drift[slot]);
                intervals.push(summary.epidemic_variance[slot]);
            }
            if spec.variant.daily_effect {
                intervals.extend(summary.daily_means.iter().copied());
            }
            let covered = intervals.iter().zip(&truths).map(|(iv, &x)| iv.covers(x)).collect();
            let m = &trace.phase_marginals;
            let mut agree = 0usize;
            for i in 0..m.n_regions {
                for t in 0..m.n_steps {
                    agree += (m.map_phase(i, t) == sim.true_phases.get(i, t)) as usize;
                }
            }
            Ok(RunRecovery {
                data_seed: run_spec.seed,
                chain_seed: cfg.seed,
                covered,
                phase_agreement: agree as f64 / (m.n_regions * m.n_steps) as f64,
                acceptance: trace.accept_counts,
            })
        })
        .collect::<Result<_>>()?;

    let coverage = names
        .into_iter()
        .zip(&truths)
        .enumerate()
        .map(|(p, (name, &truth))| {
            let covered = runs.iter().filter(|r| r.covered[p]).count();
            ParameterCoverage { name, truth, covered, runs: runs.len(), rate: covered as f64 / runs.len() as f64 }
        })
        .collect();
    let agreements: Vec<f64> = runs.iter().map(|r| r.phase_agreement).collect();
    Ok(RecoveryReport {
        mean_agreement: agreements.iter().sum::<f64>() / agreements.len() as f64,
        min_agreement: agreements.iter().copied().fold(f64::INFINITY, f64::min),
        coverage,
        runs,
    })
}
