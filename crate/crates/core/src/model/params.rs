use serde::{Deserialize, Serialize};
use std::fmt;

use super::phase::{Phase, PhaseScheme};
use crate::error::{FluError, Result};

/// Dense square matrix of reals, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn filled(n: usize, value: f64) -> Self {
        Self { n, data: vec![value; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(FluError::invalid(format!("matrix row of length {} in {n}x{n} matrix", row.len())));
            }
            data.extend_from_slice(row);
        }
        Ok(Self { n, data })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.n + col] = value;
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { n: self.n, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|a| (0..a).all(|b| self.get(a, b) == self.get(b, a)))
    }

    /// Leading `k x k` block.
    pub fn leading(&self, k: usize) -> Self {
        let mut out = Self::zeros(k);
        for a in 0..k {
            for b in 0..k {
                out.set(a, b, self.get(a, b));
            }
        }
        out
    }
}

impl TryFrom<Vec<Vec<f64>>> for SquareMatrix {
    type Error = String;

    fn try_from(rows: Vec<Vec<f64>>) -> std::result::Result<Self, String> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(format!("expected a square {n}x{n} matrix"));
        }
        Ok(Self { n, data: rows.into_iter().flatten().collect() })
    }
}

impl From<SquareMatrix> for Vec<Vec<f64>> {
    fn from(m: SquareMatrix) -> Self {
        m.data.chunks(m.n.max(1)).map(<[f64]>::to_vec).collect()
    }
}

/// Day-of-week Gaussian effect on relative growth: mean `L_k` and variance
/// `δ²_k` for k = 1 (Sunday) ..= 7 (Saturday), stored zero-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DailyEffect {
    pub means: [f64; 7],
    pub variances: [f64; 7],
}

impl DailyEffect {
    /// Zero means and one shared variance (the no-daily-effect variants).
    pub fn white_noise(variance: f64) -> Self {
        Self { means: [0.0; 7], variances: [variance; 7] }
    }

    #[inline]
    pub fn mean(&self, day: u8) -> f64 {
        self.means[day as usize - 1]
    }

    #[inline]
    pub fn variance(&self, day: u8) -> f64 {
        self.variances[day as usize - 1]
    }
}

/// Temporal (`Θ`) and spatial (`Ψ`) interaction weights of the phase field.
/// `Θ[a][b]` weighs phase `a` followed by `b`; `Ψ[a][b]` weighs bordering
/// regions in phases `a` and `b` on the same day, so it is symmetric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionField {
    pub temporal: SquareMatrix,
    pub spatial: SquareMatrix,
    /// Fixed log weight of each phase on a region's first step, where there
    /// is no predecessor; empty means all zero. Never sampled.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub initial: Vec<f64>,
}

impl TransitionField {
    pub fn new(temporal: SquareMatrix, spatial: SquareMatrix) -> Self {
        Self { temporal, spatial, initial: Vec::new() }
    }

    pub fn zeros(k: usize) -> Self {
        Self::new(SquareMatrix::zeros(k), SquareMatrix::zeros(k))
    }

    pub fn with_initial(mut self, initial: Vec<f64>) -> Self {
        self.initial = initial;
        self
    }

    pub fn dim(&self) -> usize {
        self.temporal.dim()
    }

    #[inline]
    pub fn initial_weight(&self, phase: usize) -> f64 {
        self.initial.get(phase).copied().unwrap_or(0.0)
    }
}

/// Drift `ρ_z` and extra variance `Σ²_z` of each dynamic phase (RE and DE in
/// the four-phase scheme, E in the two-phase scheme).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpidemicDynamics {
    pub drift: Vec<f64>,
    pub variance: Vec<f64>,
}

/// Fixed prior constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperPriors {
    /// `W_k`: prior centre of the daily mean.
    pub daily_mean_center: [f64; 7],
    /// `φ²_k`: prior variance of the daily mean.
    pub daily_mean_var: [f64; 7],
    /// `μ_k`: degrees of freedom of the daily-variance prior.
    pub daily_var_dof: [f64; 7],
    /// `G²_k`: scale of the daily-variance prior.
    pub daily_var_scale: [f64; 7],
    /// `σ²_{a,b}`: prior variance of each temporal weight.
    pub transition_var: SquareMatrix,
    /// Prior centre of the temporal weights: `+p` for staying put, `0` for
    /// stepping forward along NE→RE→SE→DE→NE, `−p` for anything else.
    pub transition_persistence: f64,
    /// Log weight favouring NE on every region's first step, i.e. a season
    /// is taken to start outside the epidemic.
    pub season_start_weight: f64,
    /// `Φ²_{a,b}`: prior variance of each spatial weight.
    pub spatial_var: SquareMatrix,
    /// Prior centre of the spatial weights between neighbours in the same
    /// phase; mixed-phase pairs are centred on zero.
    pub neighbor_affinity: f64,
    /// `ε_z` for RE then DE; the two-phase E slot uses the RE entry.
    pub epidemic_var_dof: [f64; 2],
    /// `ψ²_z` for RE then DE.
    pub epidemic_var_scale: [f64; 2],
    /// Prior of the single static variance used when the daily effect is off.
    pub static_var_dof: f64,
    pub static_var_scale: f64,
}

/// Relative posting intensity Sunday..Saturday; Monday runs about twice Sunday.
const WEEKLY_POSTING_SHAPE: [f64; 7] = [0.55, 1.0, 0.95, 0.9, 0.85, 0.75, 0.6];

/// Day-over-day growth implied by [`WEEKLY_POSTING_SHAPE`], centred to zero mean.
pub fn default_daily_centers() -> [f64; 7] {
    let mut w = [0.0; 7];
    for k in 0..7 {
        let prev = WEEKLY_POSTING_SHAPE[(k + 6) % 7];
        w[k] = WEEKLY_POSTING_SHAPE[k] / prev - 1.0;
    }
    let mean = w.iter().sum::<f64>() / 7.0;
    w.map(|x| x - mean)
}

impl Default for HyperPriors {
    fn default() -> Self {
        Self {
            daily_mean_center: default_daily_centers(),
            daily_mean_var: [1.0; 7],
            daily_var_dof: [4.0; 7],
            daily_var_scale: [0.05; 7],
            transition_var: SquareMatrix::filled(4, 2.0),
            transition_persistence: 3.0,
            season_start_weight: 5.0,
            spatial_var: SquareMatrix::filled(4, 2.0),
            neighbor_affinity: 1.0,
            epidemic_var_dof: [4.0; 2],
            epidemic_var_scale: [0.25; 2],
            static_var_dof: 4.0,
            static_var_scale: 0.05,
        }
    }
}

impl HyperPriors {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, xs: &[f64]| -> Result<()> {
            if let Some(x) = xs.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
                return Err(FluError::Config(format!("{name} must be positive and finite, got {x}")));
            }
            Ok(())
        };
        if self.daily_mean_center.iter().any(|x| !x.is_finite()) {
            return Err(FluError::Config("daily_mean_center must be finite".into()));
        }
        positive("daily_mean_var", &self.daily_mean_var)?;
        positive("daily_var_dof", &self.daily_var_dof)?;
        positive("daily_var_scale", &self.daily_var_scale)?;
        positive("transition_var", self.transition_var.values())?;
        positive("spatial_var", self.spatial_var.values())?;
        positive("epidemic_var_dof", &self.epidemic_var_dof)?;
        positive("epidemic_var_scale", &self.epidemic_var_scale)?;
        positive("static_var", &[self.static_var_dof, self.static_var_scale])?;
        for (name, x) in [
            ("transition_persistence", self.transition_persistence),
            ("neighbor_affinity", self.neighbor_affinity),
            ("season_start_weight", self.season_start_weight),
        ] {
            if !(x.is_finite() && x >= 0.0) {
                return Err(FluError::Config(format!("{name} must be finite and non-negative, got {x}")));
            }
        }
        if self.transition_var.dim() != 4 || self.spatial_var.dim() != 4 {
            return Err(FluError::Config("transition_var and spatial_var must be 4x4".into()));
        }
        Ok(())
    }

    /// Prior centre of `Θ[a][b]` among `k` phases.
    pub fn transition_mean(&self, k: usize, a: usize, b: usize) -> f64 {
        if a == b {
            self.transition_persistence
        } else if b == (a + 1) % k {
            0.0
        } else {
            -self.transition_persistence
        }
    }

    /// Prior centre of `Ψ[a][b]`.
    pub fn spatial_mean(&self, a: usize, b: usize) -> f64 {
        if a == b {
            self.neighbor_affinity
        } else {
            0.0
        }
    }

    /// Fixed first-step weights for `k` phases.
    pub fn initial_weights(&self, k: usize) -> Vec<f64> {
        let mut w = vec![0.0; k];
        w[0] = self.season_start_weight;
        w
    }

    /// Degrees of freedom and scale of the variance prior for a dynamic slot.
    pub fn epidemic_prior(&self, slot: usize) -> (f64, f64) {
        (self.epidemic_var_dof[slot], self.epidemic_var_scale[slot])
    }
}

/// Which model structure is active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelVariant {
    pub spatial: bool,
    pub scheme: PhaseScheme,
    pub daily_effect: bool,
}

impl ModelVariant {
    pub const FLU_MN: ModelVariant = ModelVariant { spatial: true, scheme: PhaseScheme::Four, daily_effect: true };
    pub const TIME_HMM: ModelVariant = ModelVariant { spatial: false, scheme: PhaseScheme::Four, daily_effect: true };
    pub const TWO_PHASE: ModelVariant = ModelVariant { spatial: true, scheme: PhaseScheme::Two, daily_effect: true };
    pub const FLU_MN_R: ModelVariant = ModelVariant { spatial: true, scheme: PhaseScheme::Four, daily_effect: false };

    pub fn phase_count(&self) -> usize {
        self.scheme.count()
    }

    pub fn name(&self) -> &'static str {
        match (self.spatial, self.scheme, self.daily_effect) {
            (true, PhaseScheme::Four, true) => "flumn",
            (false, PhaseScheme::Four, true) => "timehmm",
            (true, PhaseScheme::Two, true) => "twophase",
            (true, PhaseScheme::Four, false) => "flumn-r",
            _ => "custom",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "flumn" => Some(Self::FLU_MN),
            "timehmm" => Some(Self::TIME_HMM),
            "twophase" => Some(Self::TWO_PHASE),
            "flumn-r" => Some(Self::FLU_MN_R),
            _ => None,
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Phase code of every (region, step) cell, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseMatrix {
    n_regions: usize,
    n_steps: usize,
    codes: Vec<u8>,
}

impl PhaseMatrix {
    pub fn filled(n_regions: usize, n_steps: usize, phase: Phase) -> Self {
        Self { n_regions, n_steps, codes: vec![phase.0; n_regions * n_steps] }
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let n_regions = rows.len();
        let n_steps = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_steps) {
            return Err(FluError::invalid("ragged phase rows"));
        }
        Ok(Self { n_regions, n_steps, codes: rows.concat() })
    }

    #[inline]
    pub fn n_regions(&self) -> usize {
        self.n_regions
    }

    #[inline]
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    #[inline]
    pub fn get(&self, region: usize, step: usize) -> usize {
        self.codes[region * self.n_steps + step] as usize
    }

    #[inline]
    pub fn set(&mut self, region: usize, step: usize, phase: usize) {
        self.codes[region * self.n_steps + step] = phase as u8;
    }

    pub fn row(&self, region: usize) -> &[u8] {
        &self.codes[region * self.n_steps..(region + 1) * self.n_steps]
    }

    pub fn codes(&self) -> &[u8] {
        &self.codes
    }

    pub fn codes_mut(&mut self) -> &mut [u8] {
        &mut self.codes
    }

    /// Append one step per region, filled by `fill(region)`.
    pub fn extended(&self, fill: impl Fn(usize) -> usize) -> Self {
        let mut rows: Vec<Vec<u8>> = (0..self.n_regions).map(|i| self.row(i).to_vec()).collect();
        for (i, row) in rows.iter_mut().enumerate() {
            row.push(fill(i) as u8);
        }
        Self { n_regions: self.n_regions, n_steps: self.n_steps + 1, codes: rows.concat() }
    }

    pub fn truncated(&self, n_steps: usize) -> Self {
        let rows: Vec<Vec<u8>> = (0..self.n_regions).map(|i| self.row(i)[..n_steps].to_vec()).collect();
        Self { n_regions: self.n_regions, n_steps, codes: rows.concat() }
    }
}

/// Complete latent state: phase field plus every continuous parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub phases: PhaseMatrix,
    pub daily: DailyEffect,
    pub transitions: TransitionField,
    pub dynamics: EpidemicDynamics,
}

impl ModelState {
    /// Check every component invariant against the variant and data shape.
    pub fn validate(&self, variant: &ModelVariant, n_regions: usize, n_steps: usize) -> Result<()> {
        let k = variant.phase_count();
        if self.phases.n_regions() != n_regions || self.phases.n_steps() != n_steps {
            return Err(FluError::InvalidState(format!(
                "phase matrix is {}x{}, data is {n_regions}x{n_steps}",
                self.phases.n_regions(),
                self.phases.n_steps()
            )));
        }
        if let Some(z) = self.phases.codes().iter().find(|&&z| z as usize >= k) {
            return Err(FluError::InvalidState(format!("phase code {z} outside 0..{k}")));
        }
        if self.daily.variances.iter().any(|v| !(v.is_finite() && *v > 0.0))
            || self.daily.means.iter().any(|m| !m.is_finite())
        {
            return Err(FluError::InvalidState("daily effect must be finite with positive variances".into()));
        }
        let initial = &self.transitions.initial;
        if self.transitions.temporal.dim() != k || self.transitions.spatial.dim() != k {
            return Err(FluError::InvalidState(format!("transition field must be {k}x{k}")));
        }
        if !(initial.is_empty() || initial.len() == k) {
            return Err(FluError::InvalidState(format!("first-step weights must be empty or {k} long")));
        }
        if self
            .transitions
            .temporal
            .values()
            .iter()
            .chain(self.transitions.spatial.values())
            .chain(initial)
            .any(|x| !x.is_finite())
        {
            return Err(FluError::InvalidState("transition weights must be finite".into()));
        }
        if !self.transitions.spatial.is_symmetric() {
            return Err(FluError::InvalidState("spatial weights must be symmetric".into()));
        }
        let slots = variant.scheme.dynamic_count();
        if self.dynamics.drift.len() != slots || self.dynamics.variance.len() != slots {
            return Err(FluError::InvalidState(format!("expected {slots} dynamic phases")));
        }
        for slot in 0..slots {
            let (lo, hi) = variant.scheme.drift_support(slot);
            let rho = self.dynamics.drift[slot];
            if !(rho > lo && rho < hi) {
                return Err(FluError::InvalidState(format!(
                    "drift {rho} of {} outside ({lo}, {hi})",
                    variant.scheme.name(variant.scheme.dynamic_phase(slot).index())
                )));
            }
            let v = self.dynamics.variance[slot];
            if !(v.is_finite() && v > 0.0) {
                return Err(FluError::InvalidState(format!("epidemic variance {v} must be positive")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_centers_have_zero_mean_and_monday_jump() {
        let w = default_daily_centers();
        assert!(w.iter().sum::<f64>().abs() < 1e-12);
        // Monday (index 1) shows the largest rise.
        let argmax = (0..7).max_by(|&a, &b| w[a].total_cmp(&w[b])).unwrap();
        assert_eq!(argmax, 1);
    }

    #[test]
    fn matrix_serde_is_nested_rows() {
        let m = SquareMatrix::identity(2);
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, "[[1.0,0.0],[0.0,1.0]]");
        let back: SquareMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<SquareMatrix>("[[1.0],[0.0,1.0]]").is_err());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in [ModelVariant::FLU_MN, ModelVariant::TIME_HMM, ModelVariant::TWO_PHASE, ModelVariant::FLU_MN_R] {
            assert_eq!(ModelVariant::from_name(v.name()), Some(v));
        }
    }

    #[test]
    fn hyper_validation_rejects_nonpositive_scale() {
        let mut h = HyperPriors::default();
        assert!(h.validate().is_ok());
        h.daily_var_scale[3] = 0.0;
        assert!(h.validate().is_err());
    }
}
