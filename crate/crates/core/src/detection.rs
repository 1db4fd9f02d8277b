//! Causal day-by-day phase estimation, epidemic alarms and lead times.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{FluError, Result};
use crate::model::{compute_growth, GrowthSeries, HyperPriors, ModelState, ModelVariant, ObservationPanel, RegionGraph, GROWTH_FLOOR};
use crate::sampler::{ChainConfig, ChainTrace, MhState, Sampler};

/// Settings of the sequential filter and the alarm rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    /// Chain run on the first filtered day, from scratch.
    pub chain: ChainConfig,
    /// Sweeps discarded after each warm start.
    pub warm_burn_in: usize,
    /// Sweeps averaged per day after a warm start.
    pub warm_sweeps: usize,
    /// Alarm when the epidemic probability strictly exceeds this.
    pub threshold: f64,
    /// Width of the centred moving average used to locate the count peak.
    pub peak_window: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { chain: ChainConfig::default(), warm_burn_in: 50, warm_sweeps: 800, threshold: 0.5, peak_window: 7 }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        self.chain.validate()?;
        if self.warm_sweeps == 0 {
            return Err(FluError::Config("warm_sweeps must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.threshold) {
            return Err(FluError::Config(format!("threshold {} outside [0, 1)", self.threshold)));
        }
        if self.peak_window == 0 || self.peak_window.is_multiple_of(2) {
            return Err(FluError::Config(format!("peak_window {} must be a positive odd count", self.peak_window)));
        }
        Ok(())
    }

    /// Chain settings for one day: a cold start uses `chain`; a warm start
    /// runs a short chain that re-tunes the carried proposal scales during
    /// its own burn-in.
    fn day_chain(&self, day: usize, warm: bool) -> ChainConfig {
        let seed = self.chain.seed.wrapping_add(day as u64);
        if warm {
            ChainConfig {
                iterations: self.warm_burn_in + self.warm_sweeps,
                burn_in: self.warm_burn_in,
                thinning: 1,
                seed,
                ..self.chain.clone()
            }
        } else {
            ChainConfig { seed, ..self.chain.clone() }
        }
    }
}

/// Chain state carried from one filtered day to the next.
#[derive(Clone, Debug)]
pub struct WarmStart {
    pub state: ModelState,
    pub mh: MhState,
}

/// Filtered phase distribution of every region on one day.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DayEstimate {
    /// Panel day index.
    pub day: usize,
    pub date: NaiveDate,
    /// `probs[region][phase]`.
    pub probs: Vec<Vec<f64>>,
    /// `1 − P(NE)` per region.
    pub epidemic: Vec<f64>,
    pub map_phase: Vec<usize>,
}

/// Filtered estimates for every day after the first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterOutput {
    pub variant: ModelVariant,
    pub region_ids: Vec<String>,
    pub days: Vec<DayEstimate>,
}

impl FilterOutput {
    pub fn epidemic_series(&self, region: usize) -> Vec<f64> {
        self.days.iter().map(|d| d.epidemic[region]).collect()
    }
}

/// Estimate the phase distribution on `day` from counts up to and including
/// that day only.
///
/// Without `warm` a full chain is run from scratch. With `warm` (the state
/// reached on `day − 1`) the phase path is extended by one step, each region
/// repeating its last phase, and a short chain continues from there.
pub fn filter_day(
    panel: &ObservationPanel,
    day: usize,
    graph: &RegionGraph,
    hyper: &HyperPriors,
    variant: &ModelVariant,
    config: &FilterConfig,
    warm: Option<WarmStart>,
) -> Result<(DayEstimate, WarmStart)> {
    let (growth, trace, next) = advance(panel, day, graph, hyper, variant, config, warm)?;
    let m = &trace.phase_marginals;
    let step = growth.n_steps() - 1;
    let probs: Vec<Vec<f64>> = (0..m.n_regions).map(|i| m.get(i, step).to_vec()).collect();
    let estimate = DayEstimate {
        day,
        date: panel.dates()[day],
        epidemic: probs.iter().map(|p| (1.0 - p[0]).clamp(0.0, 1.0)).collect(),
        map_phase: (0..m.n_regions).map(|i| m.map_phase(i, step)).collect(),
        probs,
    };
    Ok((estimate, next))
}

/// Run the chain for `day` on the counts up to that day, cold or continuing
/// from `warm`.
pub(crate) fn advance(
    panel: &ObservationPanel,
    day: usize,
    graph: &RegionGraph,
    hyper: &HyperPriors,
    variant: &ModelVariant,
    config: &FilterConfig,
    warm: Option<WarmStart>,
) -> Result<(GrowthSeries, ChainTrace, WarmStart)> {
    if day == 0 || day >= panel.n_days() {
        return Err(FluError::invalid(format!("day {day} outside 1..{}", panel.n_days())));
    }
    let prefix = panel.prefix(day + 1)?;
    let growth = compute_growth(&prefix, GROWTH_FLOOR)?;
    let (trace, state, mh) = match warm {
        None => Sampler::new(&growth, graph, hyper, variant, &config.day_chain(day, false))?.run_keeping_state()?,
        Some(WarmStart { mut state, mh }) => {
            if state.phases.n_steps() + 1 != growth.n_steps() {
                return Err(FluError::invalid(format!(
                    "warm start covers {} steps, day {day} needs {}",
                    state.phases.n_steps(),
                    growth.n_steps() - 1
                )));
            }
            let last = state.phases.n_steps() - 1;
            state.phases = state.phases.extended(|i| state.phases.get(i, last));
            Sampler::resume(&growth, graph, hyper, variant, &config.day_chain(day, true), state, Some(mh))?
                .run_keeping_state()?
        }
    };
    Ok((growth, trace, WarmStart { state, mh }))
}

/// Filter every day in order, warm-starting each from the previous one.
pub fn filter_panel(
    panel: &ObservationPanel,
    graph: &RegionGraph,
    hyper: &HyperPriors,
    variant: &ModelVariant,
    config: &FilterConfig,
) -> Result<FilterOutput> {
    config.validate()?;
    if panel.n_days() < 14 {
        return Err(FluError::invalid(format!("alarm scan needs at least 14 days, got {}", panel.n_days())));
    }
    let mut days = Vec::with_capacity(panel.n_days() - 1);
    let mut warm = None;
    for day in 1..panel.n_days() {
        let (estimate, next) = filter_day(panel, day, graph, hyper, variant, config, warm)?;
        days.push(estimate);
        warm = Some(next);
    }
    Ok(FilterOutput { variant: *variant, region_ids: panel.region_ids().to_vec(), days })
}

/// First alarm, count peak and lead of one region.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlarmRecord {
    pub region: String,
    pub alarm_date: Option<NaiveDate>,
    pub peak_date: NaiveDate,
    /// Alarm minus peak in days; negative when the alarm came first.
    pub lead_days: Option<i64>,
}

/// Index of the first value strictly above `threshold`.
pub fn first_exceedance(values: &[f64], threshold: f64) -> Option<usize> {
    values.iter().position(|&p| p > threshold)
}

/// Argmax of the centred moving average of width `window` (odd); near the
/// ends the average covers only the days that exist. Ties go to the
/// earliest index.
pub fn find_peak(counts: &[f64], window: usize) -> Result<usize> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(FluError::invalid(format!("window {window} must be a positive odd count")));
    }
    if counts.len() < window {
        return Err(FluError::invalid(format!("series of {} days is shorter than window {window}", counts.len())));
    }
    let half = window / 2;
    let n = counts.len();
    let mut best = (0, f64::NEG_INFINITY);
    for t in 0..n {
        let (lo, hi) = (t.saturating_sub(half), (t + half).min(n - 1));
        let avg = counts[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64;
        if avg > best.1 {
            best = (t, avg);
        }
    }
    Ok(best.0)
}

fn record(region: &str, dates: &[NaiveDate], alarm: Option<usize>, peak: usize) -> AlarmRecord {
    let alarm_date = alarm.map(|d| dates[d]);
    AlarmRecord {
        region: region.to_string(),
        alarm_date,
        peak_date: dates[peak],
        lead_days: alarm_date.map(|a| (a - dates[peak]).num_days()),
    }
}

/// Alarms from filtered epidemic probabilities.
pub fn alarms_from(output: &FilterOutput, panel: &ObservationPanel, threshold: f64, window: usize) -> Result<Vec<AlarmRecord>> {
    if output.region_ids != panel.region_ids() {
        return Err(FluError::invalid("filter output and panel cover different regions"));
    }
    let mut records = Vec::with_capacity(panel.n_regions());
    for (i, id) in panel.region_ids().iter().enumerate() {
        let series: Vec<f64> = panel.series(i).iter().map(|&c| c as f64).collect();
        let peak = find_peak(&series, window)?;
        let alarm = first_exceedance(&output.epidemic_series(i), threshold).map(|d| output.days[d].day);
        records.push(record(id, panel.dates(), alarm, peak));
    }
    Ok(records)
}

/// Filter the whole panel and derive each region's alarm and lead.
pub fn alarm_scan(
    panel: &ObservationPanel,
    graph: &RegionGraph,
    hyper: &HyperPriors,
    variant: &ModelVariant,
    config: &FilterConfig,
) -> Result<(FilterOutput, Vec<AlarmRecord>)> {
    let output = filter_panel(panel, graph, hyper, variant, config)?;
    let alarms = alarms_from(&output, panel, config.threshold, config.peak_window)?;
    Ok((output, alarms))
}

/// Alarm when a region's count first exceeds its mean over a reference
/// period. Reference regions are matched by id.
pub fn average_baseline(panel: &ObservationPanel, reference: &ObservationPanel, window: usize) -> Result<Vec<AlarmRecord>> {
    if reference.n_days() == 0 {
        return Err(FluError::invalid("empty reference period"));
    }
    if reference.n_days() < 28 {
        return Err(FluError::invalid(format!("reference covers {} days, need at least 28", reference.n_days())));
    }
    let mut records = Vec::with_capacity(panel.n_regions());
    for (i, id) in panel.region_ids().iter().enumerate() {
        let r = reference
            .region_index(id)
            .ok_or_else(|| FluError::invalid(format!("region {id} missing from the reference period")))?;
        let threshold = reference.series(r).iter().map(|&c| c as f64).sum::<f64>() / reference.n_days() as f64;
        let series: Vec<f64> = panel.series(i).iter().map(|&c| c as f64).collect();
        let peak = find_peak(&series, window)?;
        records.push(record(id, panel.dates(), first_exceedance(&series, threshold), peak));
    }
    Ok(records)
}

/// Mean lead of one method over the regions it alarmed for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeadTimeRow {
    pub method: String,
    pub mean_lead_days: Option<f64>,
    pub alarmed: usize,
    pub without_alarm: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeadTimeReport {
    pub rows: Vec<LeadTimeRow>,
}

/// Compare methods by mean lead; regions without an alarm are listed and
/// left out of the mean.
pub fn lead_time_report(methods: &[(String, Vec<AlarmRecord>)]) -> Result<LeadTimeReport> {
    fn regions(recs: &[AlarmRecord]) -> Vec<&str> {
        let mut ids: Vec<&str> = recs.iter().map(|r| r.region.as_str()).collect();
        ids.sort_unstable();
        ids
    }
    if let Some((_, first)) = methods.first() {
        let expected = regions(first);
        if let Some((name, _)) = methods.iter().find(|(_, recs)| regions(recs) != expected) {
            return Err(FluError::invalid(format!("method {name} covers different regions")));
        }
    }
    let rows = methods
        .iter()
        .map(|(method, recs)| {
            let leads: Vec<i64> = recs.iter().filter_map(|r| r.lead_days).collect();
            LeadTimeRow {
                method: method.clone(),
                mean_lead_days: (!leads.is_empty()).then(|| leads.iter().sum::<i64>() as f64 / leads.len() as f64),
                alarmed: leads.len(),
                without_alarm: recs.iter().filter(|r| r.lead_days.is_none()).map(|r| r.region.clone()).collect(),
            }
        })
        .collect();
    Ok(LeadTimeReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Days;

    fn dates(n: usize) -> Vec<NaiveDate> {
        let start = NaiveDate::from_ymd_opt(2009, 1, 4).unwrap();
        (0..n as u64).map(|d| start + Days::new(d)).collect()
    }

    fn panel(rows: Vec<Vec<u64>>) -> ObservationPanel {
        let n = rows[0].len();
        let ids = (0..rows.len()).map(|i| format!("R{i}")).collect();
        ObservationPanel::new(ids, dates(n), rows).unwrap()
    }

    #[test]
    fn peak_examples() {
        assert_eq!(find_peak(&[1.0, 2.0, 9.0, 2.0, 1.0], 1).unwrap(), 2);
        assert_eq!(find_peak(&[1.0, 9.0, 1.0, 9.0, 1.0], 1).unwrap(), 1);
        // the middle window holds both spikes
        assert_eq!(find_peak(&[1.0, 9.0, 1.0, 9.0, 1.0], 3).unwrap(), 2);
        assert_eq!(find_peak(&[3.0; 6], 3).unwrap(), 0);
        assert!(find_peak(&[1.0, 2.0], 3).is_err());
        assert!(find_peak(&[1.0, 2.0, 3.0, 4.0], 2).is_err());
    }

    #[test]
    fn smoothed_peak_tracks_noisy_mode() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let mut hits = 0;
        for _ in 0..100 {
            let mode = rng.random_range(30..70);
            let series: Vec<f64> = (0..100)
                .map(|t| {
                    let x = (t as f64 - mode as f64) / 12.0;
                    200.0 * (-0.5 * x * x).exp() + 20.0 + rng.random_range(-15.0..15.0)
                })
                .collect();
            let found = find_peak(&series, 7).unwrap();
            hits += (found.abs_diff(mode) <= 3) as usize;
        }
        assert!(hits >= 95, "{hits} of 100 within 3 days");
    }

    #[test]
    fn baseline_first_exceedance() {
        let reference = panel(vec![vec![10; 28]]);
        let p = panel(vec![vec![5, 8, 12, 30, 40, 50, 40, 30, 20, 10, 5, 5, 5, 5]]);
        let recs = average_baseline(&p, &reference, 3).unwrap();
        assert_eq!(recs[0].alarm_date, Some(p.dates()[2]));
        assert_eq!(recs[0].peak_date, p.dates()[5]);
        assert_eq!(recs[0].lead_days, Some(-3));

        let flat = panel(vec![vec![10; 28]]);
        let recs = average_baseline(&flat, &flat, 7).unwrap();
        assert_eq!(recs[0].alarm_date, None);
        assert_eq!(recs[0].lead_days, None);

        assert!(average_baseline(&p, &panel(vec![vec![10; 20]]), 3).is_err());
    }

    #[test]
    fn lead_report_means() {
        let d = dates(3);
        let rec = |id: &str, lead: Option<i64>| AlarmRecord {
            region: id.into(),
            alarm_date: lead.map(|_| d[0]),
            peak_date: d[2],
            lead_days: lead,
        };
        let report = lead_time_report(&[
            ("single".into(), vec![rec("A", Some(-48))]),
            ("pair".into(), vec![rec("A", Some(-10))]),
        ])
        .unwrap();
        assert_eq!(report.rows[0].mean_lead_days, Some(-48.0));
        let report = lead_time_report(&[(
            "m".into(),
            vec![rec("A", Some(-10)), rec("B", Some(-20)), rec("C", None)],
        )])
        .unwrap();
        assert_eq!(report.rows[0].mean_lead_days, Some(-15.0));
        assert_eq!(report.rows[0].without_alarm, vec!["C".to_string()]);
        assert!(lead_time_report(&[("a".into(), vec![rec("A", None)]), ("b".into(), vec![rec("B", None)])]).is_err());
    }

    #[test]
    fn alarm_on_peak_has_zero_lead() {
        let d = dates(5);
        assert_eq!(record("A", &d, Some(3), 3).lead_days, Some(0));
        assert_eq!(record("A", &d, None, 3).lead_days, None);
        assert_eq!(first_exceedance(&[0.2, 0.5, 0.51], 0.5), Some(2));
        assert_eq!(first_exceedance(&[0.2, 0.5], 0.5), None);
    }
}
