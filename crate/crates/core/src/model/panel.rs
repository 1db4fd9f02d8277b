use chrono::{Datelike, NaiveDate};

use crate::error::{FluError, Result};

/// Day-of-week code used by the daily effect: Sunday=1 through Saturday=7.
pub fn day_code(date: NaiveDate) -> u8 {
    date.weekday().num_days_from_sunday() as u8 + 1
}

/// Daily counts for a set of regions over a contiguous run of dates.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationPanel {
    region_ids: Vec<String>,
    dates: Vec<NaiveDate>,
    // row-major [region][day]
    counts: Vec<u64>,
}

impl ObservationPanel {
    pub fn new(region_ids: Vec<String>, dates: Vec<NaiveDate>, counts: Vec<Vec<u64>>) -> Result<Self> {
        if region_ids.is_empty() {
            return Err(FluError::invalid("panel has no regions"));
        }
        if dates.is_empty() {
            return Err(FluError::invalid("panel has no dates"));
        }
        for w in dates.windows(2) {
            if w[1].signed_duration_since(w[0]).num_days() != 1 {
                return Err(FluError::invalid(format!(
                    "dates must be consecutive days: {} followed by {}",
                    w[0], w[1]
                )));
            }
        }
        if counts.len() != region_ids.len() {
            return Err(FluError::invalid(format!(
                "{} count rows for {} regions",
                counts.len(),
                region_ids.len()
            )));
        }
        let mut flat = Vec::with_capacity(region_ids.len() * dates.len());
        for (row, id) in counts.iter().zip(&region_ids) {
            if row.len() != dates.len() {
                return Err(FluError::invalid(format!(
                    "region {id} has {} counts for {} dates",
                    row.len(),
                    dates.len()
                )));
            }
            flat.extend_from_slice(row);
        }
        Ok(Self { region_ids, dates, counts: flat })
    }

    pub fn n_regions(&self) -> usize {
        self.region_ids.len()
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    pub fn region_ids(&self) -> &[String] {
        &self.region_ids
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn region_index(&self, id: &str) -> Option<usize> {
        self.region_ids.iter().position(|r| r == id)
    }

    #[inline]
    pub fn count(&self, region: usize, day: usize) -> u64 {
        self.counts[region * self.dates.len() + day]
    }

    pub fn series(&self, region: usize) -> &[u64] {
        let n = self.dates.len();
        &self.counts[region * n..(region + 1) * n]
    }

    /// Day-of-week code (1..=7, Sunday first) of day index `day`.
    pub fn day_of_week(&self, day: usize) -> u8 {
        day_code(self.dates[day])
    }

    /// The first `n_days` days of the panel.
    pub fn prefix(&self, n_days: usize) -> Result<Self> {
        if n_days == 0 || n_days > self.n_days() {
            return Err(FluError::invalid(format!(
                "prefix of {n_days} days out of range 1..={}",
                self.n_days()
            )));
        }
        let counts = (0..self.n_regions())
            .map(|i| self.series(i)[..n_days].to_vec())
            .collect();
        Self::new(self.region_ids.clone(), self.dates[..n_days].to_vec(), counts)
    }

    /// Copy with the counts of one cell replaced.
    pub fn with_count(&self, region: usize, day: usize, value: u64) -> Self {
        let mut out = self.clone();
        let n = out.dates.len();
        out.counts[region * n + day] = value;
        out
    }
}

/// Relative day-over-day change of every region's counts.
///
/// Step `s` is the change from panel day `s` to day `s + 1`, so a panel of
/// `T` days yields `T - 1` steps.
#[derive(Clone, Debug, PartialEq)]
pub struct GrowthSeries {
    n_regions: usize,
    n_steps: usize,
    deltas: Vec<f64>,
    days: Vec<u8>,
}

impl GrowthSeries {
    /// Build directly from per-region rows and a day-of-week code per step.
    pub fn new(rows: Vec<Vec<f64>>, days: Vec<u8>) -> Result<Self> {
        if rows.is_empty() {
            return Err(FluError::invalid("growth series has no regions"));
        }
        let n_steps = days.len();
        if n_steps == 0 {
            return Err(FluError::invalid("growth series has no steps"));
        }
        if let Some(d) = days.iter().find(|d| !(1..=7).contains(*d)) {
            return Err(FluError::invalid(format!("day-of-week code {d} outside 1..=7")));
        }
        let mut deltas = Vec::with_capacity(rows.len() * n_steps);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_steps {
                return Err(FluError::invalid(format!(
                    "growth row {i} has {} steps, expected {n_steps}",
                    row.len()
                )));
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(FluError::invalid(format!("growth row {i} has non-finite entries")));
            }
            deltas.extend_from_slice(row);
        }
        Ok(Self { n_regions: rows.len(), n_steps, deltas, days })
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
    pub fn n_cells(&self) -> usize {
        self.n_regions * self.n_steps
    }

    #[inline]
    pub fn get(&self, region: usize, step: usize) -> f64 {
        self.deltas[region * self.n_steps + step]
    }

    pub fn row(&self, region: usize) -> &[f64] {
        &self.deltas[region * self.n_steps..(region + 1) * self.n_steps]
    }

    /// Day-of-week code (1..=7) of step `step`.
    #[inline]
    pub fn day(&self, step: usize) -> u8 {
        self.days[step]
    }

    pub fn days(&self) -> &[u8] {
        &self.days
    }

    /// The first `n_steps` steps.
    pub fn prefix(&self, n_steps: usize) -> Result<Self> {
        if n_steps == 0 || n_steps > self.n_steps {
            return Err(FluError::invalid(format!(
                "growth prefix of {n_steps} steps out of range 1..={}",
                self.n_steps
            )));
        }
        let rows = (0..self.n_regions).map(|i| self.row(i)[..n_steps].to_vec()).collect();
        Self::new(rows, self.days[..n_steps].to_vec())
    }
}

/// Relative change `(Y_t - Y_{t-1}) / max(Y_{t-1}, floor)` for every region.
pub fn compute_growth(panel: &ObservationPanel, floor: f64) -> Result<GrowthSeries> {
    if panel.n_days() < 2 {
        return Err(FluError::invalid("growth needs at least two days of counts"));
    }
    if !(floor > 0.0) {
        return Err(FluError::invalid(format!("growth floor must be positive, got {floor}")));
    }
    let rows = (0..panel.n_regions())
        .map(|i| {
            panel
                .series(i)
                .windows(2)
                .map(|w| (w[1] as f64 - w[0] as f64) / (w[0] as f64).max(floor))
                .collect()
        })
        .collect();
    let days = (1..panel.n_days()).map(|t| panel.day_of_week(t)).collect();
    GrowthSeries::new(rows, days)
}

/// Count implied by applying growth `delta` to `prev` under the same floor
/// convention as [`compute_growth`].
pub fn apply_growth(prev: f64, delta: f64, floor: f64) -> f64 {
    prev + delta * prev.max(floor)
}
