use std::ops::Range;

use chrono::{Datelike, NaiveDate, Weekday};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{FluError, Result};

/// Default number of lags: one week.
pub const AR_ORDER: usize = 7;

/// `y_t = Σ_j b_j y_{t−j} + c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    pub order: usize,
    /// `b_1..b_n`, most recent lag first.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub residual_variance: f64,
    /// Standard errors of `b_1..b_n` then `c`.
    pub standard_errors: Vec<f64>,
}

/// `log(ili) = β₀ + β₁ log(counts)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IliMap {
    pub intercept: f64,
    pub slope: f64,
    pub residual_std_error: f64,
    pub intercept_se: f64,
    pub slope_se: f64,
}

impl IliMap {
    pub fn predict(&self, counts: f64) -> f64 {
        (self.intercept + self.slope * counts.ln()).exp()
    }
}

struct LeastSquares {
    coef: Vec<f64>,
    residual_variance: f64,
    standard_errors: Vec<f64>,
}

/// Minimum-norm least squares through the SVD. Exactly collinear columns get
/// the minimum-norm solution; fewer rows than columns is an error.
fn least_squares(x: DMatrix<f64>, y: DVector<f64>) -> Result<LeastSquares> {
    let (m, p) = x.shape();
    if m < p {
        return Err(FluError::DegenerateFit(format!("{m} observations for {p} coefficients")));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(FluError::invalid("regression data must be finite"));
    }
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if !(smax > 0.0) {
        return Err(FluError::DegenerateFit("design matrix is zero".into()));
    }
    let tol = smax * (m.max(p) as f64) * f64::EPSILON;
    let rank = svd.rank(tol);
    let beta = svd.solve(&y, tol).map_err(|e| FluError::DegenerateFit(e.to_string()))?;
    let resid = &y - &x * &beta;
    let rss = resid.norm_squared();
    let residual_variance = if m > rank { rss / (m - rank) as f64 } else { 0.0 };
    // Covariance σ² V Σ⁻² Vᵀ restricted to the non-null singular directions.
    let v_t = svd.v_t.as_ref().expect("requested V");
    let mut standard_errors = vec![0.0; p];
    for (r, &s) in svd.singular_values.iter().enumerate() {
        if s > tol {
            for (c, se) in standard_errors.iter_mut().enumerate() {
                *se += (v_t[(r, c)] / s).powi(2);
            }
        }
    }
    for se in &mut standard_errors {
        *se = (*se * residual_variance).sqrt();
    }
    Ok(LeastSquares { coef: beta.iter().copied().collect(), residual_variance, standard_errors })
}

/// Least-squares autoregression of `order` lags plus a constant, fitted to
/// the targets `series[t]` for `t` in `training` (`t ≥ order`).
pub fn fit_ar(series: &[f64], order: usize, training: Range<usize>) -> Result<ArModel> {
    if order == 0 {
        return Err(FluError::invalid("autoregression order must be at least 1"));
    }
    if training.end > series.len() || training.start >= training.end {
        return Err(FluError::invalid(format!("training range {training:?} outside 0..{}", series.len())));
    }
    if training.len() <= order + 1 {
        return Err(FluError::invalid(format!("{} training points for order {order}", training.len())));
    }
    let targets: Vec<usize> = training.filter(|&t| t >= order).collect();
    let m = targets.len();
    let x = DMatrix::from_fn(m, order + 1, |r, c| if c < order { series[targets[r] - 1 - c] } else { 1.0 });
    let y = DVector::from_iterator(m, targets.iter().map(|&t| series[t]));
    let fit = least_squares(x, y)?;
    Ok(ArModel {
        order,
        coefficients: fit.coef[..order].to_vec(),
        intercept: fit.coef[order],
        residual_variance: fit.residual_variance,
        standard_errors: fit.standard_errors,
    })
}

/// Next value after `history`, floored at zero.
pub fn forecast_ar(model: &ArModel, history: &[f64]) -> Result<f64> {
    if history.len() < model.order {
        return Err(FluError::invalid(format!("{} history values for order {}", history.len(), model.order)));
    }
    let n = history.len();
    let y = model.intercept + model.coefficients.iter().enumerate().map(|(j, b)| b * history[n - 1 - j]).sum::<f64>();
    Ok(y.max(0.0))
}

/// OLS of log ILI visits on log counts.
pub fn fit_ili_map(ili_visits: &[f64], flu_counts: &[f64]) -> Result<IliMap> {
    if ili_visits.len() != flu_counts.len() || ili_visits.len() < 4 {
        return Err(FluError::invalid(format!(
            "need two equal series of at least 4 weeks, got {} and {}",
            ili_visits.len(),
            flu_counts.len()
        )));
    }
    if ili_visits.iter().chain(flu_counts).any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(FluError::invalid("log-odds mapping needs positive values"));
    }
    let n = ili_visits.len();
    let x = DMatrix::from_fn(n, 2, |r, c| if c == 0 { 1.0 } else { flu_counts[r].ln() });
    let y = DVector::from_iterator(n, ili_visits.iter().map(|v| v.ln()));
    let fit = least_squares(x, y)?;
    Ok(IliMap {
        intercept: fit.coef[0],
        slope: fit.coef[1],
        residual_std_error: fit.residual_variance.sqrt(),
        intercept_se: fit.standard_errors[0],
        slope_se: fit.standard_errors[1],
    })
}

/// Sum of one Sunday-to-Saturday week.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeeklyTotal {
    pub week_start: NaiveDate,
    pub total: f64,
}

/// Daily values summed into Sunday-start weeks. Partial weeks at either end
/// are dropped; `dates` must be consecutive.
pub fn weekly_totals(dates: &[NaiveDate], values: &[f64]) -> Result<Vec<WeeklyTotal>> {
    if dates.len() != values.len() {
        return Err(FluError::invalid(format!("{} dates for {} values", dates.len(), values.len())));
    }
    if dates.windows(2).any(|w| (w[1] - w[0]).num_days() != 1) {
        return Err(FluError::invalid("dates must be consecutive days"));
    }
    let Some(first) = dates.iter().position(|d| d.weekday() == Weekday::Sun) else {
        return Ok(Vec::new());
    };
    Ok(values[first..]
        .chunks_exact(7)
        .enumerate()
        .map(|(w, chunk)| WeeklyTotal { week_start: dates[first + 7 * w], total: chunk.iter().sum() })
        .collect())
}
