//! Scalar densities and samplers shared by the likelihood and the sweeps.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::function::erf::{erfc, erfc_inv};
use statrs::function::gamma::ln_gamma;

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[inline]
pub fn normal_logpdf(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + variance.ln() + d * d / variance)
}

/// Scaled inverse chi-squared `Inv-χ²(ν, s²)`, density proportional to
/// `x^{-(ν/2+1)} exp(-ν s² / (2x))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaledInvChiSquared {
    pub dof: f64,
    pub scale: f64,
}

impl ScaledInvChiSquared {
    pub fn new(dof: f64, scale: f64) -> Self {
        debug_assert!(dof > 0.0 && scale > 0.0, "Inv-chi2({dof}, {scale})");
        Self { dof, scale }
    }

    /// Conjugate update with `n` residuals whose squares sum to `sum_sq`.
    pub fn posterior(&self, n: f64, sum_sq: f64) -> Self {
        let dof = self.dof + n;
        Self { dof, scale: (self.dof * self.scale + sum_sq) / dof }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let half = 0.5 * self.dof;
        half * (half * self.scale).ln() - ln_gamma(half) - (half + 1.0) * x.ln() - half * self.scale / x
    }

    /// Defined for `dof > 2`.
    pub fn mean(&self) -> f64 {
        self.dof * self.scale / (self.dof - 2.0)
    }

    /// Defined for `dof > 4`.
    pub fn variance(&self) -> f64 {
        let nu = self.dof;
        2.0 * nu * nu * self.scale * self.scale / ((nu - 2.0).powi(2) * (nu - 4.0))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let chi2 = Gamma::new(0.5 * self.dof, 2.0).expect("positive dof").sample(rng);
        (self.dof * self.scale / chi2).max(f64::MIN_POSITIVE)
    }
}

#[inline]
pub fn sample_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, variance: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    mean + variance.sqrt() * z
}

/// Upper tail `P(Z > x)` of the standard normal.
#[inline]
fn upper_tail(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

#[inline]
fn upper_tail_inv(p: f64) -> f64 {
    std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

/// Draw from `N(mean, variance)` restricted to the open interval `(lo, hi)`.
pub fn sample_truncated_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, variance: f64, lo: f64, hi: f64) -> f64 {
    debug_assert!(lo < hi);
    let sd = variance.sqrt();
    let mut a = (lo - mean) / sd;
    let mut b = (hi - mean) / sd;
    // Work in whichever tail keeps the probabilities away from 1.
    let flip = a + b < 0.0;
    if flip {
        (a, b) = (-b, -a);
    }
    let (qa, qb) = (upper_tail(a), upper_tail(b));
    let z = if qa - qb > 1e-280 {
        loop {
            let u: f64 = rng.random();
            let z = upper_tail_inv(qb + u * (qa - qb));
            if z > a && z < b {
                break z;
            }
            // erfc_inv can land exactly on a bound in extreme tails.
            if qa - qb < 1e-12 {
                break exponential_tail(rng, a, b);
            }
        }
    } else {
        exponential_tail(rng, a, b)
    };
    let z = if flip { -z } else { z };
    (mean + sd * z).clamp(lo.next_up(), hi.next_down())
}

/// Robert's exponential rejection sampler for a far upper tail `(a, b)`, `a > 0`.
fn exponential_tail<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    let rate = 0.5 * (a + (a * a + 4.0).sqrt());
    for _ in 0..10_000 {
        let u: f64 = rng.random();
        let z = a - (1.0 - u).ln() / rate;
        if z >= b {
            continue;
        }
        let accept: f64 = rng.random();
        if accept.ln() <= -0.5 * (z - rate).powi(2) {
            return z;
        }
    }
    a
}

#[inline]
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// In-place softmax; returns the log normaliser.
#[inline]
pub fn softmax_in_place(xs: &mut [f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - m).exp();
        total += *x;
    }
    for x in xs.iter_mut() {
        *x /= total;
    }
    m + total.ln()
}

/// Index drawn from normalised probabilities.
#[inline]
pub fn sample_categorical<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.len() - 1
}
