//! Real-time effective reproduction number estimation.
//!
//! Daily counts are modelled as Poisson with rate
//! `k_prev * exp(gamma * (R - 1))`. The posterior over a discrete R grid is
//! the normalized product of the likelihoods of the most recent `window_m`
//! days under a uniform base prior. All products are taken in log space.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{smooth_values, CountryRecord};

/// Floor applied to a zero previous-day count so the Poisson rate stays positive.
pub const MIN_PREVIOUS_COUNT: f64 = 1e-6;

/// Probability mass of the reported credible interval.
pub const HDI_MASS: f64 = 0.9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RtError {
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("estimator error: {0}")]
    Estimator(String),
    #[error("index error: day {t} outside 1..{len}")]
    Index { t: usize, len: usize },
    #[error("parameter error: {0}")]
    Parameter(String),
}

pub type Result<T, E = RtError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RtConfig {
    pub r_grid_max: f64,
    pub r_grid_step: f64,
    pub window_m: usize,
    pub gamma: f64,
    pub smoothing_window: usize,
}

impl Default for RtConfig {
    fn default() -> Self {
        Self { r_grid_max: 12.0, r_grid_step: 0.01, window_m: 7, gamma: 1.0 / 7.0, smoothing_window: 7 }
    }
}

impl RtConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.r_grid_step > 0.0
            && self.r_grid_max > self.r_grid_step
            && self.r_grid_max.is_finite()
            && self.window_m >= 1
            && self.gamma > 0.0
            && self.gamma.is_finite()
            && self.smoothing_window % 2 == 1;
        if ok {
            Ok(())
        } else {
            Err(RtError::Parameter(format!("invalid RtConfig {self:?}")))
        }
    }

    /// The R values the posterior is defined on: `0, step, 2*step, ..., max`.
    pub fn grid(&self) -> Vec<f64> {
        let n = (self.r_grid_max / self.r_grid_step).round() as usize + 1;
        (0..n).map(|i| i as f64 * self.r_grid_step).collect()
    }
}

fn ln_factorial(k: u64) -> f64 {
    if k < 32 {
        return (2..=k).map(|i| (i as f64).ln()).sum();
    }
    // Stirling series; the truncation error is far below f64 resolution here.
    let x = k as f64;
    let x2 = x * x;
    x * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI * x).ln() + 1.0 / (12.0 * x) - 1.0 / (360.0 * x * x2)
        + 1.0 / (1260.0 * x * x2 * x2)
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(RtError::Numeric(format!("{name} is not finite ({v})")))
    }
}

/// Poisson rate of today's count given yesterday's count and R.
pub fn poisson_rate(k_prev: f64, r: f64, gamma: f64) -> f64 {
    k_prev.max(MIN_PREVIOUS_COUNT) * (gamma * (r - 1.0)).exp()
}

fn log_poisson(k: u64, lambda: f64, ln_k_fact: f64) -> f64 {
    k as f64 * lambda.ln() - lambda - ln_k_fact
}

pub fn log_likelihood(k_t: u64, k_prev: f64, r: f64, gamma: f64) -> Result<f64> {
    check_finite("k_prev", k_prev)?;
    check_finite("r", r)?;
    check_finite("gamma", gamma)?;
    if k_prev < 0.0 || r < 0.0 {
        return Err(RtError::Numeric(format!("negative input k_prev={k_prev}, r={r}")));
    }
    Ok(log_poisson(k_t, poisson_rate(k_prev, r, gamma), ln_factorial(k_t)))
}

/// Probability of observing `k_t` cases today.
pub fn likelihood(k_t: u64, k_prev: f64, r: f64, gamma: f64) -> Result<f64> {
    let v = log_likelihood(k_t, k_prev, r, gamma)?.exp();
    check_finite("likelihood", v)?;
    Ok(v)
}

/// Log-likelihood over the grid up to the `ln k_t!` term, which is constant
/// in R and cancels on normalization.
fn log_likelihood_curve(k_t: u64, k_prev: f64, grid: &[f64], gamma: f64) -> Vec<f64> {
    grid.iter().map(|&r| log_poisson(k_t, poisson_rate(k_prev, r, gamma), 0.0)).collect()
}

fn day_curves(counts: &[f64], grid: &[f64], gamma: f64) -> Vec<Vec<f64>> {
    std::iter::once(Vec::new())
        .chain((1..counts.len()).map(|j| log_likelihood_curve(counts[j].round() as u64, counts[j - 1], grid, gamma)))
        .collect()
}

fn window_posterior_from_curves(
    curves: &[Vec<f64>],
    t: usize,
    grid_len: usize,
    window_m: usize,
) -> Result<RtPosterior> {
    let first = t.saturating_sub(window_m - 1).max(1);
    let mut log_post = vec![0.0; grid_len];
    for curve in &curves[first..=t] {
        for (acc, l) in log_post.iter_mut().zip(curve) {
            *acc += l;
        }
    }
    Ok(RtPosterior { date: None, probabilities: normalize_log(&log_post)? })
}

/// A discrete probability distribution over the R grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtPosterior {
    pub date: Option<NaiveDate>,
    pub probabilities: Vec<f64>,
}

impl RtPosterior {
    pub fn uniform(len: usize) -> Self {
        Self { date: None, probabilities: vec![1.0 / len as f64; len] }
    }

    /// Index of the most probable grid point (lowest index on ties).
    pub fn mode_index(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probabilities.iter().enumerate() {
            if p > self.probabilities[best] {
                best = i;
            }
        }
        best
    }

    pub fn mean(&self, grid: &[f64]) -> f64 {
        grid.iter().zip(&self.probabilities).map(|(r, p)| r * p).sum()
    }

    /// Shortest contiguous index range holding at least `mass` probability.
    pub fn highest_density_interval(&self, mass: f64) -> (usize, usize) {
        let p = &self.probabilities;
        let mut best = (0, p.len() - 1);
        let mut lo = 0;
        let mut acc = 0.0;
        for hi in 0..p.len() {
            acc += p[hi];
            while lo < hi && acc - p[lo] >= mass {
                acc -= p[lo];
                lo += 1;
            }
            if acc >= mass && hi - lo < best.1 - best.0 {
                best = (lo, hi);
            }
        }
        best
    }
}

/// Converts unnormalized log weights into a probability vector.
fn normalize_log(log_weights: &[f64]) -> Result<Vec<f64>> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(RtError::Estimator(
            "posterior vanished on the whole grid; compute in log space or widen the grid".into(),
        ));
    }
    let weights: Vec<f64> = log_weights.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(RtError::Estimator("posterior normalization failed".into()));
    }
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// One Bayesian update: yesterday's posterior becomes today's prior.
pub fn posterior_step(prior: &RtPosterior, k_t: u64, k_prev: f64, config: &RtConfig) -> Result<RtPosterior> {
    config.validate()?;
    let grid = config.grid();
    if prior.probabilities.len() != grid.len() {
        return Err(RtError::Parameter(format!(
            "prior has {} entries, grid has {}",
            prior.probabilities.len(),
            grid.len()
        )));
    }
    check_finite("k_prev", k_prev)?;
    let loglik = log_likelihood_curve(k_t, k_prev, &grid, config.gamma);
    let log_post: Vec<f64> = prior
        .probabilities
        .iter()
        .zip(&loglik)
        .map(|(&p, &l)| if p > 0.0 { p.ln() + l } else { f64::NEG_INFINITY })
        .collect();
    Ok(RtPosterior { date: prior.date, probabilities: normalize_log(&log_post)? })
}

/// Posterior for day `t` built from only the last `window_m` observation days.
///
/// Day `j` contributes the likelihood of `round(counts[j])` given
/// `counts[j - 1]`, so `t` must be at least 1.
pub fn windowed_posterior(counts: &[f64], t: usize, config: &RtConfig) -> Result<RtPosterior> {
    config.validate()?;
    if t == 0 || t >= counts.len() {
        return Err(RtError::Index { t, len: counts.len() });
    }
    if let Some(bad) = counts.iter().find(|c| !c.is_finite() || **c < 0.0) {
        return Err(RtError::Numeric(format!("invalid count {bad}")));
    }
    let grid = config.grid();
    let first = t.saturating_sub(config.window_m - 1).max(1);
    let mut curves = vec![Vec::new(); t + 1];
    for j in first..=t {
        curves[j] = log_likelihood_curve(counts[j].round() as u64, counts[j - 1], &grid, config.gamma);
    }
    window_posterior_from_curves(&curves, t, grid.len(), config.window_m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtEstimate {
    pub date: NaiveDate,
    pub mode: f64,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtSeries {
    pub country: String,
    pub entries: Vec<RtEstimate>,
}

/// Summarizes a posterior into mode, mean, and the 90% highest-density interval.
pub fn summarize(posterior: &RtPosterior, grid: &[f64], date: NaiveDate) -> RtEstimate {
    let (lo, hi) = posterior.highest_density_interval(HDI_MASS);
    RtEstimate {
        date,
        mode: grid[posterior.mode_index()],
        mean: posterior.mean(grid),
        ci_low: grid[lo],
        ci_high: grid[hi],
    }
}

/// Estimates R_t for every day after the country's first reported case.
pub fn estimate_rt_series(record: &CountryRecord, config: &RtConfig) -> Result<RtSeries> {
    config.validate()?;
    let first = record
        .first_case_index()
        .ok_or_else(|| RtError::Estimator(format!("{}: no reported cases", record.country)))?;
    let raw: Vec<f64> = record.cases.new_cases.iter().map(|&c| c as f64).collect();
    // Short records fall back to the widest odd window that fits.
    let window = config.smoothing_window.min(if raw.len() % 2 == 1 { raw.len() } else { raw.len() - 1 });
    let smoothed = smooth_values(&raw, window).map_err(|e| RtError::Parameter(e.to_string()))?;
    let counts = &smoothed[first..];
    let positive = counts.iter().skip(1).filter(|&&c| c > 0.0).count();
    if counts.len() < config.window_m + 1 || positive < config.window_m + 1 {
        return Err(RtError::Estimator(format!(
            "{}: need at least {} days with cases after the first case, found {}",
            record.country,
            config.window_m + 1,
            positive
        )));
    }
    let grid = config.grid();
    let curves = day_curves(counts, &grid, config.gamma);
    let entries = (1..counts.len())
        .map(|t| {
            let posterior = window_posterior_from_curves(&curves, t, grid.len(), config.window_m)?;
            Ok(summarize(&posterior, &grid, record.date_at(first + t)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RtSeries { country: record.country.clone(), entries })
}

/// Averages posterior means over consecutive 14-day blocks. Blocks past the
/// end of the series repeat the last computed block.
pub fn biweekly_rt_averages(series: &RtSeries, num_periods: usize) -> Result<Vec<f64>> {
    if num_periods == 0 {
        return Err(RtError::Parameter("num_periods must be positive".into()));
    }
    if series.entries.is_empty() {
        return Err(RtError::Estimator(format!("{}: empty R_t series", series.country)));
    }
    let mut out = Vec::with_capacity(num_periods);
    let mut blocks = series.entries.chunks(14);
    for _ in 0..num_periods {
        let value = match blocks.next() {
            Some(block) => block.iter().map(|e| e.mean).sum::<f64>() / block.len() as f64,
            None => *out.last().expect("first block always exists"),
        };
        out.push(value);
    }
    Ok(out)
}

/// Writes the `rt` CSV: `country,date,rt_mode,rt_mean,ci_low,ci_high`.
pub fn write_rt_csv(series: &RtSeries) -> String {
    let mut out = String::from("country,date,rt_mode,rt_mean,ci_low,ci_high\n");
    for e in &series.entries {
        out.push_str(&format!("{},{},{},{},{},{}\n", series.country, e.date, e.mode, e.mean, e.ci_low, e.ci_high));
    }
    out
}
