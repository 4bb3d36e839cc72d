//! Seeded synthetic datasets with known generating parameters.
//!
//! Cases follow a discrete Poisson process whose mean for day `t + 1` is
//! `k_t * exp(gamma * (R_t - 1))`. In the policy preset
//! `R_t = r_base + Σ_j beta_j * (max_j - level_j) / max_j`, so lifting a
//! sector with a positive coefficient raises growth by a known amount.

use std::fmt;
use std::str::FromStr;

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::data::{align, CountryRecord, DailyCaseSeries, PolicyIndicator, PolicyLevels, PolicySeries, NUM_INDICATORS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    PlantedPolicyEffect,
    Constant,
    ThreeBlobs,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::PlantedPolicyEffect, Preset::Constant, Preset::ThreeBlobs];

    pub fn as_str(self) -> &'static str {
        match self {
            Preset::PlantedPolicyEffect => "planted-policy-effect",
            Preset::Constant => "constant",
            Preset::ThreeBlobs => "three-blobs",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL.into_iter().find(|p| p.as_str() == s).ok_or_else(|| format!("unknown preset `{s}`"))
    }
}

/// Draws one Poisson count; the mean is clamped to keep the sampler finite.
pub fn poisson_draw<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    let mean = mean.clamp(0.0, 1e9);
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive finite mean").sample(rng) as u64
}

/// Cases generated with a prescribed R for each day after the first.
/// `r_by_day[t]` drives the transition from day `t` to day `t + 1`.
pub fn cases_with_r(seed: u64, initial: u64, r_by_day: &[f64], gamma: f64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::with_capacity(r_by_day.len() + 1);
    cases.push(initial);
    for &r in r_by_day {
        let prev = *cases.last().expect("non-empty") as f64;
        cases.push(poisson_draw(prev * (gamma * (r - 1.0)).exp(), &mut rng));
    }
    cases
}

/// R schedule made of constant segments `(r, days)`.
pub fn piecewise_r(segments: &[(f64, usize)]) -> Vec<f64> {
    segments.iter().flat_map(|&(r, n)| std::iter::repeat_n(r, n)).collect()
}

fn base_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 2, 15).expect("valid date")
}

fn make_record(country: &str, start: NaiveDate, cases: Vec<u64>, levels: Vec<PolicyLevels>) -> CountryRecord {
    align(
        &DailyCaseSeries { country: country.to_string(), start_date: start, new_cases: cases },
        &PolicySeries { country: country.to_string(), start_date: start, levels },
    )
    .expect("generator produces aligned series")
}

/// Per-sector coefficients of the planted reproduction-number model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyCoefficients {
    pub r_base: f64,
    pub school: f64,
    pub workplace: f64,
    pub gatherings: f64,
    pub transport: f64,
    pub travel: f64,
}

impl PolicyCoefficients {
    pub fn beta(&self, kind: PolicyIndicator) -> f64 {
        match kind {
            PolicyIndicator::SchoolClosing => self.school,
            PolicyIndicator::WorkplaceClosing => self.workplace,
            PolicyIndicator::GatheringRestrictions => self.gatherings,
            PolicyIndicator::PublicTransportShutdown => self.transport,
            PolicyIndicator::TravelControls => self.travel,
        }
    }

    pub fn reproduction_number(&self, levels: &PolicyLevels) -> f64 {
        self.r_base
            + PolicyIndicator::ALL
                .iter()
                .map(|&k| {
                    let max = f64::from(k.max_level());
                    self.beta(k) * (max - f64::from(levels[k.index()])) / max
                })
                .sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedConfig {
    pub countries: usize,
    pub days: usize,
    pub holdout_days: usize,
    pub gamma: f64,
    pub coefficients: PolicyCoefficients,
    /// Holdout day on which the target lifts schools and opens borders.
    pub lift_offset: usize,
    /// Days before the holdout from which the target keeps schools,
    /// transport and travel at their maximum level.
    pub strict_lead: usize,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            countries: 6,
            days: 150,
            holdout_days: 20,
            gamma: 1.0 / 7.0,
            coefficients: PolicyCoefficients {
                r_base: 0.7,
                school: 0.45,
                workplace: 0.1,
                gatherings: 0.1,
                transport: 0.0,
                travel: 0.45,
            },
            lift_offset: 8,
            strict_lead: 15,
        }
    }
}

/// Feature-space description of one planted cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub countries: Vec<String>,
    pub reaction_lags: [i64; NUM_INDICATORS],
    pub lag_jitter_days: i64,
    pub r: f64,
    pub r_jitter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub preset: Preset,
    pub seed: u64,
    pub start_date: NaiveDate,
    pub days: usize,
    pub countries: Vec<String>,
    pub gamma: f64,
    pub description: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_country: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub holdout_days: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub holdout_start: Option<NaiveDate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<PolicyCoefficients>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lift_date: Option<NaiveDate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blobs: Option<Vec<BlobSpec>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constant_cases: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub records: Vec<CountryRecord>,
    pub manifest: Manifest,
}

pub fn generate(preset: Preset, seed: u64) -> SynthDataset {
    match preset {
        Preset::PlantedPolicyEffect => planted_policy_effect(&PlantedConfig::default(), seed),
        Preset::Constant => constant(seed),
        Preset::ThreeBlobs => three_blobs(seed),
    }
}

/// Simulates one country under a simple reactive government: a broad
/// lockdown once cases pass an alarm level, then one sector at a time is
/// relaxed or re-tightened as the weekly average leaves a band around the
/// country's tolerated level. Once a lockdown exists, occasional one-step
/// adjustments of a random sector are made regardless of cases.
struct Controller {
    tolerated: f64,
    hold: usize,
    adjust_probability: f64,
    last_change: Option<usize>,
}

impl Controller {
    fn update<R: Rng + ?Sized>(&mut self, day: usize, recent: &[u64], levels: &mut PolicyLevels, rng: &mut R) {
        let any_on = levels.iter().any(|&l| l > 0);
        if any_on && rng.random_bool(self.adjust_probability) {
            let k = PolicyIndicator::ALL[rng.random_range(0..NUM_INDICATORS)];
            let level = &mut levels[k.index()];
            *level =
                if *level == 0 || (*level < k.max_level() && rng.random_bool(0.5)) { *level + 1 } else { *level - 1 };
            return;
        }
        if self.last_change.is_some_and(|d| day < d + self.hold) {
            return;
        }
        let avg = recent.iter().sum::<u64>() as f64 / recent.len().max(1) as f64;
        if avg > 1.4 * self.tolerated {
            if !any_on {
                for k in PolicyIndicator::ALL {
                    levels[k.index()] = k.max_level() - u8::from(rng.random_bool(0.3));
                }
            } else {
                let open: Vec<PolicyIndicator> =
                    PolicyIndicator::ALL.into_iter().filter(|k| levels[k.index()] < k.max_level()).collect();
                if open.is_empty() {
                    return;
                }
                let k = open[rng.random_range(0..open.len())];
                levels[k.index()] = k.max_level();
            }
            self.last_change = Some(day);
        } else if avg < 0.6 * self.tolerated && any_on {
            let closed: Vec<PolicyIndicator> =
                PolicyIndicator::ALL.into_iter().filter(|k| levels[k.index()] > 0).collect();
            let k = closed[rng.random_range(0..closed.len())];
            let drop = rng.random_range(1..=levels[k.index()]);
            levels[k.index()] -= drop;
            self.last_change = Some(day);
        }
    }
}

pub fn planted_policy_effect(config: &PlantedConfig, seed: u64) -> SynthDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = base_date();
    let holdout_start = config.days - config.holdout_days;
    let lift_day = holdout_start + config.lift_offset;
    let strict_from = holdout_start.saturating_sub(config.strict_lead);
    let countries: Vec<String> = (1..=config.countries).map(|i| format!("C{i:02}")).collect();
    let target = countries[0].clone();

    let mut records = Vec::with_capacity(config.countries);
    for (ci, country) in countries.iter().enumerate() {
        let is_target = ci == 0;
        let mut controller = Controller {
            tolerated: rng.random_range(300.0..1500.0),
            hold: rng.random_range(4..=7),
            adjust_probability: 0.08,
            last_change: None,
        };
        let mut levels: PolicyLevels = [0; NUM_INDICATORS];
        let mut cases: Vec<u64> = vec![rng.random_range(20..=60)];
        let mut schedule: Vec<PolicyLevels> = Vec::with_capacity(config.days);
        for day in 0..config.days {
            let frozen = is_target && day >= holdout_start;
            if !frozen {
                let from = cases.len().saturating_sub(7);
                controller.update(day, &cases[from..], &mut levels, &mut rng);
            }
            if is_target && day >= strict_from {
                for k in [
                    PolicyIndicator::SchoolClosing,
                    PolicyIndicator::PublicTransportShutdown,
                    PolicyIndicator::TravelControls,
                ] {
                    levels[k.index()] = k.max_level();
                }
                if day >= lift_day {
                    levels[PolicyIndicator::SchoolClosing.index()] = 0;
                    levels[PolicyIndicator::TravelControls.index()] = 1;
                }
            }
            schedule.push(levels);
            if day + 1 < config.days {
                let r = config.coefficients.reproduction_number(&levels);
                let prev = cases[day] as f64;
                cases.push(poisson_draw(prev * (config.gamma * (r - 1.0)).exp(), &mut rng));
            }
        }
        records.push(make_record(country, start, cases, schedule));
    }

    SynthDataset {
        records,
        manifest: Manifest {
            preset: Preset::PlantedPolicyEffect,
            seed,
            start_date: start,
            days: config.days,
            countries,
            gamma: config.gamma,
            description: format!(
                "Next-day cases ~ Poisson(k_t * exp(gamma * (R_t - 1))) with \
                 R_t = r_base + sum_j beta_j * (max_j - level_j) / max_j evaluated on day t's levels. \
                 Policies follow a reactive controller. The target keeps schools, transport and travel \
                 at maximum from {} days before the holdout, holds other sectors fixed during the \
                 holdout, and on holdout day {} sets schools to 0 and travel to 1.",
                config.strict_lead, config.lift_offset
            ),
            target_country: Some(target),
            holdout_days: Some(config.holdout_days),
            holdout_start: Some(start + Duration::days(holdout_start as i64)),
            coefficients: Some(config.coefficients),
            lift_date: Some(start + Duration::days(lift_day as i64)),
            blobs: None,
            constant_cases: None,
        },
    }
}

pub fn constant(seed: u64) -> SynthDataset {
    const CASES: u64 = 50;
    const DAYS: usize = 60;
    let start = base_date();
    let countries: Vec<String> = ["K01", "K02", "K03"].iter().map(|s| s.to_string()).collect();
    let records = countries
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let level = (i as u8).min(2);
            make_record(c, start, vec![CASES; DAYS], vec![[level; NUM_INDICATORS]; DAYS])
        })
        .collect();
    SynthDataset {
        records,
        manifest: Manifest {
            preset: Preset::Constant,
            seed,
            start_date: start,
            days: DAYS,
            countries,
            gamma: 1.0 / 7.0,
            description: "Flat daily cases with constant policy levels; the true R is 1 everywhere.".into(),
            target_country: None,
            holdout_days: None,
            holdout_start: None,
            coefficients: None,
            lift_date: None,
            blobs: None,
            constant_cases: Some(CASES),
        },
    }
}

pub const BLOB_COUNTRIES: usize = 30;
pub const BLOB_DAYS: usize = 88;

/// Three groups of 30 countries. Within a group, reaction lags differ by at
/// most one day and the constant true R by at most 0.02; the groups are
/// about 15 days and 0.2 apart.
pub fn three_blobs(seed: u64) -> SynthDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma = 1.0 / 7.0;
    let start = base_date();
    let centers: [([i64; NUM_INDICATORS], f64); 3] =
        [([3, 5, 4, 8, 2], 0.8), ([18, 22, 20, 25, 15], 1.0), ([35, 40, 38, 45, 30], 1.2)];
    let mut blobs = Vec::new();
    let mut records = Vec::new();
    let mut countries = Vec::new();
    for (b, (lags, r)) in centers.iter().enumerate() {
        let mut members = Vec::new();
        for i in 0..BLOB_COUNTRIES {
            let name = format!("B{}{:02}", b + 1, i + 1);
            let first_case = rng.random_range(0..=2usize);
            let r_country = r + rng.random_range(-0.02..=0.02);
            let mut levels = vec![[0u8; NUM_INDICATORS]; BLOB_DAYS];
            for k in PolicyIndicator::ALL {
                let lag = lags[k.index()] + rng.random_range(-1..=1i64);
                let on = (first_case as i64 + lag).max(0) as usize;
                for day in levels.iter_mut().skip(on) {
                    day[k.index()] = k.max_level();
                }
            }
            let mut cases = vec![0u64; first_case];
            let tail = cases_with_r(rng.random(), 5000, &vec![r_country; BLOB_DAYS - first_case - 1], gamma);
            cases.extend(tail);
            records.push(make_record(&name, start, cases, levels));
            members.push(name.clone());
            countries.push(name);
        }
        blobs.push(BlobSpec { countries: members, reaction_lags: *lags, lag_jitter_days: 1, r: *r, r_jitter: 0.02 });
    }
    SynthDataset {
        records,
        manifest: Manifest {
            preset: Preset::ThreeBlobs,
            seed,
            start_date: start,
            days: BLOB_DAYS,
            countries,
            gamma,
            description: "Three clusters of 30 countries with distinct reaction lags and constant R; \
                          each country starts at 5000 cases/day."
                .into(),
            target_country: None,
            holdout_days: None,
            holdout_start: None,
            coefficients: None,
            lift_date: None,
            blobs: Some(blobs),
            constant_cases: None,
        },
    }
}

/// Three isotropic Gaussian blobs of `per_blob` 2-D points with unit
/// spread, centered on an equilateral triangle of side `10 * spread`.
pub fn blob_points(seed: u64, per_blob: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spread = 1.0;
    let side = 10.0 * spread;
    let centers = [(0.0, 0.0), (side, 0.0), (side / 2.0, side * 3f64.sqrt() / 2.0)];
    let normal = Normal::new(0.0, spread).expect("valid normal");
    let mut points = Vec::with_capacity(3 * per_blob);
    let mut labels = Vec::with_capacity(3 * per_blob);
    for (b, (cx, cy)) in centers.iter().enumerate() {
        for _ in 0..per_blob {
            points.push(vec![cx + normal.sample(&mut rng), cy + normal.sample(&mut rng)]);
            labels.push(b);
        }
    }
    (points, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_deterministic() {
        for p in Preset::ALL {
            assert_eq!(generate(p, 7), generate(p, 7), "{p}");
        }
        assert_ne!(generate(Preset::PlantedPolicyEffect, 7), generate(Preset::PlantedPolicyEffect, 8));
    }

    #[test]
    fn planted_shape_and_target_schedule() {
        let cfg = PlantedConfig::default();
        let ds = planted_policy_effect(&cfg, 3);
        assert_eq!(ds.records.len(), 6);
        assert!(ds.records.iter().all(|r| r.len() == 150));
        let target = &ds.records[0];
        let lift = cfg.days - cfg.holdout_days + cfg.lift_offset;
        assert_eq!(target.policy.levels[lift - 1][0], 3);
        assert_eq!(target.policy.levels[lift - 1][4], 4);
        assert_eq!(target.policy.levels[lift][0], 0);
        assert_eq!(target.policy.levels[lift][4], 1);
        assert_eq!(ds.manifest.lift_date, Some(target.date_at(lift)));
    }

    #[test]
    fn planted_reproduction_number() {
        let c = PlantedConfig::default().coefficients;
        assert!((c.reproduction_number(&[3, 3, 4, 2, 4]) - c.r_base).abs() < 1e-12);
        let open = c.r_base + c.school + c.workplace + c.gatherings + c.transport + c.travel;
        assert!((c.reproduction_number(&[0; 5]) - open).abs() < 1e-12);
    }

    #[test]
    fn blob_points_are_labelled() {
        let (p, l) = blob_points(1, 30);
        assert_eq!(p.len(), 90);
        assert_eq!(l.iter().filter(|&&b| b == 2).count(), 30);
    }

    #[test]
    fn r_segments_expand() {
        assert_eq!(piecewise_r(&[(0.7, 2), (1.5, 1)]), vec![0.7, 0.7, 1.5]);
        let c = cases_with_r(1, 100, &[1.0; 10], 1.0 / 7.0);
        assert_eq!(c.len(), 11);
        assert_eq!(c[0], 100);
    }
}
