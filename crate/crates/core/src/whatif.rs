//! Counterfactual lockdown scenarios evaluated against a baseline forecast
//! from the same trained model.

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{CountryRecord, PolicyIndicator, PolicySeries};
use crate::forecast::{recorded_schedule, rolling_forecast, ForecastError, ModelArtifact};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("scenario `{scenario}`: {source}")]
    Forecast { scenario: String, source: ForecastError },
}

pub type Result<T, E = ScenarioError> = std::result::Result<T, E>;

/// Sets `indicator` to `level` on horizon offsets `from..=to`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Override {
    pub indicator: PolicyIndicator,
    pub level: u8,
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub start: NaiveDate,
    pub horizon: usize,
    #[serde(default)]
    pub overrides: Vec<Override>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(ScenarioError::Validation("horizon must be at least 1 day".into()));
        }
        for o in &self.overrides {
            o.indicator.validate_level(o.level).map_err(ScenarioError::Validation)?;
            if o.from > o.to || o.to >= self.horizon {
                return Err(ScenarioError::Validation(format!(
                    "{} override offsets {}..={} must lie within [0, {})",
                    o.indicator, o.from, o.to, self.horizon
                )));
            }
        }
        Ok(())
    }
}

/// Copy of `policy` with the scenario's overrides applied. Indicators
/// without overrides are left untouched.
pub fn apply_scenario(policy: &PolicySeries, scenario: &Scenario) -> Result<PolicySeries> {
    scenario.validate()?;
    let base = (scenario.start - policy.start_date).num_days();
    if base < 0 || base as usize + scenario.horizon > policy.len() {
        return Err(ScenarioError::Validation(format!(
            "policy for {} does not cover {} + {} days",
            policy.country, scenario.start, scenario.horizon
        )));
    }
    let base = base as usize;
    let mut out = policy.clone();
    for o in &scenario.overrides {
        for offset in o.from..=o.to {
            out.levels[base + offset][o.indicator.index()] = o.level;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub scenario: String,
    pub dates: Vec<NaiveDate>,
    pub baseline: Vec<f64>,
    pub counterfactual: Vec<f64>,
    pub delta: Vec<f64>,
    pub cumulative_delta: f64,
}

/// Forecasts the scenario and the baseline (recorded or held-constant
/// policy) from the same case history and reports per-day differences.
pub fn run_scenario(artifact: &ModelArtifact, record: &CountryRecord, scenario: &Scenario) -> Result<ScenarioResult> {
    scenario.validate()?;
    let with_context = |source| ScenarioError::Forecast { scenario: scenario.name.clone(), source };
    let actual = recorded_schedule(record, scenario.start, scenario.horizon).map_err(with_context)?;
    let altered = apply_scenario(&actual, scenario)?;
    let baseline =
        rolling_forecast(artifact, record, scenario.start, scenario.horizon, &actual).map_err(with_context)?;
    let counterfactual =
        rolling_forecast(artifact, record, scenario.start, scenario.horizon, &altered).map_err(with_context)?;
    let delta: Vec<f64> =
        counterfactual.iter().zip(&baseline).map(|(c, b)| c.predicted_cases - b.predicted_cases).collect();
    Ok(ScenarioResult {
        scenario: scenario.name.clone(),
        dates: (0..scenario.horizon).map(|h| scenario.start + Duration::days(h as i64)).collect(),
        baseline: baseline.iter().map(|p| p.predicted_cases).collect(),
        counterfactual: counterfactual.iter().map(|p| p.predicted_cases).collect(),
        cumulative_delta: delta.iter().sum(),
        delta,
    })
}

pub fn sector_name(indicator: PolicyIndicator) -> &'static str {
    match indicator {
        PolicyIndicator::SchoolClosing => "schools",
        PolicyIndicator::WorkplaceClosing => "workplace",
        PolicyIndicator::GatheringRestrictions => "gatherings",
        PolicyIndicator::PublicTransportShutdown => "transport",
        PolicyIndicator::TravelControls => "borders",
    }
}

/// Scenario fully lifting one sector for the whole horizon.
pub fn lift_sector(indicator: PolicyIndicator, start: NaiveDate, horizon: usize) -> Scenario {
    Scenario {
        name: format!("lift-{}", sector_name(indicator)),
        start,
        horizon,
        overrides: vec![Override { indicator, level: 0, from: 0, to: horizon.saturating_sub(1) }],
    }
}

/// One full-lift scenario per sector.
pub fn standard_scenarios(start: NaiveDate, horizon: usize) -> Vec<Scenario> {
    PolicyIndicator::ALL.into_iter().map(|k| lift_sector(k, start, horizon)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn policy(n: usize) -> PolicySeries {
        PolicySeries {
            country: "QA".into(),
            start_date: NaiveDate::from_ymd_opt(2020, 9, 1).unwrap(),
            levels: (0..n).map(|i| [3, 2, 4, (i % 3) as u8, 4]).collect(),
        }
    }

    fn scenario(overrides: Vec<Override>) -> Scenario {
        Scenario { name: "s".into(), start: NaiveDate::from_ymd_opt(2020, 9, 1).unwrap(), horizon: 7, overrides }
    }

    #[test]
    fn empty_overrides_are_identity() {
        let p = policy(7);
        assert_eq!(apply_scenario(&p, &scenario(vec![])).unwrap(), p);
    }

    #[test]
    fn lifting_schools_touches_only_schools() {
        let p = policy(7);
        let s = lift_sector(PolicyIndicator::SchoolClosing, p.start_date, 7);
        let out = apply_scenario(&p, &s).unwrap();
        for (a, b) in out.levels.iter().zip(&p.levels) {
            assert_eq!(a[0], 0);
            assert_eq!(a[1..], b[1..]);
        }
    }

    #[test]
    fn out_of_range_override_rejected() {
        let p = policy(7);
        let s =
            scenario(vec![Override { indicator: PolicyIndicator::GatheringRestrictions, level: 5, from: 0, to: 6 }]);
        assert!(matches!(apply_scenario(&p, &s), Err(ScenarioError::Validation(_))));
        let late = scenario(vec![Override { indicator: PolicyIndicator::TravelControls, level: 0, from: 3, to: 7 }]);
        assert!(late.validate().is_err());
        assert!(apply_scenario(&policy(5), &scenario(vec![])).is_err());
    }

    #[test]
    fn standard_scenarios_cover_every_sector() {
        let start = NaiveDate::from_ymd_opt(2020, 9, 1).unwrap();
        let all = standard_scenarios(start, 7);
        assert_eq!(all.len(), 5);
        for (s, k) in all.iter().zip(PolicyIndicator::ALL) {
            assert_eq!(s.overrides.len(), 1);
            assert_eq!(s.overrides[0].indicator, k);
            assert_eq!((s.overrides[0].from, s.overrides[0].to, s.overrides[0].level), (0, 6, 0));
            s.validate().unwrap();
        }
        let borders = all.iter().find(|s| s.name == "lift-borders").unwrap();
        assert_eq!(borders.overrides[0].indicator, PolicyIndicator::TravelControls);
    }
}
