//! Supervised windows from cluster-mate records, the three model variants,
//! recursive multi-day forecasting and error metrics.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{scale_levels, CountryRecord, PolicyLevels, PolicySeries, NUM_INDICATORS};
use crate::neural::{fit, ModelConfig, NeuralError, TrainConfig, TrainingSample, TwoPathwayModel};

pub const ARTIFACT_FORMAT: &str = "policyscope-model/1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForecastError {
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("training error: {0}")]
    Training(NeuralError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error("forecast error: {0}")]
    Forecast(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("artifact error: {0}")]
    Artifact(String),
}

pub type Result<T, E = ForecastError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelVariant {
    /// Cluster countries, both pathways.
    Proposed,
    /// Cluster countries, case pathway only.
    NoLockdownData,
    /// Target country only, both pathways.
    SingleCountryOnly,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 3] =
        [ModelVariant::Proposed, ModelVariant::NoLockdownData, ModelVariant::SingleCountryOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelVariant::Proposed => "proposed",
            ModelVariant::NoLockdownData => "no-lockdown-data",
            ModelVariant::SingleCountryOnly => "single-country-only",
        }
    }

    pub fn uses_policy(self) -> bool {
        self != ModelVariant::NoLockdownData
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelVariant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        ModelVariant::ALL.into_iter().find(|v| v.as_str() == s).ok_or_else(|| {
            format!("unknown variant `{s}` (expected proposed, no-lockdown-data or single-country-only)")
        })
    }
}

/// Min-max scaling of one country's raw daily cases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    /// Degenerate ranges map every value to 0.5.
    pub fn normalize(&self, cases: f64) -> f64 {
        if self.max > self.min {
            (cases - self.min) / (self.max - self.min)
        } else {
            0.5
        }
    }

    pub fn denormalize(&self, y: f64) -> f64 {
        if self.max > self.min {
            self.min + y * (self.max - self.min)
        } else {
            self.min
        }
    }

    /// Raw case count for a model output, clamped at zero.
    pub fn to_cases(&self, y: f64) -> f64 {
        self.denormalize(y).max(0.0)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub per_country: BTreeMap<String, MinMax>,
}

impl NormalizationParams {
    pub fn get(&self, country: &str) -> Result<MinMax> {
        self.per_country
            .get(country)
            .copied()
            .ok_or_else(|| ForecastError::Forecast(format!("no normalization parameters for {country}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowedSample {
    pub country: String,
    pub case_window: Vec<f64>,
    pub policy_window: Vec<[f64; NUM_INDICATORS]>,
    pub target: f64,
    pub target_date: NaiveDate,
}

impl TrainingSample for WindowedSample {
    fn case_window(&self) -> &[f64] {
        &self.case_window
    }

    fn policy_window(&self) -> &[[f64; NUM_INDICATORS]] {
        &self.policy_window
    }

    fn target(&self) -> f64 {
        self.target
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub target_country: String,
    pub window: usize,
    pub samples: Vec<WindowedSample>,
    pub normalization: NormalizationParams,
}

impl TrainingSet {
    pub fn countries(&self) -> Vec<String> {
        self.normalization.per_country.keys().cloned().collect()
    }
}

/// Every length-(L+1) window of every record becomes one sample, ordered by
/// country then date. Records shorter than L+1 days or without any cases
/// contribute nothing.
pub fn build_dataset(records: &[CountryRecord], window: usize, target: &str) -> Result<TrainingSet> {
    if window == 0 {
        return Err(ForecastError::Dataset("window length must be positive".into()));
    }
    if !records.iter().any(|r| r.country == target) {
        return Err(ForecastError::Dataset(format!("target country {target} is not among the records")));
    }
    let mut sorted: Vec<&CountryRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.country.cmp(&b.country));

    let mut samples = Vec::new();
    let mut normalization = NormalizationParams::default();
    for record in sorted {
        let cases = &record.cases.new_cases;
        if cases.len() < window + 1 {
            continue;
        }
        let min = *cases.iter().min().expect("non-empty") as f64;
        let max = *cases.iter().max().expect("non-empty") as f64;
        if max <= 0.0 {
            continue;
        }
        let scale = MinMax { min, max };
        normalization.per_country.insert(record.country.clone(), scale);
        let normalized: Vec<f64> = cases.iter().map(|&c| scale.normalize(c as f64)).collect();
        let policy: Vec<[f64; NUM_INDICATORS]> = record.policy.levels.iter().map(scale_levels).collect();
        for end in window..cases.len() {
            samples.push(WindowedSample {
                country: record.country.clone(),
                case_window: normalized[end - window..end].to_vec(),
                policy_window: policy[end - window..end].to_vec(),
                target: normalized[end],
                target_date: record.date_at(end),
            });
        }
    }
    if samples.is_empty() {
        return Err(ForecastError::Dataset(format!("no record spans at least {} days with cases", window + 1)));
    }
    Ok(TrainingSet { target_country: target.to_string(), window, samples, normalization })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ForecastConfig {
    pub model: ModelConfig,
    pub training: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetrics {
    pub samples: usize,
    pub initial_train_loss: f64,
    pub final_train_loss: f64,
    pub final_validation_loss: Option<f64>,
    pub epochs_run: usize,
    pub best_epoch: usize,
}

/// Serialized trained model: everything needed to forecast without the
/// training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format: String,
    pub variant: ModelVariant,
    pub target_country: String,
    pub cluster_countries: Vec<String>,
    pub seed: u64,
    pub training: TrainConfig,
    pub normalization: NormalizationParams,
    pub metrics: TrainingMetrics,
    pub model: TwoPathwayModel,
}

impl ModelArtifact {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("artifact serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let artifact: ModelArtifact = serde_json::from_str(text).map_err(|e| ForecastError::Artifact(e.to_string()))?;
        if artifact.format != ARTIFACT_FORMAT {
            return Err(ForecastError::Artifact(format!(
                "unsupported artifact format `{}` (expected `{ARTIFACT_FORMAT}`)",
                artifact.format
            )));
        }
        artifact.model.validate()?;
        Ok(artifact)
    }

    pub fn window(&self) -> usize {
        self.model.config.window
    }
}

/// Trains one variant. `SingleCountryOnly` keeps only the target's samples;
/// `NoLockdownData` drops the policy pathway.
pub fn train(variant: ModelVariant, set: &TrainingSet, config: &ForecastConfig, seed: u64) -> Result<ModelArtifact> {
    let samples: Vec<&WindowedSample> = match variant {
        ModelVariant::SingleCountryOnly => set.samples.iter().filter(|s| s.country == set.target_country).collect(),
        _ => set.samples.iter().collect(),
    };
    if samples.is_empty() {
        return Err(ForecastError::Dataset(format!("no samples for {} under variant {variant}", set.target_country)));
    }
    let model_config = ModelConfig { window: set.window, use_policy: variant.uses_policy(), ..config.model.clone() };
    model_config.validate()?;
    let mut model = TwoPathwayModel::init(&model_config, seed);
    let report = fit(&mut model, &samples, &config.training, seed).map_err(ForecastError::Training)?;

    let mut normalization = set.normalization.clone();
    let cluster_countries = match variant {
        ModelVariant::SingleCountryOnly => {
            normalization.per_country.retain(|c, _| *c == set.target_country);
            vec![set.target_country.clone()]
        }
        _ => set.countries(),
    };
    Ok(ModelArtifact {
        format: ARTIFACT_FORMAT.to_string(),
        variant,
        target_country: set.target_country.clone(),
        cluster_countries,
        seed,
        training: config.training.clone(),
        normalization,
        metrics: TrainingMetrics {
            samples: samples.len(),
            initial_train_loss: report.initial_train_loss,
            final_train_loss: report.final_train_loss,
            final_validation_loss: report.final_validation_loss,
            epochs_run: report.epochs_run,
            best_epoch: report.best_epoch,
        },
        model,
    })
}

/// Next-day cases for raw-unit windows of the given country.
pub fn predict_next_day(
    artifact: &ModelArtifact,
    country: &str,
    case_window: &[f64],
    policy_window: &[PolicyLevels],
) -> Result<f64> {
    let scale = artifact.normalization.get(country)?;
    let l = artifact.window();
    if case_window.len() != l || policy_window.len() != l {
        return Err(ForecastError::Shape(format!(
            "windows must have {l} days, got {} cases and {} policy rows",
            case_window.len(),
            policy_window.len()
        )));
    }
    let cases: Vec<f64> = case_window.iter().map(|&c| scale.normalize(c)).collect();
    let policy: Vec<[f64; NUM_INDICATORS]> = policy_window.iter().map(scale_levels).collect();
    let y = artifact.model.forward(&cases, &policy)?;
    Ok(scale.to_cases(y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastPoint {
    pub date: NaiveDate,
    pub predicted_cases: f64,
}

/// Policy schedule for `[start, start + horizon)`: recorded levels where the
/// record has them, otherwise the last recorded levels held constant.
pub fn recorded_schedule(record: &CountryRecord, start: NaiveDate, horizon: usize) -> Result<PolicySeries> {
    let last = *record
        .policy
        .levels
        .last()
        .ok_or_else(|| ForecastError::Forecast(format!("{}: empty policy record", record.country)))?;
    let levels = (0..horizon)
        .map(|h| {
            let date = start + Duration::days(h as i64);
            record.policy.levels_on(date).copied().unwrap_or(last)
        })
        .collect();
    Ok(PolicySeries { country: record.country.clone(), start_date: start, levels })
}

/// Recursive multi-day forecast starting at `start`. Observed cases fill
/// the window before `start`; each prediction then re-enters the window.
/// Policy levels come from the record before `start` and from `schedule`
/// afterwards.
pub fn rolling_forecast(
    artifact: &ModelArtifact,
    record: &CountryRecord,
    start: NaiveDate,
    horizon: usize,
    schedule: &PolicySeries,
) -> Result<Vec<ForecastPoint>> {
    if horizon == 0 {
        return Err(ForecastError::Forecast("horizon must be at least 1 day".into()));
    }
    let l = artifact.window();
    let offset = (start - record.start_date()).num_days();
    if offset < l as i64 || offset > record.len() as i64 {
        return Err(ForecastError::Forecast(format!(
            "{}: need {l} recorded days before {start} (record spans {} to {})",
            record.country,
            record.start_date(),
            record.end_date()
        )));
    }
    let offset = offset as usize;
    let covered = schedule
        .slice(start, horizon)
        .ok_or_else(|| ForecastError::Forecast(format!("policy schedule does not cover {start} + {horizon} days")))?;

    let mut cases: Vec<f64> = record.cases.new_cases[offset - l..offset].iter().map(|&c| c as f64).collect();
    let mut policy: Vec<PolicyLevels> = record.policy.levels[offset - l..offset].to_vec();
    let mut out = Vec::with_capacity(horizon);
    for h in 0..horizon {
        let y = predict_next_day(artifact, &record.country, &cases[h..h + l], &policy[h..h + l])?;
        out.push(ForecastPoint { date: start + Duration::days(h as i64), predicted_cases: y });
        cases.push(y);
        policy.push(covered.levels[h]);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub rmse: f64,
    pub mae: f64,
}

pub fn error_metrics(forecast: &[f64], actual: &[f64]) -> Result<ErrorMetrics> {
    if forecast.len() != actual.len() || forecast.is_empty() {
        return Err(ForecastError::Shape(format!("forecast has {} days, actual has {}", forecast.len(), actual.len())));
    }
    let n = forecast.len() as f64;
    let mse = forecast.iter().zip(actual).map(|(f, a)| (f - a).powi(2)).sum::<f64>() / n;
    let mae = forecast.iter().zip(actual).map(|(f, a)| (f - a).abs()).sum::<f64>() / n;
    Ok(ErrorMetrics { rmse: mse.sqrt(), mae })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub variant: ModelVariant,
    pub rmse: f64,
    pub mae: f64,
    pub horizon: DateRange,
}

/// Scores a forecast against the recorded cases on the same dates.
pub fn evaluate(variant: ModelVariant, forecast: &[ForecastPoint], record: &CountryRecord) -> Result<EvaluationReport> {
    let (first, last) = match (forecast.first(), forecast.last()) {
        (Some(f), Some(l)) => (f.date, l.date),
        _ => return Err(ForecastError::Shape("empty forecast".into())),
    };
    let actual = forecast
        .iter()
        .map(|p| {
            record
                .index_of(p.date)
                .map(|i| record.cases.new_cases[i] as f64)
                .ok_or_else(|| ForecastError::Shape(format!("no recorded cases on {}", p.date)))
        })
        .collect::<Result<Vec<_>>>()?;
    let predicted: Vec<f64> = forecast.iter().map(|p| p.predicted_cases).collect();
    let m = error_metrics(&predicted, &actual)?;
    Ok(EvaluationReport { variant, rmse: m.rmse, mae: m.mae, horizon: DateRange { start: first, end: last } })
}

pub fn write_forecast_csv(points: &[ForecastPoint]) -> String {
    let mut out = String::from("date,predicted_cases\n");
    for p in points {
        out.push_str(&format!("{},{}\n", p.date, p.predicted_cases));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{align, DailyCaseSeries};

    fn record(country: &str, cases: Vec<u64>, levels: PolicyLevels) -> CountryRecord {
        let start = NaiveDate::from_ymd_opt(2020, 3, 1).unwrap();
        let n = cases.len();
        align(
            &DailyCaseSeries { country: country.into(), start_date: start, new_cases: cases },
            &PolicySeries { country: country.into(), start_date: start, levels: vec![levels; n] },
        )
        .unwrap()
    }

    #[test]
    fn sixteen_days_make_two_samples() {
        let set = build_dataset(&[record("QA", (1..=16).collect(), [0; 5])], 14, "QA").unwrap();
        assert_eq!(set.samples.len(), 2);
        assert_eq!(set.samples[0].target_date, NaiveDate::from_ymd_opt(2020, 3, 15).unwrap());
        assert_eq!(set.samples[1].target, 1.0);
    }

    #[test]
    fn constant_cases_normalize_to_half() {
        let set = build_dataset(&[record("QA", vec![40; 20], [0; 5])], 5, "QA").unwrap();
        assert!(set.samples.iter().all(|s| s.case_window.iter().all(|&v| v == 0.5) && s.target == 0.5));
    }

    #[test]
    fn gatherings_level_four_scales_to_one() {
        let set = build_dataset(&[record("QA", (1..=10).collect(), [0, 0, 4, 0, 0])], 5, "QA").unwrap();
        assert_eq!(set.samples[0].policy_window[0][2], 1.0);
    }

    #[test]
    fn dataset_errors() {
        assert!(matches!(build_dataset(&[record("QA", vec![1; 5], [0; 5])], 14, "QA"), Err(ForecastError::Dataset(_))));
        assert!(matches!(
            build_dataset(&[record("QA", vec![1; 20], [0; 5])], 14, "KW"),
            Err(ForecastError::Dataset(_))
        ));
    }

    #[test]
    fn sample_ordering_and_count() {
        let recs = [
            record("KW", (1..=20).collect(), [1; 5]),
            record("BH", (1..=18).collect(), [1; 5]),
            record("QA", (1..=10).collect(), [1; 5]),
        ];
        let set = build_dataset(&recs, 7, "QA").unwrap();
        assert_eq!(set.samples.len(), (20 - 7) + (18 - 7) + (10 - 7));
        let countries: Vec<&str> = set.samples.iter().map(|s| s.country.as_str()).collect();
        let mut sorted = countries.clone();
        sorted.sort();
        assert_eq!(countries, sorted);
    }

    #[test]
    fn min_max_inversion_and_clamp() {
        let s = MinMax { min: 0.0, max: 200.0 };
        assert_eq!(s.to_cases(0.5), 100.0);
        assert_eq!(s.to_cases(-0.1), 0.0);
        for y in [0.0, 0.13, 0.5, 0.999, 1.0] {
            assert!((s.normalize(s.denormalize(y)) - y).abs() < 1e-12);
        }
    }

    #[test]
    fn metrics_examples() {
        let m = error_metrics(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((m.rmse, m.mae), (0.0, 0.0));
        let m = error_metrics(&[1.0, 2.0, 3.0], &[1.0, 2.0, 7.0]).unwrap();
        assert!((m.rmse - (16.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((m.mae - 4.0 / 3.0).abs() < 1e-12);
        assert!(error_metrics(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in ModelVariant::ALL {
            assert_eq!(v.as_str().parse::<ModelVariant>().unwrap(), v);
            assert_eq!(serde_json::to_string(&v).unwrap(), format!("\"{v}\""));
        }
    }

    #[test]
    fn recorded_schedule_holds_last_levels() {
        let rec = record("QA", vec![3; 10], [1, 2, 3, 1, 4]);
        let start = rec.date_at(8);
        let s = recorded_schedule(&rec, start, 5).unwrap();
        assert_eq!(s.levels, vec![[1, 2, 3, 1, 4]; 5]);
        assert_eq!(s.start_date, start);
    }
}
