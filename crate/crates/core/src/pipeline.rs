//! End-to-end stages shared by the command-line tool and the HTTP service,
//! so both produce identical payloads for identical inputs.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::clustering::{
    elbow_select_with_restarts, kmeans, policy_features, standardize, ClusterError, CountryClustering, DEFAULT_RESTARTS,
};
use crate::data::{CountryRecord, Dataset};
use crate::forecast::{
    build_dataset, evaluate, recorded_schedule, rolling_forecast, train, EvaluationReport, ForecastConfig,
    ForecastPoint, ModelArtifact, ModelVariant,
};
use crate::neural::{ModelConfig, TrainConfig};
use crate::rt::{estimate_rt_series, RtConfig, RtEstimate};
use crate::whatif::{run_scenario, Scenario, ScenarioResult};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusteringConfig {
    pub k_min: usize,
    pub k_max: usize,
    pub seed: u64,
    pub restarts: usize,
    /// Number of 14-day R_t averages per feature vector.
    pub rt_periods: usize,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self { k_min: 1, k_max: 8, seed: 0, restarts: DEFAULT_RESTARTS, rt_periods: 6 }
    }
}

/// Contents of the `--config` JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct PipelineConfig {
    pub rt: RtConfig,
    pub clustering: ClusteringConfig,
    pub model: ModelConfig,
    pub training: TrainConfig,
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn forecast(&self) -> ForecastConfig {
        ForecastConfig { model: self.model.clone(), training: self.training.clone() }
    }
}

fn record<'a>(dataset: &'a Dataset, country: &str) -> Result<&'a CountryRecord> {
    dataset.record(country).ok_or_else(|| Error::UnknownCountry(country.to_string()))
}

pub fn rt_entries(dataset: &Dataset, country: &str, config: &RtConfig) -> Result<Vec<RtEstimate>> {
    Ok(estimate_rt_series(record(dataset, country)?, config)?.entries)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterEntry {
    pub id: usize,
    pub countries: Vec<String>,
    /// Center in standardized feature units.
    pub center: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedCountry {
    pub country: String,
    pub reason: String,
}

/// The `clusters.json` payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClustersReport {
    pub chosen_k: usize,
    pub low_confidence: bool,
    pub elbow_curve: Vec<(usize, f64)>,
    pub clusters: Vec<ClusterEntry>,
    pub feature_means: Vec<f64>,
    pub feature_stddevs: Vec<f64>,
    pub skipped: Vec<SkippedCountry>,
}

impl ClustersReport {
    /// Members of the cluster containing `country`.
    pub fn cluster_of(&self, country: &str) -> Option<&[String]> {
        self.clusters.iter().find(|c| c.countries.iter().any(|m| m == country)).map(|c| c.countries.as_slice())
    }
}

/// Features for every country with enough data, elbow selection over the
/// configured K range (capped at the number of eligible countries), and the
/// final clustering at the chosen K.
pub fn cluster_dataset(
    dataset: &Dataset,
    rt: &RtConfig,
    config: &ClusteringConfig,
) -> Result<(ClustersReport, CountryClustering)> {
    let mut features = Vec::new();
    let mut skipped = Vec::new();
    for r in &dataset.records {
        match policy_features(r, rt, config.rt_periods) {
            Ok(f) => features.push(f),
            Err(e @ (ClusterError::Rt { .. } | ClusterError::Feature(_))) => {
                skipped.push(SkippedCountry { country: r.country.clone(), reason: e.to_string() })
            }
            Err(e) => return Err(e.into()),
        }
    }
    if features.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "clustering needs at least 3 countries with sufficient data, found {}",
            features.len()
        )));
    }
    let matrix: Vec<Vec<f64>> = features.iter().map(|f| f.values()).collect();
    let z = standardize(&matrix)?;
    let k_max = config.k_max.min(z.data.len());
    let curve = elbow_select_with_restarts(&z.data, config.k_min, k_max, config.seed, config.restarts)?;
    let result = kmeans(&z.data, curve.chosen_k, config.seed, config.restarts)?;
    let countries: Vec<String> = features.iter().map(|f| f.country.clone()).collect();
    let clusters = (0..result.k)
        .map(|id| ClusterEntry {
            id,
            countries: countries
                .iter()
                .zip(&result.assignments)
                .filter(|(_, &a)| a == id)
                .map(|(c, _)| c.clone())
                .collect(),
            center: result.centers[id].clone(),
        })
        .collect();
    let report = ClustersReport {
        chosen_k: curve.chosen_k,
        low_confidence: curve.low_confidence,
        elbow_curve: curve.ks.iter().copied().zip(curve.inertias.iter().copied()).collect(),
        clusters,
        feature_means: z.means,
        feature_stddevs: z.stddevs,
        skipped,
    };
    Ok((report, CountryClustering { countries, result }))
}

/// Trains `variant` for `target` on the records of `countries` (the target
/// is always included). Records are cut at `train_until` (exclusive) so
/// later days can serve as a holdout.
pub fn train_model(
    dataset: &Dataset,
    target: &str,
    countries: &[String],
    variant: ModelVariant,
    config: &ForecastConfig,
    seed: u64,
    train_until: Option<NaiveDate>,
) -> Result<ModelArtifact> {
    record(dataset, target)?;
    let mut names: Vec<&str> = countries.iter().map(String::as_str).collect();
    if !names.contains(&target) {
        names.push(target);
    }
    let mut records = Vec::with_capacity(names.len());
    for name in names {
        let r = record(dataset, name)?;
        let r = match train_until {
            Some(cutoff) => match r.truncated_before(cutoff) {
                Some(t) => t,
                None => continue,
            },
            None => r.clone(),
        };
        records.push(r);
    }
    let set = build_dataset(&records, config.model.window, target)?;
    Ok(train(variant, &set, config, seed)?)
}

/// Forecast under the recorded policy (held constant past the record end).
pub fn forecast(
    artifact: &ModelArtifact,
    dataset: &Dataset,
    country: &str,
    start: NaiveDate,
    horizon: usize,
) -> Result<Vec<ForecastPoint>> {
    let r = record(dataset, country)?;
    let schedule = recorded_schedule(r, start, horizon)?;
    Ok(rolling_forecast(artifact, r, start, horizon, &schedule)?)
}

pub fn evaluate_model(
    artifact: &ModelArtifact,
    dataset: &Dataset,
    country: &str,
    start: NaiveDate,
    horizon: usize,
) -> Result<EvaluationReport> {
    let points = forecast(artifact, dataset, country, start, horizon)?;
    Ok(evaluate(artifact.variant, &points, record(dataset, country)?)?)
}

pub fn whatif(
    artifact: &ModelArtifact,
    dataset: &Dataset,
    country: &str,
    scenario: &Scenario,
) -> Result<ScenarioResult> {
    Ok(run_scenario(artifact, record(dataset, country)?, scenario)?)
}

/// JSON body shared by the CLI (`--format json`) and the service.
pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("pipeline payloads serialize")
}
