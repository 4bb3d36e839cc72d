//! Browser bindings for three interactive demos on synthetic data:
//! R_t recovery, elbow selection on planted blobs and a what-if lift on the
//! planted-policy-effect dataset. Each binding returns a JSON string.

use chrono::NaiveDate;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use policyscope::clustering::{elbow_select, kmeans};
use policyscope::data::{align, DailyCaseSeries, Dataset, PolicyIndicator, PolicySeries};
use policyscope::forecast::{ForecastConfig, ModelVariant};
use policyscope::neural::{ModelConfig, TrainConfig};
use policyscope::pipeline::{train_model, whatif};
use policyscope::rt::{estimate_rt_series, RtConfig};
use policyscope::synth::{blob_points, cases_with_r, generate, piecewise_r, Preset};
use policyscope::whatif::lift_sector;

#[derive(Debug, Serialize)]
pub struct RtDemo {
    pub cases: Vec<u64>,
    /// Day index of each estimate; estimates start the day after the first case.
    pub days: Vec<usize>,
    /// R that generated the transition into each estimated day.
    pub true_r: Vec<f64>,
    pub mode: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
}

/// Simulates Poisson cases with three constant-R segments and estimates R_t.
pub fn rt_demo_json(seed: u64, r1: f64, r2: f64, r3: f64, segment_days: usize) -> Result<String, String> {
    if !(1..=365).contains(&segment_days) {
        return Err("segment_days must lie in [1, 365]".into());
    }
    if [r1, r2, r3].iter().any(|r| !(0.0..=5.0).contains(r)) {
        return Err("R values must lie in [0, 5]".into());
    }
    let cfg = RtConfig::default();
    let schedule = piecewise_r(&[(r1, segment_days), (r2, segment_days), (r3, segment_days)]);
    let cases = cases_with_r(seed, 2_000, &schedule, cfg.gamma);
    let start = NaiveDate::from_ymd_opt(2020, 3, 1).expect("valid date");
    let n = cases.len();
    let record = align(
        &DailyCaseSeries { country: "SIM".into(), start_date: start, new_cases: cases.clone() },
        &PolicySeries { country: "SIM".into(), start_date: start, levels: vec![[0; 5]; n] },
    )
    .map_err(|e| e.to_string())?;
    let series = estimate_rt_series(&record, &cfg).map_err(|e| e.to_string())?;
    let days: Vec<usize> = series.entries.iter().map(|e| (e.date - start).num_days() as usize).collect();
    let demo = RtDemo {
        cases,
        true_r: days.iter().map(|&d| schedule[d - 1]).collect(),
        days,
        mode: series.entries.iter().map(|e| e.mode).collect(),
        ci_low: series.entries.iter().map(|e| e.ci_low).collect(),
        ci_high: series.entries.iter().map(|e| e.ci_high).collect(),
    };
    Ok(serde_json::to_string(&demo).expect("demo serializes"))
}

#[derive(Debug, Serialize)]
pub struct ElbowDemo {
    pub points: Vec<Vec<f64>>,
    pub ks: Vec<usize>,
    pub inertias: Vec<f64>,
    pub chosen_k: usize,
    pub low_confidence: bool,
    /// Cluster of each point at `shown_k`.
    pub assignments: Vec<usize>,
    pub shown_k: usize,
}

/// Elbow curve over K in `1..=k_max` for three planted 2-D blobs. The
/// assignments are shown for `show_k`, or for the chosen K when it is 0.
pub fn elbow_demo_json(seed: u64, per_blob: usize, k_max: usize, show_k: usize) -> Result<String, String> {
    if !(2..=200).contains(&per_blob) {
        return Err("per_blob must lie in [2, 200]".into());
    }
    if !(3..=12).contains(&k_max) {
        return Err("k_max must lie in [3, 12]".into());
    }
    let (points, _) = blob_points(seed, per_blob);
    let curve = elbow_select(&points, 1, k_max, seed).map_err(|e| e.to_string())?;
    let shown_k = if show_k == 0 { curve.chosen_k } else { show_k.min(k_max) };
    let result = kmeans(&points, shown_k, seed, 20).map_err(|e| e.to_string())?;
    let demo = ElbowDemo {
        points,
        ks: curve.ks,
        inertias: curve.inertias,
        chosen_k: curve.chosen_k,
        low_confidence: curve.low_confidence,
        assignments: result.assignments,
        shown_k,
    };
    Ok(serde_json::to_string(&demo).expect("demo serializes"))
}

#[derive(Debug, Serialize)]
pub struct WhatifDemo {
    pub scenario: String,
    pub dates: Vec<NaiveDate>,
    pub history_dates: Vec<NaiveDate>,
    pub history: Vec<u64>,
    pub actual: Vec<u64>,
    pub baseline: Vec<f64>,
    pub counterfactual: Vec<f64>,
    pub cumulative_delta: f64,
}

fn sector(name: &str) -> Result<PolicyIndicator, String> {
    PolicyIndicator::ALL
        .into_iter()
        .find(|k| policyscope::whatif::sector_name(*k) == name || k.column() == name)
        .ok_or_else(|| format!("unknown sector `{name}`"))
}

/// Trains a small model on the planted dataset up to the holdout, then
/// lifts `sector` fully for `horizon` days from the holdout start.
pub fn whatif_demo_json(seed: u64, sector_name: &str, horizon: usize, epochs: usize) -> Result<String, String> {
    if !(1..=20).contains(&horizon) {
        return Err("horizon must lie in [1, 20]".into());
    }
    if !(1..=200).contains(&epochs) {
        return Err("epochs must lie in [1, 200]".into());
    }
    let indicator = sector(sector_name)?;
    let synth = generate(Preset::PlantedPolicyEffect, seed);
    let manifest = synth.manifest;
    let target = manifest.target_country.ok_or("dataset has no target country")?;
    let start = manifest.holdout_start.ok_or("dataset has no holdout")?;
    let dataset = Dataset { records: synth.records, warnings: Vec::new() };
    let cfg = ForecastConfig {
        model: ModelConfig { window: 14, recurrent_hidden: 8, pathway_dense: 6, head_hidden: 6, use_policy: true },
        training: TrainConfig { epochs, ..TrainConfig::default() },
    };
    let artifact = train_model(&dataset, &target, &manifest.countries, ModelVariant::Proposed, &cfg, seed, Some(start))
        .map_err(|e| e.to_string())?;
    let result =
        whatif(&artifact, &dataset, &target, &lift_sector(indicator, start, horizon)).map_err(|e| e.to_string())?;
    let record = dataset.record(&target).ok_or("target missing")?;
    let i = record.index_of(start).ok_or("holdout outside the record")?;
    let from = i.saturating_sub(30);
    let demo = WhatifDemo {
        scenario: result.scenario,
        history_dates: (from..i).map(|j| record.date_at(j)).collect(),
        history: record.cases.new_cases[from..i].to_vec(),
        actual: record.cases.new_cases[i..(i + horizon).min(record.len())].to_vec(),
        dates: result.dates,
        baseline: result.baseline,
        counterfactual: result.counterfactual,
        cumulative_delta: result.cumulative_delta,
    };
    Ok(serde_json::to_string(&demo).expect("demo serializes"))
}

#[wasm_bindgen]
pub fn rt_demo(seed: u32, r1: f64, r2: f64, r3: f64, segment_days: u32) -> Result<String, JsValue> {
    rt_demo_json(u64::from(seed), r1, r2, r3, segment_days as usize).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn elbow_demo(seed: u32, per_blob: u32, k_max: u32, show_k: u32) -> Result<String, JsValue> {
    elbow_demo_json(u64::from(seed), per_blob as usize, k_max as usize, show_k as usize)
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn whatif_demo(seed: u32, sector: &str, horizon: u32, epochs: u32) -> Result<String, JsValue> {
    whatif_demo_json(u64::from(seed), sector, horizon as usize, epochs as usize).map_err(|e| JsValue::from_str(&e))
}
