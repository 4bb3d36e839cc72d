use chrono::{Duration, NaiveDate};
use proptest::prelude::*;

use policyscope::data::{align, scale_levels, CountryRecord, DailyCaseSeries, PolicySeries};
use policyscope::forecast::{
    build_dataset, error_metrics, evaluate, predict_next_day, recorded_schedule, rolling_forecast, train,
    ForecastConfig, ForecastError, MinMax, ModelArtifact, ModelVariant,
};
use policyscope::neural::{ModelConfig, TrainConfig};

fn start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 4, 1).unwrap()
}

fn record(country: &str, cases: Vec<u64>) -> CountryRecord {
    let n = cases.len();
    align(
        &DailyCaseSeries { country: country.into(), start_date: start(), new_cases: cases },
        &PolicySeries {
            country: country.into(),
            start_date: start(),
            levels: (0..n).map(|i| [(i % 4) as u8, 1, (i % 5) as u8, 0, 4]).collect(),
        },
    )
    .unwrap()
}

fn wave(n: usize, scale: f64, phase: f64) -> Vec<u64> {
    (0..n).map(|i| (scale * (1.2 + (i as f64 / 6.0 + phase).sin())).round() as u64).collect()
}

fn tiny_config(window: usize) -> ForecastConfig {
    ForecastConfig {
        model: ModelConfig { window, recurrent_hidden: 4, pathway_dense: 3, head_hidden: 3, use_policy: true },
        training: TrainConfig { epochs: 3, ..TrainConfig::default() },
    }
}

fn tiny_artifact(variant: ModelVariant) -> (ModelArtifact, Vec<CountryRecord>) {
    let records = vec![record("QA", wave(40, 100.0, 0.0)), record("KW", wave(35, 40.0, 1.0))];
    let set = build_dataset(&records, 5, "QA").unwrap();
    (train(variant, &set, &tiny_config(5), 4).unwrap(), records)
}

#[test]
fn sample_count_and_ordering() {
    let records = vec![record("ZZ", wave(20, 10.0, 0.0)), record("AA", wave(16, 10.0, 0.0)), record("MM", vec![3; 5])];
    let set = build_dataset(&records, 14, "AA").unwrap();
    assert_eq!(set.samples.len(), (20 - 14) + (16 - 14));
    assert_eq!(set.samples[0].country, "AA");
    assert_eq!(set.samples[2].country, "ZZ");
    for s in &set.samples {
        let r = records.iter().find(|r| r.country == s.country).unwrap();
        let end = r.index_of(s.target_date).unwrap();
        assert_eq!(s.policy_window[13], scale_levels(&r.policy.levels[end - 1]));
    }
    assert!(matches!(build_dataset(&records, 14, "XX"), Err(ForecastError::Dataset(_))));
    assert!(build_dataset(&[record("AA", vec![1; 10])], 14, "AA").is_err());
}

#[test]
fn constant_country_normalizes_to_half() {
    let set = build_dataset(&[record("QA", vec![7; 20])], 14, "QA").unwrap();
    assert!(set.samples.iter().all(|s| s.target == 0.5 && s.case_window.iter().all(|&v| v == 0.5)));
}

#[test]
fn horizon_three_matches_hand_unrolling() {
    let (artifact, records) = tiny_artifact(ModelVariant::Proposed);
    let qa = &records[0];
    let l = artifact.window();
    let origin = 30;
    let begin = qa.date_at(origin);
    let schedule = recorded_schedule(qa, begin, 3).unwrap();
    let auto = rolling_forecast(&artifact, qa, begin, 3, &schedule).unwrap();

    let observed: Vec<f64> = qa.cases.new_cases[origin - l..origin].iter().map(|&c| c as f64).collect();
    let policy = &qa.policy.levels;
    let y0 = predict_next_day(&artifact, "QA", &observed, &policy[origin - l..origin]).unwrap();
    let mut w1 = observed[1..].to_vec();
    w1.push(y0);
    let y1 = predict_next_day(&artifact, "QA", &w1, &policy[origin - l + 1..origin + 1]).unwrap();
    let mut w2 = observed[2..].to_vec();
    w2.extend([y0, y1]);
    let y2 = predict_next_day(&artifact, "QA", &w2, &policy[origin - l + 2..origin + 2]).unwrap();

    let got: Vec<f64> = auto.iter().map(|p| p.predicted_cases).collect();
    assert_eq!(got, vec![y0, y1, y2]);
    assert_eq!(auto[2].date, begin + Duration::days(2));
}

#[test]
fn forecast_needs_history() {
    let (artifact, records) = tiny_artifact(ModelVariant::Proposed);
    let qa = &records[0];
    let early = qa.date_at(2);
    let schedule = recorded_schedule(qa, early, 3).unwrap();
    assert!(matches!(rolling_forecast(&artifact, qa, early, 3, &schedule), Err(ForecastError::Forecast(_))));
    assert!(rolling_forecast(&artifact, qa, qa.date_at(20), 0, &schedule).is_err());
}

#[test]
fn forecast_past_the_record_holds_policy() {
    let (artifact, records) = tiny_artifact(ModelVariant::Proposed);
    let qa = &records[0];
    let after = qa.end_date() + Duration::days(1);
    let schedule = recorded_schedule(qa, after, 4).unwrap();
    assert!(schedule.levels.iter().all(|l| l == qa.policy.levels.last().unwrap()));
    let f = rolling_forecast(&artifact, qa, after, 4, &schedule).unwrap();
    assert!(f.iter().all(|p| p.predicted_cases >= 0.0));
}

#[test]
fn artifacts_are_reproducible_and_round_trip() {
    let (a, _) = tiny_artifact(ModelVariant::Proposed);
    let (b, _) = tiny_artifact(ModelVariant::Proposed);
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(ModelArtifact::from_json(&a.to_json()).unwrap(), a);
    let mut bad: serde_json::Value = serde_json::from_str(&a.to_json()).unwrap();
    bad["format"] = "other/1".into();
    assert!(ModelArtifact::from_json(&bad.to_string()).is_err());
}

#[test]
fn variants_differ_in_data_and_pathways() {
    let (single, _) = tiny_artifact(ModelVariant::SingleCountryOnly);
    assert_eq!(single.cluster_countries, vec!["QA".to_string()]);
    assert_eq!(single.metrics.samples, 40 - 5);
    let (ablated, _) = tiny_artifact(ModelVariant::NoLockdownData);
    assert!(ablated.model.policy.is_none());
    assert_eq!(ablated.metrics.samples, (40 - 5) + (35 - 5));
    assert_eq!(ablated.cluster_countries, vec!["KW".to_string(), "QA".to_string()]);
}

#[test]
fn evaluation_report_spans_the_forecast() {
    let (artifact, records) = tiny_artifact(ModelVariant::Proposed);
    let qa = &records[0];
    let begin = qa.date_at(30);
    let f = rolling_forecast(&artifact, qa, begin, 5, &recorded_schedule(qa, begin, 5).unwrap()).unwrap();
    let report = evaluate(ModelVariant::Proposed, &f, qa).unwrap();
    assert_eq!(report.horizon.start, begin);
    assert_eq!(report.horizon.end, begin + Duration::days(4));
    assert!(report.rmse >= report.mae);
}

#[test]
fn metric_example() {
    let m = error_metrics(&[1.0, 2.0, 3.0], &[1.0, 2.0, 7.0]).unwrap();
    assert!((m.rmse - (16.0f64 / 3.0).sqrt()).abs() < 1e-12);
    assert!((m.mae - 4.0 / 3.0).abs() < 1e-12);
    assert!(error_metrics(&[1.0], &[1.0, 2.0]).is_err());
}

proptest! {
    #[test]
    fn rmse_dominates_mae(pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..40)) {
        let (f, a): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let m = error_metrics(&f, &a).unwrap();
        prop_assert!(m.rmse + 1e-9 >= m.mae);
        prop_assert!(m.mae >= 0.0);
    }

    #[test]
    fn normalization_round_trip(min in 0.0f64..1e3, span in 1e-3f64..1e4, y in 0.0f64..1.0) {
        let s = MinMax { min, max: min + span };
        prop_assert!((s.normalize(s.denormalize(y)) - y).abs() < 1e-12);
    }

    #[test]
    fn sample_count_identity(lens in prop::collection::vec(1usize..40, 1..5), l in 1usize..10) {
        let records: Vec<CountryRecord> = lens
            .iter()
            .enumerate()
            .map(|(i, &n)| record(&format!("C{i}"), (0..n as u64).map(|d| d + 1).collect()))
            .collect();
        let expected: usize = lens.iter().filter(|&&n| n > l).map(|&n| n - l).sum();
        match build_dataset(&records, l, "C0") {
            Ok(set) => prop_assert_eq!(set.samples.len(), expected),
            Err(_) => prop_assert_eq!(expected, 0),
        }
    }
}

#[test]
fn rolling_forecast_is_prefix_consistent() {
    let (artifact, records) = tiny_artifact(ModelVariant::NoLockdownData);
    let qa = &records[0];
    let begin = qa.date_at(25);
    let schedule = recorded_schedule(qa, begin, 12).unwrap();
    let long = rolling_forecast(&artifact, qa, begin, 12, &schedule).unwrap();
    for h in 1..12 {
        let short = rolling_forecast(&artifact, qa, begin, h, &schedule).unwrap();
        assert_eq!(short[..], long[..h]);
    }
}
