use policyscope::data::{load_dataset, write_cases_csv, write_policy_csv, PolicyIndicator};
use policyscope::rt::{estimate_rt_series, RtConfig};
use policyscope::synth::{cases_with_r, generate, piecewise_r, planted_policy_effect, PlantedConfig, Preset};

#[test]
fn presets_round_trip_through_csv() {
    for p in Preset::ALL {
        let s = generate(p, 2);
        let d = load_dataset(&write_cases_csv(&s.records), &write_policy_csv(&s.records)).unwrap();
        let mut expected = s.records.clone();
        expected.sort_by(|a, b| a.country.cmp(&b.country));
        assert_eq!(d.records, expected, "{p}");
        assert_eq!(s.manifest.countries.len(), s.records.len());
    }
}

#[test]
fn manifest_records_planted_coefficients() {
    let s = generate(Preset::PlantedPolicyEffect, 7);
    let c = s.manifest.coefficients.unwrap();
    assert!(c.beta(PolicyIndicator::SchoolClosing) > 0.0);
    assert!(c.beta(PolicyIndicator::TravelControls) > 0.0);
    assert_eq!(c.beta(PolicyIndicator::PublicTransportShutdown), 0.0);
    let json = serde_json::to_value(&s.manifest).unwrap();
    assert_eq!(json["preset"], "planted-policy-effect");
    assert_eq!(json["holdout_days"], 20);
    assert_eq!(s.manifest.days, 150);
}

#[test]
fn generator_mean_follows_the_reproduction_number() {
    // With R held at 1 the expected count stays put; averaging many seeds
    // of a one-step draw recovers k_t * exp(gamma (R - 1)).
    let gamma = 1.0 / 7.0;
    for r in [0.7, 1.0, 1.5] {
        let n = 4000;
        let mean = (0..n).map(|s| cases_with_r(s, 500, &[r], gamma)[1] as f64).sum::<f64>() / n as f64;
        let expected = 500.0 * (gamma * (r - 1.0)).exp();
        assert!((mean - expected).abs() < 4.0 * (expected / n as f64).sqrt() + 0.5, "{r}: {mean} vs {expected}");
    }
}

#[test]
fn constant_preset_has_unit_rt() {
    let s = generate(Preset::Constant, 0);
    for r in &s.records {
        let series = estimate_rt_series(r, &RtConfig::default()).unwrap();
        assert!(series.entries.iter().all(|e| (e.mode - 1.0).abs() <= 0.02));
    }
}

#[test]
fn planted_policy_changes_move_growth() {
    let cfg = PlantedConfig::default();
    let s = planted_policy_effect(&cfg, 5);
    let target = &s.records[0];
    let lift = s.manifest.lift_date.unwrap();
    let i = target.index_of(lift).unwrap();
    let before: f64 = target.cases.new_cases[i - 5..i].iter().sum::<u64>() as f64;
    let after: f64 = target.cases.new_cases[i + 7..i + 12].iter().sum::<u64>() as f64;
    assert!(after > before, "{before} -> {after}");
    assert_eq!(piecewise_r(&[(1.0, 3)]).len(), 3);
}
