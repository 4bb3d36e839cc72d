use chrono::{Duration, NaiveDate};
use proptest::prelude::*;

use policyscope::data::{
    align, load_dataset, parse_cases_csv, parse_policy_csv, smooth_values, write_cases_csv, write_policy_csv,
    CountryRecord, DailyCaseSeries, DataError, PolicyIndicator, PolicySeries,
};

fn date(d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 3, 1).unwrap() + Duration::days(i64::from(d))
}

fn record_strategy() -> impl Strategy<Value = CountryRecord> {
    (1usize..40, 0u32..20, "[A-Z]{2}").prop_flat_map(|(len, offset, country)| {
        (
            prop::collection::vec(0u64..5000, len),
            prop::collection::vec((0u8..=3, 0u8..=3, 0u8..=4, 0u8..=2, 0u8..=4), len),
        )
            .prop_map(move |(cases, levels)| {
                let start = date(offset);
                align(
                    &DailyCaseSeries { country: country.clone(), start_date: start, new_cases: cases },
                    &PolicySeries {
                        country: country.clone(),
                        start_date: start,
                        levels: levels.into_iter().map(|(a, b, c, d, e)| [a, b, c, d, e]).collect(),
                    },
                )
                .unwrap()
            })
    })
}

proptest! {
    #[test]
    fn csv_round_trip(record in record_strategy()) {
        let records = vec![record];
        let loaded = load_dataset(&write_cases_csv(&records), &write_policy_csv(&records)).unwrap();
        prop_assert_eq!(loaded.records, records);
        prop_assert!(loaded.warnings.is_empty());
    }

    #[test]
    fn align_is_idempotent(record in record_strategy()) {
        let again = align(&record.cases, &record.policy).unwrap();
        prop_assert_eq!(&again, &record);
        prop_assert_eq!(align(&again.cases, &again.policy).unwrap(), again);
    }

    #[test]
    fn smoothing_preserves_constants_and_bounds(
        values in prop::collection::vec(0.0f64..1e4, 1..60),
        half in 0usize..5,
        c in 0.0f64..1e4,
    ) {
        let w = 2 * half + 1;
        prop_assume!(w <= values.len());
        let flat = smooth_values(&vec![c; values.len()], w).unwrap();
        prop_assert!(flat.iter().all(|v| (v - c).abs() <= 1e-9 * c.max(1.0)));
        let out = smooth_values(&values, w).unwrap();
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(out.len(), values.len());
        prop_assert!(out.iter().all(|v| *v >= lo - 1e-9 && *v <= hi + 1e-9));
    }

    #[test]
    fn sparse_policy_rows_persist(levels in prop::collection::vec(0u8..=3, 2..10), gap in 1u32..6) {
        let mut csv = String::from("country,date,school,workplace,gatherings,transport,travel\n");
        for (i, l) in levels.iter().enumerate() {
            csv.push_str(&format!("QA,{},{l},0,0,0,0\n", date(i as u32 * gap)));
        }
        let series = parse_policy_csv(&csv).unwrap();
        prop_assert_eq!(series.len(), 1);
        let s = &series[0];
        prop_assert_eq!(s.len(), (levels.len() - 1) * gap as usize + 1);
        for (day, row) in s.levels.iter().enumerate() {
            prop_assert_eq!(row[0], levels[day / gap as usize]);
        }
    }
}

#[test]
fn case_gap_filled_with_zero_and_warned() {
    let csv = "country,date,new_cases\nQA,2020-03-01,4\nQA,2020-03-04,6\n";
    let parsed = parse_cases_csv(csv).unwrap();
    assert_eq!(parsed.series[0].new_cases, vec![4, 0, 0, 6]);
    assert_eq!(parsed.warnings.len(), 1);
    assert_eq!(parsed.warnings[0].first_missing, date(1));
    assert_eq!(parsed.warnings[0].last_missing, date(2));
}

#[test]
fn validation_errors_carry_line_numbers() {
    let err = parse_cases_csv("country,date,new_cases\nQA,2020-03-01,4\nQA,2020-03-02,-1\n").unwrap_err();
    assert!(matches!(err, DataError::Validation { line: 3, .. }), "{err}");
    let err = parse_policy_csv(
        "country,date,school,workplace,gatherings,transport,travel\nQA,2020-03-01,0,0,0,0,0\nQA,2020-03-02,4,0,0,0,0\n",
    )
    .unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("line 3"), "{msg}");
    assert!(msg.contains("SchoolClosing out of range [0,3]"), "{msg}");
    assert!(parse_cases_csv("").is_err());
}

#[test]
fn country_missing_from_one_file_is_rejected() {
    let cases = "country,date,new_cases\nQA,2020-03-01,4\nKW,2020-03-01,1\n";
    let policy = "country,date,school,workplace,gatherings,transport,travel\nQA,2020-03-01,0,0,0,0,0\n";
    assert!(matches!(load_dataset(cases, policy), Err(DataError::Alignment(_))));
}

#[test]
fn indicator_scales() {
    let maxima: Vec<u8> = PolicyIndicator::ALL.iter().map(|k| k.max_level()).collect();
    assert_eq!(maxima, vec![3, 3, 4, 2, 4]);
    assert!(PolicyIndicator::GatheringRestrictions.validate_level(5).is_err());
}
