//! Daily case counts, ordinal lockdown indicators, and the CSV contracts
//! used to ingest them.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: {message}")]
    Validation { line: u64, message: String },
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("parameter error: {0}")]
    Parameter(String),
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

/// The five lockdown sectors, in the column order used throughout the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PolicyIndicator {
    SchoolClosing,
    WorkplaceClosing,
    GatheringRestrictions,
    PublicTransportShutdown,
    TravelControls,
}

pub const NUM_INDICATORS: usize = 5;

/// Ordinal levels for one day, indexed by `PolicyIndicator::index`.
pub type PolicyLevels = [u8; NUM_INDICATORS];

impl PolicyIndicator {
    pub const ALL: [PolicyIndicator; NUM_INDICATORS] = [
        PolicyIndicator::SchoolClosing,
        PolicyIndicator::WorkplaceClosing,
        PolicyIndicator::GatheringRestrictions,
        PolicyIndicator::PublicTransportShutdown,
        PolicyIndicator::TravelControls,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn max_level(self) -> u8 {
        match self {
            PolicyIndicator::SchoolClosing => 3,
            PolicyIndicator::WorkplaceClosing => 3,
            PolicyIndicator::GatheringRestrictions => 4,
            PolicyIndicator::PublicTransportShutdown => 2,
            PolicyIndicator::TravelControls => 4,
        }
    }

    /// Column name in `policy.csv`.
    pub fn column(self) -> &'static str {
        match self {
            PolicyIndicator::SchoolClosing => "school",
            PolicyIndicator::WorkplaceClosing => "workplace",
            PolicyIndicator::GatheringRestrictions => "gatherings",
            PolicyIndicator::PublicTransportShutdown => "transport",
            PolicyIndicator::TravelControls => "travel",
        }
    }

    pub fn validate_level(self, level: u8) -> std::result::Result<(), String> {
        if level > self.max_level() {
            Err(format!("{self} out of range [0,{}]", self.max_level()))
        } else {
            Ok(())
        }
    }
}

impl fmt::Display for PolicyIndicator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for PolicyIndicator {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        PolicyIndicator::ALL
            .into_iter()
            .find(|k| k.column() == s || k.to_string() == s)
            .ok_or_else(|| format!("unknown policy indicator `{s}`"))
    }
}

/// Scales a day's levels to `[0, 1]` by each indicator's maximum.
pub fn scale_levels(levels: &PolicyLevels) -> [f64; NUM_INDICATORS] {
    let mut out = [0.0; NUM_INDICATORS];
    for kind in PolicyIndicator::ALL {
        out[kind.index()] = f64::from(levels[kind.index()]) / f64::from(kind.max_level());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DailyCaseSeries {
    pub country: String,
    pub start_date: NaiveDate,
    pub new_cases: Vec<u64>,
}

impl DailyCaseSeries {
    pub fn len(&self) -> usize {
        self.new_cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.new_cases.is_empty()
    }

    /// Last covered day, or `None` for an empty series.
    pub fn end_date(&self) -> Option<NaiveDate> {
        last_date(self.start_date, self.len())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicySeries {
    pub country: String,
    pub start_date: NaiveDate,
    pub levels: Vec<PolicyLevels>,
}

impl PolicySeries {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn end_date(&self) -> Option<NaiveDate> {
        last_date(self.start_date, self.len())
    }

    pub fn levels_on(&self, date: NaiveDate) -> Option<&PolicyLevels> {
        day_index(self.start_date, self.len(), date).map(|i| &self.levels[i])
    }

    /// Sub-series covering `[from, from + days)`, if fully covered.
    pub fn slice(&self, from: NaiveDate, days: usize) -> Option<PolicySeries> {
        let start = day_index(self.start_date, self.len(), from)?;
        let end = start.checked_add(days)?;
        (end <= self.len()).then(|| PolicySeries {
            country: self.country.clone(),
            start_date: from,
            levels: self.levels[start..end].to_vec(),
        })
    }
}

/// Cases and policy for one country over an identical date range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountryRecord {
    pub country: String,
    pub cases: DailyCaseSeries,
    pub policy: PolicySeries,
    pub first_case_date: Option<NaiveDate>,
}

impl CountryRecord {
    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn start_date(&self) -> NaiveDate {
        self.cases.start_date
    }

    pub fn end_date(&self) -> NaiveDate {
        self.cases.end_date().unwrap_or(self.cases.start_date)
    }

    pub fn date_at(&self, index: usize) -> NaiveDate {
        self.start_date() + Duration::days(index as i64)
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        day_index(self.start_date(), self.len(), date)
    }

    pub fn first_case_index(&self) -> Option<usize> {
        self.cases.new_cases.iter().position(|&c| c > 0)
    }

    /// Copy restricted to dates strictly before `cutoff`; `None` when nothing remains.
    pub fn truncated_before(&self, cutoff: NaiveDate) -> Option<CountryRecord> {
        let keep = (cutoff - self.start_date()).num_days();
        if keep <= 0 {
            return None;
        }
        let keep = (keep as usize).min(self.len());
        let cases = DailyCaseSeries {
            country: self.country.clone(),
            start_date: self.start_date(),
            new_cases: self.cases.new_cases[..keep].to_vec(),
        };
        let policy = PolicySeries {
            country: self.country.clone(),
            start_date: self.start_date(),
            levels: self.policy.levels[..keep].to_vec(),
        };
        Some(build_record(cases, policy))
    }
}

fn last_date(start: NaiveDate, len: usize) -> Option<NaiveDate> {
    (len > 0).then(|| start + Duration::days(len as i64 - 1))
}

fn day_index(start: NaiveDate, len: usize, date: NaiveDate) -> Option<usize> {
    let offset = (date - start).num_days();
    (offset >= 0 && (offset as usize) < len).then_some(offset as usize)
}

/// A run of missing days that was filled with zero cases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapWarning {
    pub country: String,
    pub first_missing: NaiveDate,
    pub last_missing: NaiveDate,
}

impl fmt::Display for GapWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: no case rows from {} to {}, filled with 0", self.country, self.first_missing, self.last_missing)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedCases {
    pub series: Vec<DailyCaseSeries>,
    pub warnings: Vec<GapWarning>,
}

const CASES_HEADER: [&str; 3] = ["country", "date", "new_cases"];
const POLICY_HEADER: [&str; 7] = ["country", "date", "school", "workplace", "gatherings", "transport", "travel"];

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).flexible(true).from_reader(text.as_bytes())
}

fn check_header(rdr: &mut csv::Reader<&[u8]>, expected: &[&str]) -> Result<()> {
    let headers = rdr.headers().map_err(|e| DataError::Parse { line: 1, message: e.to_string() })?;
    let found: Vec<&str> = headers.iter().collect();
    if found != expected {
        return Err(DataError::Parse {
            line: 1,
            message: format!("expected header `{}`, found `{}`", expected.join(","), found.join(",")),
        });
    }
    Ok(())
}

fn parse_date(field: &str, line: u64) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(field, "%Y-%m-%d")
        .map_err(|_| DataError::Parse { line, message: format!("invalid ISO-8601 date `{field}`") })
}

/// Iterates data rows, yielding `(line, fields)`.
fn rows<'a>(
    rdr: &'a mut csv::Reader<&'a [u8]>,
    width: usize,
) -> impl Iterator<Item = Result<(u64, csv::StringRecord)>> + 'a {
    rdr.records().map(move |rec| {
        let rec =
            rec.map_err(|e| DataError::Parse { line: e.position().map_or(0, |p| p.line()), message: e.to_string() })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(DataError::Parse { line, message: format!("expected {width} fields, found {}", rec.len()) });
        }
        Ok((line, rec))
    })
}

/// Parses `cases.csv`. Missing days inside a country's range are filled
/// with zero and reported as warnings.
pub fn parse_cases_csv(text: &str) -> Result<ParsedCases> {
    let mut rdr = reader(text);
    check_header(&mut rdr, &CASES_HEADER)?;
    let mut by_country: BTreeMap<String, BTreeMap<NaiveDate, u64>> = BTreeMap::new();
    for row in rows(&mut rdr, CASES_HEADER.len()) {
        let (line, rec) = row?;
        let country = rec[0].to_string();
        if country.is_empty() {
            return Err(DataError::Parse { line, message: "empty country identifier".into() });
        }
        let date = parse_date(&rec[1], line)?;
        let raw = &rec[2];
        let value: i64 = raw
            .parse()
            .map_err(|_| DataError::Parse { line, message: format!("new_cases `{raw}` is not an integer") })?;
        if value < 0 {
            return Err(DataError::Validation { line, message: format!("negative case count {value}") });
        }
        if by_country.entry(country.clone()).or_default().insert(date, value as u64).is_some() {
            return Err(DataError::Validation { line, message: format!("duplicate row for {country} on {date}") });
        }
    }

    let mut series = Vec::with_capacity(by_country.len());
    let mut warnings = Vec::new();
    for (country, days) in by_country {
        let (&start, _) = days.first_key_value().expect("non-empty by construction");
        let (&end, _) = days.last_key_value().expect("non-empty by construction");
        let len = (end - start).num_days() as usize + 1;
        let mut new_cases = vec![0; len];
        let mut prev: Option<NaiveDate> = None;
        for (&date, &value) in &days {
            new_cases[(date - start).num_days() as usize] = value;
            if let Some(p) = prev {
                if (date - p).num_days() > 1 {
                    warnings.push(GapWarning {
                        country: country.clone(),
                        first_missing: p + Duration::days(1),
                        last_missing: date - Duration::days(1),
                    });
                }
            }
            prev = Some(date);
        }
        series.push(DailyCaseSeries { country, start_date: start, new_cases });
    }
    Ok(ParsedCases { series, warnings })
}

/// Parses `policy.csv`. Rows may be sparse: a missing day keeps the
/// previous row's levels.
pub fn parse_policy_csv(text: &str) -> Result<Vec<PolicySeries>> {
    let mut rdr = reader(text);
    check_header(&mut rdr, &POLICY_HEADER)?;
    let mut by_country: BTreeMap<String, BTreeMap<NaiveDate, PolicyLevels>> = BTreeMap::new();
    for row in rows(&mut rdr, POLICY_HEADER.len()) {
        let (line, rec) = row?;
        let country = rec[0].to_string();
        if country.is_empty() {
            return Err(DataError::Parse { line, message: "empty country identifier".into() });
        }
        let date = parse_date(&rec[1], line)?;
        let mut levels = [0u8; NUM_INDICATORS];
        for kind in PolicyIndicator::ALL {
            let raw = &rec[2 + kind.index()];
            let value: i64 = raw
                .parse()
                .map_err(|_| DataError::Parse { line, message: format!("{kind} level `{raw}` is not an integer") })?;
            if value < 0 || value > i64::from(kind.max_level()) {
                return Err(DataError::Validation {
                    line,
                    message: format!("{kind} out of range [0,{}]", kind.max_level()),
                });
            }
            levels[kind.index()] = value as u8;
        }
        if by_country.entry(country.clone()).or_default().insert(date, levels).is_some() {
            return Err(DataError::Validation { line, message: format!("duplicate row for {country} on {date}") });
        }
    }

    Ok(by_country
        .into_iter()
        .map(|(country, days)| {
            let start = *days.keys().next().expect("non-empty by construction");
            let end = *days.keys().next_back().expect("non-empty by construction");
            let len = (end - start).num_days() as usize + 1;
            let mut levels = Vec::with_capacity(len);
            let mut current = [0u8; NUM_INDICATORS];
            for offset in 0..len {
                if let Some(l) = days.get(&(start + Duration::days(offset as i64))) {
                    current = *l;
                }
                levels.push(current);
            }
            PolicySeries { country, start_date: start, levels }
        })
        .collect())
}

fn build_record(cases: DailyCaseSeries, policy: PolicySeries) -> CountryRecord {
    let first_case_date =
        cases.new_cases.iter().position(|&c| c > 0).map(|i| cases.start_date + Duration::days(i as i64));
    CountryRecord { country: cases.country.clone(), cases, policy, first_case_date }
}

/// Truncates both series to the intersection of their date ranges.
pub fn align(cases: &DailyCaseSeries, policy: &PolicySeries) -> Result<CountryRecord> {
    if cases.country != policy.country {
        return Err(DataError::Alignment(format!(
            "country mismatch: cases for {}, policy for {}",
            cases.country, policy.country
        )));
    }
    let (Some(case_end), Some(policy_end)) = (cases.end_date(), policy.end_date()) else {
        return Err(DataError::Alignment(format!("{}: empty series", cases.country)));
    };
    let start = cases.start_date.max(policy.start_date);
    let end = case_end.min(policy_end);
    if end < start {
        return Err(DataError::Alignment(format!(
            "{}: cases [{}, {}] and policy [{}, {}] do not overlap",
            cases.country, cases.start_date, case_end, policy.start_date, policy_end
        )));
    }
    let len = (end - start).num_days() as usize + 1;
    let case_off = (start - cases.start_date).num_days() as usize;
    let policy_off = (start - policy.start_date).num_days() as usize;
    Ok(build_record(
        DailyCaseSeries {
            country: cases.country.clone(),
            start_date: start,
            new_cases: cases.new_cases[case_off..case_off + len].to_vec(),
        },
        PolicySeries {
            country: policy.country.clone(),
            start_date: start,
            levels: policy.levels[policy_off..policy_off + len].to_vec(),
        },
    ))
}

/// Result of pairing parsed cases with parsed policy.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub records: Vec<CountryRecord>,
    pub warnings: Vec<GapWarning>,
}

/// Date coverage of one aligned country.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountrySummary {
    pub country: String,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    pub days: usize,
}

impl Dataset {
    pub fn summary(&self) -> Vec<CountrySummary> {
        self.records
            .iter()
            .map(|r| CountrySummary {
                country: r.country.clone(),
                start_date: r.start_date(),
                end_date: r.end_date(),
                days: r.len(),
            })
            .collect()
    }

    pub fn record(&self, country: &str) -> Option<&CountryRecord> {
        self.records.iter().find(|r| r.country == country)
    }

    pub fn countries(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.country.as_str())
    }
}

/// Parses and aligns a `cases.csv` / `policy.csv` pair. A country present in
/// only one file is an alignment error.
pub fn load_dataset(cases_csv: &str, policy_csv: &str) -> Result<Dataset> {
    let parsed = parse_cases_csv(cases_csv)?;
    let policies = parse_policy_csv(policy_csv)?;
    let mut policy_by_country: BTreeMap<&str, &PolicySeries> =
        policies.iter().map(|p| (p.country.as_str(), p)).collect();
    let mut records = Vec::with_capacity(parsed.series.len());
    for cases in &parsed.series {
        let policy = policy_by_country
            .remove(cases.country.as_str())
            .ok_or_else(|| DataError::Alignment(format!("{}: no policy rows", cases.country)))?;
        records.push(align(cases, policy)?);
    }
    if let Some(country) = policy_by_country.keys().next() {
        return Err(DataError::Alignment(format!("{country}: no case rows")));
    }
    Ok(Dataset { records, warnings: parsed.warnings })
}

/// Record for a country with cases but no policy rows; every indicator is
/// held at 0. Enough for R_t estimation.
pub fn record_without_policy(cases: &DailyCaseSeries) -> CountryRecord {
    let policy = PolicySeries {
        country: cases.country.clone(),
        start_date: cases.start_date,
        levels: vec![[0; NUM_INDICATORS]; cases.len()],
    };
    build_record(cases.clone(), policy)
}

pub fn write_cases_csv(records: &[CountryRecord]) -> String {
    let mut out = String::from("country,date,new_cases\n");
    for r in records {
        for (i, c) in r.cases.new_cases.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", r.country, r.date_at(i), c));
        }
    }
    out
}

pub fn write_policy_csv(records: &[CountryRecord]) -> String {
    let mut out = String::from("country,date,school,workplace,gatherings,transport,travel\n");
    for r in records {
        for (i, l) in r.policy.levels.iter().enumerate() {
            out.push_str(&format!("{},{},{},{},{},{},{}\n", r.country, r.date_at(i), l[0], l[1], l[2], l[3], l[4]));
        }
    }
    out
}

/// Centered moving average. Edge windows are truncated to the days that
/// exist, so the first and last outputs average fewer values.
pub fn smooth_values(values: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(DataError::Parameter(format!("smoothing window {window} must be a positive odd integer")));
    }
    if window > values.len() {
        return Err(DataError::Parameter(format!("smoothing window {window} exceeds series length {}", values.len())));
    }
    let half = window / 2;
    let n = values.len();
    Ok((0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            let sum: f64 = values[lo..=hi].iter().sum();
            (sum / (hi - lo + 1) as f64).max(0.0)
        })
        .collect())
}

pub fn smooth_cases(series: &DailyCaseSeries, window: usize) -> Result<Vec<f64>> {
    let values: Vec<f64> = series.new_cases.iter().map(|&c| c as f64).collect();
    smooth_values(&values, window)
}
