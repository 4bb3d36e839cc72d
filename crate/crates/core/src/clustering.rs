//! Lockdown-policy feature vectors, K-Means (Lloyd's algorithm) and
//! elbow-based selection of K.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{CountryRecord, PolicyIndicator, NUM_INDICATORS};
use crate::rt::{biweekly_rt_averages, estimate_rt_series, RtConfig, RtError};

pub const MAX_LLOYD_ITERATIONS: usize = 300;
pub const DEFAULT_RESTARTS: usize = 20;
/// Elbows whose normalized chord distance falls below this are flagged.
pub const LOW_CONFIDENCE_DISTANCE: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("unknown country `{0}`")]
    UnknownCountry(String),
    #[error("{country}: {source}")]
    Rt { country: String, source: RtError },
    #[error("feature error: {0}")]
    Feature(String),
}

pub type Result<T, E = ClusterError> = std::result::Result<T, E>;

/// Days from the first reported case to the first nonzero level of each
/// indicator. Indicators never imposed get the record length.
pub fn extract_reaction_lags(record: &CountryRecord) -> Result<[f64; NUM_INDICATORS]> {
    let first_case = record
        .first_case_date
        .ok_or_else(|| ClusterError::Feature(format!("{}: no reported cases", record.country)))?;
    let mut lags = [record.len() as f64; NUM_INDICATORS];
    for kind in PolicyIndicator::ALL {
        if let Some(i) = record.policy.levels.iter().position(|l| l[kind.index()] > 0) {
            lags[kind.index()] = (record.date_at(i) - first_case).num_days() as f64;
        }
    }
    Ok(lags)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyFeatureVector {
    pub country: String,
    pub reaction_lags: [f64; NUM_INDICATORS],
    pub rt_biweekly: Vec<f64>,
}

impl PolicyFeatureVector {
    pub fn values(&self) -> Vec<f64> {
        self.reaction_lags.iter().chain(&self.rt_biweekly).copied().collect()
    }
}

pub fn policy_features(record: &CountryRecord, rt: &RtConfig, num_periods: usize) -> Result<PolicyFeatureVector> {
    let reaction_lags = extract_reaction_lags(record)?;
    let series = estimate_rt_series(record, rt)
        .map_err(|source| ClusterError::Rt { country: record.country.clone(), source })?;
    let rt_biweekly = biweekly_rt_averages(&series, num_periods)
        .map_err(|source| ClusterError::Rt { country: record.country.clone(), source })?;
    Ok(PolicyFeatureVector { country: record.country.clone(), reaction_lags, rt_biweekly })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardized {
    pub data: Vec<Vec<f64>>,
    pub means: Vec<f64>,
    pub stddevs: Vec<f64>,
    /// Columns with zero variance, mapped to all zeros.
    pub zero_variance: Vec<bool>,
}

/// Z-scores each column using the population standard deviation.
pub fn standardize(matrix: &[Vec<f64>]) -> Result<Standardized> {
    let n = matrix.len();
    if n < 2 {
        return Err(ClusterError::Parameter(format!("standardize needs at least 2 rows, got {n}")));
    }
    let d = matrix[0].len();
    if matrix.iter().any(|row| row.len() != d) {
        return Err(ClusterError::Parameter("ragged matrix".into()));
    }
    let mut means = vec![0.0; d];
    let mut stddevs = vec![0.0; d];
    let mut zero_variance = vec![false; d];
    for j in 0..d {
        let mean = matrix.iter().map(|r| r[j]).sum::<f64>() / n as f64;
        let var = matrix.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n as f64;
        means[j] = mean;
        stddevs[j] = var.sqrt();
        zero_variance[j] = stddevs[j].is_nan() || stddevs[j] <= 1e-12 * mean.abs().max(1.0);
    }
    let data = matrix
        .iter()
        .map(|row| (0..d).map(|j| if zero_variance[j] { 0.0 } else { (row[j] - means[j]) / stddevs[j] }).collect())
        .collect();
    Ok(Standardized { data, means, stddevs, zero_variance })
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Sum of squared distances from each point to its assigned center.
pub fn inertia(points: &[Vec<f64>], centers: &[Vec<f64>], assignments: &[usize]) -> f64 {
    points.iter().zip(assignments).map(|(p, &c)| squared_distance(p, &centers[c])).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub k: usize,
    pub centers: Vec<Vec<f64>>,
    /// Cluster index per input point.
    pub assignments: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after each Lloyd update, for the winning restart.
    pub inertia_trace: Vec<f64>,
}

/// Nearest center, ties broken toward the lower index.
fn nearest(point: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = squared_distance(point, &centers[0]);
    for (j, c) in centers.iter().enumerate().skip(1) {
        let d = squared_distance(point, c);
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    best
}

fn means_of(points: &[Vec<f64>], assignments: &[usize], k: usize, d: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (p, &c) in points.iter().zip(assignments) {
        counts[c] += 1;
        for (s, x) in sums[c].iter_mut().zip(p) {
            *s += x;
        }
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        if n > 0 {
            s.iter_mut().for_each(|v| *v /= n as f64);
        }
    }
    (sums, counts)
}

/// Moves each empty cluster onto the point farthest from its current center.
fn reseed_empty(points: &[Vec<f64>], centers: &mut [Vec<f64>], assignments: &mut [usize], k: usize) {
    let d = centers[0].len();
    loop {
        let (_, counts) = means_of(points, assignments, k, d);
        let Some(empty) = counts.iter().position(|&n| n == 0) else {
            return;
        };
        let mut far = None;
        let mut far_d = -1.0;
        for (i, p) in points.iter().enumerate() {
            if counts[assignments[i]] < 2 {
                continue;
            }
            let dist = squared_distance(p, &centers[assignments[i]]);
            if dist > far_d {
                far_d = dist;
                far = Some(i);
            }
        }
        let Some(i) = far else {
            return;
        };
        centers[empty] = points[i].clone();
        assignments[i] = empty;
    }
}

/// One sweep of single-point transfers: each point moves to the cluster
/// that lowers inertia the most, accounting for the shift of both means.
/// Returns whether any point moved.
fn transfer_pass(points: &[Vec<f64>], assignments: &mut [usize], k: usize) -> bool {
    let d = points[0].len();
    let (mut centers, mut counts) = means_of(points, assignments, k, d);
    let scale = 1.0 + inertia(points, &centers, assignments);
    let mut moved = false;
    for (i, p) in points.iter().enumerate() {
        let from = assignments[i];
        if counts[from] < 2 {
            continue;
        }
        let nf = counts[from] as f64;
        let removal = nf / (nf - 1.0) * squared_distance(p, &centers[from]);
        let mut best = (from, 0.0);
        for to in (0..k).filter(|&c| c != from) {
            let nt = counts[to] as f64;
            let delta = nt / (nt + 1.0) * squared_distance(p, &centers[to]) - removal;
            if delta < best.1 {
                best = (to, delta);
            }
        }
        let (to, delta) = best;
        if to == from || delta > -1e-12 * scale {
            continue;
        }
        let nt = counts[to] as f64;
        for j in 0..d {
            centers[from][j] = (centers[from][j] * nf - p[j]) / (nf - 1.0);
            centers[to][j] = (centers[to][j] * nt + p[j]) / (nt + 1.0);
        }
        counts[from] -= 1;
        counts[to] += 1;
        assignments[i] = to;
        moved = true;
    }
    moved
}

fn lloyd(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> KMeansResult {
    let n = points.len();
    let d = points[0].len();
    let mut centers: Vec<Vec<f64>> = sample(rng, n, k).iter().map(|i| points[i].clone()).collect();
    let mut assignments: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        iterations += 1;
        reseed_empty(points, &mut centers, &mut assignments, k);
        centers = means_of(points, &assignments, k, d).0;
        trace.push(inertia(points, &centers, &assignments));
        if iterations >= MAX_LLOYD_ITERATIONS {
            break;
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
        if next != assignments {
            assignments = next;
        } else if !transfer_pass(points, &mut assignments, k) {
            break;
        }
    }
    KMeansResult {
        k,
        inertia: *trace.last().expect("at least one iteration"),
        centers,
        assignments,
        iterations,
        inertia_trace: trace,
    }
}

/// Every restart of Lloyd's K-Means with centers initialized from distinct
/// random data points. Restart `r` draws from stream `r` of a generator
/// seeded with `seed`. Once Lloyd assignments settle, single-point
/// transfers that lower the inertia are applied and Lloyd resumes.
pub fn kmeans_runs(points: &[Vec<f64>], k: usize, seed: u64, restarts: usize) -> Result<Vec<KMeansResult>> {
    let n = points.len();
    if k < 1 || k > n {
        return Err(ClusterError::Parameter(format!("k = {k} must lie in [1, {n}]")));
    }
    if restarts == 0 {
        return Err(ClusterError::Parameter("restarts must be positive".into()));
    }
    let d = points[0].len();
    if d == 0 || points.iter().any(|p| p.len() != d) {
        return Err(ClusterError::Parameter("points must share a positive dimension".into()));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(ClusterError::Parameter("points contain non-finite values".into()));
    }
    Ok((0..restarts)
        .map(|restart| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(restart as u64);
            lloyd(points, k, &mut rng)
        })
        .collect())
}

/// Best of `kmeans_runs` by inertia; ties keep the earliest restart.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, restarts: usize) -> Result<KMeansResult> {
    let mut best: Option<KMeansResult> = None;
    for run in kmeans_runs(points, k, seed, restarts)? {
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("restarts > 0"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElbowCurve {
    pub ks: Vec<usize>,
    pub inertias: Vec<f64>,
    pub chosen_k: usize,
    /// Normalized distance of the chosen point from the chord.
    pub elbow_distance: f64,
    pub low_confidence: bool,
}

/// Picks the K whose (K, inertia) point lies farthest from the chord joining
/// the curve's endpoints, after scaling both axes to `[0, 1]`.
pub fn elbow_from_curve(ks: &[usize], inertias: &[f64]) -> Result<(usize, f64)> {
    if ks.len() < 3 || ks.len() != inertias.len() {
        return Err(ClusterError::Parameter("elbow detection needs at least 3 candidate K values".into()));
    }
    let (k0, k1) = (ks[0] as f64, ks[ks.len() - 1] as f64);
    let (j_max, j_min) =
        inertias.iter().fold((f64::NEG_INFINITY, f64::INFINITY), |(hi, lo), &j| (hi.max(j), lo.min(j)));
    let range = if j_max > j_min { j_max - j_min } else { 1.0 };
    let pts: Vec<(f64, f64)> =
        ks.iter().zip(inertias).map(|(&k, &j)| ((k as f64 - k0) / (k1 - k0), (j - j_min) / range)).collect();
    let (x0, y0) = pts[0];
    let (x1, y1) = pts[pts.len() - 1];
    let norm = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt();
    let mut best = (ks[1], f64::NEG_INFINITY);
    for (i, &(x, y)) in pts.iter().enumerate().take(pts.len() - 1).skip(1) {
        let dist = ((y1 - y0) * x - (x1 - x0) * y + x1 * y0 - y1 * x0).abs() / norm;
        if dist > best.1 {
            best = (ks[i], dist);
        }
    }
    Ok(best)
}

pub fn elbow_select(points: &[Vec<f64>], k_min: usize, k_max: usize, seed: u64) -> Result<ElbowCurve> {
    elbow_select_with_restarts(points, k_min, k_max, seed, DEFAULT_RESTARTS)
}

pub fn elbow_select_with_restarts(
    points: &[Vec<f64>],
    k_min: usize,
    k_max: usize,
    seed: u64,
    restarts: usize,
) -> Result<ElbowCurve> {
    if k_min < 1 || k_max > points.len() || k_min >= k_max {
        return Err(ClusterError::Parameter(format!("invalid K range [{k_min}, {k_max}] for {} points", points.len())));
    }
    if k_max - k_min + 1 < 3 {
        return Err(ClusterError::Parameter("elbow detection needs at least 3 candidate K values".into()));
    }
    let ks: Vec<usize> = (k_min..=k_max).collect();
    let inertias =
        ks.iter().map(|&k| kmeans(points, k, seed, restarts).map(|r| r.inertia)).collect::<Result<Vec<_>>>()?;
    let (chosen_k, elbow_distance) = elbow_from_curve(&ks, &inertias)?;
    Ok(ElbowCurve { ks, inertias, chosen_k, elbow_distance, low_confidence: elbow_distance < LOW_CONFIDENCE_DISTANCE })
}

/// K-Means output keyed by country.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryClustering {
    pub countries: Vec<String>,
    pub result: KMeansResult,
}

impl CountryClustering {
    pub fn assignment(&self) -> BTreeMap<&str, usize> {
        self.countries.iter().map(String::as_str).zip(self.result.assignments.iter().copied()).collect()
    }

    /// Countries sharing `country`'s cluster, itself included.
    pub fn cluster_of(&self, country: &str) -> Result<Vec<String>> {
        let idx = self
            .countries
            .iter()
            .position(|c| c == country)
            .ok_or_else(|| ClusterError::UnknownCountry(country.to_string()))?;
        let cluster = self.result.assignments[idx];
        Ok(self
            .countries
            .iter()
            .zip(&self.result.assignments)
            .filter(|(_, &a)| a == cluster)
            .map(|(c, _)| c.clone())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    use crate::data::{DailyCaseSeries, PolicySeries};

    fn pts(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|&x| vec![x]).collect()
    }

    fn record(first_case: usize, first_level: [Option<usize>; 5], len: usize) -> CountryRecord {
        let start = NaiveDate::from_ymd_opt(2020, 2, 15).unwrap();
        let cases = (0..len).map(|i| u64::from(i >= first_case)).collect();
        let levels = (0..len)
            .map(|i| {
                let mut l = [0u8; 5];
                for (j, f) in first_level.iter().enumerate() {
                    if f.is_some_and(|f| i >= f) {
                        l[j] = 1;
                    }
                }
                l
            })
            .collect();
        crate::data::align(
            &DailyCaseSeries { country: "QA".into(), start_date: start, new_cases: cases },
            &PolicySeries { country: "QA".into(), start_date: start, levels },
        )
        .unwrap()
    }

    #[test]
    fn reaction_lag_rules() {
        let r = record(15, [Some(24), Some(10), None, None, Some(15)], 100);
        let lags = extract_reaction_lags(&r).unwrap();
        assert_eq!(lags, [9.0, -5.0, 100.0, 100.0, 0.0]);
    }

    #[test]
    fn reaction_lags_need_a_first_case() {
        let mut r = record(15, [None; 5], 30);
        r.first_case_date = None;
        assert!(extract_reaction_lags(&r).is_err());
    }

    #[test]
    fn standardize_examples() {
        let s = standardize(&[vec![1.0], vec![3.0]]).unwrap();
        assert_eq!(s.data, vec![vec![-1.0], vec![1.0]]);
        assert_eq!((s.means[0], s.stddevs[0]), (2.0, 1.0));

        let s = standardize(&[vec![5.0], vec![5.0], vec![5.0]]).unwrap();
        assert_eq!(s.data, vec![vec![0.0]; 3]);
        assert!(s.zero_variance[0]);

        assert!(standardize(&[vec![1.0]]).is_err());
    }

    #[test]
    fn standardize_is_idempotent() {
        let m = vec![vec![1.0, 10.0], vec![4.0, -3.0], vec![2.5, 7.0], vec![9.0, 0.5]];
        let once = standardize(&m).unwrap();
        let twice = standardize(&once.data).unwrap();
        for (a, b) in once.data.iter().flatten().zip(twice.data.iter().flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn two_clusters_on_a_line() {
        let r = kmeans(&pts(&[0.0, 1.0, 10.0, 11.0]), 2, 1, 20).unwrap();
        let mut centers: Vec<f64> = r.centers.iter().map(|c| c[0]).collect();
        centers.sort_by(f64::total_cmp);
        assert_eq!(centers, vec![0.5, 10.5]);
        assert_eq!(r.inertia, 1.0);
    }

    #[test]
    fn k_equals_n_is_exact() {
        let p = pts(&[3.0, -1.0, 7.5, 2.0]);
        let r = kmeans(&p, 4, 9, 5).unwrap();
        assert_eq!(r.inertia, 0.0);
        let mut used = r.assignments.clone();
        used.sort();
        assert_eq!(used, vec![0, 1, 2, 3]);
    }

    #[test]
    fn duplicate_points_reseed_empty_clusters() {
        let p = pts(&[1.0, 1.0, 1.0, 5.0, 9.0]);
        for seed in 0..20 {
            let r = kmeans(&p, 3, seed, 1).unwrap();
            assert_eq!(r.inertia, 0.0, "seed {seed}");
        }
    }

    #[test]
    fn kmeans_parameter_errors() {
        let p = pts(&[1.0, 2.0]);
        assert!(kmeans(&p, 0, 0, 1).is_err());
        assert!(kmeans(&p, 3, 0, 1).is_err());
    }

    #[test]
    fn elbow_needs_three_candidates() {
        let p = pts(&[0.0, 1.0, 2.0, 3.0]);
        assert!(elbow_select(&p, 1, 2, 0).is_err());
        assert!(elbow_select(&p, 2, 2, 0).is_err());
        assert!(elbow_select(&p, 1, 5, 0).is_err());
    }

    #[test]
    fn straight_curve_is_low_confidence() {
        let (k, dist) = elbow_from_curve(&[1, 2, 3, 4], &[4.0, 3.0, 2.0, 1.0]).unwrap();
        assert_eq!(k, 2);
        assert!(dist < LOW_CONFIDENCE_DISTANCE);
    }

    #[test]
    fn sharp_knee_is_found() {
        let (k, dist) = elbow_from_curve(&[1, 2, 3, 4, 5], &[100.0, 60.0, 5.0, 4.0, 3.0]).unwrap();
        assert_eq!(k, 3);
        // |x + y - 1| / sqrt(2) at (0.5, 2/97)
        assert!((dist - (0.5 - 2.0 / 97.0) / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn cluster_lookup() {
        let clustering = CountryClustering {
            countries: vec!["A".into(), "B".into(), "C".into()],
            result: kmeans(&pts(&[0.0, 0.0, 9.0]), 2, 3, 4).unwrap(),
        };
        assert_eq!(clustering.cluster_of("A").unwrap(), vec!["A", "B"]);
        assert_eq!(clustering.cluster_of("C").unwrap(), vec!["C"]);
        assert!(matches!(clustering.cluster_of("XX"), Err(ClusterError::UnknownCountry(_))));
    }
}
